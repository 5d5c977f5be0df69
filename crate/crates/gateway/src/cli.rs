//! `guidesim` subcommands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use guidesim_core::engine::{run_sim, SimConfig};
use guidesim_core::gridworld::{inflate, load_world, World};
use guidesim_core::script::{parse_script, Script};
use guidesim_core::session::{analyze, SessionLog};
use guidesim_core::waypoint::{detect_waypoints, select_waypoint, ClusterParams};
use guidesim_core::Pose;

use crate::build_sim;
use crate::server::{serve, ServeState};

#[derive(Debug, Parser)]
#[command(name = "guidesim", version, about = "Map-less guide robot simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Run a scripted session headlessly and write its event log.
    Run(RunArgs),
    /// Serve live sessions over a websocket at /ws.
    Serve(ServeArgs),
    /// Mode, query and description-level tables for a session log.
    Analyze(AnalyzeArgs),
    /// Detect waypoint candidates on a fully revealed map and pick one.
    Waypoints(WaypointArgs),
    /// Check that a map (and optional POI file) loads.
    ValidateMap(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct WorldArgs {
    /// ASCII map file.
    #[arg(long, visible_alias = "map")]
    pub world: PathBuf,
    /// POI file, one JSON object per line.
    #[arg(long)]
    pub pois: Option<PathBuf>,
    /// Simulator config (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub world: WorldArgs,
    /// Command script; without one the robot explores on its own.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Simulated seconds to run (at least until the last script entry).
    #[arg(long, default_value_t = 60.0)]
    pub duration: f64,
    /// Where to write the log. Defaults to stdout.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub world: WorldArgs,
    #[arg(long, env = "GUIDESIM_BIND", default_value = "127.0.0.1:8765")]
    pub bind: String,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub log: PathBuf,
    /// Session length in seconds. Defaults to the last event time.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Print JSON instead of text tables.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct WaypointArgs {
    #[arg(long)]
    pub map: PathBuf,
    /// Robot pose as `x,y,heading` with the heading in degrees.
    #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
    pub pose: Pose,
    /// Initial heading in degrees. Defaults to the pose heading.
    #[arg(long, allow_hyphen_values = true)]
    pub initial_heading: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub minpts: Option<usize>,
    /// Obstacle inflation radius, meters.
    #[arg(long, default_value_t = guidesim_core::gridworld::DEFAULT_INFLATION_RADIUS)]
    pub inflation: f64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long)]
    pub pois: Option<PathBuf>,
}

fn parse_pose(s: &str) -> Result<Pose, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [x, y, deg] if parts.iter().all(|v| v.is_finite()) => Ok(Pose::new(*x, *y, deg.to_radians())),
        _ => Err("expected x,y,heading_deg".into()),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load(args: &WorldArgs) -> Result<(World, SimConfig)> {
    let pois = args.pois.as_deref().map(read).transpose()?.unwrap_or_default();
    let world = load_world(&read(&args.world)?, &pois)?;
    let mut config = match &args.config {
        Some(p) => SimConfig::from_toml(&read(p)?)?,
        None => SimConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    Ok((world, config))
}

/// Runs a parsed command line, writing results to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Cmd::Run(a) => run(a, out),
        Cmd::Serve(a) => {
            let (world, config) = load(&a.world)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&a.bind)
                    .await
                    .with_context(|| format!("binding {}", a.bind))?;
                writeln!(out, "listening on ws://{}/ws", listener.local_addr()?)?;
                out.flush()?;
                serve(listener, ServeState { world, config }).await?;
                Ok(())
            })
        }
        Cmd::Analyze(a) => {
            let log = SessionLog::from_jsonl(&read(&a.log)?)?;
            let report = analyze(&log, a.duration)?;
            if a.json {
                writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            } else {
                write!(out, "{}", report.render())?;
            }
            Ok(())
        }
        Cmd::Waypoints(a) => waypoints(a, out),
        Cmd::ValidateMap(a) => {
            let pois = a.pois.as_deref().map(read).transpose()?.unwrap_or_default();
            let world = load_world(&read(&a.map)?, &pois)?;
            let f = world.frame;
            writeln!(
                out,
                "ok {}x{} cells, res {} m, {} occupied, {} pois",
                f.width,
                f.height,
                f.resolution,
                world.occupied_count(),
                world.pois.len()
            )?;
            Ok(())
        }
    }
}

fn run(a: RunArgs, out: &mut dyn Write) -> Result<()> {
    let (world, config) = load(&a.world)?;
    if !(a.duration.is_finite() && a.duration >= 0.0) {
        bail!("duration must be a non-negative number of seconds");
    }
    let script = match &a.script {
        Some(p) => parse_script(&read(p)?)?,
        None => Script::default(),
    };
    let outcome = run_sim(build_sim(world, config)?, &script, a.duration)?;
    match &a.log {
        Some(path) => {
            fs::write(path, &outcome.log_text).with_context(|| format!("writing {}", path.display()))?;
            write!(out, "{}", outcome.report.render())?;
            writeln!(out, "state {}", outcome.state_hash)?;
        }
        None => write!(out, "{}", outcome.log_text)?,
    }
    Ok(())
}

fn waypoints(a: WaypointArgs, out: &mut dyn Write) -> Result<()> {
    let world = load_world(&read(&a.map)?, "")?;
    let mut params = ClusterParams::default();
    if let Some(eps) = a.eps {
        params.eps = eps;
    }
    if let Some(m) = a.minpts {
        params.min_pts = m;
    }
    if !params.is_valid() {
        bail!("eps must be positive and minpts at least 1");
    }
    let costmap = inflate(&world.revealed_costmap(), a.inflation);
    let initial = a.initial_heading.map_or(a.pose.heading, f64::to_radians);
    let cands = detect_waypoints(&costmap, &a.pose, initial, &params).map_err(|e| anyhow!(e))?;
    for w in &cands {
        writeln!(
            out,
            "candidate x={:.3} y={:.3} source={:?} distance={:.3} bearing={:.1}",
            w.position.x,
            w.position.y,
            w.source,
            w.distance,
            w.bearing_current.to_degrees()
        )?;
    }
    if let Some(w) = select_waypoint(&cands, &[], &SimConfig::default().policy()) {
        writeln!(out, "selected x={:.3} y={:.3} source={:?}", w.position.x, w.position.y, w.source)?;
    }
    Ok(())
}
