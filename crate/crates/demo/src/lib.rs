//! Browser demo. Every export takes plain values and returns a JSON string;
//! failures come back as `{"error": "..."}`.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use guidesim_core::engine::{Outbound, Sim, SimConfig};
use guidesim_core::gridworld::{inflate, load_world, visible_pois, CostCell, World};
use guidesim_core::narrator::{narrate, Budgets, DescriptionLevel, SceneCapture, TemplateProvider};
use guidesim_core::waypoint::{detect_waypoints, select_waypoint, skeletonize, ClusterParams, Waypoint, WaypointSource};
use guidesim_core::Pose;

const MAPS: &[(&str, &str)] = &[
    ("office", include_str!("../../../fixtures/maps/office.map")),
    ("plus", include_str!("../../../fixtures/maps/plus.map")),
    ("tee", include_str!("../../../fixtures/maps/tee.map")),
    ("ell", include_str!("../../../fixtures/maps/ell.map")),
    ("room", include_str!("../../../fixtures/maps/room.map")),
    ("straight", include_str!("../../../fixtures/maps/straight.map")),
    ("closet", include_str!("../../../fixtures/maps/closet.map")),
];
const OFFICE_POIS: &str = include_str!("../../../fixtures/pois/office.jsonl");

/// Longest run `simulate` accepts, seconds.
pub const MAX_SIM_SECONDS: f64 = 600.0;

fn json<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).expect("demo values serialise"),
        Err(e) => serde_json::json!({ "error": e }).to_string(),
    }
}

fn world(map: &str, pois: &str) -> Result<World, String> {
    load_world(map, pois).map_err(|e| e.to_string())
}

/// JSON list of bundled map names.
#[wasm_bindgen]
pub fn map_names() -> String {
    json(Ok(MAPS.iter().map(|(n, _)| *n).collect::<Vec<_>>()))
}

/// Text of a bundled map, or an empty string.
#[wasm_bindgen]
pub fn map_text(name: &str) -> String {
    MAPS.iter()
        .find(|(n, _)| *n == name)
        .map_or_else(String::new, |(_, t)| t.to_string())
}

/// POIs bundled with a map (only the office has any).
#[wasm_bindgen]
pub fn pois_text(name: &str) -> String {
    if name == "office" { OFFICE_POIS.to_string() } else { String::new() }
}

#[derive(Serialize)]
struct Grid {
    width: usize,
    height: usize,
    res: f64,
    /// Row-major from row 0 (bottom): 1 free, 2 occupied, 3 inflated.
    cells: Vec<u8>,
    start: Pose,
}

#[derive(Serialize)]
struct Candidate {
    x: f64,
    y: f64,
    source: WaypointSource,
    distance: f64,
    bearing_deg: f64,
}

impl From<&Waypoint> for Candidate {
    fn from(w: &Waypoint) -> Self {
        Candidate {
            x: w.position.x,
            y: w.position.y,
            source: w.source,
            distance: w.distance,
            bearing_deg: w.bearing_current.to_degrees(),
        }
    }
}

#[derive(Serialize)]
struct Detection {
    grid: Grid,
    skeleton: Vec<[usize; 2]>,
    candidates: Vec<Candidate>,
    selected: Option<Candidate>,
}

/// Waypoint candidates seen from `(x, y, heading)` on the fully revealed,
/// inflated map, plus the skeleton and the automatic choice.
#[wasm_bindgen]
pub fn detect(map: &str, x: f64, y: f64, heading_deg: f64, eps: f64, min_pts: usize, inflation: f64) -> String {
    json(detect_inner(map, Pose::new(x, y, heading_deg.to_radians()), eps, min_pts, inflation))
}

fn detect_inner(map: &str, pose: Pose, eps: f64, min_pts: usize, inflation: f64) -> Result<Detection, String> {
    let w = world(map, "")?;
    let params = ClusterParams { eps, min_pts };
    if !params.is_valid() || inflation.is_nan() || inflation < 0.0 {
        return Err("eps must be positive, min_pts at least 1, inflation non-negative".into());
    }
    let costmap = inflate(&w.revealed_costmap(), inflation);
    let grid = Grid {
        width: w.frame.width,
        height: w.frame.height,
        res: w.frame.resolution,
        cells: costmap
            .cells()
            .iter()
            .map(|c| match c {
                CostCell::Unknown => 0,
                CostCell::Free(0) => 1,
                CostCell::Free(_) => 3,
                CostCell::Occupied => 2,
            })
            .collect(),
        start: w.start_pose,
    };
    let skeleton = skeletonize(&costmap).iter_cells().map(|c| [c.col, c.row]).collect();
    let found = detect_waypoints(&costmap, &pose, pose.heading, &params).unwrap_or_default();
    let selected = select_waypoint(&found, &[], &SimConfig::default().policy());
    Ok(Detection {
        grid,
        skeleton,
        candidates: found.iter().map(Candidate::from).collect(),
        selected: selected.as_ref().map(Candidate::from),
    })
}

#[derive(Serialize)]
struct Seen {
    name: String,
    side: String,
    distance: f64,
    x: f64,
    y: f64,
}

#[derive(Serialize)]
struct Described {
    text: String,
    level: DescriptionLevel,
    tags: Vec<String>,
    sightings: Vec<Seen>,
}

fn parse_level(s: &str) -> Result<DescriptionLevel, String> {
    match s.to_ascii_lowercase().as_str() {
        "concise" => Ok(DescriptionLevel::Concise),
        "balanced" => Ok(DescriptionLevel::Balanced),
        "detailed" => Ok(DescriptionLevel::Detailed),
        _ => Err(format!("unknown level {s:?}")),
    }
}

/// Describes what the robot sees from `(x, y, heading)` at `level`
/// (concise, balanced or detailed).
#[wasm_bindgen]
pub fn describe(map: &str, pois: &str, x: f64, y: f64, heading_deg: f64, level: &str, seed: u32) -> String {
    json(describe_inner(map, pois, Pose::new(x, y, heading_deg.to_radians()), level, seed))
}

fn describe_inner(map: &str, pois: &str, pose: Pose, level: &str, seed: u32) -> Result<Described, String> {
    let w = world(map, pois)?;
    let level = parse_level(level)?;
    if !w.is_free_point(&pose.position()) {
        return Err("pose is not on a free cell".into());
    }
    let config = SimConfig::default();
    let sightings = visible_pois(&w, &pose, &config.sensor);
    let capture = SceneCapture {
        sightings: sightings.clone(),
        pose,
        timestamp: 0.0,
    };
    let (d, _) = narrate(&mut TemplateProvider, &capture, level, u64::from(seed), &Budgets::default());
    Ok(Described {
        text: d.text,
        level,
        tags: d.scene_tags,
        sightings: sightings
            .iter()
            .map(|s| Seen {
                name: s.poi.name.clone(),
                side: s.side.word().into(),
                distance: s.distance,
                x: s.poi.anchor.x,
                y: s.poi.anchor.y,
            })
            .collect(),
    })
}

#[derive(Serialize)]
struct Spoken {
    t: f64,
    x: f64,
    y: f64,
    text: String,
}

#[derive(Serialize)]
struct Simulated {
    track: Vec<[f64; 2]>,
    descriptions: Vec<Spoken>,
    state_hash: String,
}

/// Lets the robot explore on its own for `seconds` of simulated time.
#[wasm_bindgen]
pub fn simulate(map: &str, pois: &str, seed: u32, seconds: f64) -> String {
    json(simulate_inner(map, pois, seed, seconds))
}

fn simulate_inner(map: &str, pois: &str, seed: u32, seconds: f64) -> Result<Simulated, String> {
    if !(0.0..=MAX_SIM_SECONDS).contains(&seconds) {
        return Err(format!("seconds must be within 0..={MAX_SIM_SECONDS}"));
    }
    let config = SimConfig {
        seed: u64::from(seed),
        ..SimConfig::default()
    };
    let ticks = (seconds * f64::from(config.tick_hz)).round() as u64;
    let mut sim = Sim::new(world(map, pois)?, config).map_err(|e| e.to_string())?;
    let mut track = Vec::with_capacity(ticks as usize);
    let mut descriptions = Vec::new();
    for _ in 0..ticks {
        sim.tick();
        let p = sim.pose();
        track.push([p.x, p.y]);
        for o in sim.drain_outbox() {
            if let Outbound::Description { t, description } = o {
                descriptions.push(Spoken {
                    t,
                    x: description.pose_at_capture.x,
                    y: description.pose_at_capture.y,
                    text: description.text,
                });
            }
        }
    }
    Ok(Simulated {
        track,
        descriptions,
        state_hash: sim.state_hash(),
    })
}
