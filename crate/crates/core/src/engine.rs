//! Tick loop tying the modules together.
//!
//! Each tick: drain commands through the interaction state machine, reveal
//! what the sensor sees, pick and plan a goal when needed, move, narrate and
//! record. Time is an integer tick count, so a world, a config and a command
//! script fully determine every logged byte.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geom::{Point, Pose};
use crate::gridworld::{
    inflate, reveal, visible_pois, Cell, CostCell, CostMap, PoiSighting, SensorConfig, Terrain, World, WorldError,
    DEFAULT_INFLATION_RADIUS,
};
use crate::interaction::{
    answer_question, classify_intent, end_conversation, handle_direction, is_ending_phrase, press, Answerer,
    ButtonEvent, Direction, Effect, GroundedAnswerer, InteractionState, Intent, KeywordConfig, Mode,
};
use crate::narrator::{
    draw_gap, narrate, should_emit, Budgets, Description, DescriptionLevel, DescriptionProvider, NarrationSchedule,
    SceneCapture, TemplateProvider, GAP_BOUNDS,
};
use crate::planner::{
    obstacle_ahead, plan_path, step_motion, MotionConfig, MotionState, MotionStatus, Path, PauseReason,
    DEFAULT_ARRIVAL_TOLERANCE, DEFAULT_STOP_DISTANCE,
};
use crate::script::Script;
use crate::semantic_map::{record, retrieve, SemanticStore, TargetSpec};
use crate::session::{analyze, label_query, EventKind, GoalTarget, Report, SessionError, SessionEvent, SessionLog};
use crate::waypoint::{detect_waypoints, select_waypoint, ClusterParams, SelectionPolicy, Waypoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    Template,
    External { endpoint: String, timeout_ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub tick_hz: u32,
    pub seed: u64,
    pub sensor: SensorConfig,
    pub cluster: ClusterParams,
    pub speed_default: f64,
    pub level_default: DescriptionLevel,
    pub stop_dist: f64,
    pub arrival_tol: f64,
    pub forward_cone_deg: f64,
    pub visited_radius: f64,
    pub inflation_radius: f64,
    /// Seconds blocked by an obstacle before a new path is planned.
    pub replan_after_s: f64,
    /// Seconds an unreachable goal stays excluded from selection.
    pub blacklist_s: f64,
    /// Speaking rate used to estimate when a description ends.
    pub speech_chars_per_sec: f64,
    pub budgets: Budgets,
    pub keywords: KeywordConfig,
    pub provider: ProviderConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            tick_hz: 10,
            seed: 0,
            sensor: SensorConfig::default(),
            cluster: ClusterParams::default(),
            speed_default: 0.5,
            level_default: DescriptionLevel::Balanced,
            stop_dist: DEFAULT_STOP_DISTANCE,
            arrival_tol: DEFAULT_ARRIVAL_TOLERANCE,
            forward_cone_deg: 45.0,
            visited_radius: 1.0,
            inflation_radius: DEFAULT_INFLATION_RADIUS,
            replan_after_s: 5.0,
            blacklist_s: 30.0,
            speech_chars_per_sec: 15.0,
            budgets: Budgets::default(),
            keywords: KeywordConfig::default(),
            provider: ProviderConfig::Template,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Session(#[from] SessionError),
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, EngineError> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| EngineError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: &str| Err(EngineError::InvalidConfig(m.into()));
        if self.tick_hz == 0 {
            return bad("tick_hz must be positive");
        }
        if !self.sensor.is_valid() {
            return bad("sensor range and angular step must be positive");
        }
        if !self.cluster.is_valid() {
            return bad("cluster eps must be positive and min_pts at least 1");
        }
        if !(0.0..=1.0).contains(&self.speed_default) {
            return bad("speed_default must lie in [0, 1]");
        }
        if self.speech_chars_per_sec <= 0.0 {
            return bad("speech_chars_per_sec must be positive");
        }
        Ok(())
    }

    pub fn motion(&self) -> MotionConfig {
        MotionConfig {
            stop_dist: self.stop_dist,
            arrival_tol: self.arrival_tol,
        }
    }

    pub fn policy(&self) -> SelectionPolicy {
        SelectionPolicy {
            forward_cone: self.forward_cone_deg.to_radians(),
            visited_radius: self.visited_radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Command {
    Button(ButtonEvent),
    Utterance(String),
    Hold(bool),
    /// A temporary obstacle at world coordinates, for `lifetime` seconds.
    InjectObstacle { x: f64, y: f64, lifetime: f64 },
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub point: Point,
    pub target: GoalTarget,
}

/// Values produced by a tick for live clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outbound {
    Description { t: f64, description: Description },
    Answer { t: f64, text: String },
    Waypoints { t: f64, waypoints: Vec<Waypoint> },
    Event(SessionEvent),
}

/// What happened to the robot in one tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickTrace {
    pub tick: u64,
    pub status: MotionStatus,
    pub mode: Mode,
    pub hold: bool,
    pub moved: bool,
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, Default)]
struct Narration {
    due: Option<u64>,
    speaking_end: u64,
    last_end: Option<u64>,
}

pub struct Sim {
    world: World,
    config: SimConfig,
    tick: u64,
    observed: CostMap,
    nav: CostMap,
    nav_dirty: bool,
    transients: Vec<(Cell, u64)>,
    interaction: InteractionState,
    motion: MotionState,
    path: Option<Path>,
    goal: Option<Goal>,
    pending_goal: Option<Goal>,
    candidates: Vec<Waypoint>,
    visited: Vec<Point>,
    blacklist: Vec<(Point, u64)>,
    obstacle_since: Option<u64>,
    failed_select: Option<(u64, Option<Cell>)>,
    narration: Narration,
    rng: ChaCha8Rng,
    store: SemanticStore,
    log: SessionLog,
    queue: VecDeque<Command>,
    outbox: Vec<Outbound>,
    conversation_sightings: Vec<PoiSighting>,
    last_status: MotionStatus,
    trace: Option<TickTrace>,
    shutdown: bool,
    finished: bool,
    provider: Box<dyn DescriptionProvider + Send>,
    answerer: Box<dyn Answerer + Send>,
}

impl Sim {
    /// A simulation with the template narrator and grounded answerer.
    pub fn new(world: World, config: SimConfig) -> Result<Sim, EngineError> {
        let answerer = GroundedAnswerer {
            keywords: config.keywords.clone(),
        };
        Self::with_providers(world, config, Box::new(TemplateProvider), Box::new(answerer))
    }

    pub fn with_providers(
        world: World,
        config: SimConfig,
        provider: Box<dyn DescriptionProvider + Send>,
        answerer: Box<dyn Answerer + Send>,
    ) -> Result<Sim, EngineError> {
        config.validate()?;
        let start = world.start_pose;
        if !world.is_free_point(&start.position()) {
            return Err(WorldError::PoseOutOfBounds { x: start.x, y: start.y }.into());
        }
        let mut interaction = InteractionState::new(start.heading);
        interaction.speed = (config.speed_default / 0.05).round() * 0.05;
        interaction.level = config.level_default;
        let observed = world.unknown_costmap();
        let nav = observed.clone();
        let mut log = SessionLog::new();
        log.push(0.0, EventKind::ModeEnter { mode: interaction.mode.kind() })?;
        if interaction.level != DescriptionLevel::Balanced {
            log.push(0.0, EventKind::LevelChanged { level: interaction.level })?;
        }
        Ok(Sim {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            motion: MotionState::new(start, interaction.speed),
            world,
            config,
            tick: 0,
            observed,
            nav,
            nav_dirty: true,
            transients: Vec::new(),
            interaction,
            path: None,
            goal: None,
            pending_goal: None,
            candidates: Vec::new(),
            visited: Vec::new(),
            blacklist: Vec::new(),
            obstacle_since: None,
            failed_select: None,
            narration: Narration::default(),
            store: SemanticStore::new(),
            log,
            queue: VecDeque::new(),
            outbox: Vec::new(),
            conversation_sightings: Vec::new(),
            last_status: MotionStatus::Idle,
            trace: None,
            shutdown: false,
            finished: false,
            provider,
            answerer,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Number of ticks run so far.
    pub fn ticks(&self) -> u64 {
        self.tick
    }

    /// Simulated seconds elapsed.
    pub fn now(&self) -> f64 {
        self.time_of(self.tick)
    }

    fn time_of(&self, tick: u64) -> f64 {
        tick as f64 / self.config.tick_hz as f64
    }

    pub fn pose(&self) -> Pose {
        self.motion.pose
    }

    pub fn motion(&self) -> &MotionState {
        &self.motion
    }

    pub fn interaction(&self) -> &InteractionState {
        &self.interaction
    }

    pub fn goal(&self) -> Option<&Goal> {
        self.goal.as_ref()
    }

    pub fn pending_goal(&self) -> Option<&Goal> {
        self.pending_goal.as_ref()
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_ref()
    }

    pub fn candidates(&self) -> &[Waypoint] {
        &self.candidates
    }

    /// Revealed map, without inflation.
    pub fn observed(&self) -> &CostMap {
        &self.observed
    }

    /// Inflated map used for planning, including temporary obstacles.
    pub fn nav_map(&self) -> &CostMap {
        &self.nav
    }

    pub fn transient_obstacles(&self) -> Vec<Cell> {
        self.transients.iter().map(|(c, _)| *c).collect()
    }

    pub fn store(&self) -> &SemanticStore {
        &self.store
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn last_trace(&self) -> Option<TickTrace> {
        self.trace
    }

    pub fn is_shutdown(&self) -> bool {
        self.shutdown
    }

    pub fn enqueue(&mut self, cmd: Command) {
        self.queue.push_back(cmd);
    }

    pub fn drain_outbox(&mut self) -> Vec<Outbound> {
        std::mem::take(&mut self.outbox)
    }

    fn emit(&mut self, t: f64, kind: EventKind) {
        let e = SessionEvent { t, kind };
        // tick times never decrease, so this cannot fail
        self.log.append(e.clone()).expect("tick times are monotone");
        self.outbox.push(Outbound::Event(e));
    }

    fn fault(&mut self, t: f64, message: impl Into<String>) {
        self.emit(t, EventKind::Fault { message: message.into() });
    }

    fn say(&mut self, t: f64, text: String) {
        self.emit(t, EventKind::Answer { text: text.clone() });
        self.outbox.push(Outbound::Answer { t, text });
    }

    /// Advances the simulation by one tick.
    pub fn tick(&mut self) {
        if self.shutdown {
            return;
        }
        let tick = self.tick;
        let t = self.time_of(tick);
        let before = self.motion.pose;

        let n = self.transients.len();
        self.transients.retain(|(_, until)| *until > tick);
        if self.transients.len() != n {
            self.nav_dirty = true;
        }

        while let Some(cmd) = self.queue.pop_front() {
            self.apply(cmd, t);
            if self.shutdown {
                break;
            }
        }
        if self.shutdown {
            self.tick += 1;
            self.finish();
            return;
        }

        match reveal(&self.world, &self.motion.pose, &self.config.sensor, &mut self.observed) {
            Ok(true) => self.nav_dirty = true,
            Ok(false) => {}
            Err(e) => self.fault(t, e.to_string()),
        }
        if self.nav_dirty {
            self.rebuild_nav();
        }

        if self.interaction.mode == Mode::Auto && self.goal.is_none() {
            self.auto_select(t);
        }

        self.step(t);

        let moved = self.motion.pose != before;
        self.narrate_if_due(t, moved);
        self.log_status(t);
        self.trace = Some(TickTrace {
            tick,
            status: self.motion.status,
            mode: self.interaction.mode,
            hold: self.interaction.hold,
            moved,
            pose: self.motion.pose,
        });
        self.tick += 1;
    }

    /// Closes the log at the current time. Further ticks do nothing.
    pub fn finish(&mut self) {
        if self.finished {
            return;
        }
        self.finished = true;
        self.shutdown = true;
        let t = self.now();
        self.emit(t, EventKind::ModeExit { mode: self.interaction.mode.kind() });
    }

    fn rebuild_nav(&mut self) {
        let mut base = self.observed.clone();
        for (cell, _) in &self.transients {
            base.set(*cell, CostCell::Occupied);
        }
        let mut nav = inflate(&base, self.config.inflation_radius);
        nav.bump_revision_past(self.nav.revision());
        self.nav = nav;
        self.nav_dirty = false;
    }

    fn apply(&mut self, cmd: Command, t: f64) {
        match cmd {
            Command::Button(ev) => {
                self.emit(t, EventKind::ButtonPress { event: ev });
                let (next, effects) = press(&self.interaction, ev);
                self.transition(next, effects, t);
            }
            Command::Utterance(text) => {
                if self.interaction.mode.is_conversation() {
                    self.converse(&text, t);
                } else {
                    self.fault(t, "utterance ignored outside conversation mode");
                }
            }
            Command::Hold(on) => self.interaction.hold = on,
            Command::InjectObstacle { x, y, lifetime } => self.inject(x, y, lifetime, t),
            Command::Shutdown => self.shutdown = true,
        }
    }

    fn inject(&mut self, x: f64, y: f64, lifetime: f64, t: f64) {
        let frame = self.world.frame;
        let Some(cell) = frame.cell_of(&Point::new(x, y)) else {
            return self.fault(t, format!("obstacle at ({x}, {y}) is outside the map"));
        };
        if frame.cell_of(&self.motion.pose.position()) == Some(cell) {
            return self.fault(t, "obstacle on the robot's own cell rejected");
        }
        if self.world.terrain(cell) == Terrain::Occupied || lifetime.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return self.fault(t, "obstacle rejected");
        }
        let ticks = (lifetime * self.config.tick_hz as f64).ceil() as u64;
        self.transients.push((cell, self.tick + ticks.max(1)));
        self.nav_dirty = true;
        self.rebuild_nav();
    }

    fn transition(&mut self, next: InteractionState, effects: Vec<Effect>, t: f64) {
        let prev = self.interaction;
        self.interaction = next;
        if prev.mode.kind() != next.mode.kind() {
            self.emit(t, EventKind::ModeExit { mode: prev.mode.kind() });
            self.emit(t, EventKind::ModeEnter { mode: next.mode.kind() });
        }
        if prev.level != next.level {
            self.emit(t, EventKind::LevelChanged { level: next.level });
        }
        if prev.speed != next.speed {
            self.emit(t, EventKind::SpeedChanged { speed: next.speed });
        }
        for e in effects {
            match e {
                Effect::PauseRobot => {
                    self.motion.status = MotionStatus::Paused(PauseReason::ConversationActive);
                    self.conversation_sightings = visible_pois(&self.world, &self.motion.pose, &self.config.sensor);
                }
                Effect::ResumeRobot => {
                    self.motion.status = MotionStatus::Idle;
                    self.conversation_sightings.clear();
                    if let Some(goal) = self.pending_goal.take() {
                        if !self.set_goal(goal, t) {
                            self.fault(t, "requested destination is not reachable");
                        }
                    }
                }
                Effect::RequestDirection(d) => {
                    if let Some(goal) = self.direction_goal(d, t) {
                        self.emit(t, EventKind::GoalSet { target: goal.target.clone() });
                        if !self.set_goal(goal, t) {
                            self.fault(t, "waypoint in that direction is not reachable");
                        }
                    }
                }
            }
        }
    }

    /// Candidate in direction `d`, or a voice notice that there is none.
    fn direction_goal(&mut self, d: Direction, t: f64) -> Option<Goal> {
        let pose = self.motion.pose;
        let cands = detect_waypoints(&self.nav, &pose, self.interaction.initial_heading, &self.config.cluster)
            .unwrap_or_default();
        self.publish_candidates(cands.clone(), t);
        match handle_direction(d, &cands, &pose) {
            Some(w) => Some(Goal {
                point: w.position,
                target: GoalTarget::Waypoint {
                    x: w.position.x,
                    y: w.position.y,
                    source: w.source,
                },
            }),
            None => {
                self.emit(t, EventKind::NoNavigable { direction: d });
                let word = match d {
                    Direction::Forward => "ahead",
                    Direction::Back => "behind you",
                    Direction::Left => "to the left",
                    Direction::Right => "to the right",
                };
                self.say(t, format!("There are no navigable points {word}."));
                None
            }
        }
    }

    fn publish_candidates(&mut self, cands: Vec<Waypoint>, t: f64) {
        if cands != self.candidates {
            self.candidates = cands.clone();
            self.outbox.push(Outbound::Waypoints { t, waypoints: cands });
        }
    }

    fn converse(&mut self, text: &str, t: f64) {
        if is_ending_phrase(text, &self.config.keywords) {
            let (next, effects) = end_conversation(&self.interaction);
            self.transition(next, effects, t);
            return;
        }
        let intent = classify_intent(text, &self.config.keywords);
        let names: Vec<String> = self.world.pois.iter().map(|p| p.name.clone()).collect();
        let class = label_query(&intent, &names);
        self.emit(t, EventKind::Query { class, text: text.to_string() });
        self.emit(t, EventKind::IntentResult { intent: intent.clone() });
        match intent {
            Intent::QnA(q) => {
                let sightings = self.conversation_sightings.clone();
                let (answer, err) =
                    answer_question(self.answerer.as_mut(), &q, &sightings, &self.config.keywords);
                if let Some(e) = err {
                    self.fault(t, e.to_string());
                }
                self.say(t, answer);
            }
            Intent::TakeMeThere(target) => match retrieve(&self.store, &target, self.world.start_pose) {
                Ok(r) => {
                    let point = r.pose.position();
                    let goal_target = match (target, r.record_id) {
                        (TargetSpec::Named(_), Some(id)) => GoalTarget::Record { id, x: point.x, y: point.y },
                        _ => GoalTarget::Initial { x: point.x, y: point.y },
                    };
                    self.emit(t, EventKind::GoalSet { target: goal_target.clone() });
                    self.pending_goal = Some(Goal { point, target: goal_target });
                    self.say(t, "All right, I will take you there once we set off.".into());
                }
                Err(_) => self.say(t, "I have not passed that place yet.".into()),
            },
            Intent::DirectionSpec(d) => {
                if let Some(goal) = self.direction_goal(d, t) {
                    self.emit(t, EventKind::GoalSet { target: goal.target.clone() });
                    self.pending_goal = Some(goal);
                    self.say(t, "All right, I will go that way once we set off.".into());
                }
            }
        }
    }

    fn nearest_traversable(&self, p: &Point, max_r: f64) -> Option<Point> {
        let frame = self.nav.frame;
        if self.nav.is_traversable_point(p) {
            return frame.cell_of(p).map(|c| frame.center(c));
        }
        let center = frame.cell_of(p)?;
        let k = (max_r / frame.resolution).ceil() as i64;
        let mut best: Option<(f64, usize, Point)> = None;
        for dr in -k..=k {
            for dc in -k..=k {
                let Some(c) = frame.checked_cell(center.col as i64 + dc, center.row as i64 + dr) else {
                    continue;
                };
                if !self.nav.get(c).is_traversable() {
                    continue;
                }
                let q = frame.center(c);
                let d = q.distance(p);
                let i = frame.index(c);
                if d <= max_r && best.is_none_or(|(bd, bi, _)| d < bd || (d == bd && i < bi)) {
                    best = Some((d, i, q));
                }
            }
        }
        best.map(|(_, _, q)| q)
    }

    fn plan_to(&self, target: &Point) -> Option<Path> {
        let goal = self.nearest_traversable(target, 0.5)?;
        plan_path(&self.nav, &self.motion.pose.position(), &goal).ok()
    }

    fn set_goal(&mut self, goal: Goal, _t: f64) -> bool {
        match self.plan_to(&goal.point) {
            Some(path) => {
                self.path = Some(path);
                self.goal = Some(goal);
                self.motion.next_point = 0;
                self.obstacle_since = None;
                true
            }
            None => false,
        }
    }

    fn auto_select(&mut self, t: f64) -> bool {
        let here = self.nav.frame.cell_of(&self.motion.pose.position());
        if self.failed_select == Some((self.nav.revision(), here)) {
            return false;
        }
        let pose = self.motion.pose;
        let cands = match detect_waypoints(&self.nav, &pose, self.interaction.initial_heading, &self.config.cluster) {
            Ok(c) => c,
            Err(e) => {
                self.failed_select = Some((self.nav.revision(), here));
                self.fault(t, e.to_string());
                return false;
            }
        };
        self.publish_candidates(cands.clone(), t);
        let now = self.tick;
        let keep = (self.config.blacklist_s * self.config.tick_hz as f64) as u64;
        self.blacklist.retain(|(_, at)| now.saturating_sub(*at) < keep);
        let mut pool: Vec<Waypoint> = cands
            .into_iter()
            .filter(|w| self.blacklist.iter().all(|(b, _)| b.distance(&w.position) > 0.5))
            .collect();
        let policy = self.config.policy();
        while let Some(w) = select_waypoint(&pool, &self.visited, &policy) {
            let goal = Goal {
                point: w.position,
                target: GoalTarget::Waypoint {
                    x: w.position.x,
                    y: w.position.y,
                    source: w.source,
                },
            };
            if self.set_goal(goal, t) {
                self.emit(t, EventKind::GoalSet { target: self.goal.as_ref().unwrap().target.clone() });
                self.failed_select = None;
                return true;
            }
            self.blacklist.push((w.position, now));
            pool.retain(|c| c.position != w.position);
        }
        self.failed_select = Some((self.nav.revision(), here));
        self.fault(t, "no reachable waypoint");
        false
    }

    fn path_ahead_clear(&self, path: &Path) -> bool {
        path.points
            .iter()
            .skip(self.motion.next_point.max(1))
            .all(|p| self.nav.is_traversable_point(p))
    }

    /// Drops the current goal as unreachable and, in auto mode, picks another.
    fn abandon_goal(&mut self, t: f64) {
        if let Some(g) = self.goal.take() {
            self.blacklist.push((g.point, self.tick));
        }
        self.path = None;
        self.obstacle_since = None;
        self.motion.status = MotionStatus::Idle;
        if self.interaction.mode == Mode::Auto {
            self.auto_select(t);
        }
    }

    fn replan(&mut self, t: f64) {
        let Some(goal) = self.goal.clone() else { return };
        match self.plan_to(&goal.point) {
            Some(path) => {
                self.path = Some(path);
                self.motion.next_point = 0;
                self.obstacle_since = None;
            }
            None => self.abandon_goal(t),
        }
    }

    fn step(&mut self, t: f64) {
        self.motion.speed = self.interaction.speed;
        self.motion.hold = self.interaction.hold;
        if self.interaction.mode.is_conversation() {
            self.motion.status = MotionStatus::Paused(PauseReason::ConversationActive);
            return;
        }
        let cfg = self.config.motion();
        if let Some(path) = &self.path {
            let blocked = obstacle_ahead(&self.nav, &self.motion.pose, path, self.motion.next_point, cfg.stop_dist);
            if !blocked && !self.path_ahead_clear(path) {
                self.replan(t);
            }
        }
        let Some(path) = &self.path else {
            self.motion.status = if !self.interaction.hold {
                MotionStatus::Paused(PauseReason::HandleReleased)
            } else if self.motion.status == MotionStatus::Arrived {
                MotionStatus::Arrived
            } else {
                MotionStatus::Idle
            };
            return;
        };
        if let MotionStatus::Paused(PauseReason::ConversationActive) = self.motion.status {
            self.motion.status = MotionStatus::Idle;
        }
        let next = step_motion(&self.motion, path, 1.0 / self.config.tick_hz as f64, &self.nav, &cfg);
        self.motion = next;
        match next.status {
            MotionStatus::Paused(PauseReason::ObstacleAhead) => {
                let since = *self.obstacle_since.get_or_insert(self.tick);
                let wait = (self.config.replan_after_s * self.config.tick_hz as f64).ceil() as u64;
                if self.tick - since >= wait {
                    self.replan(t);
                }
            }
            MotionStatus::Arrived => {
                self.obstacle_since = None;
                let pos = self.motion.pose.position();
                self.emit(t, EventKind::Arrived { x: pos.x, y: pos.y });
                if let Some(g) = self.goal.take() {
                    self.visited.push(g.point);
                }
                self.path = None;
                if self.interaction.mode == Mode::Auto && self.auto_select(t) {
                    // carry straight on to the next goal
                    self.motion.status = MotionStatus::Navigating;
                }
            }
            _ => self.obstacle_since = None,
        }
    }

    fn gap_ticks(&mut self) -> u64 {
        let g = draw_gap(&mut self.rng);
        (g * self.config.tick_hz as f64 - 1e-9).ceil() as u64
    }

    fn narrate_if_due(&mut self, t: f64, moved: bool) {
        let status = if moved { self.motion.status } else { MotionStatus::Idle };
        let mode = self.interaction.mode;
        if status != MotionStatus::Navigating || mode.is_conversation() {
            self.narration.due = None;
            return;
        }
        let tick = self.tick;
        let due = match self.narration.due {
            Some(d) => d,
            None => {
                let d = tick.max(self.narration.speaking_end) + self.gap_ticks();
                self.narration.due = Some(d);
                d
            }
        };
        let sched = NarrationSchedule {
            prev_end: self.narration.last_end.map_or(0.0, |e| self.time_of(e)),
            next_due: self.time_of(due),
            gap_bounds: GAP_BOUNDS,
        };
        if !should_emit(status, t, &sched, &mode) {
            return;
        }
        let pose = self.motion.pose;
        let sightings = visible_pois(&self.world, &pose, &self.config.sensor);
        let capture = SceneCapture {
            sightings: sightings.clone(),
            pose,
            timestamp: t,
        };
        let seed: u64 = self.rng.random();
        let level = self.interaction.level;
        let (description, err) = narrate(self.provider.as_mut(), &capture, level, seed, &self.config.budgets);
        if let Some(e) = err {
            self.fault(t, e.to_string());
        }
        let chars = description.text.chars().count() as f64;
        let reading = (chars / self.config.speech_chars_per_sec * self.config.tick_hz as f64).ceil() as u64;
        self.narration.speaking_end = tick + reading.max(1);
        self.narration.last_end = Some(self.narration.speaking_end);
        self.narration.due = Some(self.narration.speaking_end + self.gap_ticks());
        self.emit(
            t,
            EventKind::DescriptionEmitted {
                level,
                text: description.text.clone(),
                pose,
            },
        );
        record(&mut self.store, pose, &description, &sightings);
        self.outbox.push(Outbound::Description { t, description });
    }

    fn log_status(&mut self, t: f64) {
        let now = self.motion.status;
        let was = self.last_status;
        if now == was {
            return;
        }
        if let MotionStatus::Paused(_) = was {
            if !matches!(now, MotionStatus::Paused(_)) {
                self.emit(t, EventKind::Resumed);
            }
        }
        if let MotionStatus::Paused(reason) = now {
            self.emit(t, EventKind::Paused { reason });
        }
        self.last_status = now;
    }

    /// End time of the description currently being read, in seconds.
    pub fn speaking_until(&self) -> f64 {
        self.time_of(self.narration.speaking_end)
    }

    /// SHA-256 over the full observable state, hex encoded.
    pub fn state_hash(&self) -> String {
        #[derive(Serialize)]
        struct Snapshot<'a> {
            tick: u64,
            motion: &'a MotionState,
            interaction: &'a InteractionState,
            goal: &'a Option<Goal>,
            pending_goal: &'a Option<Goal>,
            path: Option<&'a Vec<Point>>,
            visited: &'a Vec<Point>,
            nav_revision: u64,
            observed: Vec<u8>,
            transients: &'a Vec<(Cell, u64)>,
            store: String,
            log: String,
        }
        let observed = self
            .observed
            .cells()
            .iter()
            .map(|c| match c {
                CostCell::Unknown => 0,
                CostCell::Free(_) => 1,
                CostCell::Occupied => 2,
            })
            .collect();
        let snap = Snapshot {
            tick: self.tick,
            motion: &self.motion,
            interaction: &self.interaction,
            goal: &self.goal,
            pending_goal: &self.pending_goal,
            path: self.path.as_ref().map(|p| &p.points),
            visited: &self.visited,
            nav_revision: self.nav.revision(),
            observed,
            transients: &self.transients,
            store: self.store.export_jsonl(),
            log: self.log.to_jsonl(),
        };
        let bytes = serde_json::to_vec(&snap).expect("snapshot serialises");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Outcome of a headless run.
pub struct ScenarioOutcome {
    pub sim: Sim,
    pub log_text: String,
    pub report: Report,
    pub state_hash: String,
}

/// Runs `script` against `world` for `duration` seconds of sim time, or
/// until a shutdown command. Commands apply at the first tick at or after
/// their time stamp.
pub fn run_scenario(
    world: World,
    config: SimConfig,
    script: &Script,
    duration: f64,
) -> Result<ScenarioOutcome, EngineError> {
    run_sim(Sim::new(world, config)?, script, duration)
}

/// [`run_scenario`] on an already built simulator, e.g. one with an
/// external description provider.
pub fn run_sim(mut sim: Sim, script: &Script, duration: f64) -> Result<ScenarioOutcome, EngineError> {
    let hz = sim.config.tick_hz as f64;
    let end = (duration.max(script.end_time()) * hz).round() as u64;
    let mut next = 0;
    for tick in 0..end {
        let t = tick as f64 / hz;
        while next < script.entries.len() && script.entries[next].t <= t + 1e-9 {
            sim.enqueue(script.entries[next].command.clone());
            next += 1;
        }
        sim.tick();
        if sim.is_shutdown() {
            break;
        }
    }
    sim.finish();
    let log_text = sim.log().to_jsonl();
    let report = analyze(sim.log(), Some(sim.now()))?;
    let state_hash = sim.state_hash();
    Ok(ScenarioOutcome {
        sim,
        log_text,
        report,
        state_hash,
    })
}
