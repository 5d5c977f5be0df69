//! Wire messages exchanged with live clients.
//!
//! Every frame is a JSON object with a version field `v` (always 1) and a
//! `type` tag. Inbound frames mirror [`Command`]; outbound frames carry the
//! tick time `t`. `docs/protocol.md` has examples of each.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Command, Outbound, Sim};
use crate::gridworld::{CostCell, CostMap};
use crate::interaction::{ButtonEvent, Mode};
use crate::narrator::DescriptionLevel;
use crate::planner::MotionStatus;
use crate::script::{parse_button, parse_press};
use crate::session::SessionEvent;
use crate::waypoint::WaypointSource;
use crate::{Point, Pose};

pub const PROTOCOL_VERSION: u64 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum InboundBody {
    Button { button: String, press: String },
    Say { text: String },
    Hold { on: bool },
    Obstacle { x: f64, y: f64, lifetime: f64 },
    Shutdown,
}

#[derive(Debug, Deserialize)]
struct Envelope {
    v: u64,
    #[serde(flatten)]
    rest: serde_json::Map<String, serde_json::Value>,
}

/// Parses one inbound frame into an engine command.
pub fn parse_inbound(frame: &str) -> Result<Command, ProtocolError> {
    let bad = |m: String| ProtocolError::Malformed(m);
    let env: Envelope = serde_json::from_str(frame).map_err(|e| bad(e.to_string()))?;
    if env.v != PROTOCOL_VERSION {
        return Err(ProtocolError::UnsupportedVersion(env.v));
    }
    let body: InboundBody =
        serde_json::from_value(serde_json::Value::Object(env.rest)).map_err(|e| bad(e.to_string()))?;
    Ok(match body {
        InboundBody::Button { button, press } => {
            let b = parse_button(&button).ok_or_else(|| bad(format!("unknown button {button:?}")))?;
            let p = parse_press(&press).ok_or_else(|| bad(format!("unknown press {press:?}")))?;
            Command::Button(ButtonEvent::new(b, p))
        }
        InboundBody::Say { text } => {
            if text.trim().is_empty() {
                return Err(bad("empty utterance".into()));
            }
            Command::Utterance(text)
        }
        InboundBody::Hold { on } => Command::Hold(on),
        InboundBody::Obstacle { x, y, lifetime } => {
            if !(x.is_finite() && y.is_finite() && lifetime.is_finite() && lifetime > 0.0) {
                return Err(bad("obstacle needs finite x, y and a positive lifetime".into()));
            }
            Command::InjectObstacle { x, y, lifetime }
        }
        InboundBody::Shutdown => Command::Shutdown,
    })
}

/// Encodes a command as an inbound frame.
pub fn encode_inbound(cmd: &Command) -> String {
    let body = match cmd {
        Command::Button(e) => InboundBody::Button {
            button: format!("{:?}", e.button).to_ascii_lowercase(),
            press: format!("{:?}", e.press).to_ascii_lowercase(),
        },
        Command::Utterance(text) => InboundBody::Say { text: text.clone() },
        Command::Hold(on) => InboundBody::Hold { on: *on },
        Command::InjectObstacle { x, y, lifetime } => InboundBody::Obstacle {
            x: *x,
            y: *y,
            lifetime: *lifetime,
        },
        Command::Shutdown => InboundBody::Shutdown,
    };
    let mut v = serde_json::to_value(body).expect("inbound bodies serialize");
    v.as_object_mut()
        .expect("tagged enum is an object")
        .insert("v".into(), PROTOCOL_VERSION.into());
    v.to_string()
}

/// Cell codes used in grid patches.
pub fn cell_code(c: CostCell) -> u8 {
    match c {
        CostCell::Unknown => 0,
        CostCell::Free(_) => 1,
        CostCell::Occupied => 2,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointView {
    pub x: f64,
    pub y: f64,
    pub source: WaypointSource,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub tick: u64,
    pub pose: Pose,
    pub mode: Mode,
    pub speed: f64,
    pub level: DescriptionLevel,
    pub hold: bool,
    pub goal: Option<Point>,
    pub status: MotionStatus,
    /// Last grid patch revision sent before this snapshot.
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPatch {
    pub revision: u64,
    pub width: usize,
    pub height: usize,
    pub res: f64,
    /// `[col, row, code]` with codes from [`cell_code`].
    pub cells: Vec<[usize; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerBody {
    State(StateSnapshot),
    GridPatch(GridPatch),
    Description { text: String, level: DescriptionLevel },
    Answer { text: String },
    Waypoints { list: Vec<WaypointView> },
    Event { event: SessionEvent },
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerMessage {
    pub v: u64,
    pub t: f64,
    #[serde(flatten)]
    pub body: ServerBody,
}

impl ServerMessage {
    pub fn new(t: f64, body: ServerBody) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            t,
            body,
        }
    }

    pub fn error(t: f64, message: impl Into<String>) -> Self {
        Self::new(t, ServerBody::Error { message: message.into() })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

impl From<Outbound> for ServerMessage {
    fn from(o: Outbound) -> Self {
        match o {
            Outbound::Description { t, description } => ServerMessage::new(
                t,
                ServerBody::Description {
                    text: description.text,
                    level: description.level,
                },
            ),
            Outbound::Answer { t, text } => ServerMessage::new(t, ServerBody::Answer { text }),
            Outbound::Waypoints { t, waypoints } => ServerMessage::new(
                t,
                ServerBody::Waypoints {
                    list: waypoints
                        .iter()
                        .map(|w| WaypointView {
                            x: w.position.x,
                            y: w.position.y,
                            source: w.source,
                            distance: w.distance,
                        })
                        .collect(),
                },
            ),
            Outbound::Event(e) => ServerMessage::new(e.t, ServerBody::Event { event: e }),
        }
    }
}

/// Delta encoder for the revealed grid; revisions count patches sent.
#[derive(Debug, Clone, Default)]
pub struct GridTracker {
    sent: Vec<u8>,
    revision: u64,
}

impl GridTracker {
    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Cells that changed since the last patch, or `None` if nothing did.
    pub fn patch(&mut self, map: &CostMap) -> Option<GridPatch> {
        let frame = &map.frame;
        if self.sent.len() != frame.len() {
            self.sent = vec![cell_code(CostCell::Unknown); frame.len()];
        }
        let mut cells = Vec::new();
        for (i, &c) in map.cells().iter().enumerate() {
            let code = cell_code(c);
            if self.sent[i] != code {
                self.sent[i] = code;
                let cell = frame.cell_at(i);
                cells.push([cell.col, cell.row, code as usize]);
            }
        }
        if cells.is_empty() {
            return None;
        }
        self.revision += 1;
        Some(GridPatch {
            revision: self.revision,
            width: frame.width,
            height: frame.height,
            res: frame.resolution,
            cells,
        })
    }
}

/// One client session: the engine plus its grid delta state.
pub struct LiveSession {
    pub sim: Sim,
    grid: GridTracker,
}

impl LiveSession {
    pub fn new(sim: Sim) -> Self {
        Self {
            sim,
            grid: GridTracker::default(),
        }
    }

    pub fn snapshot(&self) -> StateSnapshot {
        let sim = &self.sim;
        let inter = sim.interaction();
        StateSnapshot {
            tick: sim.ticks(),
            pose: sim.pose(),
            mode: inter.mode,
            speed: inter.speed,
            level: inter.level,
            hold: inter.hold,
            goal: sim.goal().map(|g| g.point),
            status: sim.motion().status,
            revision: self.grid.revision(),
        }
    }

    fn grid_and_state(&mut self, out: &mut Vec<ServerMessage>) {
        let t = self.sim.now();
        if let Some(p) = self.grid.patch(self.sim.observed()) {
            out.push(ServerMessage::new(t, ServerBody::GridPatch(p)));
        }
        out.push(ServerMessage::new(t, ServerBody::State(self.snapshot())));
    }

    /// Messages for a newly connected client.
    pub fn hello(&mut self) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        self.grid_and_state(&mut out);
        out
    }

    /// Applies a client frame. Malformed frames yield an error message.
    pub fn receive(&mut self, frame: &str) -> Result<(), ServerMessage> {
        match parse_inbound(frame) {
            Ok(cmd) => {
                self.sim.enqueue(cmd);
                Ok(())
            }
            Err(e) => Err(ServerMessage::error(self.sim.now(), e.to_string())),
        }
    }

    /// Runs one tick and returns everything the client should see.
    pub fn step(&mut self) -> Vec<ServerMessage> {
        self.sim.tick();
        let mut out: Vec<ServerMessage> = self.sim.drain_outbox().into_iter().map(Into::into).collect();
        self.grid_and_state(&mut out);
        out
    }
}
