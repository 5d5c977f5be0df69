//! Simulation core for a map-less guide robot that explores an unknown
//! indoor space with a blind user.
//!
//! The crate is organised as a pipeline of small, mostly pure modules:
//!
//! * [`gridworld`]: ground-truth world, ray-cast sensor, online cost map, inflation.
//! * [`waypoint`]: skeletonization, branch detection, clustering and goal selection.
//! * [`planner`]: grid path planning and hold-to-move kinematics.
//! * [`narrator`]: three-level scene descriptions and their scheduling.
//! * [`semantic_map`]: description store and "take me there" retrieval.
//! * [`interaction`]: handle buttons, modes and conversation intents.
//! * [`session`]: event log and usage statistics.
//! * [`engine`]: the deterministic tick loop tying everything together.
//! * [`protocol`]: the wire messages exchanged with live clients.

pub mod engine;
pub mod geom;
pub mod gridworld;
pub mod interaction;
pub mod narrator;
pub mod planner;
pub mod protocol;
pub mod script;
pub mod semantic_map;
pub mod session;
pub mod waypoint;

pub use geom::{normalize_angle, Point, Pose};
