//! Handle buttons, navigation modes and conversation handling.
//!
//! Auto mode follows waypoints on its own; Up/Down change speed and
//! Left/Right change the description level. Manual mode waits for a
//! direction button. A long press on the centre button pauses the robot
//! and opens a conversation, which ends with another long press or an
//! ending phrase.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{normalize_angle, Pose, Side};
use crate::gridworld::PoiSighting;
use crate::narrator::{DescriptionLevel, ProviderError};
use crate::semantic_map::{resolve_target, SemanticError, TargetSpec};
use crate::waypoint::Waypoint;

pub const SPEED_STEP: f64 = 0.05;
pub const DEFAULT_SPEED: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaseMode {
    Auto,
    Manual,
}

impl From<BaseMode> for Mode {
    fn from(m: BaseMode) -> Mode {
        match m {
            BaseMode::Auto => Mode::Auto,
            BaseMode::Manual => Mode::Manual,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Auto,
    Manual,
    Conversation { prior: BaseMode },
}

impl Mode {
    pub fn is_conversation(&self) -> bool {
        matches!(self, Mode::Conversation { .. })
    }

    /// Name used for statistics, ignoring the prior mode.
    pub fn kind(&self) -> ModeKind {
        match self {
            Mode::Auto => ModeKind::Auto,
            Mode::Manual => ModeKind::Manual,
            Mode::Conversation { .. } => ModeKind::Conversation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModeKind {
    Auto,
    Conversation,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionState {
    pub mode: Mode,
    pub speed: f64,
    pub level: DescriptionLevel,
    pub hold: bool,
    pub initial_heading: f64,
}

impl InteractionState {
    pub fn new(initial_heading: f64) -> Self {
        Self {
            mode: Mode::Auto,
            speed: DEFAULT_SPEED,
            level: DescriptionLevel::Balanced,
            hold: true,
            initial_heading,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Button {
    Up,
    Down,
    Left,
    Right,
    Center,
}

impl Button {
    pub const ALL: [Button; 5] = [Button::Up, Button::Down, Button::Left, Button::Right, Button::Center];

    pub fn direction(self) -> Option<Direction> {
        match self {
            Button::Up => Some(Direction::Forward),
            Button::Down => Some(Direction::Back),
            Button::Left => Some(Direction::Left),
            Button::Right => Some(Direction::Right),
            Button::Center => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Press {
    Short,
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ButtonEvent {
    pub button: Button,
    pub press: Press,
}

impl ButtonEvent {
    pub fn new(button: Button, press: Press) -> Self {
        Self { button, press }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Back,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Forward, Direction::Back, Direction::Left, Direction::Right];

    pub fn side(self) -> Side {
        match self {
            Direction::Forward => Side::Front,
            Direction::Back => Side::Behind,
            Direction::Left => Side::Left,
            Direction::Right => Side::Right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Effect {
    PauseRobot,
    ResumeRobot,
    RequestDirection(Direction),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedChange {
    Up,
    Down,
}

/// Steps the speed by 0.05 m/s, clamped to [0, 1] and kept on the 0.05 lattice.
pub fn adjust_speed(v: f64, dir: SpeedChange) -> f64 {
    let steps = (v / SPEED_STEP).round() as i64;
    let steps = match dir {
        SpeedChange::Up => steps + 1,
        SpeedChange::Down => steps - 1,
    };
    steps.clamp(0, 20) as f64 * SPEED_STEP
}

/// Right gives more detail, Left less; no wraparound.
pub fn cycle_level(level: DescriptionLevel, dir: Direction) -> DescriptionLevel {
    use DescriptionLevel::*;
    match (dir, level) {
        (Direction::Right, Concise) => Balanced,
        (Direction::Right, _) => Detailed,
        (Direction::Left, Detailed) => Balanced,
        (Direction::Left, _) => Concise,
        _ => level,
    }
}

/// Applies one button event. Long presses of directional buttons count as
/// short ones.
pub fn press(state: &InteractionState, ev: ButtonEvent) -> (InteractionState, Vec<Effect>) {
    let mut next = *state;
    let mut effects = Vec::new();
    let long_center = ev.button == Button::Center && ev.press == Press::Long;
    match state.mode {
        Mode::Auto => match ev.button {
            Button::Up => next.speed = adjust_speed(state.speed, SpeedChange::Up),
            Button::Down => next.speed = adjust_speed(state.speed, SpeedChange::Down),
            Button::Left => next.level = cycle_level(state.level, Direction::Left),
            Button::Right => next.level = cycle_level(state.level, Direction::Right),
            Button::Center if long_center => {
                next.mode = Mode::Conversation { prior: BaseMode::Auto };
                effects.push(Effect::PauseRobot);
            }
            Button::Center => next.mode = Mode::Manual,
        },
        Mode::Manual => match ev.button.direction() {
            Some(d) => effects.push(Effect::RequestDirection(d)),
            None if long_center => {
                next.mode = Mode::Conversation { prior: BaseMode::Manual };
                effects.push(Effect::PauseRobot);
            }
            None => next.mode = Mode::Auto,
        },
        Mode::Conversation { prior } => {
            if long_center {
                next.mode = prior.into();
                effects.push(Effect::ResumeRobot);
            }
        }
    }
    (next, effects)
}

/// Ends a conversation, restoring the prior mode.
pub fn end_conversation(state: &InteractionState) -> (InteractionState, Vec<Effect>) {
    match state.mode {
        Mode::Conversation { prior } => (
            InteractionState {
                mode: prior.into(),
                ..*state
            },
            vec![Effect::ResumeRobot],
        ),
        _ => (*state, vec![]),
    }
}

/// Picks the candidate in the ±45° sector of `dir`, closest to the sector
/// centre; ties go to the farther candidate. Bearings are taken from `pose`.
pub fn handle_direction(dir: Direction, candidates: &[Waypoint], pose: &Pose) -> Option<Waypoint> {
    let center = dir.side().center_bearing();
    candidates
        .iter()
        .filter_map(|w| {
            let b = pose.bearing_to(&w.position);
            (Side::from_bearing(b) == dir.side()).then(|| (normalize_angle(b - center).abs(), w))
        })
        .min_by(|(oa, a), (ob, b)| {
            oa.total_cmp(ob)
                .then(b.distance.total_cmp(&a.distance))
                .then(a.position.x.total_cmp(&b.position.x))
                .then(a.position.y.total_cmp(&b.position.y))
        })
        .map(|(_, w)| *w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Intent {
    TakeMeThere(TargetSpec),
    QnA(String),
    DirectionSpec(Direction),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid interaction config: {0}")]
    Parse(#[from] toml::de::Error),
}

/// Keyword tables for the rule-based classifier and ending phrases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeywordConfig {
    pub ending_phrases: Vec<String>,
    pub direction_verbs: Vec<String>,
    pub forward_words: Vec<String>,
    pub back_words: Vec<String>,
    pub left_words: Vec<String>,
    pub right_words: Vec<String>,
    /// Words allowed between a verb and its direction ("go to the right").
    pub filler_words: Vec<String>,
    /// Words that make a question about the surroundings in general.
    pub general_words: Vec<String>,
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl Default for KeywordConfig {
    fn default() -> Self {
        Self {
            ending_phrases: strings(&["thank you", "thanks", "that's all", "that is all", "goodbye", "bye"]),
            direction_verbs: strings(&["go", "turn", "move", "head", "walk", "proceed"]),
            forward_words: strings(&["forward", "forwards", "ahead", "straight", "front"]),
            back_words: strings(&["back", "backward", "backwards", "around"]),
            left_words: strings(&["left"]),
            right_words: strings(&["right"]),
            filler_words: strings(&["to", "the", "towards", "toward", "on", "my", "your", "side", "please"]),
            general_words: strings(&[
                "around",
                "surrounding",
                "surroundings",
                "nearby",
                "here",
                "area",
                "see",
                "anything",
                "everything",
            ]),
        }
    }
}

impl KeywordConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    fn direction_of(&self, word: &str) -> Option<Direction> {
        let has = |v: &Vec<String>| v.iter().any(|w| w == word);
        if has(&self.forward_words) {
            Some(Direction::Forward)
        } else if has(&self.back_words) {
            Some(Direction::Back)
        } else if has(&self.left_words) {
            Some(Direction::Left)
        } else if has(&self.right_words) {
            Some(Direction::Right)
        } else {
            None
        }
    }
}

/// Lowercase words, punctuation removed (apostrophes kept).
pub fn words(s: &str) -> Vec<String> {
    s.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

fn phrase_direction(phrase: &str, cfg: &KeywordConfig) -> Option<Direction> {
    let ws: Vec<String> = words(phrase)
        .into_iter()
        .filter(|w| !cfg.filler_words.contains(w))
        .collect();
    match ws.as_slice() {
        [w] => cfg.direction_of(w),
        _ => None,
    }
}

fn verb_direction(ws: &[String], cfg: &KeywordConfig) -> Option<Direction> {
    for (i, w) in ws.iter().enumerate() {
        if !cfg.direction_verbs.contains(w) {
            continue;
        }
        let next = ws[i + 1..].iter().find(|n| !cfg.filler_words.contains(n));
        if let Some(d) = next.and_then(|n| cfg.direction_of(n)) {
            return Some(d);
        }
    }
    None
}

/// Rule-based intent classifier. Total on non-empty input.
pub fn classify_intent(utterance: &str, cfg: &KeywordConfig) -> Intent {
    match resolve_target(utterance) {
        Ok(TargetSpec::Initial) => return Intent::TakeMeThere(TargetSpec::Initial),
        Ok(TargetSpec::Named(name)) => {
            return match phrase_direction(&name, cfg) {
                Some(d) => Intent::DirectionSpec(d),
                None => Intent::TakeMeThere(TargetSpec::Named(name)),
            }
        }
        Err(SemanticError::UnresolvedTarget(_)) | Err(_) => {}
    }
    match verb_direction(&words(utterance), cfg) {
        Some(d) => Intent::DirectionSpec(d),
        None => Intent::QnA(utterance.trim().to_string()),
    }
}

/// Case-insensitive whole-word match against the ending phrases.
pub fn is_ending_phrase(utterance: &str, cfg: &KeywordConfig) -> bool {
    let padded = format!(" {} ", words(utterance).join(" "));
    if padded.trim().is_empty() {
        return false;
    }
    cfg.ending_phrases
        .iter()
        .map(|p| words(p).join(" "))
        .filter(|p| !p.is_empty())
        .any(|p| padded.contains(&format!(" {p} ")))
}

const STOP_WORDS: &[&str] = &[
    "the", "a", "an", "is", "are", "what", "whats", "what's", "does", "do", "have", "has", "there", "it", "this",
    "that", "of", "in", "on", "at", "to", "me", "i", "you", "can", "tell", "about", "which", "where", "how", "any",
    "and", "or", "for", "with", "its", "it's", "they", "them", "be", "sell", "some",
];

fn content_words(s: &str) -> Vec<String> {
    words(s)
        .into_iter()
        .filter(|w| w.len() >= 3 && !STOP_WORDS.contains(&w.as_str()))
        .collect()
}

fn fact_clause(fact: &str) -> String {
    let f = fact.trim().trim_end_matches(['.', '!', '?']);
    if f.chars().next().is_some_and(char::is_lowercase) {
        format!("It {f}.")
    } else {
        format!("{f}.")
    }
}

fn whereabouts(side: Side) -> &'static str {
    match side {
        Side::Left => "on your left",
        Side::Front => "ahead",
        Side::Right => "on your right",
        Side::Behind => "behind you",
    }
}

/// Answers a question from what is currently sighted. Only POI facts are
/// used, so the answer never mentions anything that is not in view.
pub fn grounded_answer(question: &str, sightings: &[PoiSighting], cfg: &KeywordConfig) -> String {
    let q = content_words(question);
    let scored = sightings.iter().map(|s| {
        let label = words(&format!("{} {}", s.poi.name, s.poi.category));
        let facts = words(&s.poi.facts.join(" "));
        let score: usize = q
            .iter()
            .map(|w| if label.contains(w) { 2 } else if facts.contains(w) { 1 } else { 0 })
            .sum();
        (score, s)
    });
    // ties keep the earlier (nearer) sighting
    let best = scored.fold(None, |acc: Option<(usize, &PoiSighting)>, (score, s)| match acc {
        Some((b, _)) if b >= score => acc,
        _ => Some((score, s)),
    });
    if let Some((_, s)) = best.filter(|(score, _)| *score > 0) {
        let mut out = format!(
            "{} is {} {}, about {} m {}.",
            s.poi.name,
            if s.poi.category.starts_with(['a', 'e', 'i', 'o', 'u']) { "an" } else { "a" },
            s.poi.category,
            s.distance.round().max(1.0) as u32,
            whereabouts(s.side)
        );
        for f in &s.poi.facts {
            out.push(' ');
            out.push_str(&fact_clause(f));
        }
        return out;
    }
    let general = words(question).iter().any(|w| cfg.general_words.contains(w));
    if general {
        if sightings.is_empty() {
            return "I can't see any named places from here.".into();
        }
        let listed: Vec<String> = sightings
            .iter()
            .map(|s| format!("{} ({}) {}", s.poi.name, s.poi.category, whereabouts(s.side)))
            .collect();
        return format!("I can see {}.", listed.join(", "));
    }
    "I can't see that from here.".into()
}

/// Produces answers; an external model can stand in for the default.
pub trait Answerer {
    fn answer(&mut self, question: &str, sightings: &[PoiSighting]) -> Result<String, ProviderError>;
}

#[derive(Debug, Clone, Default)]
pub struct GroundedAnswerer {
    pub keywords: KeywordConfig,
}

impl Answerer for GroundedAnswerer {
    fn answer(&mut self, question: &str, sightings: &[PoiSighting]) -> Result<String, ProviderError> {
        Ok(grounded_answer(question, sightings, &self.keywords))
    }
}

/// Runs `answerer`, falling back to the grounded answerer on failure.
pub fn answer_question(
    answerer: &mut dyn Answerer,
    question: &str,
    sightings: &[PoiSighting],
    cfg: &KeywordConfig,
) -> (String, Option<ProviderError>) {
    match answerer.answer(question, sightings) {
        Ok(a) => (a, None),
        Err(e) => (grounded_answer(question, sightings, cfg), Some(e)),
    }
}
