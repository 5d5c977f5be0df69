//! Session event log and the analyzer behind the mode, query and level
//! usage tables, plus tallying of annotated output errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Pose;
use crate::interaction::{words, ButtonEvent, Direction, Intent, ModeKind};
use crate::narrator::DescriptionLevel;
use crate::planner::PauseReason;
use crate::waypoint::WaypointSource;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("event at t={t} precedes the previous event at t={last}")]
    NonMonotoneTimestamp { t: f64, last: f64 },
    #[error("unbalanced mode events at t={t}: {reason}")]
    UnbalancedModeEvents { t: f64, reason: String },
    #[error("bad log line {line}: {reason}")]
    MalformedLog { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QueryClass {
    General,
    Specific,
    Command,
}

impl QueryClass {
    pub const ALL: [QueryClass; 3] = [QueryClass::General, QueryClass::Specific, QueryClass::Command];
}

/// Where a goal came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "from")]
pub enum GoalTarget {
    Waypoint { x: f64, y: f64, source: WaypointSource },
    Record { id: u64, x: f64, y: f64 },
    Initial { x: f64, y: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EventKind {
    ModeEnter { mode: ModeKind },
    ModeExit { mode: ModeKind },
    ButtonPress { event: ButtonEvent },
    DescriptionEmitted { level: DescriptionLevel, text: String, pose: Pose },
    Query { class: QueryClass, text: String },
    IntentResult { intent: Intent },
    Answer { text: String },
    GoalSet { target: GoalTarget },
    Arrived { x: f64, y: f64 },
    Paused { reason: PauseReason },
    Resumed,
    LevelChanged { level: DescriptionLevel },
    SpeedChanged { speed: f64 },
    NoNavigable { direction: Direction },
    /// A module error that the engine absorbed.
    Fault { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionLog {
    events: Vec<SessionEvent>,
}

impl SessionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Appends `e`; timestamps may repeat but never go backwards.
    pub fn append(&mut self, e: SessionEvent) -> Result<(), SessionError> {
        if let Some(last) = self.events.last() {
            if e.t < last.t || e.t.is_nan() {
                return Err(SessionError::NonMonotoneTimestamp { t: e.t, last: last.t });
            }
        }
        self.events.push(e);
        Ok(())
    }

    pub fn push(&mut self, t: f64, kind: EventKind) -> Result<(), SessionError> {
        self.append(SessionEvent { t, kind })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serialises"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, SessionError> {
        let mut log = SessionLog::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: SessionEvent = serde_json::from_str(line).map_err(|err| SessionError::MalformedLog {
                line: i + 1,
                reason: err.to_string(),
            })?;
            log.append(e).map_err(|err| SessionError::MalformedLog {
                line: i + 1,
                reason: err.to_string(),
            })?;
        }
        Ok(log)
    }

    /// Time of the last event, or 0 for an empty log.
    pub fn end_time(&self) -> f64 {
        self.events.last().map_or(0.0, |e| e.t)
    }
}

/// Appends `e` to `log`.
pub fn append_event(log: &mut SessionLog, e: SessionEvent) -> Result<(), SessionError> {
    log.append(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModeRow {
    pub ratio: f64,
    pub count: usize,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeStats {
    pub auto: ModeRow,
    pub conversation: ModeRow,
    pub manual: ModeRow,
}

impl ModeStats {
    pub fn row(&self, m: ModeKind) -> &ModeRow {
        match m {
            ModeKind::Auto => &self.auto,
            ModeKind::Conversation => &self.conversation,
            ModeKind::Manual => &self.manual,
        }
    }

    fn row_mut(&mut self, m: ModeKind) -> &mut ModeRow {
        match m {
            ModeKind::Auto => &mut self.auto,
            ModeKind::Conversation => &mut self.conversation,
            ModeKind::Manual => &mut self.manual,
        }
    }
}

fn pct(part: f64, total: f64) -> f64 {
    if total > 0.0 {
        part / total * 100.0
    } else {
        0.0
    }
}

/// Time share and activation count of each mode. Spans still open at the
/// end of the log close at `total_duration`.
pub fn mode_stats(log: &SessionLog, total_duration: f64) -> Result<ModeStats, SessionError> {
    let mut stats = ModeStats {
        auto: ModeRow::default(),
        conversation: ModeRow::default(),
        manual: ModeRow::default(),
    };
    let mut open: BTreeMap<ModeKind, f64> = BTreeMap::new();
    for e in &log.events {
        match &e.kind {
            EventKind::ModeEnter { mode } => {
                if open.insert(*mode, e.t).is_some() {
                    return Err(SessionError::UnbalancedModeEvents {
                        t: e.t,
                        reason: format!("{mode:?} entered twice"),
                    });
                }
                stats.row_mut(*mode).count += 1;
            }
            EventKind::ModeExit { mode } => {
                let start = open.remove(mode).ok_or_else(|| SessionError::UnbalancedModeEvents {
                    t: e.t,
                    reason: format!("{mode:?} exited without entering"),
                })?;
                stats.row_mut(*mode).duration += e.t - start;
            }
            _ => {}
        }
    }
    for (mode, start) in open {
        stats.row_mut(mode).duration += (total_duration - start).max(0.0);
    }
    for m in [ModeKind::Auto, ModeKind::Conversation, ModeKind::Manual] {
        let row = stats.row_mut(m);
        row.ratio = pct(row.duration, total_duration);
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QueryRow {
    pub ratio: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryStats {
    pub general: QueryRow,
    pub specific: QueryRow,
    pub command: QueryRow,
    pub total: usize,
}

impl QueryStats {
    pub fn row(&self, c: QueryClass) -> &QueryRow {
        match c {
            QueryClass::General => &self.general,
            QueryClass::Specific => &self.specific,
            QueryClass::Command => &self.command,
        }
    }
}

/// Counts conversation turns by class. With no queries every ratio is 0.
pub fn query_stats(log: &SessionLog) -> QueryStats {
    let mut counts: BTreeMap<QueryClass, usize> = BTreeMap::new();
    for e in &log.events {
        if let EventKind::Query { class, .. } = &e.kind {
            *counts.entry(*class).or_default() += 1;
        }
    }
    let total: usize = counts.values().sum();
    let row = |c| {
        let count = counts.get(&c).copied().unwrap_or(0);
        QueryRow {
            ratio: pct(count as f64, total as f64),
            count,
        }
    };
    QueryStats {
        general: row(QueryClass::General),
        specific: row(QueryClass::Specific),
        command: row(QueryClass::Command),
        total,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub concise: f64,
    pub balanced: f64,
    pub detailed: f64,
}

impl LevelStats {
    pub fn ratio(&self, level: DescriptionLevel) -> f64 {
        match level {
            DescriptionLevel::Concise => self.concise,
            DescriptionLevel::Balanced => self.balanced,
            DescriptionLevel::Detailed => self.detailed,
        }
    }
}

/// Time share of each description level. The session starts at Balanced.
pub fn level_stats(log: &SessionLog, total_duration: f64) -> LevelStats {
    let mut spent: BTreeMap<DescriptionLevel, f64> = BTreeMap::new();
    let mut current = DescriptionLevel::Balanced;
    let mut since = 0.0;
    for e in &log.events {
        if let EventKind::LevelChanged { level } = e.kind {
            let t = e.t.min(total_duration);
            *spent.entry(current).or_default() += (t - since).max(0.0);
            current = level;
            since = t;
        }
    }
    *spent.entry(current).or_default() += (total_duration - since).max(0.0);
    let r = |l| pct(spent.get(&l).copied().unwrap_or(0.0), total_duration);
    LevelStats {
        concise: r(DescriptionLevel::Concise),
        balanced: r(DescriptionLevel::Balanced),
        detailed: r(DescriptionLevel::Detailed),
    }
}

/// Query class of a conversation turn. Questions naming a known place are
/// Specific, others General; destination and direction requests are Commands.
/// This approximates the manual labelling used for the study tables.
pub fn label_query(intent: &Intent, known_names: &[String]) -> QueryClass {
    match intent {
        Intent::TakeMeThere(_) | Intent::DirectionSpec(_) => QueryClass::Command,
        Intent::QnA(q) => {
            let qw: BTreeSet<String> = words(q).into_iter().collect();
            let named = known_names.iter().any(|n| {
                let nw = words(n);
                !nw.is_empty() && nw.iter().all(|w| qw.contains(w))
            });
            if named {
                QueryClass::Specific
            } else {
                QueryClass::General
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorCategory {
    WrongCharacterRecognition,
    WrongObjectRecognition,
    NonexistentObjectsAndTexts,
    MisunderstandingUserInput,
    InaccurateUserInput,
    NoError,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 6] = [
        ErrorCategory::WrongCharacterRecognition,
        ErrorCategory::WrongObjectRecognition,
        ErrorCategory::NonexistentObjectsAndTexts,
        ErrorCategory::MisunderstandingUserInput,
        ErrorCategory::InaccurateUserInput,
        ErrorCategory::NoError,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorAnnotation {
    /// Reference to the annotated description or answer.
    pub target: String,
    pub category: ErrorCategory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorTally {
    pub counts: BTreeMap<ErrorCategory, usize>,
    pub total_outputs: usize,
}

impl ErrorTally {
    pub fn count(&self, c: ErrorCategory) -> usize {
        self.counts.get(&c).copied().unwrap_or(0)
    }
}

/// Per-category error counts. Repeated errors of one category on the same
/// output count once; an output counts as NoError only if it has no error.
pub fn error_tally(annotations: &[ErrorAnnotation]) -> ErrorTally {
    let mut per_output: BTreeMap<&str, BTreeSet<ErrorCategory>> = BTreeMap::new();
    for a in annotations {
        per_output.entry(&a.target).or_default().insert(a.category);
    }
    let mut counts: BTreeMap<ErrorCategory, usize> = ErrorCategory::ALL.iter().map(|c| (*c, 0)).collect();
    for cats in per_output.values() {
        let errors: Vec<_> = cats.iter().filter(|c| **c != ErrorCategory::NoError).collect();
        if errors.is_empty() {
            *counts.get_mut(&ErrorCategory::NoError).unwrap() += 1;
        }
        for c in errors {
            *counts.get_mut(c).unwrap() += 1;
        }
    }
    ErrorTally {
        counts,
        total_outputs: per_output.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub total_duration: f64,
    pub modes: ModeStats,
    pub queries: QueryStats,
    pub levels: LevelStats,
}

/// All three tables for a log. `total_duration` defaults to the last event time.
pub fn analyze(log: &SessionLog, total_duration: Option<f64>) -> Result<Report, SessionError> {
    let total = total_duration.unwrap_or_else(|| log.end_time());
    Ok(Report {
        total_duration: total,
        modes: mode_stats(log, total)?,
        queries: query_stats(log),
        levels: level_stats(log, total),
    })
}

impl Report {
    /// Aligned plain-text tables.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "total duration: {:.2} s", self.total_duration);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<14}{:>10}{:>8}", "mode", "ratio %", "count");
        for (name, m) in [
            ("Auto", ModeKind::Auto),
            ("Conversation", ModeKind::Conversation),
            ("Manual", ModeKind::Manual),
        ] {
            let r = self.modes.row(m);
            let _ = writeln!(s, "{:<14}{:>10.2}{:>8}", name, r.ratio, r.count);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<14}{:>10}{:>8}", "query", "ratio %", "count");
        for (name, c) in [
            ("General", QueryClass::General),
            ("Specific", QueryClass::Specific),
            ("Command", QueryClass::Command),
        ] {
            let r = self.queries.row(c);
            let _ = writeln!(s, "{:<14}{:>10.2}{:>8}", name, r.ratio, r.count);
        }
        let _ = writeln!(s, "{:<14}{:>10}{:>8}", "Total", "", self.queries.total);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<14}{:>10}", "level", "ratio %");
        for (name, l) in [
            ("Concise", DescriptionLevel::Concise),
            ("Balanced", DescriptionLevel::Balanced),
            ("Detailed", DescriptionLevel::Detailed),
        ] {
            let _ = writeln!(s, "{:<14}{:>10.2}", name, self.levels.ratio(l));
        }
        s
    }
}

/// Builds a log whose mode spans have the given durations, in the order
/// Auto, Conversation, Manual. Used to check the analyzer against known tables.
pub fn synthesize_mode_log(durations: [f64; 3], counts: [usize; 3]) -> SessionLog {
    let mut log = SessionLog::new();
    let mut t = 0.0;
    for (mode, (d, n)) in [ModeKind::Auto, ModeKind::Conversation, ModeKind::Manual]
        .into_iter()
        .zip(durations.into_iter().zip(counts))
    {
        let n = n.max(1);
        let piece = d / n as f64;
        for _ in 0..n {
            log.push(t, EventKind::ModeEnter { mode }).unwrap();
            t += piece;
            log.push(t, EventKind::ModeExit { mode }).unwrap();
        }
    }
    log
}
