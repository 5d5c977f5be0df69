//! Command scripts for headless runs.
//!
//! One command per line, prefixed with its time in seconds:
//!
//! ```text
//! t=2.0 button center long
//! t=3.5 say "What is around me?"
//! t=4 hold off
//! t=9 obstacle 3.0 1.5 10
//! t=60 shutdown
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use thiserror::Error;

use crate::engine::Command;
use crate::interaction::{Button, ButtonEvent, Press};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("script line {line}: {reason}")]
pub struct ScriptError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptEntry {
    pub t: f64,
    pub command: Command,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Script {
    pub entries: Vec<ScriptEntry>,
}

impl Script {
    /// Time of the last entry, or 0.
    pub fn end_time(&self) -> f64 {
        self.entries.last().map_or(0.0, |e| e.t)
    }
}

pub fn parse_button(name: &str) -> Option<Button> {
    match name.to_ascii_lowercase().as_str() {
        "up" => Some(Button::Up),
        "down" => Some(Button::Down),
        "left" => Some(Button::Left),
        "right" => Some(Button::Right),
        "center" | "centre" => Some(Button::Center),
        _ => None,
    }
}

pub fn parse_press(name: &str) -> Option<Press> {
    match name.to_ascii_lowercase().as_str() {
        "short" => Some(Press::Short),
        "long" => Some(Press::Long),
        _ => None,
    }
}

fn number(s: &str, what: &str, line: usize) -> Result<f64, ScriptError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| ScriptError {
            line,
            reason: format!("bad {what} {s:?}"),
        })
}

fn parse_line(text: &str, line: usize) -> Result<ScriptEntry, ScriptError> {
    let err = |reason: String| ScriptError { line, reason };
    let (stamp, rest) = text
        .split_once(char::is_whitespace)
        .ok_or_else(|| err("expected `t=<s> <command>`".into()))?;
    let t = stamp
        .strip_prefix("t=")
        .ok_or_else(|| err(format!("expected `t=<s>`, got {stamp:?}")))?;
    let t = number(t, "time", line)?;
    if t < 0.0 {
        return Err(err("negative time".into()));
    }
    let rest = rest.trim();
    let (verb, args) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
    let args = args.trim();
    let command = match verb {
        "button" => {
            let parts: Vec<&str> = args.split_whitespace().collect();
            let [name, press] = parts.as_slice() else {
                return Err(err("expected `button <name> <short|long>`".into()));
            };
            let button = parse_button(name).ok_or_else(|| err(format!("unknown button {name:?}")))?;
            let press = parse_press(press).ok_or_else(|| err(format!("unknown press {press:?}")))?;
            Command::Button(ButtonEvent::new(button, press))
        }
        "say" => {
            let inner = args
                .strip_prefix('"')
                .and_then(|s| s.strip_suffix('"'))
                .ok_or_else(|| err("expected a quoted utterance".into()))?;
            if inner.trim().is_empty() {
                return Err(err("empty utterance".into()));
            }
            Command::Utterance(inner.replace("\\\"", "\""))
        }
        "hold" => match args {
            "on" => Command::Hold(true),
            "off" => Command::Hold(false),
            _ => return Err(err("expected `hold <on|off>`".into())),
        },
        "obstacle" => {
            let parts: Vec<&str> = args.split_whitespace().collect();
            let [x, y, life] = parts.as_slice() else {
                return Err(err("expected `obstacle <x> <y> <lifetime_s>`".into()));
            };
            let lifetime = number(life, "lifetime", line)?;
            if lifetime <= 0.0 {
                return Err(err("lifetime must be positive".into()));
            }
            Command::InjectObstacle {
                x: number(x, "x", line)?,
                y: number(y, "y", line)?,
                lifetime,
            }
        }
        "shutdown" if args.is_empty() => Command::Shutdown,
        other => return Err(err(format!("unknown command {other:?}"))),
    };
    Ok(ScriptEntry { t, command })
}

/// Parses a script; times must not decrease.
pub fn parse_script(text: &str) -> Result<Script, ScriptError> {
    let mut entries: Vec<ScriptEntry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let e = parse_line(l, i + 1)?;
        if entries.last().is_some_and(|p| e.t < p.t) {
            return Err(ScriptError {
                line: i + 1,
                reason: "times must not decrease".into(),
            });
        }
        entries.push(e);
    }
    Ok(Script { entries })
}
