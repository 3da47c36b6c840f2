//! Input formats of the simulator: contact traces and app scenarios.
//!
//! Both are plain text, one event per line, millisecond timestamps,
//! non-decreasing within a file.
//!
//! Contact trace grammar:
//! ```text
//! line    := time " ns " id " " role      node starts (role: rep|rel|none)
//!          | time " nd " id               node stops, incident edges drop
//!          | time " ea " id " " id        edge comes up
//!          | time " ed " id " " id        edge goes down
//! time    := non-negative integer (ms)
//! role    := "rep" | "rel" | "none"
//! ```
//!
//! App scenario grammar:
//! ```text
//! line := time " up " id                  one update on that replica
//! ```
//!
//! Blank lines and lines starting with `#` are ignored in both formats.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::versioning::ReplicaId;

/// Role a node is declared with in the trace. Whether a `none` node ends up
/// relaying depends on the simulator's role policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeclaredRole {
    Rep,
    Rel,
    None,
}

impl DeclaredRole {
    pub fn as_str(self) -> &'static str {
        match self {
            DeclaredRole::Rep => "rep",
            DeclaredRole::Rel => "rel",
            DeclaredRole::None => "none",
        }
    }
}

impl FromStr for DeclaredRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rep" => Ok(DeclaredRole::Rep),
            "rel" => Ok(DeclaredRole::Rel),
            "none" => Ok(DeclaredRole::None),
            other => Err(format!(
                "unknown role {other:?} (expected rep, rel or none)"
            )),
        }
    }
}

/// One line of a contact trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContactEvent {
    NodeStart { id: ReplicaId, role: DeclaredRole },
    NodeStop { id: ReplicaId },
    EdgeUp { a: ReplicaId, b: ReplicaId },
    EdgeDown { a: ReplicaId, b: ReplicaId },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedContact {
    pub at_ms: u64,
    pub event: ContactEvent,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ContactTrace {
    pub events: Vec<TimedContact>,
}

/// One update event of an app scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppEvent {
    pub at_ms: u64,
    pub replica: ReplicaId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AppScenario {
    pub events: Vec<AppEvent>,
}

/// Parse failure with the 1-based line it occurred on.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {reason}")]
pub struct TraceParseError {
    pub line: usize,
    pub reason: String,
}

fn err(line: usize, reason: impl Into<String>) -> TraceParseError {
    TraceParseError {
        line,
        reason: reason.into(),
    }
}

fn parse_time(tok: &str, line: usize) -> Result<u64, TraceParseError> {
    tok.parse()
        .map_err(|_| err(line, format!("bad timestamp {tok:?}")))
}

fn parse_id(tok: &str, line: usize) -> Result<ReplicaId, TraceParseError> {
    let id = ReplicaId::new(tok);
    if !id.is_well_formed() {
        return Err(err(line, format!("bad node id {tok:?}")));
    }
    Ok(id)
}

impl ContactTrace {
    pub fn parse(text: &str) -> Result<ContactTrace, TraceParseError> {
        let mut events = Vec::new();
        let mut last_time = 0u64;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() < 3 {
                return Err(err(line_no, format!("too few fields in {line:?}")));
            }
            let at_ms = parse_time(toks[0], line_no)?;
            if at_ms < last_time {
                return Err(err(
                    line_no,
                    format!("timestamp {at_ms} goes backwards (previous {last_time})"),
                ));
            }
            last_time = at_ms;
            let event = match (toks[1], toks.len()) {
                ("ns", 4) => ContactEvent::NodeStart {
                    id: parse_id(toks[2], line_no)?,
                    role: toks[3].parse().map_err(|e: String| err(line_no, e))?,
                },
                ("nd", 3) => ContactEvent::NodeStop {
                    id: parse_id(toks[2], line_no)?,
                },
                ("ea", 4) => ContactEvent::EdgeUp {
                    a: parse_id(toks[2], line_no)?,
                    b: parse_id(toks[3], line_no)?,
                },
                ("ed", 4) => ContactEvent::EdgeDown {
                    a: parse_id(toks[2], line_no)?,
                    b: parse_id(toks[3], line_no)?,
                },
                (kind, _) => {
                    return Err(err(
                        line_no,
                        format!("unknown or malformed event {kind:?} in {line:?}"),
                    ))
                }
            };
            if let ContactEvent::EdgeUp { a, b } | ContactEvent::EdgeDown { a, b } = &event {
                if a == b {
                    return Err(err(line_no, "self edges are not allowed"));
                }
            }
            events.push(TimedContact { at_ms, event });
        }
        Ok(ContactTrace { events })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for TimedContact { at_ms, event } in &self.events {
            match event {
                ContactEvent::NodeStart { id, role } => {
                    writeln!(out, "{at_ms} ns {id} {}", role.as_str()).unwrap()
                }
                ContactEvent::NodeStop { id } => writeln!(out, "{at_ms} nd {id}").unwrap(),
                ContactEvent::EdgeUp { a, b } => writeln!(out, "{at_ms} ea {a} {b}").unwrap(),
                ContactEvent::EdgeDown { a, b } => writeln!(out, "{at_ms} ed {a} {b}").unwrap(),
            }
        }
        out
    }

    /// Time of the last event, zero for an empty trace.
    pub fn end_ms(&self) -> u64 {
        self.events.last().map(|e| e.at_ms).unwrap_or(0)
    }
}

impl AppScenario {
    pub fn parse(text: &str) -> Result<AppScenario, TraceParseError> {
        let mut events = Vec::new();
        let mut last_time = 0u64;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 3 || toks[1] != "up" {
                return Err(err(
                    line_no,
                    format!("expected \"<t> up <id>\", got {line:?}"),
                ));
            }
            let at_ms = parse_time(toks[0], line_no)?;
            if at_ms < last_time {
                return Err(err(
                    line_no,
                    format!("timestamp {at_ms} goes backwards (previous {last_time})"),
                ));
            }
            last_time = at_ms;
            events.push(AppEvent {
                at_ms,
                replica: parse_id(toks[2], line_no)?,
            });
        }
        Ok(AppScenario { events })
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for AppEvent { at_ms, replica } in &self.events {
            writeln!(out, "{at_ms} up {replica}").unwrap();
        }
        out
    }

    pub fn end_ms(&self) -> u64 {
        self.events.last().map(|e| e.at_ms).unwrap_or(0)
    }
}
