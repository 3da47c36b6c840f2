//! The simulator's event log: the single source of truth for everything
//! that happened in a run.
//!
//! The log is plain text, one record per line, and is both the determinism
//! artifact (identical runs produce byte-identical logs) and the input to
//! reporting and validation. [`validate_log`] replays a parsed log and
//! re-checks the protocol invariants from scratch, without touching the
//! engine, so a corrupted or miscomputed run cannot vouch for itself.
//!
//! Record grammar (times in ms, vectors in canonical `[id:n,...]` form):
//! ```text
//! t ns <id> <rep|rel|none>          node started, final role
//! t nd <id>                         node stopped
//! t ea <a> <b>                      edge up
//! t ed <a> <b>                      edge down
//! t up <id> vg=<vv>                 update applied; global vector after
//! t vv <id> <vv>                    replica vector after a change
//! t store <id> vagg=<vv> vvs=<vv>;<vv>;...   relay store after a change
//! t send <src> <dst> <kind> <bytes>
//! t recv <src> <dst> <kind>
//! t drop <src> <dst> <kind>         message lost (edge or node went away)
//! t sync <node> <peer> sent=<n>     one sync round closed, n states sent
//! t sample <id> <n>                 relay store size entering a sync round
//! t end
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::trace::DeclaredRole;
use crate::versioning::{ReplicaId, VersionVector};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LogRecord {
    NodeStart {
        id: ReplicaId,
        role: DeclaredRole,
    },
    NodeStop {
        id: ReplicaId,
    },
    EdgeUp {
        a: ReplicaId,
        b: ReplicaId,
    },
    EdgeDown {
        a: ReplicaId,
        b: ReplicaId,
    },
    Update {
        id: ReplicaId,
        global: VersionVector,
    },
    ReplicaVv {
        id: ReplicaId,
        vv: VersionVector,
    },
    Store {
        id: ReplicaId,
        vagg: VersionVector,
        vvs: Vec<VersionVector>,
    },
    Send {
        src: ReplicaId,
        dst: ReplicaId,
        kind: &'static str,
        bytes: usize,
    },
    Recv {
        src: ReplicaId,
        dst: ReplicaId,
        kind: &'static str,
    },
    Drop {
        src: ReplicaId,
        dst: ReplicaId,
        kind: &'static str,
    },
    SyncDone {
        node: ReplicaId,
        peer: ReplicaId,
        sent: u64,
    },
    StoreSample {
        id: ReplicaId,
        size: u64,
    },
    End,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimedRecord {
    pub at_ms: u64,
    pub record: LogRecord,
}

/// Renders records into the text log format.
pub fn render_log(records: &[TimedRecord]) -> String {
    let mut out = String::new();
    for TimedRecord { at_ms: t, record } in records {
        match record {
            LogRecord::NodeStart { id, role } => {
                writeln!(out, "{t} ns {id} {}", role.as_str()).unwrap()
            }
            LogRecord::NodeStop { id } => writeln!(out, "{t} nd {id}").unwrap(),
            LogRecord::EdgeUp { a, b } => writeln!(out, "{t} ea {a} {b}").unwrap(),
            LogRecord::EdgeDown { a, b } => writeln!(out, "{t} ed {a} {b}").unwrap(),
            LogRecord::Update { id, global } => writeln!(out, "{t} up {id} vg={global}").unwrap(),
            LogRecord::ReplicaVv { id, vv } => writeln!(out, "{t} vv {id} {vv}").unwrap(),
            LogRecord::Store { id, vagg, vvs } => {
                let rendered: Vec<String> = vvs.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{t} store {id} vagg={vagg} vvs={}", rendered.join(";")).unwrap()
            }
            LogRecord::Send {
                src,
                dst,
                kind,
                bytes,
            } => writeln!(out, "{t} send {src} {dst} {kind} {bytes}").unwrap(),
            LogRecord::Recv { src, dst, kind } => {
                writeln!(out, "{t} recv {src} {dst} {kind}").unwrap()
            }
            LogRecord::Drop { src, dst, kind } => {
                writeln!(out, "{t} drop {src} {dst} {kind}").unwrap()
            }
            LogRecord::SyncDone { node, peer, sent } => {
                writeln!(out, "{t} sync {node} {peer} sent={sent}").unwrap()
            }
            LogRecord::StoreSample { id, size } => writeln!(out, "{t} sample {id} {size}").unwrap(),
            LogRecord::End => writeln!(out, "{t} end").unwrap(),
        }
    }
    out
}

/// Parse failure with the 1-based log line it occurred on.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("log line {line}: {reason}")]
pub struct LogParseError {
    pub line: usize,
    pub reason: String,
}

fn perr(line: usize, reason: impl Into<String>) -> LogParseError {
    LogParseError {
        line,
        reason: reason.into(),
    }
}

fn intern_kind(kind: &str, line: usize) -> Result<&'static str, LogParseError> {
    // Message kinds form a closed set; interning keeps LogRecord flat.
    match kind {
        "vv" => Ok("vv"),
        "vagg" => Ok("vagg"),
        "vaggr" => Ok("vaggr"),
        "state" => Ok("state"),
        "contrib" => Ok("contrib"),
        "notice" => Ok("notice"),
        other => Err(perr(line, format!("unknown message kind {other:?}"))),
    }
}

fn parse_vv(tok: &str, line: usize) -> Result<VersionVector, LogParseError> {
    tok.parse()
        .map_err(|e| perr(line, format!("bad vector: {e}")))
}

pub fn parse_log(text: &str) -> Result<Vec<TimedRecord>, LogParseError> {
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 2 {
            return Err(perr(line_no, format!("too few fields in {line:?}")));
        }
        let at_ms: u64 = toks[0]
            .parse()
            .map_err(|_| perr(line_no, format!("bad timestamp {:?}", toks[0])))?;
        let strip = |tok: &str, prefix: &str| -> Result<String, LogParseError> {
            tok.strip_prefix(prefix)
                .map(str::to_string)
                .ok_or_else(|| perr(line_no, format!("expected {prefix}... in {tok:?}")))
        };
        let record = match (toks[1], toks.len()) {
            ("ns", 4) => LogRecord::NodeStart {
                id: ReplicaId::new(toks[2]),
                role: toks[3].parse().map_err(|e: String| perr(line_no, e))?,
            },
            ("nd", 3) => LogRecord::NodeStop {
                id: ReplicaId::new(toks[2]),
            },
            ("ea", 4) => LogRecord::EdgeUp {
                a: ReplicaId::new(toks[2]),
                b: ReplicaId::new(toks[3]),
            },
            ("ed", 4) => LogRecord::EdgeDown {
                a: ReplicaId::new(toks[2]),
                b: ReplicaId::new(toks[3]),
            },
            ("up", 4) => LogRecord::Update {
                id: ReplicaId::new(toks[2]),
                global: parse_vv(&strip(toks[3], "vg=")?, line_no)?,
            },
            ("vv", 4) => LogRecord::ReplicaVv {
                id: ReplicaId::new(toks[2]),
                vv: parse_vv(toks[3], line_no)?,
            },
            ("store", 5) => {
                let vvs_part = strip(toks[4], "vvs=")?;
                let mut vvs = Vec::new();
                if !vvs_part.is_empty() {
                    for part in vvs_part.split(';') {
                        vvs.push(parse_vv(part, line_no)?);
                    }
                }
                LogRecord::Store {
                    id: ReplicaId::new(toks[2]),
                    vagg: parse_vv(&strip(toks[3], "vagg=")?, line_no)?,
                    vvs,
                }
            }
            ("send", 6) => LogRecord::Send {
                src: ReplicaId::new(toks[2]),
                dst: ReplicaId::new(toks[3]),
                kind: intern_kind(toks[4], line_no)?,
                bytes: toks[5]
                    .parse()
                    .map_err(|_| perr(line_no, format!("bad byte count {:?}", toks[5])))?,
            },
            ("recv", 5) => LogRecord::Recv {
                src: ReplicaId::new(toks[2]),
                dst: ReplicaId::new(toks[3]),
                kind: intern_kind(toks[4], line_no)?,
            },
            ("drop", 5) => LogRecord::Drop {
                src: ReplicaId::new(toks[2]),
                dst: ReplicaId::new(toks[3]),
                kind: intern_kind(toks[4], line_no)?,
            },
            ("sync", 5) => LogRecord::SyncDone {
                node: ReplicaId::new(toks[2]),
                peer: ReplicaId::new(toks[3]),
                sent: strip(toks[4], "sent=")?
                    .parse()
                    .map_err(|_| perr(line_no, "bad sent count"))?,
            },
            ("sample", 4) => LogRecord::StoreSample {
                id: ReplicaId::new(toks[2]),
                size: toks[3]
                    .parse()
                    .map_err(|_| perr(line_no, format!("bad store size {:?}", toks[3])))?,
            },
            ("end", 2) => LogRecord::End,
            (kind, _) => {
                return Err(perr(
                    line_no,
                    format!("unknown or malformed record {kind:?} in {line:?}"),
                ))
            }
        };
        records.push(TimedRecord { at_ms, record });
    }
    Ok(records)
}

/// Invariant violation found while replaying a log.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("at {at_ms} ms, {invariant}: {detail}")]
pub struct LogInvariantError {
    pub at_ms: u64,
    /// Short stable name of the violated invariant.
    pub invariant: &'static str,
    pub detail: String,
}

/// Counters summarizing a validated log.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct CheckReport {
    pub records: u64,
    pub updates: u64,
    pub syncs: u64,
    pub store_changes: u64,
    pub messages_delivered: u64,
    pub messages_dropped: u64,
    pub replicas: u64,
    pub relays: u64,
}

/// Replays a log and re-checks every protocol invariant the simulator is
/// supposed to maintain:
/// * relay stores hold only pairwise-concurrent records, never more than
///   the number of replicas, and their aggregate equals the join of the
///   stored vectors;
/// * replica vectors only grow and never overtake the global vector;
/// * the global vector grows by exactly one counter per update, so the
///   total equals the number of updates (no update is lost or duplicated);
/// * node and edge events are structurally sound (no duplicate starts, no
///   edges touching dead nodes, no edge brought up twice).
pub fn validate_log(records: &[TimedRecord]) -> Result<CheckReport, LogInvariantError> {
    let mut report = CheckReport::default();
    let mut started: BTreeMap<ReplicaId, DeclaredRole> = BTreeMap::new();
    let mut alive: BTreeMap<ReplicaId, DeclaredRole> = BTreeMap::new();
    let mut edges: BTreeMap<(ReplicaId, ReplicaId), bool> = BTreeMap::new();
    let mut global = VersionVector::new();
    let mut replica_vvs: BTreeMap<ReplicaId, VersionVector> = BTreeMap::new();
    let mut replica_count = 0u64;

    let fail = |at_ms: u64, invariant: &'static str, detail: String| {
        Err(LogInvariantError {
            at_ms,
            invariant,
            detail,
        })
    };

    for TimedRecord { at_ms, record } in records {
        let t = *at_ms;
        report.records += 1;
        match record {
            LogRecord::NodeStart { id, role } => {
                if started.contains_key(id) {
                    return fail(t, "unique-node-start", format!("node {id} started twice"));
                }
                started.insert(id.clone(), *role);
                alive.insert(id.clone(), *role);
                match role {
                    DeclaredRole::Rep => {
                        replica_count += 1;
                        report.replicas += 1;
                    }
                    DeclaredRole::Rel => report.relays += 1,
                    DeclaredRole::None => {}
                }
            }
            LogRecord::NodeStop { id } => {
                if alive.remove(id).is_none() {
                    return fail(t, "stop-live-node", format!("node {id} is not live"));
                }
                edges.retain(|(a, b), _| a != id && b != id);
            }
            LogRecord::EdgeUp { a, b } => {
                if !alive.contains_key(a) || !alive.contains_key(b) {
                    return fail(t, "edge-endpoints-live", format!("edge {a} {b}"));
                }
                let key = ordered_pair(a, b);
                if edges.insert(key, true).is_some() {
                    return fail(t, "edge-up-once", format!("edge {a} {b} already up"));
                }
            }
            LogRecord::EdgeDown { a, b } => {
                let key = ordered_pair(a, b);
                if edges.remove(&key).is_none() {
                    return fail(t, "edge-down-only-up", format!("edge {a} {b} is not up"));
                }
            }
            LogRecord::Update { id, global: after } => {
                report.updates += 1;
                match alive.get(id) {
                    Some(DeclaredRole::Rep) => {}
                    _ => return fail(t, "update-on-live-replica", format!("node {id}")),
                }
                let mut expected = global.clone();
                expected.increment(id);
                if after != &expected {
                    return fail(
                        t,
                        "global-single-step",
                        format!("expected {expected}, logged {after}"),
                    );
                }
                global = after.clone();
            }
            LogRecord::ReplicaVv { id, vv } => {
                match alive.get(id) {
                    Some(DeclaredRole::Rep) => {}
                    _ => return fail(t, "vv-on-live-replica", format!("node {id}")),
                }
                if let Some(prev) = replica_vvs.get(id) {
                    if prev.over(vv) {
                        return fail(
                            t,
                            "replica-vv-monotone",
                            format!("{id} went from {prev} to {vv}"),
                        );
                    }
                }
                if vv.over(&global) {
                    return fail(
                        t,
                        "replica-behind-global",
                        format!("{id} at {vv} is over the global {global}"),
                    );
                }
                replica_vvs.insert(id.clone(), vv.clone());
            }
            LogRecord::Store { id, vagg, vvs } => {
                report.store_changes += 1;
                match alive.get(id) {
                    Some(DeclaredRole::Rel) => {}
                    _ => return fail(t, "store-on-live-relay", format!("node {id}")),
                }
                for (i, a) in vvs.iter().enumerate() {
                    for b in &vvs[i + 1..] {
                        if !a.concurrent(b) {
                            return fail(
                                t,
                                "store-pairwise-concurrent",
                                format!("{id} holds comparable records {a} and {b}"),
                            );
                        }
                    }
                }
                if vvs.len() as u64 > replica_count {
                    return fail(
                        t,
                        "store-bounded-by-replicas",
                        format!(
                            "{id} holds {} records for {replica_count} replicas",
                            vvs.len()
                        ),
                    );
                }
                let mut join = VersionVector::new();
                for v in vvs {
                    join.join_in(v);
                }
                if &join != vagg {
                    return fail(
                        t,
                        "vagg-is-store-join",
                        format!("{id} logs vagg={vagg} but records join to {join}"),
                    );
                }
            }
            LogRecord::Send { .. } => {}
            LogRecord::Recv { .. } => report.messages_delivered += 1,
            LogRecord::Drop { .. } => report.messages_dropped += 1,
            LogRecord::SyncDone { .. } => report.syncs += 1,
            LogRecord::StoreSample { .. } => {}
            LogRecord::End => {
                // Conservation: every update accounted for, none invented.
                if global.total() != report.updates {
                    return fail(
                        t,
                        "update-conservation",
                        format!(
                            "global total {} vs {} update events",
                            global.total(),
                            report.updates
                        ),
                    );
                }
            }
        }
    }
    Ok(report)
}

pub(crate) fn ordered_pair(a: &ReplicaId, b: &ReplicaId) -> (ReplicaId, ReplicaId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}
