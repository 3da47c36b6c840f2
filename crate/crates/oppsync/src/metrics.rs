//! Convergence and traffic metrics over a finished run log.
//!
//! Everything is measured against the global vector `V_G`, the ideal state
//! that sees every update the instant it is issued:
//!
//! * distance of replica i at time t: `total(V_G(t)) - total(V_i(t))`,
//!   the number of updates the replica has not seen yet;
//! * latency of replica i for the update at time t: how long until the
//!   replica's vector first reaches `V_G(t)` pointwise. A replica can jump
//!   over the exact vector by merging a bigger state, hence "reaches" and
//!   not "equals". Undefined when it never catches up within the log;
//!   undefined values are excluded from averages and counted separately.
//!
//! Both are sampled at update events, and the headline numbers are plain
//! means of the per-update means. Store sizes and per-sync transfer counts
//! are tallied into histograms, split by the role of the syncing node.

use std::collections::BTreeMap;

use crate::sim::log::LogRecord;
use crate::sim::trace::DeclaredRole;
use crate::sim::TimedRecord;
use crate::versioning::{ReplicaId, VersionVector};

/// The per-node timelines extracted from a run log.
#[derive(Debug, Clone, Default)]
pub struct ConvergenceLog {
    /// (t, V_G after the update), one entry per update event.
    pub global: Vec<(u64, VersionVector)>,
    /// Per replica: (t, vector) whenever it changed, plus the initial
    /// empty vector at birth.
    pub replicas: BTreeMap<ReplicaId, Vec<(u64, VersionVector)>>,
    /// Birth and, if any, death instant per replica.
    pub lifetimes: BTreeMap<ReplicaId, (u64, Option<u64>)>,
    /// Completed sync rounds: (t, node, peer, states sent, node was relay).
    pub transfers: Vec<(u64, ReplicaId, ReplicaId, u64, bool)>,
    /// Relay store sizes sampled once per inter-sync interval.
    pub store_samples: Vec<(u64, ReplicaId, u64)>,
    pub relays: usize,
    pub bytes_sent: u64,
    pub messages_sent: u64,
    pub end_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("log inconsistency at {at_ms} ms: {detail}")]
    Inconsistent { at_ms: u64, detail: String },
}

impl ConvergenceLog {
    /// Builds the timelines from a raw log. Fails if a replica vector is
    /// ever ahead of the global vector, which would mean the log does not
    /// come from a consistent run.
    pub fn from_records(records: &[TimedRecord]) -> Result<ConvergenceLog, MetricsError> {
        let mut out = ConvergenceLog::default();
        let mut global = VersionVector::new();
        for rec in records {
            let t = rec.at_ms;
            out.end_ms = out.end_ms.max(t);
            match &rec.record {
                LogRecord::NodeStart { id, role } => match role {
                    DeclaredRole::Rep => {
                        out.lifetimes.insert(id.clone(), (t, None));
                        out.replicas
                            .entry(id.clone())
                            .or_default()
                            .push((t, VersionVector::new()));
                    }
                    DeclaredRole::Rel => out.relays += 1,
                    DeclaredRole::None => {}
                },
                LogRecord::NodeStop { id } => {
                    if let Some((_, death)) = out.lifetimes.get_mut(id) {
                        *death = Some(t);
                    }
                }
                LogRecord::Update { global: g, .. } => {
                    global = g.clone();
                    out.global.push((t, g.clone()));
                }
                LogRecord::ReplicaVv { id, vv } => {
                    if vv.over(&global) {
                        return Err(MetricsError::Inconsistent {
                            at_ms: t,
                            detail: format!("replica {id} vector {vv} ahead of global {global}"),
                        });
                    }
                    out.replicas
                        .entry(id.clone())
                        .or_default()
                        .push((t, vv.clone()));
                }
                LogRecord::SyncDone { node, peer, sent } => {
                    out.transfers
                        .push((t, node.clone(), peer.clone(), *sent, false));
                }
                LogRecord::StoreSample { id, size } => {
                    out.store_samples.push((t, id.clone(), *size));
                }
                LogRecord::Send { bytes, .. } => {
                    out.bytes_sent += *bytes as u64;
                    out.messages_sent += 1;
                }
                _ => {}
            }
        }
        // Re-classify transfers now that every role is known: a node that
        // never appeared as a replica is a relay (or policy-assigned one).
        let replica_ids: Vec<ReplicaId> = out.replicas.keys().cloned().collect();
        for (_, node, _, _, is_relay) in &mut out.transfers {
            *is_relay = !replica_ids.contains(node);
        }
        Ok(out)
    }

    fn live_at(&self, id: &ReplicaId, t: u64) -> bool {
        match self.lifetimes.get(id) {
            Some((born, died)) => *born <= t && died.is_none_or(|d| t < d),
            None => false,
        }
    }
}

/// Updates missing at the replica: `total(V_G) - total(V_i)`.
pub fn distance(global: &VersionVector, replica: &VersionVector) -> Result<u64, MetricsError> {
    if replica.over(global) {
        return Err(MetricsError::Inconsistent {
            at_ms: 0,
            detail: format!("replica vector {replica} ahead of global {global}"),
        });
    }
    Ok(global.total() - replica.total())
}

/// Per-update-event cross-replica aggregates.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct UpdateRow {
    pub at_ms: u64,
    pub distance_min: u64,
    pub distance_max: u64,
    pub distance_mean: f64,
    /// None when no replica has a defined latency for this update.
    pub latency_min_ms: Option<u64>,
    pub latency_max_ms: Option<u64>,
    pub latency_mean_ms: Option<f64>,
    /// Live replicas that never catch up with this update.
    pub undefined: u64,
}

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Summary {
    pub updates: u64,
    pub replicas: u64,
    pub relays: u64,
    /// Mean over update events of the mean replica distance.
    pub mean_distance: f64,
    pub max_distance: u64,
    /// Mean over update events of the mean defined latency; None when no
    /// update has any defined latency.
    pub mean_latency_ms: Option<f64>,
    pub max_latency_ms: Option<u64>,
    /// (update, replica) pairs whose latency never resolved.
    pub undefined_latencies: u64,
    /// True when every live replica ends on the global vector.
    pub converged: bool,
    pub syncs: u64,
    pub relay_syncs: u64,
    /// Relay syncs that moved at most one state.
    pub relay_syncs_le_one: u64,
    pub mean_store_size: f64,
    pub max_store_size: u64,
    pub bytes_sent: u64,
    pub messages_sent: u64,
}

/// Everything `report` emits: the rows behind the CSVs plus the summary.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Report {
    pub rows: Vec<UpdateRow>,
    /// states-per-sync -> count, for syncs closed by relays.
    pub relay_transfers: BTreeMap<u64, u64>,
    /// states-per-sync -> count, for syncs closed by replicas.
    pub replica_transfers: BTreeMap<u64, u64>,
    /// store size -> samples.
    pub store_sizes: BTreeMap<u64, u64>,
    pub summary: Summary,
}

/// Computes the full report. Pure function of the log: running it twice
/// gives identical results.
pub fn summarize(log: &ConvergenceLog) -> Result<Report, MetricsError> {
    // Per-replica two-pointer cursors over (timeline, updates): both the
    // global vector and each replica vector only grow, so the catch-up
    // index never moves backwards.
    struct Cursor {
        at: usize,    // last timeline entry with time <= current update
        catch: usize, // first timeline entry reaching the current global
    }
    let mut cursors: BTreeMap<&ReplicaId, Cursor> = log
        .replicas
        .keys()
        .map(|id| (id, Cursor { at: 0, catch: 0 }))
        .collect();

    let mut rows = Vec::with_capacity(log.global.len());
    let mut undefined_total = 0u64;
    for (t, goal) in &log.global {
        let mut distances: Vec<u64> = Vec::new();
        let mut latencies: Vec<u64> = Vec::new();
        let mut undefined = 0u64;
        for (id, timeline) in &log.replicas {
            if !log.live_at(id, *t) {
                continue;
            }
            let cursor = cursors.get_mut(id).expect("cursor per replica");
            while cursor.at + 1 < timeline.len() && timeline[cursor.at + 1].0 <= *t {
                cursor.at += 1;
            }
            let at_vv = &timeline[cursor.at].1;
            distances.push(distance(goal, at_vv)?);
            while cursor.catch < timeline.len() && goal.over(&timeline[cursor.catch].1) {
                cursor.catch += 1;
            }
            match timeline.get(cursor.catch) {
                Some((t_caught, _)) => latencies.push(t_caught.saturating_sub(*t)),
                None => undefined += 1,
            }
        }
        undefined_total += undefined;
        let mean = |v: &[u64]| v.iter().sum::<u64>() as f64 / v.len().max(1) as f64;
        rows.push(UpdateRow {
            at_ms: *t,
            distance_min: distances.iter().min().copied().unwrap_or(0),
            distance_max: distances.iter().max().copied().unwrap_or(0),
            distance_mean: mean(&distances),
            latency_min_ms: latencies.iter().min().copied(),
            latency_max_ms: latencies.iter().max().copied(),
            latency_mean_ms: if latencies.is_empty() {
                None
            } else {
                Some(mean(&latencies))
            },
            undefined,
        });
    }

    let mut relay_transfers: BTreeMap<u64, u64> = BTreeMap::new();
    let mut replica_transfers: BTreeMap<u64, u64> = BTreeMap::new();
    let mut relay_syncs = 0u64;
    let mut relay_syncs_le_one = 0u64;
    for (_, _, _, sent, is_relay) in &log.transfers {
        if *is_relay {
            relay_syncs += 1;
            if *sent <= 1 {
                relay_syncs_le_one += 1;
            }
            *relay_transfers.entry(*sent).or_default() += 1;
        } else {
            *replica_transfers.entry(*sent).or_default() += 1;
        }
    }
    let mut store_sizes: BTreeMap<u64, u64> = BTreeMap::new();
    for (_, _, size) in &log.store_samples {
        *store_sizes.entry(*size).or_default() += 1;
    }

    // Convergence at end of log: every replica still alive sits on V_G.
    let final_global = log
        .global
        .last()
        .map(|(_, g)| g.clone())
        .unwrap_or_default();
    let converged = log.replicas.iter().all(|(id, timeline)| {
        if !log.live_at(id, log.end_ms) {
            return true;
        }
        timeline
            .last()
            .map(|(_, vv)| vv == &final_global)
            .unwrap_or(false)
    });

    let defined_means: Vec<f64> = rows.iter().filter_map(|r| r.latency_mean_ms).collect();
    let store_total: u64 = store_sizes.iter().map(|(s, n)| s * n).sum();
    let store_count: u64 = store_sizes.values().sum();
    let summary = Summary {
        updates: log.global.len() as u64,
        replicas: log.replicas.len() as u64,
        relays: log.relays as u64,
        mean_distance: {
            let means: Vec<f64> = rows.iter().map(|r| r.distance_mean).collect();
            means.iter().sum::<f64>() / means.len().max(1) as f64
        },
        max_distance: rows.iter().map(|r| r.distance_max).max().unwrap_or(0),
        mean_latency_ms: if defined_means.is_empty() {
            None
        } else {
            Some(defined_means.iter().sum::<f64>() / defined_means.len() as f64)
        },
        max_latency_ms: rows.iter().filter_map(|r| r.latency_max_ms).max(),
        undefined_latencies: undefined_total,
        converged,
        syncs: log.transfers.len() as u64,
        relay_syncs,
        relay_syncs_le_one,
        mean_store_size: if store_count == 0 {
            0.0
        } else {
            store_total as f64 / store_count as f64
        },
        max_store_size: store_sizes.keys().max().copied().unwrap_or(0),
        bytes_sent: log.bytes_sent,
        messages_sent: log.messages_sent,
    };
    Ok(Report {
        rows,
        relay_transfers,
        replica_transfers,
        store_sizes,
        summary,
    })
}

/// Convenience: full report straight from raw records.
pub fn report_from_records(records: &[TimedRecord]) -> Result<Report, MetricsError> {
    summarize(&ConvergenceLog::from_records(records)?)
}

fn opt_u64(v: Option<u64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

impl Report {
    /// `t_ms,min_ms,max_ms,mean_ms,undefined` per update event; empty
    /// cells when no replica resolved the update.
    pub fn latency_csv(&self) -> String {
        let mut out = String::from("t_ms,min_ms,max_ms,mean_ms,undefined\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.at_ms,
                opt_u64(r.latency_min_ms),
                opt_u64(r.latency_max_ms),
                opt_f64(r.latency_mean_ms),
                r.undefined
            ));
        }
        out
    }

    /// `t_ms,min,max,mean` distance per update event.
    pub fn distance_csv(&self) -> String {
        let mut out = String::from("t_ms,min,max,mean\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.3}\n",
                r.at_ms, r.distance_min, r.distance_max, r.distance_mean
            ));
        }
        out
    }

    /// `states,relay_syncs,replica_syncs` histogram rows.
    pub fn transfer_hist_csv(&self) -> String {
        let mut out = String::from("states,relay_syncs,replica_syncs\n");
        let max_key = self
            .relay_transfers
            .keys()
            .chain(self.replica_transfers.keys())
            .max()
            .copied();
        if let Some(max_key) = max_key {
            for k in 0..=max_key {
                out.push_str(&format!(
                    "{},{},{}\n",
                    k,
                    self.relay_transfers.get(&k).copied().unwrap_or(0),
                    self.replica_transfers.get(&k).copied().unwrap_or(0)
                ));
            }
        }
        out
    }

    /// `size,samples` histogram rows.
    pub fn store_hist_csv(&self) -> String {
        let mut out = String::from("size,samples\n");
        for (size, n) in &self.store_sizes {
            out.push_str(&format!("{size},{n}\n"));
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::trace::{AppScenario, ContactTrace};
    use crate::sim::{run, SimConfig};
    use crate::vv;

    #[test]
    fn distance_is_the_total_gap() {
        assert_eq!(
            distance(&vv!["a" => 3, "b" => 2], &vv!["a" => 1, "b" => 2]).unwrap(),
            2
        );
        assert_eq!(distance(&vv!["a" => 3], &vv!["a" => 3]).unwrap(), 0);
        assert!(distance(&vv!["a" => 1], &vv!["a" => 2]).is_err());
    }

    fn run_two_replica_log() -> Vec<TimedRecord> {
        let trace = ContactTrace::parse("0 ns a rep\n0 ns b rep\n0 ea a b\n").unwrap();
        let app = AppScenario::parse("1000 up a\n").unwrap();
        run(&trace, &app, &SimConfig::default()).unwrap().log
    }

    /// Permanent contact, one update, base latency 50 ms: the issuer is
    /// instant and the peer needs notice + vector + state, 3 hops.
    #[test]
    fn latency_matches_the_closed_form_schedule() {
        let report = report_from_records(&run_two_replica_log()).unwrap();
        assert_eq!(report.rows.len(), 1);
        let row = &report.rows[0];
        assert_eq!(row.latency_min_ms, Some(0));
        assert_eq!(row.latency_max_ms, Some(150));
        assert_eq!(row.latency_mean_ms, Some(75.0));
        assert_eq!(row.undefined, 0);
        assert_eq!(row.distance_min, 0, "issuer sees its own update");
        assert_eq!(row.distance_max, 1, "peer has not seen it yet");
        let s = &report.summary;
        assert_eq!(s.mean_latency_ms, Some(75.0));
        assert!(s.converged);
        assert_eq!(s.undefined_latencies, 0);
    }

    #[test]
    fn unreachable_peer_counts_as_undefined() {
        // No edge at all: b never hears about a's update.
        let trace = ContactTrace::parse("0 ns a rep\n0 ns b rep\n").unwrap();
        let app = AppScenario::parse("1000 up a\n").unwrap();
        let out = run(&trace, &app, &SimConfig::default()).unwrap();
        let report = report_from_records(&out.log).unwrap();
        let row = &report.rows[0];
        assert_eq!(row.undefined, 1);
        assert_eq!(row.latency_min_ms, Some(0), "issuer still defined");
        assert_eq!(report.summary.undefined_latencies, 1);
        assert!(!report.summary.converged);
        assert_eq!(report.summary.mean_latency_ms, Some(0.0));
    }

    #[test]
    fn catching_up_by_jumping_over_counts() {
        // b receives a merged state covering updates 1 and 2 at once; its
        // timeline never holds [a:1], yet both updates resolve.
        let trace = ContactTrace::parse("0 ns a rep\n0 ns b rep\n5000 ea a b\n").unwrap();
        let app = AppScenario::parse("1000 up a\n1200 up a\n").unwrap();
        let out = run(&trace, &app, &SimConfig::default()).unwrap();
        let report = report_from_records(&out.log).unwrap();
        assert_eq!(report.rows.len(), 2);
        for row in &report.rows {
            assert_eq!(row.undefined, 0);
        }
        // Both updates resolve at the same absolute instant, so the later
        // one has the smaller latency.
        let l1 = report.rows[0].latency_max_ms.unwrap();
        let l2 = report.rows[1].latency_max_ms.unwrap();
        assert_eq!(l1 - l2, 200, "same catch-up instant, offset by issue gap");
        assert!(report.summary.converged);
    }

    #[test]
    fn transfer_and_store_histograms_split_by_role() {
        let trace = ContactTrace::parse(
            "0 ns a rep\n0 ns b rep\n0 ns phi rel\n\
             100 ea a phi\n3000 ed a phi\n4000 ea b phi\n8000 ed b phi\n",
        )
        .unwrap();
        let app = AppScenario::parse("500 up a\n").unwrap();
        let out = run(&trace, &app, &SimConfig::default()).unwrap();
        let report = report_from_records(&out.log).unwrap();
        assert!(report.summary.syncs > 0);
        assert!(report.summary.relay_syncs > 0);
        // Replica syncs move at most one full state.
        assert!(report.replica_transfers.keys().all(|&k| k <= 1));
        assert!(report.summary.max_store_size <= 2);
        assert!(!report.store_sizes.is_empty());
        let csv = report.transfer_hist_csv();
        assert!(csv.starts_with("states,relay_syncs,replica_syncs\n"));
    }

    #[test]
    fn empty_log_produces_empty_but_valid_output() {
        let report = report_from_records(&[]).unwrap();
        assert!(report.rows.is_empty());
        assert_eq!(report.summary.updates, 0);
        assert!(report.summary.converged, "vacuously converged");
        assert_eq!(report.summary.mean_latency_ms, None);
        assert_eq!(
            report.latency_csv(),
            "t_ms,min_ms,max_ms,mean_ms,undefined\n"
        );
        assert_eq!(report.distance_csv(), "t_ms,min,max,mean\n");
        assert_eq!(
            report.transfer_hist_csv(),
            "states,relay_syncs,replica_syncs\n"
        );
        assert_eq!(report.store_hist_csv(), "size,samples\n");
        assert!(report.summary_json().contains("\"updates\": 0"));
    }

    #[test]
    fn summarize_is_idempotent() {
        let log = run_two_replica_log();
        let conv = ConvergenceLog::from_records(&log).unwrap();
        assert_eq!(summarize(&conv).unwrap(), summarize(&conv).unwrap());
    }

    #[test]
    fn inconsistent_logs_are_rejected() {
        use crate::sim::log::LogRecord;
        let records = vec![
            TimedRecord {
                at_ms: 0,
                record: LogRecord::NodeStart {
                    id: "a".into(),
                    role: crate::sim::trace::DeclaredRole::Rep,
                },
            },
            TimedRecord {
                at_ms: 5,
                record: LogRecord::ReplicaVv {
                    id: "a".into(),
                    vv: vv!["a" => 1],
                },
            },
        ];
        assert!(matches!(
            ConvergenceLog::from_records(&records),
            Err(MetricsError::Inconsistent { at_ms: 5, .. })
        ));
    }
}
