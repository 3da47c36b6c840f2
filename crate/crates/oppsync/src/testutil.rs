//! Test fixtures and independent oracles.
//!
//! The oracles here deliberately avoid the production code paths they are
//! used to judge: the minimum-cover search enumerates subsets instead of
//! calling the selection heuristic, and the spread oracle replays contact
//! intervals instead of running protocol nodes. They share only the
//! version-vector primitives, which have their own test suite.
//!
//! This module is part of the public crate so integration tests and the
//! acceptance suite can reach it; it has no value for production use.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::crdt::SerializedState;
use crate::protocol::StateRecord;
use crate::sim::trace::{
    AppEvent, AppScenario, ContactEvent, ContactTrace, DeclaredRole, TimedContact,
};
use crate::versioning::{ReplicaId, VersionVector};
use crate::vv;

/// Smallest number of candidate records whose join lifts `peer` to the
/// join of every record usable by it, found by exhaustive subset search in
/// increasing size. Returns 0 when nothing can inflate the peer.
pub fn brute_force_min_cover(store: &[VersionVector], peer: &VersionVector) -> usize {
    let candidates: Vec<&VersionVector> = store.iter().filter(|vv| vv.over(peer)).collect();
    let m = candidates.len();
    if m == 0 {
        return 0;
    }
    assert!(m <= 20, "exhaustive search is 2^m; keep instances small");
    let mut goal = peer.clone();
    for c in &candidates {
        goal.join_in(c);
    }
    for size in 1..=m {
        for mask in 0u32..(1 << m) {
            if mask.count_ones() as usize != size {
                continue;
            }
            let mut reached = peer.clone();
            for (i, c) in candidates.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    reached.join_in(c);
                }
            }
            if reached == goal {
                return size;
            }
        }
    }
    unreachable!("all candidates together always reach the goal");
}

/// Checks a proposed batch against the cover requirements: every record is
/// usable by the peer, the batch reaches the joint maximum, and no record
/// is dispensable. Returns a human-readable complaint if not.
pub fn check_cover(
    store: &[VersionVector],
    peer: &VersionVector,
    batch: &[&VersionVector],
) -> Result<(), String> {
    let mut goal = peer.clone();
    let mut usable = 0;
    for vv in store {
        if vv.over(peer) {
            goal.join_in(vv);
            usable += 1;
        }
    }
    if usable == 0 {
        return if batch.is_empty() {
            Ok(())
        } else {
            Err("batch non-empty although nothing can inflate the peer".into())
        };
    }
    for vv in batch {
        if !vv.over(peer) {
            return Err(format!("batch record {vv} is useless to the peer"));
        }
    }
    let mut reached = peer.clone();
    for vv in batch {
        reached.join_in(vv);
    }
    if reached != goal {
        return Err(format!("batch reaches {reached}, store offers {goal}"));
    }
    for skip in 0..batch.len() {
        let mut without = peer.clone();
        for (i, vv) in batch.iter().enumerate() {
            if i != skip {
                without.join_in(vv);
            }
        }
        if without == goal {
            return Err(format!("record {} is redundant in the batch", batch[skip]));
        }
    }
    Ok(())
}

/// The reference conflicting-store fixture: eight pairwise-concurrent
/// records over ids a..n and a peer vector for which the singles-first
/// selection needs three records (1, 4, 5) while plain greedy needs four,
/// starting with record 2.
pub fn conflicting_store_example() -> (Vec<StateRecord>, VersionVector) {
    let rec = |vv: VersionVector| StateRecord::new(SerializedState(Vec::new()), vv);
    let store = vec![
        rec(vv!["a" => 18, "b" => 5, "c" => 3, "d" => 14, "e" => 9]),
        rec(vv!["d" => 14, "e" => 9, "f" => 20, "h" => 10, "i" => 25, "j" => 10]),
        rec(vv!["a" => 12, "b" => 18, "d" => 8, "l" => 15]),
        rec(vv!["c" => 10, "g" => 25, "i" => 25, "m" => 14]),
        rec(vv!["e" => 7, "j" => 10, "k" => 11, "l" => 9]),
        rec(vv!["h" => 12, "i" => 23, "k" => 11, "n" => 8]),
        rec(vv!["c" => 25, "f" => 22, "m" => 20]),
        rec(vv!["e" => 4, "h" => 17, "k" => 7, "n" => 9]),
    ];
    let peer = vv![
        "a" => 12, "b" => 30, "c" => 25, "d" => 8, "e" => 4, "f" => 22, "g" => 19,
        "h" => 17, "i" => 20, "j" => 6, "k" => 7, "l" => 15, "m" => 28, "n" => 9
    ];
    (store, peer)
}

/// Random store of pairwise-concurrent vectors, built with an independent
/// insert rule: a new vector is dropped when something present already
/// covers it, and evicts whatever it covers.
pub fn random_concurrent_store(
    rng: &mut ChaCha8Rng,
    max_records: usize,
    max_ids: usize,
) -> Vec<VersionVector> {
    let ids: Vec<ReplicaId> = (0..max_ids)
        .map(|i| {
            let name = (b'a' + (i % 26) as u8) as char;
            ReplicaId::from(format!("{name}{}", i / 26).as_str())
        })
        .collect();
    let mut store: Vec<VersionVector> = Vec::new();
    let attempts = max_records * 3;
    for _ in 0..attempts {
        if store.len() >= max_records {
            break;
        }
        let mut vv = VersionVector::new();
        let entries = rng.gen_range(1..=max_ids);
        for _ in 0..entries {
            let id = ids[rng.gen_range(0..ids.len())].clone();
            vv.set(id, rng.gen_range(1..=30));
        }
        if store.iter().any(|s| !s.concurrent(&vv)) {
            // Covered by or covering someone: evict the covered, skip when
            // itself covered.
            if store.iter().any(|s| s.dominates(&vv) || s == &vv) {
                continue;
            }
            store.retain(|s| !vv.dominates(s));
        }
        store.push(vv);
    }
    store
}

/// Random selection instance: a concurrent store plus a peer that shares
/// some ground with it.
pub fn random_selection_instance(
    rng: &mut ChaCha8Rng,
    max_records: usize,
    max_ids: usize,
) -> (Vec<StateRecord>, VersionVector) {
    let store = random_concurrent_store(rng, max_records, max_ids);
    let mut peer = VersionVector::new();
    // Derive the peer from the store so targets and non-targets mix: take
    // a random fraction of each record's entries, scaled up or down.
    for vv in &store {
        for (id, n) in vv.iter() {
            match rng.gen_range(0..4) {
                0 => peer.set(id.clone(), n.saturating_sub(rng.gen_range(1..=5)).max(1)),
                1 => peer.set(id.clone(), n + rng.gen_range(0..=5)),
                _ => {}
            }
        }
    }
    let records = store
        .into_iter()
        .map(|vv| StateRecord::new(SerializedState(Vec::new()), vv))
        .collect();
    (records, peer)
}

/// Parameters of a random protocol-stress scenario.
#[derive(Debug, Clone)]
pub struct FuzzParams {
    pub seed: u64,
    pub replicas: usize,
    /// Relays alive at the start; churn may add and remove more.
    pub relays: usize,
    /// Scenario events to generate (edge flips, churn, updates).
    pub events: usize,
    /// Probability weight of dropping a live edge; raise it to exercise
    /// mid-stream contact loss.
    pub drop_weight: u32,
}

impl Default for FuzzParams {
    fn default() -> Self {
        FuzzParams {
            seed: 0,
            replicas: 10,
            relays: 20,
            events: 2000,
            drop_weight: 30,
        }
    }
}

/// Generates a random but valid scenario: replicas are permanent, relays
/// churn, edges flip between random live pairs, updates hit random
/// replicas. Event times advance by random small steps, so deliveries and
/// scenario changes interleave heavily.
pub fn fuzz_scenario(p: &FuzzParams) -> (ContactTrace, AppScenario) {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut contacts: Vec<TimedContact> = Vec::new();
    let mut app: Vec<AppEvent> = Vec::new();

    let replica_ids: Vec<ReplicaId> = (0..p.replicas)
        .map(|i| ReplicaId::from(format!("r{i}").as_str()))
        .collect();
    let mut live: Vec<ReplicaId> = Vec::new();
    let mut next_relay = 0usize;
    let mut t = 0u64;
    for id in &replica_ids {
        contacts.push(TimedContact {
            at_ms: 0,
            event: ContactEvent::NodeStart {
                id: id.clone(),
                role: DeclaredRole::Rep,
            },
        });
        live.push(id.clone());
    }
    let mut relays: Vec<ReplicaId> = Vec::new();
    for _ in 0..p.relays {
        let id = ReplicaId::from(format!("phi{next_relay}").as_str());
        next_relay += 1;
        contacts.push(TimedContact {
            at_ms: 0,
            event: ContactEvent::NodeStart {
                id: id.clone(),
                role: DeclaredRole::Rel,
            },
        });
        live.push(id.clone());
        relays.push(id.clone());
    }
    let mut edges: Vec<(ReplicaId, ReplicaId)> = Vec::new();

    for _ in 0..p.events {
        t += rng.gen_range(1..=150);
        // Weighted action pick.
        let up_w = 40u32;
        let drop_w = if edges.is_empty() { 0 } else { p.drop_weight };
        let update_w = 20u32;
        let death_w = if relays.len() > 2 { 4 } else { 0 };
        let birth_w = 4u32;
        let total = up_w + drop_w + update_w + death_w + birth_w;
        let mut pick = rng.gen_range(0..total);
        if pick < up_w {
            // Connect a random live pair that is not yet connected.
            for _ in 0..10 {
                let a = live[rng.gen_range(0..live.len())].clone();
                let b = live[rng.gen_range(0..live.len())].clone();
                if a == b {
                    continue;
                }
                let key = if a <= b {
                    (a.clone(), b.clone())
                } else {
                    (b.clone(), a.clone())
                };
                if edges.contains(&key) {
                    continue;
                }
                edges.push(key);
                contacts.push(TimedContact {
                    at_ms: t,
                    event: ContactEvent::EdgeUp { a, b },
                });
                break;
            }
            continue;
        }
        pick -= up_w;
        if pick < drop_w {
            let i = rng.gen_range(0..edges.len());
            let (a, b) = edges.swap_remove(i);
            contacts.push(TimedContact {
                at_ms: t,
                event: ContactEvent::EdgeDown { a, b },
            });
            continue;
        }
        pick -= drop_w;
        if pick < update_w {
            let id = replica_ids[rng.gen_range(0..replica_ids.len())].clone();
            app.push(AppEvent {
                at_ms: t,
                replica: id,
            });
            continue;
        }
        pick -= update_w;
        if pick < death_w {
            let i = rng.gen_range(0..relays.len());
            let id = relays.swap_remove(i);
            // Tear down its edges first to keep the trace tidy.
            edges.retain(|(a, b)| {
                if a == &id || b == &id {
                    contacts.push(TimedContact {
                        at_ms: t,
                        event: ContactEvent::EdgeDown {
                            a: a.clone(),
                            b: b.clone(),
                        },
                    });
                    false
                } else {
                    true
                }
            });
            live.retain(|l| l != &id);
            contacts.push(TimedContact {
                at_ms: t,
                event: ContactEvent::NodeStop { id },
            });
            continue;
        }
        // Birth of a fresh relay (ids are never reused).
        let id = ReplicaId::from(format!("phi{next_relay}").as_str());
        next_relay += 1;
        contacts.push(TimedContact {
            at_ms: t,
            event: ContactEvent::NodeStart {
                id: id.clone(),
                role: DeclaredRole::Rel,
            },
        });
        live.push(id.clone());
        relays.push(id);
    }

    (
        ContactTrace { events: contacts },
        AppScenario { events: app },
    )
}

/// Earliest instant each node could hold information present at `from` at
/// `t0`, assuming instantaneous transfer whenever an edge is up and both
/// ends are alive. Dead carriers lose what they knew. Nodes never reached
/// are absent from the result.
pub fn earliest_spread(
    trace: &ContactTrace,
    from: &ReplicaId,
    t0: u64,
) -> BTreeMap<ReplicaId, u64> {
    // Node lifetimes and edge up-intervals from the trace.
    let mut born: BTreeMap<ReplicaId, u64> = BTreeMap::new();
    let mut died: BTreeMap<ReplicaId, u64> = BTreeMap::new();
    let mut open: BTreeMap<(ReplicaId, ReplicaId), u64> = BTreeMap::new();
    let mut intervals: Vec<(ReplicaId, ReplicaId, u64, u64)> = Vec::new();
    let horizon = trace.end_ms().max(t0);
    for TimedContact { at_ms, event } in &trace.events {
        match event {
            ContactEvent::NodeStart { id, .. } => {
                born.insert(id.clone(), *at_ms);
            }
            ContactEvent::NodeStop { id } => {
                died.insert(id.clone(), *at_ms);
                let closing: Vec<(ReplicaId, ReplicaId)> = open
                    .keys()
                    .filter(|(a, b)| a == id || b == id)
                    .cloned()
                    .collect();
                for key in closing {
                    let start = open.remove(&key).unwrap();
                    intervals.push((key.0, key.1, start, *at_ms));
                }
            }
            ContactEvent::EdgeUp { a, b } => {
                let key = if a <= b {
                    (a.clone(), b.clone())
                } else {
                    (b.clone(), a.clone())
                };
                open.insert(key, *at_ms);
            }
            ContactEvent::EdgeDown { a, b } => {
                let key = if a <= b {
                    (a.clone(), b.clone())
                } else {
                    (b.clone(), a.clone())
                };
                if let Some(start) = open.remove(&key) {
                    intervals.push((key.0, key.1, start, *at_ms));
                }
            }
        }
    }
    for (key, start) in open {
        // Still up at the end of the trace: usable until the horizon,
        // inclusive.
        intervals.push((key.0, key.1, start, horizon + 1));
    }

    let alive_at = |id: &ReplicaId, t: u64| -> bool {
        born.get(id).is_some_and(|&b| b <= t) && died.get(id).is_none_or(|&d| t < d)
    };

    let mut arrival: BTreeMap<ReplicaId, u64> = BTreeMap::new();
    if alive_at(from, t0) {
        arrival.insert(from.clone(), t0);
    }
    // Fixpoint relaxation over the intervals; each pass can only lower
    // arrival times, and they are bounded below, so this terminates.
    loop {
        let mut changed = false;
        for (a, b, start, end) in &intervals {
            for (src, dst) in [(a, b), (b, a)] {
                let Some(&at) = arrival.get(src) else {
                    continue;
                };
                let crossing = at.max(*start);
                if crossing >= *end || !alive_at(src, crossing) || !alive_at(dst, crossing) {
                    continue;
                }
                let best = arrival.get(dst).copied().unwrap_or(u64::MAX);
                if crossing < best {
                    arrival.insert(dst.clone(), crossing);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    arrival
}

/// True when information held by every replica at `t0` can reach every
/// other replica, with relays allowed as stepping stones.
pub fn replicas_mutually_reachable(trace: &ContactTrace, t0: u64) -> bool {
    let replicas: Vec<ReplicaId> = trace
        .events
        .iter()
        .filter_map(|e| match &e.event {
            ContactEvent::NodeStart {
                id,
                role: DeclaredRole::Rep,
            } => Some(id.clone()),
            _ => None,
        })
        .collect();
    replicas.iter().all(|from| {
        let spread = earliest_spread(trace, from, t0);
        replicas.iter().all(|to| spread.contains_key(to))
    })
}
