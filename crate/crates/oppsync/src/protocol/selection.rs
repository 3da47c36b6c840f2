//! Picking which stored records a relay should forward to a peer.
//!
//! Given a store of pairwise-concurrent records and the vector a peer has
//! announced, [`select_inflators`] returns a small batch of records that
//! together push the peer as far as the store can take it. Sending the whole
//! store would achieve the same final vector; the point of the selection is
//! to get there with as few transfers as possible.
//!
//! The default strategy runs in two phases:
//! 1. singles: walk the target entries in id order and commit every record
//!    that is the only one able to reach an entry's value, masking out
//!    whatever else that record covers;
//! 2. greedy cover: repeatedly take the candidate covering the most
//!    remaining entries until none remain.
//!
//! The singles phase is what keeps the result close to minimal: a record
//! that is someone's only provider must be in any solution, and committing
//! it early stops the greedy phase from wasting picks on strict subsets of
//! it. A final pass drops any pick the rest of the batch has made
//! redundant, which can happen when an early greedy pick is eclipsed by
//! the union of later ones. A `pure_greedy` switch skips both the singles
//! phase and the pruning, giving the naive baseline for comparison runs.

use std::collections::BTreeMap;

use super::StateRecord;
use crate::versioning::{ReplicaId, VersionVector};

/// Selects a batch of records whose joint vector takes `peer` to the join of
/// everything in `store` that the peer is missing. Returned in selection
/// order; callers impose their own transmission order.
pub fn select_inflators<'a>(
    store: &'a [StateRecord],
    peer: &VersionVector,
    pure_greedy: bool,
) -> Vec<&'a StateRecord> {
    // Only records holding something the peer lacks can inflate it.
    let candidates: Vec<&StateRecord> = store.iter().filter(|r| r.vv.over(peer)).collect();
    if candidates.is_empty() {
        return Vec::new();
    }

    // The best the peer can reach: entry-wise max over the candidates,
    // restricted to entries above the peer's own counter.
    let mut joint = VersionVector::new();
    for c in &candidates {
        joint.join_in(&c.vv);
    }
    let mut target: BTreeMap<ReplicaId, u64> = joint
        .iter()
        .filter(|(id, n)| *n > peer.get(id))
        .map(|(id, n)| (id.clone(), n))
        .collect();

    let mut selected: Vec<&StateRecord> = Vec::new();
    let mut in_selection = vec![false; candidates.len()];

    if !pure_greedy {
        single_providers(&candidates, &mut target, &mut selected, &mut in_selection);
    }

    greedy_cover(&candidates, &mut target, &mut selected, &mut in_selection);

    if !pure_greedy {
        prune_redundant(peer, &candidates, &mut selected);
    }
    selected
}

/// Final pass: drop every record whose removal leaves the joint vector of
/// peer and batch unchanged. Records are re-examined in selection order, so
/// the outcome is deterministic; singles are never dropped (nothing else
/// reaches the entry that made them a single).
fn prune_redundant<'a>(
    peer: &VersionVector,
    candidates: &[&'a StateRecord],
    selected: &mut Vec<&'a StateRecord>,
) {
    let mut goal = peer.clone();
    for c in candidates {
        goal.join_in(&c.vv);
    }
    let mut idx = 0;
    while idx < selected.len() {
        let mut without = peer.clone();
        for (j, r) in selected.iter().enumerate() {
            if j != idx {
                without.join_in(&r.vv);
            }
        }
        if without == goal {
            selected.remove(idx);
        } else {
            idx += 1;
        }
    }
}

/// True when the record can supply the target value for this id.
fn reaches(record: &StateRecord, id: &ReplicaId, value: u64) -> bool {
    record.vv.get(id) >= value
}

/// Removes from `target` every entry the record covers.
fn mask(target: &mut BTreeMap<ReplicaId, u64>, record: &StateRecord) {
    target.retain(|id, value| !reaches(record, id, *value));
}

/// Phase 1: commit records that are the sole provider of some target entry.
/// Entries are visited in id order; masking may clear later entries before
/// they are examined, which is intended (their provider is already coming).
fn single_providers<'a>(
    candidates: &[&'a StateRecord],
    target: &mut BTreeMap<ReplicaId, u64>,
    selected: &mut Vec<&'a StateRecord>,
    in_selection: &mut [bool],
) {
    let ids: Vec<ReplicaId> = target.keys().cloned().collect();
    for id in ids {
        let Some(&value) = target.get(&id) else {
            continue; // masked by an earlier pick
        };
        let mut providers = candidates
            .iter()
            .enumerate()
            .filter(|(_, c)| reaches(c, &id, value));
        let first = providers.next();
        if let (Some((idx, record)), None) = (first, providers.next()) {
            debug_assert!(!in_selection[idx], "sole provider already masked out");
            in_selection[idx] = true;
            selected.push(record);
            mask(target, record);
        }
    }
}

/// Phase 2: classical greedy set cover over the remaining entries. Ties on
/// coverage go to the record with the larger vector total, then to the
/// smaller canonical rendering, so the outcome never depends on store order.
fn greedy_cover<'a>(
    candidates: &[&'a StateRecord],
    target: &mut BTreeMap<ReplicaId, u64>,
    selected: &mut Vec<&'a StateRecord>,
    in_selection: &mut [bool],
) {
    while !target.is_empty() {
        let mut best: Option<(usize, usize, u64, String)> = None;
        for (idx, c) in candidates.iter().enumerate() {
            if in_selection[idx] {
                continue;
            }
            let covered = target
                .iter()
                .filter(|(id, value)| reaches(c, id, **value))
                .count();
            if covered == 0 {
                continue;
            }
            let total = c.vv.total();
            let render = c.vv.to_string();
            let better = match &best {
                None => true,
                Some((_, b_cov, b_total, b_render)) => {
                    (covered, total, std::cmp::Reverse(&render))
                        > (*b_cov, *b_total, std::cmp::Reverse(b_render))
                }
            };
            if better {
                best = Some((idx, covered, total, render));
            }
        }
        let Some((idx, ..)) = best else {
            // Unreachable for targets built from the candidates themselves,
            // but do not loop forever on inconsistent input.
            debug_assert!(false, "uncoverable target entries {target:?}");
            break;
        };
        in_selection[idx] = true;
        selected.push(candidates[idx]);
        mask(target, candidates[idx]);
    }
}
