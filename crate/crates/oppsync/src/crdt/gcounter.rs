//! Grow-only counter, the smallest useful join semilattice.
//!
//! Each replica owns one contribution slot; merge is the pointwise maximum.
//! The observable value is the sum of all contributions.

use std::collections::BTreeMap;

use serde_json::json;

use super::codec::{Reader, Writer};
use super::{CrdtFacade, DecodeError, ScriptedUpdate, SerializedState};
use crate::versioning::ReplicaId;

const MAGIC: &[u8; 2] = b"GC";
const VERSION: u8 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GrowOnlyCounter {
    contributions: BTreeMap<ReplicaId, u64>,
}

impl GrowOnlyCounter {
    pub fn new() -> Self {
        GrowOnlyCounter::default()
    }

    /// Adds one to the contribution of `id`.
    pub fn increment(&mut self, id: &ReplicaId) {
        *self.contributions.entry(id.clone()).or_insert(0) += 1;
    }

    /// Sum of all contributions.
    pub fn value(&self) -> u64 {
        self.contributions.values().sum()
    }

    pub fn contribution(&self, id: &ReplicaId) -> u64 {
        self.contributions.get(id).copied().unwrap_or(0)
    }

    pub fn merge(&mut self, other: &GrowOnlyCounter) {
        for (id, n) in &other.contributions {
            let slot = self.contributions.entry(id.clone()).or_insert(0);
            if *n > *slot {
                *slot = *n;
            }
        }
    }

    pub fn decode(blob: &SerializedState) -> Result<GrowOnlyCounter, DecodeError> {
        let mut r = Reader::new(&blob.0, MAGIC, VERSION)?;
        let n = r.count()?;
        let mut contributions = BTreeMap::new();
        for _ in 0..n {
            let id = ReplicaId::new(r.str()?);
            let v = r.u64()?;
            contributions.insert(id, v);
        }
        r.expect_end()?;
        Ok(GrowOnlyCounter { contributions })
    }
}

impl CrdtFacade for GrowOnlyCounter {
    fn serialized_state(&self) -> SerializedState {
        let mut w = Writer::new(MAGIC, VERSION);
        w.count(self.contributions.len());
        for (id, n) in &self.contributions {
            w.str(id.as_str());
            w.u64(*n);
        }
        SerializedState(w.finish())
    }

    fn merge_serialized_state(&mut self, incoming: &SerializedState) -> Result<(), DecodeError> {
        let other = GrowOnlyCounter::decode(incoming)?;
        self.merge(&other);
        Ok(())
    }

    fn debug_json(&self) -> serde_json::Value {
        let per_replica: serde_json::Map<String, serde_json::Value> = self
            .contributions
            .iter()
            .map(|(id, n)| (id.to_string(), json!(n)))
            .collect();
        json!({ "value": self.value(), "contributions": per_replica })
    }
}

impl ScriptedUpdate for GrowOnlyCounter {
    fn apply_scripted_update(&mut self, issuer: &ReplicaId, _seq: u64) {
        self.increment(issuer);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> ReplicaId {
        ReplicaId::new(s)
    }

    #[test]
    fn value_is_sum_of_contributions() {
        let mut c = GrowOnlyCounter::new();
        c.increment(&id("a"));
        c.increment(&id("a"));
        c.increment(&id("b"));
        assert_eq!(c.value(), 3);
        assert_eq!(c.contribution(&id("a")), 2);
    }

    #[test]
    fn merge_takes_pointwise_max() {
        let mut a = GrowOnlyCounter::new();
        let mut b = GrowOnlyCounter::new();
        for _ in 0..3 {
            a.increment(&id("a"));
        }
        b.increment(&id("a"));
        b.increment(&id("b"));
        a.merge(&b);
        assert_eq!(a.contribution(&id("a")), 3);
        assert_eq!(a.contribution(&id("b")), 1);
        assert_eq!(a.value(), 4);
    }

    #[test]
    fn blob_round_trips_and_is_canonical() {
        let mut c = GrowOnlyCounter::new();
        c.increment(&id("b"));
        c.increment(&id("a"));
        let blob = c.serialized_state();
        let back = GrowOnlyCounter::decode(&blob).unwrap();
        assert_eq!(back, c);
        // Same state reached along a different path encodes identically.
        let mut c2 = GrowOnlyCounter::new();
        c2.increment(&id("a"));
        c2.increment(&id("b"));
        assert_eq!(c2.serialized_state(), blob);
    }

    #[test]
    fn corrupted_blob_is_rejected_and_state_preserved() {
        let mut c = GrowOnlyCounter::new();
        c.increment(&id("a"));
        let mut bytes = c.serialized_state().0;
        bytes.truncate(bytes.len() - 2);
        let mut victim = GrowOnlyCounter::new();
        victim.increment(&id("z"));
        let before = victim.clone();
        let err = victim.merge_serialized_state(&SerializedState(bytes));
        assert!(err.is_err());
        assert_eq!(victim, before);
    }
}
