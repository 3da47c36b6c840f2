//! Observed-remove map with selectable conflict semantics.
//!
//! Every write is tagged with a globally unique `(issuer, sequence)` pair.
//! Sets supersede the writes they have observed; deletes record a delete tag
//! per key. The state only ever grows (adds, delete tags and superseded-tag
//! sets are all grow-only), which makes the merge a plain union and the type
//! a join semilattice.
//!
//! The two semantics differ only in how a surviving write is judged against
//! delete tags it has not observed:
//! * set-wins: a write survives unless it was observed by a later set or
//!   delete, so a concurrent delete loses;
//! * del-wins: a write additionally dies if any delete tag for its key is
//!   missing from the set of deletes the write had observed, so a concurrent
//!   delete wins.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::json;

use super::codec::{Reader, Writer};
use super::{CrdtFacade, DecodeError, ScriptedUpdate, SerializedState};
use crate::versioning::ReplicaId;

const MAGIC: &[u8; 2] = b"OM";
const VERSION: u8 = 1;

/// Conflict resolution flavor, fixed at construction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapSemantics {
    SetWins,
    DelWins,
}

/// Unique id of a single write or delete: issuing replica plus a counter of
/// that replica's operations on this map.
pub type Tag = (ReplicaId, u64);

/// Map values. Strings and integers cover what the tooling needs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Value {
    Int(i64),
    Str(String),
}

impl Value {
    fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Int(i) => json!(i),
            Value::Str(s) => json!(s),
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(s)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct AddEntry {
    value: Value,
    /// Delete tags for this key that the writer had observed. Under del-wins
    /// semantics the write only survives while this covers every known
    /// delete tag of the key.
    seen_dels: BTreeSet<Tag>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservedRemoveMap {
    semantics: MapSemantics,
    /// Live and superseded writes, keyed by map key then write tag.
    adds: BTreeMap<String, BTreeMap<Tag, AddEntry>>,
    /// Delete tags per key.
    dels: BTreeMap<String, BTreeSet<Tag>>,
    /// Write tags superseded by a later set or delete that observed them.
    superseded: BTreeSet<Tag>,
    /// Highest operation sequence seen per issuer, for minting fresh tags.
    op_seq: BTreeMap<ReplicaId, u64>,
}

impl ObservedRemoveMap {
    pub fn new(semantics: MapSemantics) -> Self {
        ObservedRemoveMap {
            semantics,
            adds: BTreeMap::new(),
            dels: BTreeMap::new(),
            superseded: BTreeSet::new(),
            op_seq: BTreeMap::new(),
        }
    }

    pub fn semantics(&self) -> MapSemantics {
        self.semantics
    }

    fn mint_tag(&mut self, issuer: &ReplicaId) -> Tag {
        let slot = self.op_seq.entry(issuer.clone()).or_insert(0);
        *slot += 1;
        (issuer.clone(), *slot)
    }

    fn live_tags(&self, key: &str) -> Vec<Tag> {
        self.adds
            .get(key)
            .map(|entries| {
                entries
                    .keys()
                    .filter(|t| !self.superseded.contains(*t))
                    .cloned()
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Writes `value` under `key`, superseding every write of the key
    /// observed so far.
    pub fn set(&mut self, key: &str, value: impl Into<Value>, issuer: &ReplicaId) {
        for tag in self.live_tags(key) {
            self.superseded.insert(tag);
        }
        let tag = self.mint_tag(issuer);
        let seen_dels = self.dels.get(key).cloned().unwrap_or_default();
        self.adds.entry(key.to_string()).or_default().insert(
            tag,
            AddEntry {
                value: value.into(),
                seen_dels,
            },
        );
    }

    /// Deletes `key` as observed locally. Whether writes concurrent with the
    /// delete survive depends on the semantics.
    pub fn del(&mut self, key: &str, issuer: &ReplicaId) {
        for tag in self.live_tags(key) {
            self.superseded.insert(tag);
        }
        let tag = self.mint_tag(issuer);
        self.dels.entry(key.to_string()).or_default().insert(tag);
    }

    fn visible<'a>(&'a self, key: &str) -> Vec<(&'a Tag, &'a AddEntry)> {
        let Some(entries) = self.adds.get(key) else {
            return Vec::new();
        };
        let empty = BTreeSet::new();
        let key_dels = self.dels.get(key).unwrap_or(&empty);
        entries
            .iter()
            .filter(|(tag, entry)| {
                if self.superseded.contains(*tag) {
                    return false;
                }
                match self.semantics {
                    MapSemantics::SetWins => true,
                    MapSemantics::DelWins => key_dels.is_subset(&entry.seen_dels),
                }
            })
            .collect()
    }

    /// Observable value of `key`, if any. When several concurrent writes
    /// survive, the largest `(value, tag)` pair wins so that all replicas
    /// agree on the same single value.
    pub fn get(&self, key: &str) -> Option<&Value> {
        self.visible(key)
            .into_iter()
            .max_by(|(ta, ea), (tb, eb)| (&ea.value, *ta).cmp(&(&eb.value, *tb)))
            .map(|(_, entry)| &entry.value)
    }

    /// Observable entries, sorted by key.
    pub fn entries(&self) -> Vec<(&str, &Value)> {
        self.adds
            .keys()
            .filter_map(|k| self.get(k).map(|v| (k.as_str(), v)))
            .collect()
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    pub fn merge(&mut self, other: &ObservedRemoveMap) -> Result<(), DecodeError> {
        if self.semantics != other.semantics {
            return Err(DecodeError::SemanticsMismatch {
                local: self.semantics,
                incoming: other.semantics,
            });
        }
        for (key, entries) in &other.adds {
            let slot = self.adds.entry(key.clone()).or_default();
            for (tag, entry) in entries {
                slot.entry(tag.clone()).or_insert_with(|| entry.clone());
            }
        }
        for (key, tags) in &other.dels {
            self.dels
                .entry(key.clone())
                .or_default()
                .extend(tags.iter().cloned());
        }
        self.superseded.extend(other.superseded.iter().cloned());
        for (id, n) in &other.op_seq {
            let slot = self.op_seq.entry(id.clone()).or_insert(0);
            if *n > *slot {
                *slot = *n;
            }
        }
        Ok(())
    }

    pub fn decode(blob: &SerializedState) -> Result<ObservedRemoveMap, DecodeError> {
        let mut r = Reader::new(&blob.0, MAGIC, VERSION)?;
        let semantics = match r.u8()? {
            0 => MapSemantics::SetWins,
            1 => MapSemantics::DelWins,
            tag => return Err(DecodeError::BadValueTag { tag, at: 3 }),
        };
        let mut map = ObservedRemoveMap::new(semantics);
        for _ in 0..r.count()? {
            let id = ReplicaId::new(r.str()?);
            let n = r.u64()?;
            map.op_seq.insert(id, n);
        }
        for _ in 0..r.count()? {
            let key = r.str()?;
            let mut entries = BTreeMap::new();
            for _ in 0..r.count()? {
                let tag = read_tag(&mut r)?;
                let value = read_value(&mut r)?;
                let mut seen_dels = BTreeSet::new();
                for _ in 0..r.count()? {
                    seen_dels.insert(read_tag(&mut r)?);
                }
                entries.insert(tag, AddEntry { value, seen_dels });
            }
            map.adds.insert(key, entries);
        }
        for _ in 0..r.count()? {
            let key = r.str()?;
            let mut tags = BTreeSet::new();
            for _ in 0..r.count()? {
                tags.insert(read_tag(&mut r)?);
            }
            map.dels.insert(key, tags);
        }
        for _ in 0..r.count()? {
            map.superseded.insert(read_tag(&mut r)?);
        }
        r.expect_end()?;
        Ok(map)
    }
}

fn write_tag(w: &mut Writer, tag: &Tag) {
    w.str(tag.0.as_str());
    w.u64(tag.1);
}

fn read_tag(r: &mut Reader<'_>) -> Result<Tag, DecodeError> {
    let id = ReplicaId::new(r.str()?);
    let seq = r.u64()?;
    Ok((id, seq))
}

fn write_value(w: &mut Writer, value: &Value) {
    match value {
        Value::Int(i) => {
            w.u8(0);
            w.i64(*i);
        }
        Value::Str(s) => {
            w.u8(1);
            w.str(s);
        }
    }
}

fn read_value(r: &mut Reader<'_>) -> Result<Value, DecodeError> {
    match r.u8()? {
        0 => Ok(Value::Int(r.i64()?)),
        1 => Ok(Value::Str(r.str()?)),
        tag => Err(DecodeError::BadValueTag { tag, at: 0 }),
    }
}

impl CrdtFacade for ObservedRemoveMap {
    fn serialized_state(&self) -> SerializedState {
        let mut w = Writer::new(MAGIC, VERSION);
        w.u8(match self.semantics {
            MapSemantics::SetWins => 0,
            MapSemantics::DelWins => 1,
        });
        w.count(self.op_seq.len());
        for (id, n) in &self.op_seq {
            w.str(id.as_str());
            w.u64(*n);
        }
        w.count(self.adds.len());
        for (key, entries) in &self.adds {
            w.str(key);
            w.count(entries.len());
            for (tag, entry) in entries {
                write_tag(&mut w, tag);
                write_value(&mut w, &entry.value);
                w.count(entry.seen_dels.len());
                for d in &entry.seen_dels {
                    write_tag(&mut w, d);
                }
            }
        }
        w.count(self.dels.len());
        for (key, tags) in &self.dels {
            w.str(key);
            w.count(tags.len());
            for t in tags {
                write_tag(&mut w, t);
            }
        }
        w.count(self.superseded.len());
        for t in &self.superseded {
            write_tag(&mut w, t);
        }
        SerializedState(w.finish())
    }

    fn merge_serialized_state(&mut self, incoming: &SerializedState) -> Result<(), DecodeError> {
        let other = ObservedRemoveMap::decode(incoming)?;
        self.merge(&other)
    }

    fn debug_json(&self) -> serde_json::Value {
        let entries: serde_json::Map<String, serde_json::Value> = self
            .entries()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_json()))
            .collect();
        json!({
            "semantics": match self.semantics {
                MapSemantics::SetWins => "set-wins",
                MapSemantics::DelWins => "del-wins",
            },
            "entries": entries,
        })
    }
}

impl ScriptedUpdate for ObservedRemoveMap {
    /// Deterministic op mix for simulations: mostly sets over a small key
    /// space, with every seventh operation deleting the key it would have
    /// written.
    fn apply_scripted_update(&mut self, issuer: &ReplicaId, seq: u64) {
        let key = format!("k{}", seq % 5);
        if seq.is_multiple_of(7) {
            self.del(&key, issuer);
        } else {
            self.set(&key, format!("{issuer}-{seq}"), issuer);
        }
    }
}
