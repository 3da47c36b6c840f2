//! Version vectors over replica identifiers.
//!
//! A version vector maps replica ids to update counters. Entries that are
//! absent count as zero, so vectors over disjoint id sets still compare
//! cleanly. The comparison vocabulary used throughout the protocol lives
//! here: [`VersionVector::over`], [`VersionVector::dominates`] and
//! [`VersionVector::concurrent`], together with the lattice join.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Identifier of a node.
///
/// Version vectors only ever carry ids of replicas, but relays and plain
/// mobile nodes draw from the same namespace, so the simulator reuses this
/// type for every node. Ids are opaque non-empty strings without whitespace,
/// `:`, `,`, `[` or `]` (those would break the text renderings).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReplicaId(Arc<str>);

impl ReplicaId {
    pub fn new(id: impl AsRef<str>) -> Self {
        ReplicaId(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True when the id is usable in traces and vector renderings.
    pub fn is_well_formed(&self) -> bool {
        !self.0.is_empty()
            && self
                .0
                .chars()
                .all(|c| !c.is_whitespace() && !matches!(c, ':' | ',' | '[' | ']' | ';'))
    }
}

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ReplicaId({})", self.0)
    }
}

impl From<&str> for ReplicaId {
    fn from(s: &str) -> Self {
        ReplicaId::new(s)
    }
}

impl From<String> for ReplicaId {
    fn from(s: String) -> Self {
        ReplicaId::new(s)
    }
}

impl Serialize for ReplicaId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for ReplicaId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(ReplicaId::new(s))
    }
}

/// How two version vectors relate to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VvRelation {
    Equal,
    /// Left is pointwise >= right with at least one strict entry.
    Dominates,
    /// Right is pointwise >= left with at least one strict entry.
    DominatedBy,
    /// Each side holds at least one entry above the other.
    Concurrent,
}

/// Map from replica id to number of observed updates. Missing ids count as 0.
#[derive(Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VersionVector {
    entries: BTreeMap<ReplicaId, u64>,
}

impl VersionVector {
    pub fn new() -> Self {
        VersionVector::default()
    }

    /// Builds a vector from (id, counter) pairs, dropping zero entries.
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<ReplicaId>,
    {
        let mut vv = VersionVector::new();
        for (id, n) in pairs {
            if n > 0 {
                vv.entries.insert(id.into(), n);
            }
        }
        vv
    }

    /// Counter for `id`, zero when absent.
    pub fn get(&self, id: &ReplicaId) -> u64 {
        self.entries.get(id).copied().unwrap_or(0)
    }

    /// Sets an entry directly. Zero removes the entry so that equal vectors
    /// always have equal representations.
    pub fn set(&mut self, id: ReplicaId, n: u64) {
        if n == 0 {
            self.entries.remove(&id);
        } else {
            self.entries.insert(id, n);
        }
    }

    /// Bumps the counter of `id` by one and returns the new value.
    pub fn increment(&mut self, id: &ReplicaId) -> u64 {
        let slot = self.entries.entry(id.clone()).or_insert(0);
        *slot += 1;
        *slot
    }

    /// Sum of all counters.
    pub fn total(&self) -> u64 {
        self.entries.values().sum()
    }

    /// True when every counter is zero.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ReplicaId, u64)> {
        self.entries.iter().map(|(id, n)| (id, *n))
    }

    pub fn ids(&self) -> impl Iterator<Item = &ReplicaId> {
        self.entries.keys()
    }

    /// True when `self` holds at least one entry strictly above `other`.
    ///
    /// This is the "knows something the other does not" test: a replica whose
    /// vector is over a peer's vector has updates the peer lacks, regardless
    /// of what the peer may hold in excess.
    pub fn over(&self, other: &VersionVector) -> bool {
        self.entries.iter().any(|(id, n)| *n > other.get(id))
    }

    /// True when `self` is pointwise >= `other` with at least one strict entry.
    pub fn dominates(&self, other: &VersionVector) -> bool {
        self.over(other) && !other.over(self)
    }

    /// True when both vectors hold something the other lacks.
    pub fn concurrent(&self, other: &VersionVector) -> bool {
        self.over(other) && other.over(self)
    }

    /// Full relation between two vectors. Exactly one variant applies.
    pub fn relation(&self, other: &VersionVector) -> VvRelation {
        match (self.over(other), other.over(self)) {
            (false, false) => VvRelation::Equal,
            (true, false) => VvRelation::Dominates,
            (false, true) => VvRelation::DominatedBy,
            (true, true) => VvRelation::Concurrent,
        }
    }

    /// Pointwise maximum, the least upper bound of the two vectors.
    pub fn join(&self, other: &VersionVector) -> VersionVector {
        let mut out = self.clone();
        out.join_in(other);
        out
    }

    /// In-place pointwise maximum. Returns true when `self` grew.
    pub fn join_in(&mut self, other: &VersionVector) -> bool {
        let mut grew = false;
        for (id, n) in &other.entries {
            let slot = self.entries.entry(id.clone()).or_insert(0);
            if *n > *slot {
                *slot = *n;
                grew = true;
            }
        }
        grew
    }
}

impl<S: Into<ReplicaId>> FromIterator<(S, u64)> for VersionVector {
    fn from_iter<I: IntoIterator<Item = (S, u64)>>(iter: I) -> Self {
        VersionVector::from_pairs(iter)
    }
}

/// Canonical rendering: `[a:5,b:2]`, entries sorted by id, no spaces.
/// The empty vector renders as `[]`.
impl fmt::Display for VersionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, (id, n)) in self.entries.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{id}:{n}")?;
        }
        f.write_str("]")
    }
}

impl fmt::Debug for VersionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Error when parsing the text form of a version vector.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid version vector {input:?}: {reason}")]
pub struct ParseVvError {
    pub input: String,
    pub reason: String,
}

impl ParseVvError {
    fn new(input: &str, reason: impl Into<String>) -> Self {
        ParseVvError {
            input: input.to_string(),
            reason: reason.into(),
        }
    }
}

impl FromStr for VersionVector {
    type Err = ParseVvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s
            .strip_prefix('[')
            .and_then(|rest| rest.strip_suffix(']'))
            .ok_or_else(|| ParseVvError::new(s, "missing [ ] delimiters"))?;
        let mut vv = VersionVector::new();
        if inner.is_empty() {
            return Ok(vv);
        }
        for part in inner.split(',') {
            let (id, counter) = part
                .split_once(':')
                .ok_or_else(|| ParseVvError::new(s, format!("entry {part:?} lacks ':'")))?;
            if id.is_empty() {
                return Err(ParseVvError::new(s, "empty replica id"));
            }
            let n: u64 = counter
                .parse()
                .map_err(|_| ParseVvError::new(s, format!("bad counter {counter:?}")))?;
            if n == 0 {
                return Err(ParseVvError::new(s, "zero counters must be omitted"));
            }
            let id = ReplicaId::new(id);
            if vv.entries.insert(id, n).is_some() {
                return Err(ParseVvError::new(s, "duplicate replica id"));
            }
        }
        Ok(vv)
    }
}

/// Shorthand for tests and fixtures: `vv!["a" => 5, "b" => 2]`.
#[macro_export]
macro_rules! vv {
    () => { $crate::versioning::VersionVector::new() };
    ($($id:expr => $n:expr),+ $(,)?) => {
        $crate::versioning::VersionVector::from_pairs([
            $(($id, $n as u64)),+
        ])
    };
}
