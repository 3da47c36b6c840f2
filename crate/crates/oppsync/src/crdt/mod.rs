//! State-based CRDT payloads and the narrow interface the sync layer sees.
//!
//! The synchronization protocol never inspects application state. It moves
//! opaque [`SerializedState`] blobs around and asks the local payload to
//! merge incoming blobs through [`CrdtFacade`]. Two payloads are provided:
//! an observed-remove map ([`ormap::ObservedRemoveMap`]) as the full-featured
//! reference, and a grow-only counter ([`gcounter::GrowOnlyCounter`]) as the
//! smallest possible semilattice, handy for fuzzing and large simulations.
//!
//! Both payloads encode to a canonical binary form (sorted keys, length
//! prefixes; see `codec`), so equal states always serialize to equal bytes.

mod codec;
pub mod gcounter;
pub mod ormap;

pub use gcounter::GrowOnlyCounter;
pub use ormap::{MapSemantics, ObservedRemoveMap, Value};

use crate::versioning::ReplicaId;

/// Opaque serialized CRDT state as shipped between nodes.
#[derive(Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct SerializedState(pub Vec<u8>);

impl SerializedState {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl std::fmt::Debug for SerializedState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SerializedState({} bytes)", self.0.len())
    }
}

/// Why a blob could not be decoded. Getting one of these out of a merge
/// means the transfer was corrupted or the peer runs an incompatible payload;
/// the caller is expected to drop the message and keep its state unchanged.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("unrecognized payload magic {found:?}")]
    BadMagic { found: [u8; 2] },
    #[error("unsupported payload version {found}")]
    BadVersion { found: u8 },
    #[error("blob truncated at byte {at}")]
    Truncated { at: usize },
    #[error("invalid UTF-8 near byte {at}")]
    BadUtf8 { at: usize },
    #[error("trailing bytes after payload at byte {at}")]
    TrailingBytes { at: usize },
    #[error("unknown value tag {tag} at byte {at}")]
    BadValueTag { tag: u8, at: usize },
    #[error("map semantics mismatch: local {local:?}, incoming {incoming:?}")]
    SemanticsMismatch {
        local: MapSemantics,
        incoming: MapSemantics,
    },
}

/// What the sync layer needs from an application payload: a snapshot of the
/// full state and the ability to merge a peer's snapshot into the local one.
/// Merges must be commutative, associative and idempotent; the payloads in
/// this module get that for free by only ever growing internal sets.
pub trait CrdtFacade {
    /// Canonical snapshot of the current state.
    fn serialized_state(&self) -> SerializedState;

    /// Merges a peer's snapshot into the local state. A decode failure
    /// leaves the local state untouched.
    fn merge_serialized_state(&mut self, incoming: &SerializedState) -> Result<(), DecodeError>;

    /// Human-readable rendering of the observable state, used by debug
    /// tooling and golden tests. The output is deterministic JSON.
    fn debug_json(&self) -> serde_json::Value;
}

/// Deterministic scripted mutation, used by the simulator to turn scenario
/// update events into payload operations. `seq` is the count of updates the
/// issuing replica has performed, starting at 1.
pub trait ScriptedUpdate {
    fn apply_scripted_update(&mut self, issuer: &ReplicaId, seq: u64);
}

/// Payload flavors the simulator can run with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayloadKind {
    /// Grow-only counter, one contribution slot per replica.
    GCounter,
    /// Observed-remove map with set-wins conflict resolution.
    OrMapSetWins,
    /// Observed-remove map with del-wins conflict resolution.
    OrMapDelWins,
}

impl PayloadKind {
    pub fn instantiate(self) -> Box<dyn SimPayload> {
        match self {
            PayloadKind::GCounter => Box::new(GrowOnlyCounter::new()),
            PayloadKind::OrMapSetWins => Box::new(ObservedRemoveMap::new(MapSemantics::SetWins)),
            PayloadKind::OrMapDelWins => Box::new(ObservedRemoveMap::new(MapSemantics::DelWins)),
        }
    }
}

impl std::str::FromStr for PayloadKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gcounter" => Ok(PayloadKind::GCounter),
            "ormap" | "ormap-set-wins" => Ok(PayloadKind::OrMapSetWins),
            "ormap-del-wins" => Ok(PayloadKind::OrMapDelWins),
            other => Err(format!(
                "unknown payload {other:?} (expected gcounter, ormap, ormap-set-wins or ormap-del-wins)"
            )),
        }
    }
}

/// Trait object bound for payloads driven by the simulator.
pub trait SimPayload: CrdtFacade + ScriptedUpdate + Send {}

impl<T: CrdtFacade + ScriptedUpdate + Send> SimPayload for T {}
