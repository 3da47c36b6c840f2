//! The synchronization protocol spoken between replicas and relays.
//!
//! Three pairwise exchanges make up the protocol:
//! * replica-replica: peers swap version vectors on contact and ship their
//!   full state to a peer that is missing something ([`replica`]);
//! * replica-relay: the replica announces its vector, the relay answers with
//!   a minimal batch of stored states and collects the replica's merged
//!   state in return ([`relay`]);
//! * relay-relay: relays swap aggregate vectors and forward whichever stored
//!   records the other side is missing.
//!
//! Relays never decode application state. They carry opaque
//! [`StateRecord`]s and reason about them purely through version vectors,
//! with [`selection::select_inflators`] picking a small batch to transfer.
//!
//! Nodes are sans-io state machines: every handler takes an incoming event
//! and pushes [`Effect`]s (sends and timer requests) for the surrounding
//! engine to execute. The engine owns clocks, links and delivery.

pub mod relay;
pub mod replica;
pub mod selection;

pub use relay::RelayNode;
pub use replica::ReplicaNode;

use crate::crdt::SerializedState;
use crate::versioning::{ReplicaId, VersionVector};

/// What a node is, as seen by the discovery layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeerKind {
    Replica,
    Relay,
}

/// A serialized CRDT state together with the version vector it covers.
/// This is the unit relays store and forward.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateRecord {
    pub blob: SerializedState,
    pub vv: VersionVector,
}

impl StateRecord {
    pub fn new(blob: SerializedState, vv: VersionVector) -> Self {
        StateRecord { blob, vv }
    }

    /// Bytes this record occupies on the wire.
    pub fn wire_size(&self) -> usize {
        self.blob.len() + vv_wire_size(&self.vv)
    }
}

fn vv_wire_size(vv: &VersionVector) -> usize {
    // Accounting model: 8 bytes per counter plus the id bytes, plus a small
    // framing constant. Only relative sizes matter to the latency model.
    4 + vv
        .iter()
        .map(|(id, _)| id.as_str().len() + 8)
        .sum::<usize>()
}

/// Everything one node can say to another.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    /// A replica announcing its version vector, on contact or when asked.
    ReplicaVv(VersionVector),
    /// A relay announcing its aggregate vector to another relay.
    RelayVagg(VersionVector),
    /// A relay answering a replica's change notice with its aggregate
    /// vector, so the replica can decide whether to push its state.
    RelayVaggForReplica(VersionVector),
    /// A replica's full state.
    State(StateRecord),
    /// One stored record forwarded by a relay. `record` is `None` for the
    /// empty batch. `last` marks the end of the batch; receiving replicas
    /// use it to know when to answer with their own state.
    Contribution {
        record: Option<StateRecord>,
        last: bool,
    },
    /// "My state grew, tell me what you have": the receiver answers with its
    /// version vector (replicas) or aggregate vector (relays).
    ChangeNotice,
}

impl Payload {
    /// Bytes on the wire, fed to the latency model.
    pub fn wire_size(&self) -> usize {
        match self {
            Payload::ReplicaVv(vv) | Payload::RelayVagg(vv) | Payload::RelayVaggForReplica(vv) => {
                vv_wire_size(vv)
            }
            Payload::State(rec) => rec.wire_size(),
            Payload::Contribution { record, .. } => {
                1 + record.as_ref().map_or(0, StateRecord::wire_size)
            }
            Payload::ChangeNotice => 1,
        }
    }

    /// Short tag used in event logs.
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::ReplicaVv(_) => "vv",
            Payload::RelayVagg(_) => "vagg",
            Payload::RelayVaggForReplica(_) => "vaggr",
            Payload::State(_) => "state",
            Payload::Contribution { .. } => "contrib",
            Payload::ChangeNotice => "notice",
        }
    }

    /// True for payloads carrying a peer's vector, which open a new sync
    /// round at the receiver.
    pub fn is_vector(&self) -> bool {
        matches!(
            self,
            Payload::ReplicaVv(_) | Payload::RelayVagg(_) | Payload::RelayVaggForReplica(_)
        )
    }
}

/// Timers a node can ask the engine for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TimerKind {
    /// Send the next queued record of an in-progress transfer to `peer`.
    ContinueStream { peer: ReplicaId },
    /// Periodic change propagation tick.
    PeriodicSync,
}

/// Instructions a handler hands back to the engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    Send { to: ReplicaId, payload: Payload },
    StartTimer { delay_ms: u64, timer: TimerKind },
}

/// How inflations learned locally are pushed to current neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "period_ms")]
pub enum Propagation {
    /// Notify neighbors as soon as the local state grows.
    Immediate,
    /// Collect changes and notify neighbors every `period_ms`.
    Periodic(u64),
}

/// Protocol variant. `Basic` is the plain contact-driven exchange; relays
/// overwrite their store with whatever full state a replica hands them and
/// nobody reacts to changes within standing contacts. `Enhanced` adds the
/// store regression guard on relays and change notices to neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolMode {
    Basic,
    Enhanced,
}

/// Knobs shared by replica and relay nodes.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProtocolConfig {
    pub mode: ProtocolMode,
    /// Only consulted in enhanced mode.
    pub propagation: Propagation,
    /// Use the pure greedy cover instead of singles-first selection.
    pub pure_greedy: bool,
    /// Gap between consecutive records of a relay transfer. Mirrors the
    /// per-message transmission time so a stream behaves like a busy link
    /// and can be re-planned while in progress.
    pub stream_spacing_ms: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            mode: ProtocolMode::Enhanced,
            propagation: Propagation::Immediate,
            pure_greedy: false,
            stream_spacing_ms: 50,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vv;

    #[test]
    fn payload_kinds_are_stable_log_tags() {
        let vv = vv!["a" => 1];
        assert_eq!(Payload::ReplicaVv(vv.clone()).kind(), "vv");
        assert_eq!(Payload::ChangeNotice.kind(), "notice");
        assert!(Payload::RelayVagg(vv.clone()).is_vector());
        assert!(!Payload::ChangeNotice.is_vector());
    }

    #[test]
    fn wire_size_tracks_content() {
        let small = Payload::ReplicaVv(vv!["a" => 1]);
        let large = Payload::ReplicaVv(vv!["a" => 1, "b" => 2, "c" => 3]);
        assert!(large.wire_size() > small.wire_size());
        assert_eq!(Payload::ChangeNotice.wire_size(), 1);
    }
}
