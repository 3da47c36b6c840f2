//! Relay-assisted synchronization of conflict-free replicated state over
//! intermittent contacts, with a deterministic simulator around it.
//!
//! The crate has four layers:
//!
//! * [`versioning`]: version vectors and ordering over them;
//! * [`crdt`]: mergeable payloads (a grow-only counter and an observed-
//!   remove map) behind a byte-level facade;
//! * [`protocol`]: sans-io replica and relay nodes exchanging vectors,
//!   full states, and store contributions;
//! * [`sim`]: contact traces, a discrete-event engine, and a replayable
//!   run log, plus [`mobility`] models to generate traces, [`metrics`] to
//!   score runs, and [`sweep`] to fan out parameter studies.
//!
//! Relays hold a small store of pairwise-incomparable full states instead
//! of one merged blob, so they can serve any peer the smallest set of
//! states that still advances it, without merging (or even understanding)
//! the payload.

pub mod crdt;
pub mod metrics;
pub mod mobility;
pub mod protocol;
pub mod sim;
pub mod sweep;
pub mod testutil;
pub mod versioning;

pub use versioning::{ReplicaId, VersionVector, VvRelation};
