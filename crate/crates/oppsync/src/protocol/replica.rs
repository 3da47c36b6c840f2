//! Replica side of the synchronization protocol.
//!
//! A replica owns application state (a CRDT payload) plus the version
//! vector describing which updates that state reflects. Its whole protocol
//! surface is: announce the vector on contact, ship the full state to peers
//! that are missing something, and merge whatever states arrive. Relays are
//! served the same way, except that a replica answers a relay only once the
//! relay's batch of contributions is complete, and only if it has anything
//! at all (an empty replica stays silent so two empty nodes do not ping-pong
//! empty states forever).

use std::collections::BTreeMap;

use super::{
    Effect, Payload, PeerKind, Propagation, ProtocolConfig, ProtocolMode, StateRecord, TimerKind,
};
use crate::crdt::{DecodeError, SimPayload};
use crate::versioning::{ReplicaId, VersionVector};

pub struct ReplicaNode {
    id: ReplicaId,
    vv: VersionVector,
    payload: Box<dyn SimPayload>,
    neighbors: BTreeMap<ReplicaId, PeerKind>,
    cfg: ProtocolConfig,
    /// Set when the state grew since the last periodic announcement.
    dirty: bool,
}

impl ReplicaNode {
    pub fn new(id: ReplicaId, payload: Box<dyn SimPayload>, cfg: ProtocolConfig) -> Self {
        ReplicaNode {
            id,
            vv: VersionVector::new(),
            payload,
            neighbors: BTreeMap::new(),
            cfg,
            dirty: false,
        }
    }

    pub fn id(&self) -> &ReplicaId {
        &self.id
    }

    pub fn vv(&self) -> &VersionVector {
        &self.vv
    }

    pub fn payload(&self) -> &dyn SimPayload {
        self.payload.as_ref()
    }

    /// Direct access for test setups that need a replica in a known state.
    pub fn payload_mut(&mut self) -> &mut dyn SimPayload {
        self.payload.as_mut()
    }

    /// Overrides the vector, for test setups only.
    pub fn force_vv(&mut self, vv: VersionVector) {
        self.vv = vv;
    }

    fn state_record(&self) -> StateRecord {
        StateRecord::new(self.payload.serialized_state(), self.vv.clone())
    }

    /// The state is empty while no update, local or merged, is visible.
    fn is_empty(&self) -> bool {
        self.vv.total() == 0
    }

    fn notify_neighbors(&mut self, except: Option<&ReplicaId>, out: &mut Vec<Effect>) {
        if self.cfg.mode != ProtocolMode::Enhanced {
            return;
        }
        match self.cfg.propagation {
            Propagation::Immediate => {
                for peer in self.neighbors.keys() {
                    if Some(peer) != except {
                        out.push(Effect::Send {
                            to: peer.clone(),
                            payload: Payload::ChangeNotice,
                        });
                    }
                }
            }
            Propagation::Periodic(_) => {
                self.dirty = true;
            }
        }
    }

    /// Applies one scripted local update: the payload mutates, the own
    /// counter grows, and in enhanced mode neighbors hear about it.
    pub fn local_update(&mut self, out: &mut Vec<Effect>) {
        let seq = self.vv.get(&self.id) + 1;
        self.payload.apply_scripted_update(&self.id, seq);
        let id = self.id.clone();
        self.vv.increment(&id);
        self.notify_neighbors(None, out);
    }

    pub fn peer_detected(&mut self, peer: ReplicaId, kind: PeerKind, out: &mut Vec<Effect>) {
        self.neighbors.insert(peer.clone(), kind);
        // Same opening move for replica and relay peers: announce the vector
        // and let the peer decide what we are missing.
        out.push(Effect::Send {
            to: peer,
            payload: Payload::ReplicaVv(self.vv.clone()),
        });
    }

    pub fn peer_lost(&mut self, peer: &ReplicaId) {
        self.neighbors.remove(peer);
    }

    /// Merges an incoming state and joins its vector. Returns whether the
    /// vector grew. A blob that fails to decode discards the whole message.
    fn merge_incoming(&mut self, record: &StateRecord) -> Result<bool, DecodeError> {
        self.payload.merge_serialized_state(&record.blob)?;
        Ok(self.vv.join_in(&record.vv))
    }

    pub fn receive(&mut self, from: &ReplicaId, payload: Payload, out: &mut Vec<Effect>) {
        match payload {
            // A peer replica told us where it stands; send our state if we
            // hold something it lacks.
            Payload::ReplicaVv(peer_vv) => {
                if self.vv.over(&peer_vv) {
                    out.push(Effect::Send {
                        to: from.clone(),
                        payload: Payload::State(self.state_record()),
                    });
                }
            }
            // A relay we notified answered with its aggregate vector; push
            // our state if the relay's store does not cover us.
            Payload::RelayVaggForReplica(vagg) => {
                if self.vv.over(&vagg) {
                    out.push(Effect::Send {
                        to: from.clone(),
                        payload: Payload::State(self.state_record()),
                    });
                }
            }
            // Full state from a peer replica.
            Payload::State(record) => {
                if let Ok(grew) = self.merge_incoming(&record) {
                    if grew {
                        self.notify_neighbors(Some(from), out);
                    }
                }
            }
            // One record of a relay's batch. On the final record, answer
            // with our merged state unless it is empty.
            Payload::Contribution { record, last } => {
                if let Some(record) = &record {
                    if let Ok(grew) = self.merge_incoming(record) {
                        if grew {
                            self.notify_neighbors(Some(from), out);
                        }
                    }
                }
                if last && !self.is_empty() {
                    out.push(Effect::Send {
                        to: from.clone(),
                        payload: Payload::State(self.state_record()),
                    });
                }
            }
            // A neighbor's state grew; tell it where we stand.
            Payload::ChangeNotice => {
                out.push(Effect::Send {
                    to: from.clone(),
                    payload: Payload::ReplicaVv(self.vv.clone()),
                });
            }
            // Relays only send these to other relays.
            Payload::RelayVagg(_) => {}
        }
    }

    pub fn timer(&mut self, kind: TimerKind, out: &mut Vec<Effect>) {
        match kind {
            TimerKind::PeriodicSync => {
                if let Propagation::Periodic(period) = self.cfg.propagation {
                    if self.dirty && !self.neighbors.is_empty() {
                        for peer in self.neighbors.keys() {
                            out.push(Effect::Send {
                                to: peer.clone(),
                                payload: Payload::ChangeNotice,
                            });
                        }
                    }
                    self.dirty = false;
                    out.push(Effect::StartTimer {
                        delay_ms: period,
                        timer: TimerKind::PeriodicSync,
                    });
                }
            }
            TimerKind::ContinueStream { .. } => {}
        }
    }
}
