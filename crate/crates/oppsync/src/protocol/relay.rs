//! Relay side of the synchronization protocol.
//!
//! A relay carries opaque replica states so they can hop across network
//! partitions. Its store only ever keeps records that are pairwise
//! concurrent: inserting a record drops every stored record the newcomer
//! dominates, and a record that is dominated by (or equal to) something
//! already stored is not inserted at all. Together with the fact that the
//! states issued by one replica are totally ordered, this bounds the store
//! by the number of replicas in the system.
//!
//! `vagg`, the aggregate vector, is the join of all stored record vectors.
//! It is what relays exchange among themselves and what a relay compares a
//! replica's full state against in enhanced mode.
//!
//! Transfers to a peer go one record at a time, paced by a timer, so that a
//! store change occurring mid-transfer can re-plan the remaining queue
//! instead of shipping records that are already obsolete.

use std::collections::{BTreeMap, VecDeque};

use super::selection::select_inflators;
use super::{
    Effect, Payload, PeerKind, Propagation, ProtocolConfig, ProtocolMode, StateRecord, TimerKind,
};
use crate::versioning::{ReplicaId, VersionVector, VvRelation};

/// An in-progress batch transfer to one peer.
struct Stream {
    /// Records still to send. A `None` entry terminates a replica batch
    /// whose planned records were all invalidated by a store change.
    queue: VecDeque<Option<StateRecord>>,
    /// Best known estimate of the peer's vector: what it announced, joined
    /// with everything already sent in this batch.
    peer_vv: VersionVector,
    peer_kind: PeerKind,
    /// Whether a timer is currently armed for this stream.
    ticking: bool,
}

pub struct RelayNode {
    id: ReplicaId,
    records: Vec<StateRecord>,
    vagg: VersionVector,
    neighbors: BTreeMap<ReplicaId, PeerKind>,
    streams: BTreeMap<ReplicaId, Stream>,
    cfg: ProtocolConfig,
    dirty: bool,
}

impl RelayNode {
    pub fn new(id: ReplicaId, cfg: ProtocolConfig) -> Self {
        RelayNode {
            id,
            records: Vec::new(),
            vagg: VersionVector::new(),
            neighbors: BTreeMap::new(),
            streams: BTreeMap::new(),
            cfg,
            dirty: false,
        }
    }

    pub fn id(&self) -> &ReplicaId {
        &self.id
    }

    pub fn vagg(&self) -> &VersionVector {
        &self.vagg
    }

    pub fn records(&self) -> &[StateRecord] {
        &self.records
    }

    pub fn store_size(&self) -> usize {
        self.records.len()
    }

    /// Seeds the store directly, for test setups. Panics if the records are
    /// not pairwise concurrent, since that would violate the store invariant
    /// everything else relies on.
    pub fn seed_store(&mut self, records: Vec<StateRecord>) {
        for (i, a) in records.iter().enumerate() {
            for b in &records[i + 1..] {
                assert!(
                    a.vv.concurrent(&b.vv),
                    "seeded records must be pairwise concurrent: {} vs {}",
                    a.vv,
                    b.vv
                );
            }
        }
        self.vagg = VersionVector::new();
        for r in &records {
            self.vagg.join_in(&r.vv);
        }
        self.records = records;
    }

    /// Inserts a record, dropping everything it dominates. No-op when an
    /// equal or dominating record is already stored. Returns true when the
    /// store changed.
    fn insert_record(&mut self, record: StateRecord) -> bool {
        let redundant = self.records.iter().any(|r| {
            matches!(
                r.vv.relation(&record.vv),
                VvRelation::Equal | VvRelation::Dominates
            )
        });
        if redundant {
            return false;
        }
        self.records.retain(|r| !record.vv.dominates(&r.vv));
        self.vagg.join_in(&record.vv);
        self.records.push(record);
        true
    }

    /// Replaces the whole store with a single record.
    fn replace_store(&mut self, record: StateRecord) -> bool {
        let changed = !(self.records.len() == 1 && self.records[0].vv == record.vv);
        self.vagg = record.vv.clone();
        self.records = vec![record];
        changed
    }

    /// Re-plans every in-progress transfer after a store change: each queue
    /// is rebuilt from the current store against the peer's estimated
    /// vector. A replica batch that loses all its records still owes the
    /// peer a terminating message, otherwise the replica would wait forever
    /// before answering with its own state.
    fn replan_streams(&mut self) {
        let records = &self.records;
        let pure_greedy = self.cfg.pure_greedy;
        for stream in self.streams.values_mut() {
            let had_queue = !stream.queue.is_empty();
            let selection = select_inflators(records, &stream.peer_vv, pure_greedy);
            stream.queue = ordered_for_transmission(selection);
            if stream.queue.is_empty() && had_queue && stream.peer_kind == PeerKind::Replica {
                stream.queue.push_back(None);
            }
        }
        self.streams.retain(|_, s| !s.queue.is_empty());
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

    pub fn peer_detected(&mut self, peer: ReplicaId, kind: PeerKind, out: &mut Vec<Effect>) {
        self.neighbors.insert(peer.clone(), kind);
        // Replicas open the conversation themselves; with another relay we
        // swap aggregate vectors right away.
        if kind == PeerKind::Relay {
            out.push(Effect::Send {
                to: peer,
                payload: Payload::RelayVagg(self.vagg.clone()),
            });
        }
    }

    pub fn peer_lost(&mut self, peer: &ReplicaId) {
        self.neighbors.remove(peer);
        self.streams.remove(peer);
    }

    /// Starts (or restarts) a batch transfer towards `peer`. The first
    /// record goes out immediately; the rest follow on the stream timer.
    fn start_stream(
        &mut self,
        peer: &ReplicaId,
        peer_kind: PeerKind,
        peer_vv: VersionVector,
        out: &mut Vec<Effect>,
    ) {
        let selection = select_inflators(&self.records, &peer_vv, self.cfg.pure_greedy);
        let mut queue = ordered_for_transmission(selection);
        if queue.is_empty() {
            if peer_kind == PeerKind::Replica {
                // An empty batch must still be terminated so the replica
                // knows it is its turn.
                out.push(Effect::Send {
                    to: peer.clone(),
                    payload: Payload::Contribution {
                        record: None,
                        last: true,
                    },
                });
            }
            self.streams.remove(peer);
            return;
        }
        let ticking = self.streams.get(peer).map(|s| s.ticking).unwrap_or(false);
        let first = queue.pop_front().expect("queue checked non-empty");
        let mut stream = Stream {
            queue,
            peer_vv,
            peer_kind,
            ticking,
        };
        self.send_from_stream(peer, &mut stream, first, out);
        if !stream.queue.is_empty() || stream.ticking {
            self.streams.insert(peer.clone(), stream);
        } else {
            self.streams.remove(peer);
        }
    }

    /// Ships one queue element and arms the pacing timer when more remain.
    fn send_from_stream(
        &self,
        peer: &ReplicaId,
        stream: &mut Stream,
        element: Option<StateRecord>,
        out: &mut Vec<Effect>,
    ) {
        let last = stream.queue.is_empty();
        if let Some(record) = &element {
            stream.peer_vv.join_in(&record.vv);
        }
        out.push(Effect::Send {
            to: peer.clone(),
            payload: Payload::Contribution {
                record: element,
                last,
            },
        });
        if !last && !stream.ticking {
            stream.ticking = true;
            out.push(Effect::StartTimer {
                delay_ms: self.cfg.stream_spacing_ms,
                timer: TimerKind::ContinueStream { peer: peer.clone() },
            });
        }
    }

    pub fn receive(&mut self, from: &ReplicaId, payload: Payload, out: &mut Vec<Effect>) {
        match payload {
            // A replica told us where it stands.
            Payload::ReplicaVv(peer_vv) => {
                // Fully in sync with a store that is exactly this state:
                // nothing to send, not even an empty batch.
                if self.records.len() == 1 && self.records[0].vv == peer_vv {
                    self.streams.remove(from);
                    return;
                }
                self.start_stream(from, PeerKind::Replica, peer_vv, out);
            }
            // Another relay announced its aggregate vector.
            Payload::RelayVagg(peer_vagg) => {
                self.start_stream(from, PeerKind::Relay, peer_vagg, out);
            }
            // A replica pushed its full state.
            Payload::State(record) => {
                self.accept_replica_state(from, record, out);
            }
            // A record forwarded by another relay.
            Payload::Contribution { record, .. } => {
                if let Some(record) = record {
                    if let Some(stream) = self.streams.get_mut(from) {
                        stream.peer_vv.join_in(&record.vv);
                    }
                    if self.insert_record(record) {
                        self.replan_streams();
                        self.notify_neighbors(Some(from), out);
                    }
                }
            }
            // A neighbor's state grew; answer with the aggregate vector so
            // it can decide what to push.
            Payload::ChangeNotice => {
                let payload = match self.neighbors.get(from) {
                    Some(PeerKind::Relay) => Payload::RelayVagg(self.vagg.clone()),
                    _ => Payload::RelayVaggForReplica(self.vagg.clone()),
                };
                out.push(Effect::Send {
                    to: from.clone(),
                    payload,
                });
            }
            Payload::RelayVaggForReplica(_) => {}
        }
    }

    /// A replica's full state reflects everything that replica has seen, so
    /// in basic mode it simply becomes the store. Enhanced mode guards
    /// against regressions: the state only replaces the store when it covers
    /// the whole aggregate, joins it when concurrent, and is dropped when
    /// the store already covers it.
    fn accept_replica_state(
        &mut self,
        from: &ReplicaId,
        record: StateRecord,
        out: &mut Vec<Effect>,
    ) {
        if let Some(stream) = self.streams.get_mut(from) {
            stream.peer_vv.join_in(&record.vv);
        }
        let vagg_before = self.vagg.clone();
        let changed = match self.cfg.mode {
            ProtocolMode::Basic => self.replace_store(record),
            ProtocolMode::Enhanced => match record.vv.relation(&self.vagg) {
                VvRelation::Dominates | VvRelation::Equal => self.replace_store(record),
                VvRelation::DominatedBy => false,
                VvRelation::Concurrent => self.insert_record(record),
            },
        };
        if changed {
            self.replan_streams();
            if self.vagg != vagg_before {
                self.notify_neighbors(Some(from), out);
            }
        }
    }

    pub fn timer(&mut self, kind: TimerKind, out: &mut Vec<Effect>) {
        match kind {
            TimerKind::ContinueStream { peer } => {
                let Some(mut stream) = self.streams.remove(&peer) else {
                    return;
                };
                stream.ticking = false;
                if !self.neighbors.contains_key(&peer) {
                    return;
                }
                let Some(element) = stream.queue.pop_front() else {
                    return;
                };
                self.send_from_stream(&peer, &mut stream, element, out);
                if !stream.queue.is_empty() || stream.ticking {
                    self.streams.insert(peer, stream);
                }
            }
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
        }
    }
}

/// Transmission order for a selected batch: widest vectors first, ties
/// broken by the canonical rendering so equal stores transmit identically.
fn ordered_for_transmission(selection: Vec<&StateRecord>) -> VecDeque<Option<StateRecord>> {
    let mut batch: Vec<StateRecord> = selection.into_iter().cloned().collect();
    batch.sort_by(|a, b| {
        b.vv.total()
            .cmp(&a.vv.total())
            .then_with(|| a.vv.to_string().cmp(&b.vv.to_string()))
    });
    batch.into_iter().map(Some).collect()
}
