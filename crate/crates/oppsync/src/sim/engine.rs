//! Deterministic discrete-event engine driving protocol nodes over a
//! contact trace and an app scenario.
//!
//! Determinism rules:
//! * the clock is integer milliseconds;
//! * queued events are ordered by (time, insertion sequence), scenario
//!   events are queued first, so at equal times scenario changes take
//!   effect before message deliveries and timers;
//! * per directed node pair, messages are delivered in send order;
//! * every handler runs atomically: it consumes one event and its effects
//!   are scheduled before the next event is popped.
//!
//! Links are honest about mobility: a message only arrives if its edge
//! stayed up for the whole flight, otherwise it is dropped. Node departure
//! tears down its edges and discards its state.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use super::log::{ordered_pair, LogRecord, TimedRecord};
use super::trace::{AppScenario, ContactEvent, ContactTrace, DeclaredRole};
use crate::crdt::PayloadKind;
use crate::protocol::{
    Effect, Payload, PeerKind, Propagation, ProtocolConfig, RelayNode, ReplicaNode, TimerKind,
};
use crate::versioning::{ReplicaId, VersionVector};

/// How nodes get their roles.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", tag = "policy", content = "ratio")]
pub enum RolePolicy {
    /// Use the roles declared in the contact trace.
    FromTrace,
    /// Nodes declared `rep` stay replicas. Every other node is assigned by
    /// arrival order: with ratio r, every round(1/r)-th arrival relays,
    /// starting with the first; the rest stay out of the protocol.
    RelayRatio(f64),
}

impl RolePolicy {
    fn validate(&self) -> Result<(), String> {
        if let RolePolicy::RelayRatio(r) = self {
            if !(0.0..=1.0).contains(r) || r.is_nan() {
                return Err(format!("relay ratio {r} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Full configuration of one run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SimConfig {
    pub protocol: ProtocolConfig,
    pub payload: PayloadKind,
    pub role_policy: RolePolicy,
    /// Fixed link delay per message.
    pub base_latency_ms: u64,
    /// Size-dependent delay: this many extra ms per KiB of payload.
    pub latency_per_kb_ms: u64,
    /// Scenario horizon. Events cascading past it still settle, but
    /// periodic timers stop re-arming. Defaults to the end of the inputs.
    pub end_at_ms: Option<u64>,
    /// Re-check the protocol invariants after every event (slow; meant for
    /// fuzzing and debugging).
    pub validate_each_event: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            protocol: ProtocolConfig::default(),
            payload: PayloadKind::GCounter,
            role_policy: RolePolicy::FromTrace,
            base_latency_ms: 50,
            latency_per_kb_ms: 0,
            end_at_ms: None,
            validate_each_event: false,
        }
    }
}

/// Why a run failed.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("at {at_ms} ms: {detail}")]
    Scenario { at_ms: u64, detail: String },
    #[error("at {at_ms} ms, invariant {invariant} violated on {node}: {detail}")]
    Invariant {
        at_ms: u64,
        invariant: &'static str,
        node: ReplicaId,
        detail: String,
    },
}

/// Result of a completed run.
#[derive(Debug)]
pub struct SimOutput {
    pub log: Vec<TimedRecord>,
    pub events_processed: u64,
    /// Global vector at the end of the run.
    pub final_global: VersionVector,
    /// Final vector of every replica.
    pub final_replica_vvs: BTreeMap<ReplicaId, VersionVector>,
}

impl SimOutput {
    pub fn log_text(&self) -> String {
        super::log::render_log(&self.log)
    }
}

enum NodeCore {
    Replica(ReplicaNode),
    Relay(RelayNode),
    /// Present in the contact graph but not part of the protocol.
    Bystander,
}

impl NodeCore {
    fn peer_kind(&self) -> Option<PeerKind> {
        match self {
            NodeCore::Replica(_) => Some(PeerKind::Replica),
            NodeCore::Relay(_) => Some(PeerKind::Relay),
            NodeCore::Bystander => None,
        }
    }
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct QueuedEvent {
    at_ms: u64,
    seq: u64,
}

enum EventKind {
    Contact(ContactEvent),
    Update(ReplicaId),
    Deliver {
        src: ReplicaId,
        dst: ReplicaId,
        payload: Payload,
        edge_gen: u64,
    },
    Timer {
        node: ReplicaId,
        timer: TimerKind,
    },
}

/// An open sync round: `node` reacting to a vector received from `peer`.
struct Episode {
    sent: u64,
}

struct Engine {
    cfg: SimConfig,
    now: u64,
    seq: u64,
    queue: BinaryHeap<Reverse<QueuedEvent>>,
    pending: BTreeMap<u64, EventKind>,
    nodes: BTreeMap<ReplicaId, NodeCore>,
    ever_started: BTreeMap<ReplicaId, DeclaredRole>,
    /// Live undirected edges, mapped to the generation of their current
    /// up-interval. A message delivery is valid only when the generation at
    /// send time still matches.
    edges: BTreeMap<(ReplicaId, ReplicaId), u64>,
    edge_generation: u64,
    /// Per directed pair: latest scheduled delivery, to keep links FIFO
    /// even when message sizes differ.
    last_delivery: BTreeMap<(ReplicaId, ReplicaId), u64>,
    global: VersionVector,
    update_count: u64,
    replica_count: u64,
    /// Arrival counter for the relay-ratio policy.
    policy_arrivals: u64,
    episodes: BTreeMap<(ReplicaId, ReplicaId), Episode>,
    last_vv: BTreeMap<ReplicaId, VersionVector>,
    last_store: BTreeMap<ReplicaId, Vec<VersionVector>>,
    log: Vec<TimedRecord>,
    events_processed: u64,
    end_at: u64,
}

/// Runs a scenario to completion and returns its event log.
pub fn run(
    trace: &ContactTrace,
    app: &AppScenario,
    cfg: &SimConfig,
) -> Result<SimOutput, SimError> {
    cfg.role_policy.validate().map_err(SimError::Config)?;
    if let Propagation::Periodic(period) = cfg.protocol.propagation {
        if period == 0 {
            return Err(SimError::Config(
                "periodic propagation needs a non-zero period".into(),
            ));
        }
    }

    let end_at = cfg
        .end_at_ms
        .unwrap_or_else(|| trace.end_ms().max(app.end_ms()));

    let mut engine = Engine {
        cfg: cfg.clone(),
        now: 0,
        seq: 0,
        queue: BinaryHeap::new(),
        pending: BTreeMap::new(),
        nodes: BTreeMap::new(),
        ever_started: BTreeMap::new(),
        edges: BTreeMap::new(),
        edge_generation: 0,
        last_delivery: BTreeMap::new(),
        global: VersionVector::new(),
        update_count: 0,
        replica_count: 0,
        policy_arrivals: 0,
        episodes: BTreeMap::new(),
        last_vv: BTreeMap::new(),
        last_store: BTreeMap::new(),
        log: Vec::new(),
        events_processed: 0,
        end_at,
    };
    engine.seed_scenario(trace, app);
    engine.run_to_completion()?;
    Ok(engine.finish())
}

impl Engine {
    fn push(&mut self, at_ms: u64, kind: EventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(QueuedEvent { at_ms, seq }));
        self.pending.insert(seq, kind);
    }

    /// Queues contact and app events, merged by time with contact events
    /// first at equal instants (a node must exist before it can update).
    fn seed_scenario(&mut self, trace: &ContactTrace, app: &AppScenario) {
        let mut ci = trace.events.iter().peekable();
        let mut ai = app.events.iter().peekable();
        loop {
            let take_contact = match (ci.peek(), ai.peek()) {
                (Some(c), Some(a)) => c.at_ms <= a.at_ms,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => break,
            };
            if take_contact {
                let c = ci.next().unwrap();
                self.push(c.at_ms, EventKind::Contact(c.event.clone()));
            } else {
                let a = ai.next().unwrap();
                self.push(a.at_ms, EventKind::Update(a.replica.clone()));
            }
        }
    }

    fn run_to_completion(&mut self) -> Result<(), SimError> {
        while let Some(Reverse(QueuedEvent { at_ms, seq })) = self.queue.pop() {
            let kind = self
                .pending
                .remove(&seq)
                .expect("queued event without body");
            debug_assert!(at_ms >= self.now, "time went backwards");
            self.now = at_ms;
            self.events_processed += 1;
            match kind {
                EventKind::Contact(event) => self.handle_contact(event)?,
                EventKind::Update(id) => self.handle_update(id)?,
                EventKind::Deliver {
                    src,
                    dst,
                    payload,
                    edge_gen,
                } => self.handle_delivery(src, dst, payload, edge_gen),
                EventKind::Timer { node, timer } => self.handle_timer(node, timer),
            }
            if self.cfg.validate_each_event {
                self.check_invariants()?;
            }
        }
        Ok(())
    }

    fn finish(mut self) -> SimOutput {
        // Close every open sync round so its transfer count is reported.
        let open: Vec<(ReplicaId, ReplicaId)> = self.episodes.keys().cloned().collect();
        for (node, peer) in open {
            self.close_episode(&node, &peer);
        }
        let final_time = self.now.max(self.end_at);
        self.log.push(TimedRecord {
            at_ms: final_time,
            record: LogRecord::End,
        });
        let final_replica_vvs = self
            .nodes
            .iter()
            .filter_map(|(id, core)| match core {
                NodeCore::Replica(r) => Some((id.clone(), r.vv().clone())),
                _ => None,
            })
            .collect();
        SimOutput {
            log: self.log,
            events_processed: self.events_processed,
            final_global: self.global,
            final_replica_vvs,
        }
    }

    fn log(&mut self, record: LogRecord) {
        self.log.push(TimedRecord {
            at_ms: self.now,
            record,
        });
    }

    fn scenario_error(&self, detail: impl Into<String>) -> SimError {
        SimError::Scenario {
            at_ms: self.now,
            detail: detail.into(),
        }
    }

    /// Role for a starting node under the active policy.
    fn assign_role(&mut self, declared: DeclaredRole) -> DeclaredRole {
        match (self.cfg.role_policy, declared) {
            (RolePolicy::FromTrace, role) => role,
            (RolePolicy::RelayRatio(_), DeclaredRole::Rep) => DeclaredRole::Rep,
            (RolePolicy::RelayRatio(r), _) => {
                self.policy_arrivals += 1;
                if r <= 0.0 {
                    return DeclaredRole::None;
                }
                let period = ((1.0 / r).round() as u64).max(1);
                if (self.policy_arrivals - 1).is_multiple_of(period) {
                    DeclaredRole::Rel
                } else {
                    DeclaredRole::None
                }
            }
        }
    }

    fn handle_contact(&mut self, event: ContactEvent) -> Result<(), SimError> {
        match event {
            ContactEvent::NodeStart { id, role } => {
                if self.ever_started.contains_key(&id) {
                    return Err(self.scenario_error(format!("node id {id} reused")));
                }
                let role = self.assign_role(role);
                self.ever_started.insert(id.clone(), role);
                let core = match role {
                    DeclaredRole::Rep => {
                        self.replica_count += 1;
                        NodeCore::Replica(ReplicaNode::new(
                            id.clone(),
                            self.cfg.payload.instantiate(),
                            self.cfg.protocol.clone(),
                        ))
                    }
                    DeclaredRole::Rel => {
                        NodeCore::Relay(RelayNode::new(id.clone(), self.cfg.protocol.clone()))
                    }
                    DeclaredRole::None => NodeCore::Bystander,
                };
                let is_protocol = !matches!(core, NodeCore::Bystander);
                self.nodes.insert(id.clone(), core);
                self.log(LogRecord::NodeStart {
                    id: id.clone(),
                    role,
                });
                // Periodic propagation runs on a per-node timer.
                if is_protocol {
                    if let Propagation::Periodic(period) = self.cfg.protocol.propagation {
                        let at = self.now + period;
                        if at <= self.end_at {
                            self.push(
                                at,
                                EventKind::Timer {
                                    node: id,
                                    timer: TimerKind::PeriodicSync,
                                },
                            );
                        }
                    }
                }
                Ok(())
            }
            ContactEvent::NodeStop { id } => {
                if !self.nodes.contains_key(&id) {
                    return Err(self.scenario_error(format!("node {id} stopped but is not live")));
                }
                // Drop incident edges first so neighbors are told.
                let incident: Vec<(ReplicaId, ReplicaId)> = self
                    .edges
                    .keys()
                    .filter(|(a, b)| a == &id || b == &id)
                    .cloned()
                    .collect();
                for (a, b) in incident {
                    self.drop_edge(&a, &b, false);
                }
                self.nodes.remove(&id);
                self.last_vv.remove(&id);
                self.last_store.remove(&id);
                self.log(LogRecord::NodeStop { id });
                Ok(())
            }
            ContactEvent::EdgeUp { a, b } => {
                if !self.nodes.contains_key(&a) || !self.nodes.contains_key(&b) {
                    return Err(self.scenario_error(format!("edge {a} {b} references a dead node")));
                }
                let key = ordered_pair(&a, &b);
                if self.edges.contains_key(&key) {
                    return Err(self.scenario_error(format!("edge {a} {b} already up")));
                }
                self.edge_generation += 1;
                self.edges.insert(key, self.edge_generation);
                self.log(LogRecord::EdgeUp {
                    a: a.clone(),
                    b: b.clone(),
                });
                // Discovery is instantaneous: both endpoints learn of each
                // other in the same instant, first a then b.
                let kind_a = self.nodes.get(&a).and_then(NodeCore::peer_kind);
                let kind_b = self.nodes.get(&b).and_then(NodeCore::peer_kind);
                if let (Some(kind_a), Some(kind_b)) = (kind_a, kind_b) {
                    let effects = self.with_node(&a, |node, out| match node {
                        NodeCore::Replica(r) => r.peer_detected(b.clone(), kind_b, out),
                        NodeCore::Relay(r) => r.peer_detected(b.clone(), kind_b, out),
                        NodeCore::Bystander => {}
                    });
                    self.apply_effects(&a, effects);
                    let effects = self.with_node(&b, |node, out| match node {
                        NodeCore::Replica(r) => r.peer_detected(a.clone(), kind_a, out),
                        NodeCore::Relay(r) => r.peer_detected(a.clone(), kind_a, out),
                        NodeCore::Bystander => {}
                    });
                    self.apply_effects(&b, effects);
                }
                Ok(())
            }
            ContactEvent::EdgeDown { a, b } => {
                let key = ordered_pair(&a, &b);
                if !self.edges.contains_key(&key) {
                    return Err(self.scenario_error(format!("edge {a} {b} is not up")));
                }
                self.drop_edge(&a, &b, true);
                Ok(())
            }
        }
    }

    /// Tears one edge down: closes sync rounds, informs both protocol
    /// nodes, logs the event. In-flight messages die by generation check.
    fn drop_edge(&mut self, a: &ReplicaId, b: &ReplicaId, _explicit: bool) {
        let key = ordered_pair(a, b);
        self.edges.remove(&key);
        self.close_episode(a, b);
        self.close_episode(b, a);
        for (me, peer) in [(a, b), (b, a)] {
            if let Some(core) = self.nodes.get_mut(me) {
                match core {
                    NodeCore::Replica(r) => r.peer_lost(peer),
                    NodeCore::Relay(r) => r.peer_lost(peer),
                    NodeCore::Bystander => {}
                }
            }
        }
        self.log(LogRecord::EdgeDown {
            a: a.clone(),
            b: b.clone(),
        });
    }

    fn handle_update(&mut self, id: ReplicaId) -> Result<(), SimError> {
        match self.nodes.get(&id) {
            Some(NodeCore::Replica(_)) => {}
            Some(_) => {
                return Err(self.scenario_error(format!("update on non-replica node {id}")));
            }
            None => return Err(self.scenario_error(format!("update on dead node {id}"))),
        }
        self.global.increment(&id);
        self.update_count += 1;
        self.log(LogRecord::Update {
            id: id.clone(),
            global: self.global.clone(),
        });
        let effects = self.with_node(&id, |node, out| {
            if let NodeCore::Replica(r) = node {
                r.local_update(out);
            }
        });
        self.note_state_change(&id);
        self.apply_effects(&id, effects);
        Ok(())
    }

    fn handle_delivery(&mut self, src: ReplicaId, dst: ReplicaId, payload: Payload, edge_gen: u64) {
        let kind = payload.kind();
        // The edge must have been up continuously since the send.
        let intact = self.edges.get(&ordered_pair(&src, &dst)) == Some(&edge_gen)
            && self.nodes.contains_key(&src)
            && self.nodes.contains_key(&dst);
        if !intact {
            self.log(LogRecord::Drop { src, dst, kind });
            return;
        }
        self.log(LogRecord::Recv {
            src: src.clone(),
            dst: dst.clone(),
            kind,
        });
        // A received vector (or a batch terminator reaching a replica)
        // opens a new sync round at the receiver.
        let opens_round = payload.is_vector()
            || (matches!(payload, Payload::Contribution { last: true, .. })
                && matches!(self.nodes.get(&dst), Some(NodeCore::Replica(_))));
        if opens_round {
            self.close_episode(&dst, &src);
            if let Some(NodeCore::Relay(r)) = self.nodes.get(&dst) {
                // Store size as it stood since the previous round.
                let size = r.store_size() as u64;
                self.log(LogRecord::StoreSample {
                    id: dst.clone(),
                    size,
                });
            }
            self.episodes
                .insert((dst.clone(), src.clone()), Episode { sent: 0 });
        }
        let effects = self.with_node(&dst, |node, out| match node {
            NodeCore::Replica(r) => r.receive(&src, payload, out),
            NodeCore::Relay(r) => r.receive(&src, payload, out),
            NodeCore::Bystander => {}
        });
        self.note_state_change(&dst);
        self.apply_effects(&dst, effects);
    }

    fn handle_timer(&mut self, node: ReplicaId, timer: TimerKind) {
        if !self.nodes.contains_key(&node) {
            return;
        }
        // Periodic ticks re-arm themselves; stop at the scenario horizon.
        if matches!(timer, TimerKind::PeriodicSync) {
            if let Propagation::Periodic(period) = self.cfg.protocol.propagation {
                if self.now + period > self.end_at {
                    // Let the tick fire once more without re-arming by
                    // filtering the re-arm effect below.
                    let effects = self.with_node(&node, |core, out| match core {
                        NodeCore::Replica(r) => r.timer(timer.clone(), out),
                        NodeCore::Relay(r) => r.timer(timer.clone(), out),
                        NodeCore::Bystander => {}
                    });
                    let effects = effects
                        .into_iter()
                        .filter(|e| !matches!(e, Effect::StartTimer { .. }))
                        .collect();
                    self.note_state_change(&node);
                    self.apply_effects(&node, effects);
                    return;
                }
            }
        }
        let effects = self.with_node(&node, |core, out| match core {
            NodeCore::Replica(r) => r.timer(timer.clone(), out),
            NodeCore::Relay(r) => r.timer(timer.clone(), out),
            NodeCore::Bystander => {}
        });
        self.note_state_change(&node);
        self.apply_effects(&node, effects);
    }

    fn with_node(
        &mut self,
        id: &ReplicaId,
        f: impl FnOnce(&mut NodeCore, &mut Vec<Effect>),
    ) -> Vec<Effect> {
        let mut out = Vec::new();
        if let Some(core) = self.nodes.get_mut(id) {
            f(core, &mut out);
        }
        out
    }

    /// Message latency: base plus a size-proportional component.
    fn latency_for(&self, payload: &Payload) -> u64 {
        self.cfg.base_latency_ms + (payload.wire_size() as u64 * self.cfg.latency_per_kb_ms) / 1024
    }

    fn apply_effects(&mut self, from: &ReplicaId, effects: Vec<Effect>) {
        for effect in effects {
            match effect {
                Effect::Send { to, payload } => {
                    let key = ordered_pair(from, &to);
                    let Some(&edge_gen) = self.edges.get(&key) else {
                        // Handlers only address current neighbors; a missing
                        // edge here means the message dies on the spot.
                        debug_assert!(false, "send from {from} to {to} without an edge");
                        self.log(LogRecord::Drop {
                            src: from.clone(),
                            dst: to,
                            kind: payload.kind(),
                        });
                        continue;
                    };
                    // States leaving this node count against its open round.
                    let counts = matches!(
                        payload,
                        Payload::State(_)
                            | Payload::Contribution {
                                record: Some(_),
                                ..
                            }
                    );
                    if counts {
                        if let Some(ep) = self.episodes.get_mut(&(from.clone(), to.clone())) {
                            ep.sent += 1;
                        }
                    }
                    let latency = self.latency_for(&payload);
                    let pair = (from.clone(), to.clone());
                    let deliver_at = (self.now + latency)
                        .max(self.last_delivery.get(&pair).copied().unwrap_or(0));
                    self.last_delivery.insert(pair, deliver_at);
                    self.log(LogRecord::Send {
                        src: from.clone(),
                        dst: to.clone(),
                        kind: payload.kind(),
                        bytes: payload.wire_size(),
                    });
                    self.push(
                        deliver_at,
                        EventKind::Deliver {
                            src: from.clone(),
                            dst: to,
                            payload,
                            edge_gen,
                        },
                    );
                }
                Effect::StartTimer { delay_ms, timer } => {
                    self.push(
                        self.now + delay_ms,
                        EventKind::Timer {
                            node: from.clone(),
                            timer,
                        },
                    );
                }
            }
        }
    }

    /// Logs vector and store changes after a handler ran.
    fn note_state_change(&mut self, id: &ReplicaId) {
        match self.nodes.get(id) {
            Some(NodeCore::Replica(r)) => {
                let vv = r.vv().clone();
                if self.last_vv.get(id) != Some(&vv) {
                    self.last_vv.insert(id.clone(), vv.clone());
                    self.log(LogRecord::ReplicaVv { id: id.clone(), vv });
                }
            }
            Some(NodeCore::Relay(r)) => {
                let mut vvs: Vec<VersionVector> =
                    r.records().iter().map(|rec| rec.vv.clone()).collect();
                vvs.sort_by_key(|v| v.to_string());
                if self.last_store.get(id) != Some(&vvs) {
                    let vagg = r.vagg().clone();
                    self.last_store.insert(id.clone(), vvs.clone());
                    self.log(LogRecord::Store {
                        id: id.clone(),
                        vagg,
                        vvs,
                    });
                }
            }
            _ => {}
        }
    }

    /// Closes the open sync round of `node` towards `peer`, if any.
    fn close_episode(&mut self, node: &ReplicaId, peer: &ReplicaId) {
        if let Some(ep) = self.episodes.remove(&(node.clone(), peer.clone())) {
            self.log(LogRecord::SyncDone {
                node: node.clone(),
                peer: peer.clone(),
                sent: ep.sent,
            });
        }
    }

    /// Live re-check of the protocol invariants, for fuzz runs.
    fn check_invariants(&self) -> Result<(), SimError> {
        for (id, core) in &self.nodes {
            match core {
                NodeCore::Relay(r) => {
                    let records = r.records();
                    if records.len() as u64 > self.replica_count {
                        return Err(SimError::Invariant {
                            at_ms: self.now,
                            invariant: "store-bounded-by-replicas",
                            node: id.clone(),
                            detail: format!(
                                "{} records for {} replicas",
                                records.len(),
                                self.replica_count
                            ),
                        });
                    }
                    let mut join = VersionVector::new();
                    for (i, a) in records.iter().enumerate() {
                        join.join_in(&a.vv);
                        for b in &records[i + 1..] {
                            if !a.vv.concurrent(&b.vv) {
                                return Err(SimError::Invariant {
                                    at_ms: self.now,
                                    invariant: "store-pairwise-concurrent",
                                    node: id.clone(),
                                    detail: format!("{} vs {}", a.vv, b.vv),
                                });
                            }
                        }
                    }
                    if &join != r.vagg() {
                        return Err(SimError::Invariant {
                            at_ms: self.now,
                            invariant: "vagg-is-store-join",
                            node: id.clone(),
                            detail: format!("vagg {} vs join {}", r.vagg(), join),
                        });
                    }
                }
                NodeCore::Replica(r) => {
                    if r.vv().over(&self.global) {
                        return Err(SimError::Invariant {
                            at_ms: self.now,
                            invariant: "replica-behind-global",
                            node: id.clone(),
                            detail: format!("{} over global {}", r.vv(), self.global),
                        });
                    }
                }
                NodeCore::Bystander => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vv;

    fn trace(lines: &str) -> ContactTrace {
        ContactTrace::parse(lines).unwrap()
    }

    fn app(lines: &str) -> AppScenario {
        AppScenario::parse(lines).unwrap()
    }

    fn default_cfg() -> SimConfig {
        SimConfig {
            validate_each_event: true,
            ..SimConfig::default()
        }
    }

    #[test]
    fn two_replicas_converge_over_one_standing_edge() {
        let out = run(
            &trace("0 ns a rep\n0 ns b rep\n0 ea a b\n"),
            &app("1000 up a\n"),
            &default_cfg(),
        )
        .unwrap();
        assert_eq!(out.final_global, vv!["a" => 1]);
        for vv in out.final_replica_vvs.values() {
            assert_eq!(vv, &vv!["a" => 1]);
        }
    }

    /// With a standing edge and immediate propagation, the peer catches up
    /// exactly one notice + vector + state round after the update: 3 hops
    /// of the base latency.
    #[test]
    fn catch_up_takes_three_link_hops() {
        let cfg = default_cfg();
        let out = run(
            &trace("0 ns a rep\n0 ns b rep\n0 ea a b\n"),
            &app("1000 up a\n"),
            &cfg,
        )
        .unwrap();
        let b: ReplicaId = "b".into();
        let caught_up = out
            .log
            .iter()
            .find(|r| matches!(&r.record, LogRecord::ReplicaVv { id, vv } if id == &b && vv == &vv!["a" => 1]))
            .expect("b catches up");
        assert_eq!(caught_up.at_ms, 1000 + 3 * cfg.base_latency_ms);
    }

    #[test]
    fn messages_preserve_fifo_and_pay_latency() {
        // Two updates in quick succession: notices and states must arrive
        // in order, never earlier than base latency.
        let out = run(
            &trace("0 ns a rep\n0 ns b rep\n0 ea a b\n"),
            &app("1000 up a\n1010 up a\n"),
            &default_cfg(),
        )
        .unwrap();
        let mut last_recv = 0;
        for r in &out.log {
            if let LogRecord::Recv { .. } = r.record {
                assert!(r.at_ms >= last_recv);
                last_recv = r.at_ms;
            }
        }
        assert_eq!(out.final_replica_vvs[&"b".into()], vv!["a" => 2]);
    }

    #[test]
    fn edge_drop_kills_in_flight_messages() {
        // The edge goes down 10 ms after the update; the notice (sent at
        // 1000, due at 1050) must be dropped, and b stays empty.
        let out = run(
            &trace("0 ns a rep\n0 ns b rep\n0 ea a b\n1010 ed a b\n"),
            &app("1000 up a\n"),
            &default_cfg(),
        )
        .unwrap();
        assert!(out
            .log
            .iter()
            .any(|r| matches!(r.record, LogRecord::Drop { .. })));
        assert_eq!(out.final_replica_vvs[&"b".into()], vv![]);
    }

    #[test]
    fn edge_flap_does_not_resurrect_messages() {
        // Down and back up within the flight time: the generation changed,
        // so the message still dies.
        let out = run(
            &trace("0 ns a rep\n0 ns b rep\n0 ea a b\n1010 ed a b\n1020 ea a b\n"),
            &app("1000 up a\n"),
            &default_cfg(),
        )
        .unwrap();
        let b: ReplicaId = "b".into();
        // The re-detection at 1020 restarts the exchange, so b still
        // converges, but strictly later than the dead notice would have.
        let caught = out
            .log
            .iter()
            .find(|r| matches!(&r.record, LogRecord::ReplicaVv { id, vv } if id == &b && !vv.is_empty()))
            .unwrap();
        assert!(caught.at_ms > 1050);
        assert!(out
            .log
            .iter()
            .any(|r| matches!(r.record, LogRecord::Drop { .. })));
    }

    #[test]
    fn node_departure_discards_state_and_edges() {
        let out = run(
            &trace("0 ns a rep\n0 ns b rep\n0 ea a b\n5000 nd b\n6000 ns c rep\n6000 ea a c\n"),
            &app("1000 up a\n"),
            &default_cfg(),
        )
        .unwrap();
        assert!(!out.final_replica_vvs.contains_key(&"b".into()));
        assert_eq!(out.final_replica_vvs[&"c".into()], vv!["a" => 1]);
        // b's edge closed implicitly before the nd record.
        let down_at = out
            .log
            .iter()
            .position(|r| matches!(r.record, LogRecord::EdgeDown { .. }))
            .unwrap();
        let stop_at = out
            .log
            .iter()
            .position(|r| matches!(r.record, LogRecord::NodeStop { .. }))
            .unwrap();
        assert!(down_at < stop_at);
    }

    #[test]
    fn scenario_errors_are_reported_with_time() {
        let e = run(
            &trace("0 ns a rep\n10 ea a ghost\n"),
            &AppScenario::default(),
            &default_cfg(),
        )
        .unwrap_err();
        assert!(matches!(e, SimError::Scenario { at_ms: 10, .. }));

        let e = run(&trace("0 ns phi rel\n"), &app("5 up phi\n"), &default_cfg()).unwrap_err();
        assert!(matches!(e, SimError::Scenario { at_ms: 5, .. }));

        let e = run(
            &trace("0 ns a rep\n1 ns a rep\n"),
            &AppScenario::default(),
            &default_cfg(),
        )
        .unwrap_err();
        assert!(matches!(e, SimError::Scenario { at_ms: 1, .. }));
    }

    #[test]
    fn relay_ratio_assigns_round_robin_over_arrivals() {
        // Six non-replica arrivals at ratio 1/3: relay, none, none, relay,
        // none, none.
        let tr = trace(
            "0 ns r rep\n10 ns p1 none\n20 ns p2 none\n30 ns p3 none\n40 ns p4 none\n50 ns p5 none\n60 ns p6 none\n",
        );
        let cfg = SimConfig {
            role_policy: RolePolicy::RelayRatio(0.33),
            ..default_cfg()
        };
        let out = run(&tr, &AppScenario::default(), &cfg).unwrap();
        let roles: Vec<(String, DeclaredRole)> = out
            .log
            .iter()
            .filter_map(|r| match &r.record {
                LogRecord::NodeStart { id, role } => Some((id.to_string(), *role)),
                _ => None,
            })
            .collect();
        assert_eq!(
            roles,
            vec![
                ("r".to_string(), DeclaredRole::Rep),
                ("p1".to_string(), DeclaredRole::Rel),
                ("p2".to_string(), DeclaredRole::None),
                ("p3".to_string(), DeclaredRole::None),
                ("p4".to_string(), DeclaredRole::Rel),
                ("p5".to_string(), DeclaredRole::None),
                ("p6".to_string(), DeclaredRole::None),
            ]
        );
    }

    #[test]
    fn ratio_zero_and_one_cover_the_extremes() {
        let tr = trace("0 ns p1 none\n10 ns p2 none\n");
        for (ratio, expected) in [(0.0, DeclaredRole::None), (1.0, DeclaredRole::Rel)] {
            let cfg = SimConfig {
                role_policy: RolePolicy::RelayRatio(ratio),
                ..default_cfg()
            };
            let out = run(&tr, &AppScenario::default(), &cfg).unwrap();
            for r in &out.log {
                if let LogRecord::NodeStart { role, .. } = &r.record {
                    assert_eq!(*role, expected);
                }
            }
        }
        assert!(matches!(
            run(
                &tr,
                &AppScenario::default(),
                &SimConfig {
                    role_policy: RolePolicy::RelayRatio(1.5),
                    ..default_cfg()
                }
            ),
            Err(SimError::Config(_))
        ));
    }

    #[test]
    fn bystanders_do_not_speak() {
        let out = run(
            &trace("0 ns a rep\n0 ns p none\n0 ea a p\n"),
            &app("100 up a\n"),
            &default_cfg(),
        )
        .unwrap();
        // The replica has no protocol neighbor: nothing is ever sent.
        assert!(!out
            .log
            .iter()
            .any(|r| matches!(r.record, LogRecord::Send { .. })));
    }

    #[test]
    fn identical_runs_produce_identical_logs() {
        let tr = trace(
            "0 ns a rep\n0 ns b rep\n0 ns phi rel\n0 ea a phi\n2000 ed a phi\n2500 ea b phi\n",
        );
        let ap = app("100 up a\n100 up b\n1500 up a\n");
        let cfg = default_cfg();
        let one = run(&tr, &ap, &cfg).unwrap().log_text();
        let two = run(&tr, &ap, &cfg).unwrap().log_text();
        assert_eq!(one, two);
        assert!(!one.is_empty());
    }

    #[test]
    fn relay_bridges_two_replicas_that_never_meet() {
        // phi shuttles: meets a, then b, then a again.
        let tr = trace(
            "0 ns a rep\n0 ns b rep\n0 ns phi rel\n\
             100 ea a phi\n2000 ed a phi\n\
             3000 ea b phi\n5000 ed b phi\n\
             6000 ea a phi\n8000 ed a phi\n",
        );
        let ap = app("500 up a\n500 up b\n");
        let out = run(&tr, &ap, &default_cfg()).unwrap();
        // Both updates reach both replicas through the relay alone.
        assert_eq!(out.final_replica_vvs[&"a".into()], vv!["a" => 1, "b" => 1]);
        assert_eq!(out.final_replica_vvs[&"b".into()], vv!["a" => 1, "b" => 1]);
        // The relay round with b transferred a's state.
        let log = out.log_text();
        assert!(log.contains("sync phi"));
        assert!(validate_smoke(&out));
    }

    fn validate_smoke(out: &SimOutput) -> bool {
        crate::sim::log::validate_log(&out.log).is_ok()
    }

    #[test]
    fn logs_replay_cleanly_through_the_validator() {
        let tr = trace(
            "0 ns a rep\n0 ns b rep\n0 ns phi rel\n0 ns psi rel\n\
             100 ea a phi\n1000 ed a phi\n1100 ea phi psi\n2000 ed phi psi\n\
             2100 ea psi b\n3000 ed psi b\n",
        );
        let ap = app("300 up a\n300 up a\n");
        let out = run(&tr, &ap, &default_cfg()).unwrap();
        let report = crate::sim::log::validate_log(&out.log).unwrap();
        assert_eq!(report.updates, 2);
        assert!(report.syncs > 0);
        // a's two updates crossed phi and psi to reach b.
        assert_eq!(out.final_replica_vvs[&"b".into()], vv!["a" => 2]);
    }
}
