//! Physical queue simulation: packets follow their stored routes, links and
//! compute nodes dispense capacity-limited work each slot, branch nodes
//! duplicate packets, and deliveries are logged.
//!
//! Work is fractional: a packet's transmission size is w[stage] and its
//! processing demand x[stage], both possibly non-integer. A queue serves
//! min(capacity, backlog) units per slot with carryover; a packet advances
//! only once its current edge's service completes. Scheduling priority is
//! fixed per (packet, queue), so each queue is a binary heap and preemption
//! happens naturally at slot boundaries.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::rc::Rc;

use thiserror::Error;

use crate::chaining::{EdgeId, EdgeKind, LayeredGraph, Route};
use crate::topology::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulingPolicy {
    /// Extended nearest-to-origin: fewer traveled hops first; processing
    /// counts as a hop; duplicates inherit the original's hop count.
    Ento,
    /// First-in-first-out per queue.
    Fifo,
}

/// A route prepared for packet forwarding: out-edges and terminal flags by
/// layered-node index, plus the owning chain.
#[derive(Debug)]
pub struct RouteRuntime {
    pub chain_index: usize,
    pub route: Route,
    out: BTreeMap<usize, Vec<EdgeId>>,
    terminals: BTreeSet<usize>,
}

impl RouteRuntime {
    pub fn new(chain_index: usize, route: Route, lg: &LayeredGraph) -> RouteRuntime {
        let out = route.out_map(lg);
        let terminals = route.terminals.iter().map(|t| lg.lnode_index(*t)).collect();
        RouteRuntime {
            chain_index,
            route,
            out,
            terminals,
        }
    }

    fn out_edges(&self, lnode: usize) -> &[EdgeId] {
        self.out.get(&lnode).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone)]
pub struct Packet {
    pub commodity: usize,
    pub route: Rc<RouteRuntime>,
    pub stage: usize,
    pub hops: u32,
    pub size: f64,
    pub remaining: f64,
    pub current_edge: EdgeId,
    pub arrival_slot: u64,
    pub queue_entry_slot: u64,
    pub seq: u64,
    pub origin: u64,
}

/// Heap entry; the key is fixed when the packet enters the queue.
#[derive(Debug)]
struct Queued {
    key: [u64; 3],
    packet: Packet,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key.cmp(&other.key)
    }
}

/// Smaller key = higher priority.
pub fn ento_priority(p: &Packet) -> [u64; 3] {
    [p.hops as u64, p.arrival_slot, p.seq]
}

pub fn fifo_priority(p: &Packet) -> [u64; 3] {
    [p.queue_entry_slot, p.seq, 0]
}

#[derive(Debug, Default)]
struct ServiceQueue {
    heap: BinaryHeap<Reverse<Queued>>,
    backlog: f64,
}

impl ServiceQueue {
    fn push(&mut self, key: [u64; 3], packet: Packet) {
        self.backlog += packet.remaining;
        self.heap.push(Reverse(Queued { key, packet }));
    }

    fn len(&self) -> usize {
        self.heap.len()
    }
}

/// Per-commodity delivery bookkeeping. A multicast packet counts once, when
/// the last terminal of its route receives a copy.
#[derive(Debug)]
pub struct DeliveryLog {
    delivered: Vec<u64>,
    delay_sum: Vec<f64>,
    pending: BTreeMap<(usize, u64), BTreeSet<usize>>,
}

impl DeliveryLog {
    fn new(commodities: usize) -> DeliveryLog {
        DeliveryLog {
            delivered: vec![0; commodities],
            delay_sum: vec![0.0; commodities],
            pending: BTreeMap::new(),
        }
    }

    fn record_terminal(
        &mut self,
        commodity: usize,
        origin: u64,
        lnode: usize,
        needed: usize,
        arrival_slot: u64,
        slot: u64,
    ) {
        if needed == 1 {
            self.delivered[commodity] += 1;
            self.delay_sum[commodity] += (slot - arrival_slot) as f64;
            return;
        }
        let reached = self.pending.entry((commodity, origin)).or_default();
        reached.insert(lnode);
        if reached.len() == needed {
            self.pending.remove(&(commodity, origin));
            self.delivered[commodity] += 1;
            self.delay_sum[commodity] += (slot - arrival_slot) as f64;
        }
    }

    pub fn delivered(&self, commodity: usize) -> u64 {
        self.delivered[commodity]
    }

    pub fn mean_delay(&self, commodity: usize) -> Option<f64> {
        (self.delivered[commodity] > 0)
            .then(|| self.delay_sum[commodity] / self.delivered[commodity] as f64)
    }
}

#[derive(Debug, Error)]
pub enum DataplaneError {
    #[error("packet {seq} of commodity {commodity} stranded at a non-terminal node (routing bug)")]
    Stranded { commodity: usize, seq: u64 },
    #[error("packet {seq} exceeded the hop bound {bound} (routing bug)")]
    HopBoundExceeded { seq: u64, bound: u32 },
}

/// Counters from the in-run scheduling audit (enabled per run).
#[derive(Debug, Default, Clone)]
pub struct AuditReport {
    pub slots_checked: u64,
    pub priority_violations: u64,
    pub work_conservation_violations: u64,
    pub duplications_checked: u64,
    pub duplication_hop_violations: u64,
    pub max_hops_seen: u32,
}

pub struct Dataplane {
    policy: SchedulingPolicy,
    link_caps: Vec<f64>,
    node_caps: Vec<f64>,
    link_queues: Vec<ServiceQueue>,
    node_queues: Vec<ServiceQueue>,
    chains: Vec<Rc<LayeredGraph>>,
    log: DeliveryLog,
    next_seq: u64,
    /// Cumulative service units that entered each queue, for flow-count
    /// bookkeeping against the virtual arrivals.
    pub injected_link: Vec<f64>,
    pub injected_node: Vec<f64>,
    audit: Option<AuditReport>,
}

impl Dataplane {
    pub fn new(
        net: &Network,
        chains: Vec<Rc<LayeredGraph>>,
        commodities: usize,
        policy: SchedulingPolicy,
        audit: bool,
    ) -> Dataplane {
        Dataplane {
            policy,
            link_caps: net.link_capacities_f64(),
            node_caps: net.node_capacities_f64(),
            link_queues: (0..net.link_count()).map(|_| ServiceQueue::default()).collect(),
            node_queues: (0..net.node_count()).map(|_| ServiceQueue::default()).collect(),
            chains,
            log: DeliveryLog::new(commodities),
            next_seq: 0,
            injected_link: vec![0.0; net.link_count()],
            injected_node: vec![0.0; net.node_count()],
            audit: audit.then(AuditReport::default),
        }
    }

    pub fn log(&self) -> &DeliveryLog {
        &self.log
    }

    pub fn audit_report(&self) -> Option<&AuditReport> {
        self.audit.as_ref()
    }

    pub fn total_backlog(&self) -> f64 {
        self.link_queues
            .iter()
            .chain(self.node_queues.iter())
            .map(|q| q.backlog)
            .sum()
    }

    pub fn max_queue_backlog(&self) -> f64 {
        self.link_queues
            .iter()
            .chain(self.node_queues.iter())
            .map(|q| q.backlog)
            .fold(0.0, f64::max)
    }

    pub fn packets_in_flight(&self) -> usize {
        self.link_queues
            .iter()
            .chain(self.node_queues.iter())
            .map(ServiceQueue::len)
            .sum()
    }

    pub fn link_backlogs(&self) -> Vec<f64> {
        self.link_queues.iter().map(|q| q.backlog).collect()
    }

    pub fn node_backlogs(&self) -> Vec<f64> {
        self.node_queues.iter().map(|q| q.backlog).collect()
    }

    fn priority_key(&self, p: &Packet) -> [u64; 3] {
        match self.policy {
            SchedulingPolicy::Ento => ento_priority(p),
            SchedulingPolicy::Fifo => fifo_priority(p),
        }
    }

    fn hop_bound(&self, chain_index: usize) -> u32 {
        let lg = &self.chains[chain_index];
        (lg.physical_node_count() * lg.layers()) as u32
    }

    /// Places a batch of fresh commodity packets on their route.
    pub fn admit(
        &mut self,
        commodity: usize,
        route: &Rc<RouteRuntime>,
        count: u64,
        slot: u64,
    ) -> Result<(), DataplaneError> {
        let lg = Rc::clone(&self.chains[route.chain_index]);
        for _ in 0..count {
            let seq = self.next_seq;
            self.next_seq += 1;
            let packet = Packet {
                commodity,
                route: Rc::clone(route),
                stage: 0,
                hops: 0,
                size: lg.profile().w_f64(0),
                remaining: 0.0,
                current_edge: EdgeId(0),
                arrival_slot: slot,
                queue_entry_slot: slot,
                seq,
                origin: seq,
            };
            let src = lg.lnode_index(route.route.source);
            self.arrive(packet, src, &lg, slot)?;
        }
        Ok(())
    }

    /// Handles a packet reaching a layered node: delivery recording,
    /// duplication at branch nodes, and enqueueing on the next edge.
    fn arrive(
        &mut self,
        packet: Packet,
        lnode: usize,
        lg: &LayeredGraph,
        slot: u64,
    ) -> Result<(), DataplaneError> {
        if packet.route.terminals.contains(&lnode) {
            self.log.record_terminal(
                packet.commodity,
                packet.origin,
                lnode,
                packet.route.terminals.len(),
                packet.arrival_slot,
                slot,
            );
        }
        let out: Vec<EdgeId> = packet.route.out_edges(lnode).to_vec();
        match out.len() {
            0 => {
                if packet.route.terminals.contains(&lnode) {
                    Ok(())
                } else {
                    Err(DataplaneError::Stranded {
                        commodity: packet.commodity,
                        seq: packet.seq,
                    })
                }
            }
            1 => {
                self.enqueue(packet, out[0], lg, slot);
                Ok(())
            }
            _ => {
                // Duplicate: one copy per outgoing edge, inheriting the hop
                // count of the original.
                if let Some(a) = self.audit.as_mut() {
                    a.duplications_checked += out.len() as u64;
                }
                for e in out {
                    let mut copy = packet.clone();
                    copy.seq = self.next_seq;
                    self.next_seq += 1;
                    if let Some(a) = self.audit.as_mut() {
                        if copy.hops != packet.hops {
                            a.duplication_hop_violations += 1;
                        }
                    }
                    self.enqueue(copy, e, lg, slot);
                }
                Ok(())
            }
        }
    }

    fn enqueue(&mut self, mut packet: Packet, edge: EdgeId, lg: &LayeredGraph, slot: u64) {
        let e = lg.edge(edge);
        packet.current_edge = edge;
        packet.queue_entry_slot = slot;
        match e.kind {
            EdgeKind::Transmission { arc } => {
                packet.remaining = packet.size;
                self.injected_link[arc.link.0] += packet.remaining;
                let key = self.priority_key(&packet);
                self.link_queues[arc.link.0].push(key, packet);
            }
            EdgeKind::Computation { node, stage } => {
                packet.remaining = lg.profile().x_f64_at(stage, node);
                self.injected_node[node.0] += packet.remaining;
                let key = self.priority_key(&packet);
                self.node_queues[node.0].push(key, packet);
            }
        }
    }

    /// One slot of service on every link and node, then advancement of the
    /// completed packets (which become eligible for service next slot).
    pub fn step(&mut self, slot: u64) -> Result<(), DataplaneError> {
        let mut completed: Vec<Packet> = Vec::new();
        for qi in 0..self.link_queues.len() {
            let cap = self.link_caps[qi];
            Self::serve_queue(&mut self.link_queues[qi], cap, &mut completed, &mut self.audit);
        }
        for qi in 0..self.node_queues.len() {
            let cap = self.node_caps[qi];
            Self::serve_queue(&mut self.node_queues[qi], cap, &mut completed, &mut self.audit);
        }
        if let Some(a) = self.audit.as_mut() {
            a.slots_checked += 1;
        }
        for mut packet in completed {
            packet.hops += 1;
            let bound = self.hop_bound(packet.route.chain_index);
            if packet.hops > bound {
                return Err(DataplaneError::HopBoundExceeded {
                    seq: packet.seq,
                    bound,
                });
            }
            if let Some(a) = self.audit.as_mut() {
                a.max_hops_seen = a.max_hops_seen.max(packet.hops);
            }
            let lg = Rc::clone(&self.chains[packet.route.chain_index]);
            let edge = lg.edge(packet.current_edge);
            if let EdgeKind::Computation { .. } = edge.kind {
                packet.stage += 1;
                packet.size = lg.profile().w_f64(packet.stage);
            }
            let to = lg.lnode_index(edge.to);
            self.arrive(packet, to, &lg, slot)?;
        }
        Ok(())
    }

    fn serve_queue(
        queue: &mut ServiceQueue,
        capacity: f64,
        completed: &mut Vec<Packet>,
        audit: &mut Option<AuditReport>,
    ) {
        if queue.heap.is_empty() || capacity <= 0.0 {
            return;
        }
        let backlog_start = queue.backlog;
        let mut budget = capacity;
        let mut served = 0.0;
        let mut last_key: Option<[u64; 3]> = None;
        while budget > 0.0 {
            let Some(head) = queue.heap.peek() else { break };
            if let (Some(a), Some(prev)) = (audit.as_mut(), last_key) {
                if head.0.key < prev {
                    a.priority_violations += 1;
                }
            }
            if head.0.packet.remaining <= budget {
                let Reverse(q) = queue.heap.pop().expect("peeked head exists");
                budget -= q.packet.remaining;
                served += q.packet.remaining;
                queue.backlog -= q.packet.remaining;
                last_key = Some(q.key);
                let mut p = q.packet;
                p.remaining = 0.0;
                completed.push(p);
            } else {
                let mut head = queue.heap.peek_mut().expect("peeked head exists");
                head.0.packet.remaining -= budget;
                served += budget;
                queue.backlog -= budget;
                last_key = Some(head.0.key);
                budget = 0.0;
            }
        }
        if let Some(a) = audit.as_mut() {
            // Work conservation: the queue dispensed min(capacity, backlog).
            let expected = capacity.min(backlog_start);
            if (served - expected).abs() > 1e-9 * expected.max(1.0) {
                a.work_conservation_violations += 1;
            }
            // Hop-priority order: anything left must not outrank what was served.
            if let (Some(prev), Some(head)) = (last_key, queue.heap.peek()) {
                if head.0.key < prev {
                    a.priority_violations += 1;
                }
            }
        }
    }
}
