//! Virtual-queue state and per-packet route selection: minimum-cost service
//! chain paths and Steiner arborescences on the cost-weighted layered graph.
//!
//! Costs are the product of the cumulative scaling factor and the virtual
//! queue length: w[i]*Q_uv on a layer-i transmission edge, x[i]*Q_u on a
//! computation edge (with per-host override where configured). Ties between
//! equal-cost routes are broken lexicographically on the edge-id sequence,
//! so selection is deterministic.

use std::collections::{BTreeMap, BTreeSet};
use std::collections::BinaryHeap;
use std::cmp::Reverse;

use crate::chaining::{EdgeId, EdgeKind, LNode, LayeredGraph, Route, RouteError, RouteKind, ScalingProfile};
use crate::rat::Rat;
use crate::topology::{Network, NodeId};

/// One scalar backlog per stored link and per node, advanced once per slot.
#[derive(Debug, Clone)]
pub struct VirtualQueues {
    pub link: Vec<f64>,
    pub node: Vec<f64>,
    pub slot: u64,
}

impl VirtualQueues {
    pub fn new(net: &Network) -> VirtualQueues {
        VirtualQueues {
            link: vec![0.0; net.link_count()],
            node: vec![0.0; net.node_count()],
            slot: 0,
        }
    }

    pub fn total(&self) -> f64 {
        self.link.iter().sum::<f64>() + self.node.iter().sum::<f64>()
    }
}

/// Virtual arrivals accumulated over one slot, keyed like the queues.
#[derive(Debug, Clone)]
pub struct ArrivalLoads {
    pub link: Vec<f64>,
    pub node: Vec<f64>,
}

impl ArrivalLoads {
    pub fn zeros(net: &Network) -> ArrivalLoads {
        ArrivalLoads {
            link: vec![0.0; net.link_count()],
            node: vec![0.0; net.node_count()],
        }
    }

    pub fn clear(&mut self) {
        self.link.iter_mut().for_each(|v| *v = 0.0);
        self.node.iter_mut().for_each(|v| *v = 0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrivalKind {
    Poisson,
    Bernoulli,
}

/// A traffic commodity: source, destination set, chain, and arrival law.
#[derive(Debug, Clone)]
pub struct Commodity {
    pub id: String,
    pub source: NodeId,
    pub destinations: BTreeSet<NodeId>,
    pub chain_id: String,
    pub rate: Rat,
    pub arrivals: ArrivalKind,
}

impl Commodity {
    pub fn is_multicast(&self) -> bool {
        self.destinations.len() > 1
    }
}

/// Per-edge route-selection costs for one layered graph.
pub fn edge_costs(vq: &VirtualQueues, profile: &ScalingProfile, lg: &LayeredGraph) -> Vec<f64> {
    lg.edges()
        .map(|(_, e)| match e.kind {
            EdgeKind::Transmission { arc } => profile.w_f64(e.from.layer) * vq.link[arc.link.0],
            EdgeKind::Computation { node, stage } => {
                profile.x_f64_at(stage, node) * vq.node[node.0]
            }
        })
        .collect()
}

/// A Dijkstra label: accumulated cost plus the edge-id sequence in traversal
/// order. Comparison is (cost, sequence), which is a total order because
/// costs are finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
struct PathLabel {
    cost: f64,
    seq: Vec<EdgeId>,
}

impl Eq for PathLabel {}

impl Ord for PathLabel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then_with(|| self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for PathLabel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Label-carrying Dijkstra from `sources` (each with an initial label).
/// `blocked` nodes are never entered. Returns the finalized label per
/// layered-node index.
fn dijkstra_labels(
    lg: &LayeredGraph,
    costs: &[f64],
    sources: Vec<(usize, PathLabel)>,
    blocked: &BTreeSet<usize>,
) -> Vec<Option<PathLabel>> {
    let mut best: Vec<Option<PathLabel>> = vec![None; lg.lnode_count()];
    let mut heap: BinaryHeap<Reverse<(PathLabel, usize)>> = BinaryHeap::new();
    for (idx, label) in sources {
        heap.push(Reverse((label, idx)));
    }
    while let Some(Reverse((label, idx))) = heap.pop() {
        if best[idx].is_some() {
            continue;
        }
        best[idx] = Some(label.clone());
        for &e in lg.out_edges(lg.lnode_at(idx)) {
            let to = lg.lnode_index(lg.edge(e).to);
            // Infinite cost marks a forbidden edge (used by fixed-route policies).
            if best[to].is_some() || blocked.contains(&to) || costs[e.0].is_infinite() {
                continue;
            }
            let mut seq = label.seq.clone();
            seq.push(e);
            heap.push(Reverse((
                PathLabel {
                    cost: label.cost + costs[e.0],
                    seq,
                },
                to,
            )));
        }
    }
    best
}

fn single_source_labels(lg: &LayeredGraph, costs: &[f64], source: LNode) -> Vec<Option<PathLabel>> {
    dijkstra_labels(
        lg,
        costs,
        vec![(
            lg.lnode_index(source),
            PathLabel {
                cost: 0.0,
                seq: Vec::new(),
            },
        )],
        &BTreeSet::new(),
    )
}

/// Minimum-cost service chain path from the source's layer-0 copy to the
/// destination's last-layer copy.
pub fn select_route_unicast(
    lg: &LayeredGraph,
    costs: &[f64],
    source: NodeId,
    destination: NodeId,
) -> Result<Route, RouteError> {
    let src = LNode {
        layer: 0,
        node: source,
    };
    let dst = LNode {
        layer: lg.last_layer(),
        node: destination,
    };
    let labels = single_source_labels(lg, costs, src);
    let label = labels[lg.lnode_index(dst)]
        .as_ref()
        .ok_or_else(|| RouteError::Unreachable(format!("{destination:?}")))?;
    let route = Route::new(RouteKind::Path, src, vec![dst], label.seq.clone());
    debug_assert!(route.validate(lg).is_ok());
    Ok(route)
}

/// Minimum-cost route to the cheapest of several destinations. Equivalent to
/// attaching a zero-cost virtual sink behind all of them and running the
/// unicast selection, so the result always matches the minimum over
/// per-destination unicast costs.
pub fn select_route_anycast(
    lg: &LayeredGraph,
    costs: &[f64],
    source: NodeId,
    destinations: &BTreeSet<NodeId>,
) -> Result<Route, RouteError> {
    let src = LNode {
        layer: 0,
        node: source,
    };
    let labels = single_source_labels(lg, costs, src);
    let mut best: Option<(&PathLabel, LNode)> = None;
    for &d in destinations {
        let dst = LNode {
            layer: lg.last_layer(),
            node: d,
        };
        if let Some(label) = labels[lg.lnode_index(dst)].as_ref() {
            if best.map_or(true, |(b, _)| label < b) {
                best = Some((label, dst));
            }
        }
    }
    let (label, dst) = best.ok_or_else(|| RouteError::Unreachable("any destination".into()))?;
    Ok(Route::new(RouteKind::Path, src, vec![dst], label.seq.clone()))
}

/// Default terminal bound for the exact Steiner solver; beyond this the
/// subset dynamic program is too expensive and callers should use
/// [`select_route_approx`].
pub const EXACT_STEINER_TERMINAL_BOUND: usize = 8;

/// A tree label in the Steiner dynamic program: cost plus the sorted edge
/// set. Tie order on trees is (cost, sorted edge ids).
#[derive(Debug, Clone, PartialEq)]
struct TreeLabel {
    cost: f64,
    edges: Vec<EdgeId>,
}

impl Eq for TreeLabel {}

impl Ord for TreeLabel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then_with(|| self.edges.cmp(&other.edges))
    }
}

impl PartialOrd for TreeLabel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

fn merge_sorted(a: &[EdgeId], b: &[EdgeId]) -> Vec<EdgeId> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Exact minimum-cost Steiner arborescence rooted at the source's layer-0
/// copy spanning every destination's last-layer copy, via the subset dynamic
/// program over terminal sets (3^k * n states).
pub fn select_route_multicast(
    lg: &LayeredGraph,
    costs: &[f64],
    source: NodeId,
    destinations: &BTreeSet<NodeId>,
) -> Result<Route, RouteError> {
    if destinations.len() > EXACT_STEINER_TERMINAL_BOUND {
        return Err(RouteError::TooManyTerminals(
            destinations.len(),
            EXACT_STEINER_TERMINAL_BOUND,
        ));
    }
    let terminals: Vec<LNode> = destinations
        .iter()
        .map(|&d| LNode {
            layer: lg.last_layer(),
            node: d,
        })
        .collect();
    if terminals.len() == 1 {
        let path = select_route_unicast(lg, costs, source, terminals[0].node)?;
        return Ok(Route::new(
            RouteKind::Arborescence,
            path.source,
            path.terminals,
            path.edges,
        ));
    }
    let src = LNode {
        layer: 0,
        node: source,
    };
    let k = terminals.len();
    let n = lg.lnode_count();
    let full = (1usize << k) - 1;
    // dp[mask][v] = best label of an arborescence rooted at v spanning the
    // terminals in mask.
    let mut dp: Vec<Vec<Option<TreeLabel>>> = vec![vec![None; n]; full + 1];
    for mask in 1..=full {
        let mut heap: BinaryHeap<Reverse<(TreeLabel, usize)>> = BinaryHeap::new();
        if mask.count_ones() == 1 {
            let t = terminals[mask.trailing_zeros() as usize];
            heap.push(Reverse((
                TreeLabel {
                    cost: 0.0,
                    edges: Vec::new(),
                },
                lg.lnode_index(t),
            )));
        } else {
            // Merge complementary submasks sharing the root node.
            let mut candidates: Vec<Option<TreeLabel>> = vec![None; n];
            let mut sub = (mask - 1) & mask;
            while sub > 0 {
                let rest = mask ^ sub;
                if sub < rest {
                    sub = (sub - 1) & mask;
                    continue;
                }
                for v in 0..n {
                    if let (Some(a), Some(b)) = (&dp[sub][v], &dp[rest][v]) {
                        let merged = TreeLabel {
                            cost: a.cost + b.cost,
                            edges: merge_sorted(&a.edges, &b.edges),
                        };
                        if candidates[v].as_ref().map_or(true, |c| merged < *c) {
                            candidates[v] = Some(merged);
                        }
                    }
                }
                sub = (sub - 1) & mask;
            }
            for (v, cand) in candidates.into_iter().enumerate() {
                if let Some(c) = cand {
                    heap.push(Reverse((c, v)));
                }
            }
        }
        // Grow toward the root along reversed edges.
        while let Some(Reverse((label, idx))) = heap.pop() {
            if dp[mask][idx].is_some() {
                continue;
            }
            dp[mask][idx] = Some(label.clone());
            for &e in lg.in_edges(lg.lnode_at(idx)) {
                let from = lg.lnode_index(lg.edge(e).from);
                if dp[mask][from].is_some() || costs[e.0].is_infinite() {
                    continue;
                }
                let mut edges = label.edges.clone();
                let pos = edges.binary_search(&e).unwrap_or_else(|p| p);
                edges.insert(pos, e);
                heap.push(Reverse((
                    TreeLabel {
                        cost: label.cost + costs[e.0],
                        edges,
                    },
                    from,
                )));
            }
        }
    }
    let label = dp[full][lg.lnode_index(src)]
        .as_ref()
        .ok_or_else(|| RouteError::Unreachable("some terminal".into()))?;
    let route = reconstruct_arborescence(lg, costs, src, &terminals, &label.edges, label.cost)?;
    Ok(route)
}

/// Turns a DP label's edge set into a validated arborescence. Additive
/// merges can only tie the optimum with overlapping components when the
/// shared edges cost zero, so pruning never changes the cost; the final
/// equality assert keeps that honest.
fn reconstruct_arborescence(
    lg: &LayeredGraph,
    costs: &[f64],
    src: LNode,
    terminals: &[LNode],
    edges: &[EdgeId],
    expected_cost: f64,
) -> Result<Route, RouteError> {
    let mut dedup: Vec<EdgeId> = edges.to_vec();
    dedup.dedup();
    let candidate = Route::new(
        RouteKind::Arborescence,
        src,
        terminals.to_vec(),
        dedup.clone(),
    );
    let route = if candidate.validate(lg).is_ok() {
        candidate
    } else {
        let pruned = prune_to_arborescence(lg, src, terminals, &dedup);
        let route = Route::new(RouteKind::Arborescence, src, terminals.to_vec(), pruned);
        route.validate(lg).map_err(|e| {
            debug_assert!(false, "steiner repair failed: {e}");
            e
        })?;
        route
    };
    let canonical: f64 = route.cost(costs);
    debug_assert!(
        (canonical - expected_cost).abs() <= 1e-9 * expected_cost.abs().max(1.0),
        "reconstructed tree cost {canonical} != dp value {expected_cost}"
    );
    Ok(route)
}

/// Keeps, for every node reachable from the source, its first in-edge toward
/// a terminal, then trims branches that stopped short of one.
fn prune_to_arborescence(
    lg: &LayeredGraph,
    src: LNode,
    terminals: &[LNode],
    edges: &[EdgeId],
) -> Vec<EdgeId> {
    let terminal_set: BTreeSet<usize> = terminals.iter().map(|t| lg.lnode_index(*t)).collect();
    // Nodes from which a terminal is reachable inside the edge set.
    let mut rev: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut fwd: BTreeMap<usize, Vec<EdgeId>> = BTreeMap::new();
    for &e in edges {
        let edge = lg.edge(e);
        rev.entry(lg.lnode_index(edge.to))
            .or_default()
            .push(lg.lnode_index(edge.from));
        fwd.entry(lg.lnode_index(edge.from)).or_default().push(e);
    }
    let mut useful: BTreeSet<usize> = terminal_set.clone();
    let mut stack: Vec<usize> = terminal_set.iter().copied().collect();
    while let Some(v) = stack.pop() {
        for &u in rev.get(&v).map(Vec::as_slice).unwrap_or(&[]) {
            if useful.insert(u) {
                stack.push(u);
            }
        }
    }
    // BFS from the source keeping one in-edge per node.
    let mut kept = Vec::new();
    let mut visited = BTreeSet::from([lg.lnode_index(src)]);
    let mut queue = std::collections::VecDeque::from([lg.lnode_index(src)]);
    while let Some(u) = queue.pop_front() {
        for &e in fwd.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
            let v = lg.lnode_index(lg.edge(e).to);
            if !useful.contains(&v) || visited.contains(&v) {
                continue;
            }
            visited.insert(v);
            kept.push(e);
            queue.push_back(v);
        }
    }
    // Trim leaves that are not terminals (paths cut off by the in-edge choice).
    loop {
        let mut out_deg: BTreeMap<usize, usize> = BTreeMap::new();
        for &e in &kept {
            *out_deg.entry(lg.lnode_index(lg.edge(e).from)).or_insert(0) += 1;
        }
        let before = kept.len();
        kept.retain(|&e| {
            let to = lg.lnode_index(lg.edge(e).to);
            terminal_set.contains(&to) || out_deg.get(&to).copied().unwrap_or(0) > 0
        });
        if kept.len() == before {
            break;
        }
    }
    kept
}

/// Greedy nearest-terminal attachment on the cost metric: repeatedly join the
/// cheapest still-unreached terminal to the current tree via a shortest path
/// that does not re-enter the tree. Classic 2-approximation shape; the
/// achieved ratio on a given instance can be measured with
/// [`measured_approx_ratio`].
pub fn select_route_approx(
    lg: &LayeredGraph,
    costs: &[f64],
    source: NodeId,
    destinations: &BTreeSet<NodeId>,
) -> Result<Route, RouteError> {
    let src = LNode {
        layer: 0,
        node: source,
    };
    let terminals: Vec<LNode> = destinations
        .iter()
        .map(|&d| LNode {
            layer: lg.last_layer(),
            node: d,
        })
        .collect();
    let mut tree_nodes = BTreeSet::from([lg.lnode_index(src)]);
    let mut tree_edges: Vec<EdgeId> = Vec::new();
    let mut unreached: BTreeSet<usize> = terminals
        .iter()
        .map(|t| lg.lnode_index(*t))
        .filter(|t| !tree_nodes.contains(t))
        .collect();
    while !unreached.is_empty() {
        let sources = tree_nodes
            .iter()
            .map(|&idx| {
                (
                    idx,
                    PathLabel {
                        cost: 0.0,
                        seq: Vec::new(),
                    },
                )
            })
            .collect();
        // Tree nodes are sources and must not be re-entered mid-path.
        let labels = dijkstra_labels(lg, costs, sources, &tree_nodes);
        let mut best: Option<(&PathLabel, usize)> = None;
        for &t in &unreached {
            if let Some(label) = labels[t].as_ref() {
                if best.map_or(true, |(b, _)| label < b) {
                    best = Some((label, t));
                }
            }
        }
        let (label, t) =
            best.ok_or_else(|| RouteError::Unreachable("some terminal".into()))?;
        for &e in &label.seq {
            tree_nodes.insert(lg.lnode_index(lg.edge(e).to));
            tree_edges.push(e);
        }
        unreached.remove(&t);
        unreached.retain(|u| !tree_nodes.contains(u));
    }
    let route = Route::new(RouteKind::Arborescence, src, terminals, tree_edges);
    debug_assert!(route.validate(lg).is_ok());
    Ok(route)
}

/// Cost ratio of the greedy tree against the exact solver, when the terminal
/// count permits running the exact one.
pub fn measured_approx_ratio(
    lg: &LayeredGraph,
    costs: &[f64],
    source: NodeId,
    destinations: &BTreeSet<NodeId>,
) -> Result<Option<f64>, RouteError> {
    if destinations.len() > EXACT_STEINER_TERMINAL_BOUND {
        return Ok(None);
    }
    let approx = select_route_approx(lg, costs, source, destinations)?;
    let exact = select_route_multicast(lg, costs, source, destinations)?;
    let exact_cost = exact.cost(costs);
    if exact_cost == 0.0 {
        return Ok(Some(1.0));
    }
    Ok(Some(approx.cost(costs) / exact_cost))
}

/// Charges the whole future load of an arriving batch to every virtual queue
/// on its route at admission time: count*w[i] per transmission edge and
/// count*x[i] per computation edge. In an undirected network both directions
/// of a link key the same queue, so their loads add up.
pub fn virtual_arrivals(route: &Route, lg: &LayeredGraph, count: u64, loads: &mut ArrivalLoads) {
    if count == 0 {
        return;
    }
    let count = count as f64;
    let profile = lg.profile();
    for &e in &route.edges {
        let edge = lg.edge(e);
        match edge.kind {
            EdgeKind::Transmission { arc } => {
                loads.link[arc.link.0] += count * profile.w_f64(edge.from.layer);
            }
            EdgeKind::Computation { node, stage } => {
                loads.node[node.0] += count * profile.x_f64_at(stage, node);
            }
        }
    }
}

/// Lindley recursion per link and node: Q(t+1) = max(0, Q(t) + A - mu).
pub fn update_virtual_queues(
    vq: &mut VirtualQueues,
    loads: &ArrivalLoads,
    link_caps: &[f64],
    node_caps: &[f64],
) {
    for (q, (&a, &mu)) in vq
        .link
        .iter_mut()
        .zip(loads.link.iter().zip(link_caps.iter()))
    {
        *q = (*q + a - mu).max(0.0);
    }
    for (q, (&a, &mu)) in vq
        .node
        .iter_mut()
        .zip(loads.node.iter().zip(node_caps.iter()))
    {
        *q = (*q + a - mu).max(0.0);
    }
    vq.slot += 1;
}
