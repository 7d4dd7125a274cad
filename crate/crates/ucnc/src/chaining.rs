//! Service chains, cumulative scaling factors, the layered-graph expansion of
//! the physical network, and route objects (service chain paths and Steiner
//! arborescences) inside it.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};
use thiserror::Error;

use crate::rat::{rat_to_f64, Rat};
use crate::topology::{Arc, Network, NodeId};

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceFunction {
    /// Compute units consumed per unit of input flow (r).
    pub compute_per_unit: Rat,
    /// Output flow per unit of input flow (xi).
    pub scale: Rat,
    /// Nodes where this function is available.
    pub hosts: BTreeSet<NodeId>,
    /// Per-host compute cost override (r_u) for dedicated servers.
    pub host_compute_override: BTreeMap<NodeId, Rat>,
}

impl ServiceFunction {
    pub fn new(compute_per_unit: Rat, scale: Rat, hosts: impl IntoIterator<Item = NodeId>) -> Self {
        ServiceFunction {
            compute_per_unit,
            scale,
            hosts: hosts.into_iter().collect(),
            host_compute_override: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceChain {
    pub id: String,
    pub functions: Vec<ServiceFunction>,
}

impl ServiceChain {
    pub fn new(id: impl Into<String>, functions: Vec<ServiceFunction>) -> Self {
        ServiceChain {
            id: id.into(),
            functions,
        }
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn validate(&self, net: &Network) -> Result<(), ChainingError> {
        for (i, f) in self.functions.iter().enumerate() {
            if f.compute_per_unit <= Rat::zero() {
                return Err(ChainingError::NonPositiveCompute(self.id.clone(), i + 1));
            }
            if f.scale <= Rat::zero() {
                return Err(ChainingError::NonPositiveScale(self.id.clone(), i + 1));
            }
            if f.hosts.is_empty() {
                return Err(ChainingError::NoHosts(self.id.clone(), i + 1));
            }
            for &h in f.hosts.iter().chain(f.host_compute_override.keys()) {
                if h.0 >= net.node_count() {
                    return Err(ChainingError::HostNotInNetwork(self.id.clone(), i + 1));
                }
            }
            for &h in &f.hosts {
                if net.compute_capacity(h).is_zero() {
                    return Err(ChainingError::HostWithoutCapacity(
                        self.id.clone(),
                        i + 1,
                        net.node_name(h).to_string(),
                    ));
                }
            }
            for r_u in f.host_compute_override.values() {
                if *r_u <= Rat::zero() {
                    return Err(ChainingError::NonPositiveCompute(self.id.clone(), i + 1));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ChainingError {
    #[error("chain `{0}` function {1}: compute requirement must be positive")]
    NonPositiveCompute(String, usize),
    #[error("chain `{0}` function {1}: scale factor must be positive")]
    NonPositiveScale(String, usize),
    #[error("chain `{0}` function {1}: host set is empty")]
    NoHosts(String, usize),
    #[error("chain `{0}` function {1}: host not in network")]
    HostNotInNetwork(String, usize),
    #[error("chain `{0}` function {1}: host `{2}` has no processing capacity")]
    HostWithoutCapacity(String, usize, String),
}

/// Cumulative per-layer scalings of a chain: `w[i]` is the flow multiplicity
/// of a stage-i packet and `x[i]` the compute load of function i per original
/// input packet.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingProfile {
    stages: usize,
    r: Vec<Rat>,
    xi: Vec<Rat>,
    w: Vec<Rat>,
    x: Vec<Rat>,
    w_f64: Vec<f64>,
    x_f64: Vec<f64>,
    /// prefix[i] = prod_{j<i} xi_j, used for per-host overrides.
    prefix: Vec<Rat>,
    overrides: Vec<BTreeMap<NodeId, Rat>>,
}

impl ScalingProfile {
    /// Number of functions in the chain (M).
    pub fn stages(&self) -> usize {
        self.stages
    }

    /// Flow multiplicity w[i] for stage i in 0..=M.
    pub fn w(&self, stage: usize) -> &Rat {
        &self.w[stage]
    }

    /// Compute load x[i] for function i in 1..=M.
    pub fn x(&self, function: usize) -> &Rat {
        &self.x[function - 1]
    }

    /// Compute load of function i at a specific host, honoring overrides.
    pub fn x_at(&self, function: usize, node: NodeId) -> Rat {
        match self.overrides[function - 1].get(&node) {
            Some(r_u) => r_u * &self.prefix[function - 1],
            None => self.x[function - 1].clone(),
        }
    }

    pub fn w_f64(&self, stage: usize) -> f64 {
        self.w_f64[stage]
    }

    pub fn x_f64_at(&self, function: usize, node: NodeId) -> f64 {
        match self.overrides[function - 1].get(&node) {
            Some(r_u) => rat_to_f64(&(r_u * &self.prefix[function - 1])),
            None => self.x_f64[function - 1],
        }
    }

    pub fn compute_per_unit(&self, function: usize) -> &Rat {
        &self.r[function - 1]
    }

    /// Per-unit compute cost of function i at a host, honoring overrides.
    pub fn compute_per_unit_at(&self, function: usize, node: NodeId) -> Rat {
        self.overrides[function - 1]
            .get(&node)
            .cloned()
            .unwrap_or_else(|| self.r[function - 1].clone())
    }

    pub fn scale(&self, function: usize) -> &Rat {
        &self.xi[function - 1]
    }

    pub fn w_all(&self) -> &[Rat] {
        &self.w
    }

    pub fn x_all(&self) -> &[Rat] {
        &self.x
    }
}

/// w[i] = prod_{j<=i} xi_j with w[0] = 1; x[i] = r_i * prod_{j<i} xi_j.
pub fn scaling_profile(chain: &ServiceChain) -> ScalingProfile {
    let m = chain.len();
    let mut w = Vec::with_capacity(m + 1);
    let mut x = Vec::with_capacity(m);
    let mut prefix = Vec::with_capacity(m);
    let mut acc = Rat::one();
    w.push(acc.clone());
    for f in &chain.functions {
        prefix.push(acc.clone());
        x.push(&f.compute_per_unit * &acc);
        acc *= &f.scale;
        w.push(acc.clone());
    }
    ScalingProfile {
        stages: m,
        r: chain
            .functions
            .iter()
            .map(|f| f.compute_per_unit.clone())
            .collect(),
        xi: chain.functions.iter().map(|f| f.scale.clone()).collect(),
        w_f64: w.iter().map(rat_to_f64).collect(),
        x_f64: x.iter().map(rat_to_f64).collect(),
        w,
        x,
        prefix,
        overrides: chain
            .functions
            .iter()
            .map(|f| f.host_compute_override.clone())
            .collect(),
    }
}

/// A node copy in the layered graph: physical `node` at chain stage `layer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LNode {
    pub layer: usize,
    pub node: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    /// Copy of a physical arc inside one layer.
    Transmission { arc: Arc },
    /// Crossing from layer `stage - 1` to `stage`: function `stage` runs at `node`.
    Computation { node: NodeId, stage: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct LayeredEdge {
    pub from: LNode,
    pub to: LNode,
    pub kind: EdgeKind,
}

/// The (M+1)-layer expansion of a network for one service chain.
#[derive(Debug, Clone)]
pub struct LayeredGraph {
    chain_id: String,
    node_count: usize,
    layers: usize,
    edges: Vec<LayeredEdge>,
    out: Vec<Vec<EdgeId>>,
    incoming: Vec<Vec<EdgeId>>,
    profile: ScalingProfile,
}

impl LayeredGraph {
    pub fn chain_id(&self) -> &str {
        &self.chain_id
    }

    /// Physical node count n.
    pub fn physical_node_count(&self) -> usize {
        self.node_count
    }

    /// Number of layers, M+1.
    pub fn layers(&self) -> usize {
        self.layers
    }

    /// Index of the last layer, M.
    pub fn last_layer(&self) -> usize {
        self.layers - 1
    }

    pub fn lnode_count(&self) -> usize {
        self.node_count * self.layers
    }

    pub fn lnode_index(&self, l: LNode) -> usize {
        l.layer * self.node_count + l.node.0
    }

    pub fn lnode_at(&self, index: usize) -> LNode {
        LNode {
            layer: index / self.node_count,
            node: NodeId(index % self.node_count),
        }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, id: EdgeId) -> &LayeredEdge {
        &self.edges[id.0]
    }

    pub fn edges(&self) -> impl Iterator<Item = (EdgeId, &LayeredEdge)> + '_ {
        self.edges.iter().enumerate().map(|(i, e)| (EdgeId(i), e))
    }

    pub fn out_edges(&self, l: LNode) -> &[EdgeId] {
        &self.out[self.lnode_index(l)]
    }

    pub fn in_edges(&self, l: LNode) -> &[EdgeId] {
        &self.incoming[self.lnode_index(l)]
    }

    pub fn profile(&self) -> &ScalingProfile {
        &self.profile
    }

    pub fn transmission_edge_count(&self) -> usize {
        self.edges
            .iter()
            .filter(|e| matches!(e.kind, EdgeKind::Transmission { .. }))
            .count()
    }

    pub fn computation_edge_count(&self) -> usize {
        self.edges
            .iter()
            .filter(|e| matches!(e.kind, EdgeKind::Computation { .. }))
            .count()
    }

    /// The exact load a unit-rate route places on this edge: w[layer] for a
    /// transmission edge, x[stage] (override-aware) for a computation edge.
    pub fn edge_load(&self, id: EdgeId) -> Rat {
        match self.edges[id.0].kind {
            EdgeKind::Transmission { .. } => self.profile.w(self.edges[id.0].from.layer).clone(),
            EdgeKind::Computation { node, stage } => self.profile.x_at(stage, node),
        }
    }

    pub fn edge_load_f64(&self, id: EdgeId) -> f64 {
        match self.edges[id.0].kind {
            EdgeKind::Transmission { .. } => self.profile.w_f64(self.edges[id.0].from.layer),
            EdgeKind::Computation { node, stage } => self.profile.x_f64_at(stage, node),
        }
    }
}

/// Builds the layered graph: one copy of every arc per layer, plus a
/// computation edge per host at each layer boundary. Edge ids are assigned
/// layer by layer (transmission copies in stored-link order, then the
/// boundary's computation edges in node order), which fixes the
/// lexicographic tie-break order used by route selection.
pub fn build_layered_graph(
    net: &Network,
    chain: &ServiceChain,
) -> Result<LayeredGraph, ChainingError> {
    chain.validate(net)?;
    let n = net.node_count();
    let m = chain.len();
    let layers = m + 1;
    let mut edges = Vec::new();
    let mut out = vec![Vec::new(); n * layers];
    let mut incoming = vec![Vec::new(); n * layers];
    let push = |edges: &mut Vec<LayeredEdge>,
                    out: &mut Vec<Vec<EdgeId>>,
                    incoming: &mut Vec<Vec<EdgeId>>,
                    e: LayeredEdge| {
        let id = EdgeId(edges.len());
        out[e.from.layer * n + e.from.node.0].push(id);
        incoming[e.to.layer * n + e.to.node.0].push(id);
        edges.push(e);
    };
    for layer in 0..layers {
        for arc in net.arcs() {
            let (u, v) = net.arc_endpoints(arc);
            push(
                &mut edges,
                &mut out,
                &mut incoming,
                LayeredEdge {
                    from: LNode { layer, node: u },
                    to: LNode { layer, node: v },
                    kind: EdgeKind::Transmission { arc },
                },
            );
        }
        if layer < m {
            let stage = layer + 1;
            for &h in &chain.functions[layer].hosts {
                push(
                    &mut edges,
                    &mut out,
                    &mut incoming,
                    LayeredEdge {
                        from: LNode { layer, node: h },
                        to: LNode {
                            layer: stage,
                            node: h,
                        },
                        kind: EdgeKind::Computation { node: h, stage },
                    },
                );
            }
        }
    }
    Ok(LayeredGraph {
        chain_id: chain.id.clone(),
        node_count: n,
        layers,
        edges,
        out,
        incoming,
        profile: scaling_profile(chain),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RouteKind {
    Path,
    Arborescence,
}

/// A route inside one layered graph: a service chain path (unicast) or a
/// service chain Steiner arborescence (multicast). Edges are kept sorted by
/// id, which doubles as the deterministic tie-break key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Route {
    pub kind: RouteKind,
    pub source: LNode,
    pub terminals: Vec<LNode>,
    pub edges: Vec<EdgeId>,
}

impl Route {
    pub fn new(
        kind: RouteKind,
        source: LNode,
        mut terminals: Vec<LNode>,
        mut edges: Vec<EdgeId>,
    ) -> Route {
        terminals.sort();
        terminals.dedup();
        edges.sort();
        Route {
            kind,
            source,
            terminals,
            edges,
        }
    }

    /// Total cost under per-edge costs, summed in sorted edge order so equal
    /// routes always produce the same float.
    pub fn cost(&self, costs: &[f64]) -> f64 {
        self.edges.iter().map(|e| costs[e.0]).sum()
    }

    pub fn validate(&self, lg: &LayeredGraph) -> Result<(), RouteError> {
        if self.terminals.is_empty() {
            return Err(RouteError::NoTerminals);
        }
        if self.source.layer != 0 {
            return Err(RouteError::SourceNotAtLayerZero);
        }
        for t in &self.terminals {
            if t.layer != lg.last_layer() {
                return Err(RouteError::TerminalNotAtLastLayer);
            }
        }
        let mut seen = BTreeSet::new();
        for &e in &self.edges {
            if e.0 >= lg.edge_count() {
                return Err(RouteError::UnknownEdge);
            }
            if !seen.insert(e) {
                return Err(RouteError::DuplicateEdge);
            }
        }
        // In-degree at most one per layered node; the source has none.
        let mut indeg: BTreeMap<usize, usize> = BTreeMap::new();
        let mut adjacency: BTreeMap<usize, Vec<EdgeId>> = BTreeMap::new();
        for &e in &self.edges {
            let edge = lg.edge(e);
            *indeg.entry(lg.lnode_index(edge.to)).or_insert(0) += 1;
            adjacency
                .entry(lg.lnode_index(edge.from))
                .or_default()
                .push(e);
        }
        if indeg.values().any(|&d| d > 1) {
            return Err(RouteError::RevisitsNode);
        }
        if indeg.contains_key(&lg.lnode_index(self.source)) {
            return Err(RouteError::RevisitsNode);
        }
        // Every edge must be reachable from the source, every terminal
        // reached, and every leaf must be a terminal.
        let terminal_set: BTreeSet<usize> =
            self.terminals.iter().map(|t| lg.lnode_index(*t)).collect();
        let mut visited = BTreeSet::from([lg.lnode_index(self.source)]);
        let mut reached_edges = 0usize;
        let mut stack = vec![lg.lnode_index(self.source)];
        while let Some(u) = stack.pop() {
            let out = adjacency.get(&u).map(Vec::as_slice).unwrap_or(&[]);
            if out.is_empty() && !terminal_set.contains(&u) {
                return Err(RouteError::DeadBranch);
            }
            for &e in out {
                reached_edges += 1;
                let v = lg.lnode_index(lg.edge(e).to);
                if visited.insert(v) {
                    stack.push(v);
                }
            }
        }
        if reached_edges != self.edges.len() {
            return Err(RouteError::Disconnected);
        }
        for t in &terminal_set {
            if !visited.contains(t) {
                return Err(RouteError::TerminalUnreached);
            }
        }
        if self.kind == RouteKind::Path {
            if self.terminals.len() != 1 {
                return Err(RouteError::PathWithMultipleTerminals);
            }
            if adjacency.values().any(|v| v.len() > 1) {
                return Err(RouteError::PathBranches);
            }
        }
        Ok(())
    }

    /// Out-edges per layered-node index, for packet forwarding.
    pub fn out_map(&self, lg: &LayeredGraph) -> BTreeMap<usize, Vec<EdgeId>> {
        let mut map: BTreeMap<usize, Vec<EdgeId>> = BTreeMap::new();
        for &e in &self.edges {
            map.entry(lg.lnode_index(lg.edge(e).from)).or_default().push(e);
        }
        map
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RouteError {
    #[error("route has no terminals")]
    NoTerminals,
    #[error("route source is not at layer 0")]
    SourceNotAtLayerZero,
    #[error("route terminal is not at the last layer")]
    TerminalNotAtLastLayer,
    #[error("route references an edge outside the layered graph")]
    UnknownEdge,
    #[error("route contains a duplicate edge")]
    DuplicateEdge,
    #[error("route visits a layered node more than once")]
    RevisitsNode,
    #[error("route contains edges unreachable from the source")]
    Disconnected,
    #[error("route has a branch ending at a non-terminal")]
    DeadBranch,
    #[error("route does not reach every terminal")]
    TerminalUnreached,
    #[error("path route must have exactly one terminal")]
    PathWithMultipleTerminals,
    #[error("path route branches")]
    PathBranches,
    #[error("no feasible route to destination `{0}`")]
    Unreachable(String),
    #[error("terminal count {0} exceeds the exact solver bound {1}")]
    TooManyTerminals(usize, usize),
}

/// One physical step a routed packet performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhysicalAction {
    Transmit { arc: Arc, stage: usize },
    Process { node: NodeId, function: usize },
    Duplicate { node: NodeId, stage: usize, copies: usize },
}

/// Reads a route back as physical actions: pre-order walk from the source,
/// children in edge-id order, with a duplication event at every branch node.
pub fn map_to_physical(route: &Route, lg: &LayeredGraph) -> Vec<PhysicalAction> {
    let adjacency = route.out_map(lg);
    let mut actions = Vec::new();
    let mut stack = vec![lg.lnode_index(route.source)];
    while let Some(u) = stack.pop() {
        let out = adjacency.get(&u).map(Vec::as_slice).unwrap_or(&[]);
        if out.len() > 1 {
            let l = lg.lnode_at(u);
            actions.push(PhysicalAction::Duplicate {
                node: l.node,
                stage: l.layer,
                copies: out.len(),
            });
        }
        // Reverse so the smallest edge id is walked first.
        for &e in out.iter().rev() {
            let edge = lg.edge(e);
            actions.push(match edge.kind {
                EdgeKind::Transmission { arc } => PhysicalAction::Transmit {
                    arc,
                    stage: edge.from.layer,
                },
                EdgeKind::Computation { node, stage } => {
                    PhysicalAction::Process { node, function: stage }
                }
            });
            stack.push(lg.lnode_index(edge.to));
        }
    }
    actions
}
