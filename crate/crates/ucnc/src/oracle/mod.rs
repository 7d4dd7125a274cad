//! Ground-truth machinery: route enumeration, exact capacity-region
//! feasibility (route decomposition plus link/node capacity constraints),
//! generalized conservation checking, and decomposition of edge flows into
//! convex combinations of routes.
//!
//! Everything here computes in exact rationals; the [`compact`] module adds
//! a float arc-flow formulation for instances whose route sets are too large
//! to enumerate.

pub mod compact;
pub mod enumerate;
pub mod simplex;

use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::chaining::{
    build_layered_graph, EdgeId, EdgeKind, LayeredGraph, Route, ServiceChain,
};
use crate::controller::Commodity;
use crate::rat::{format_rat, Rat};
use crate::topology::{Network, NodeId};

pub use enumerate::{enumerate_routes, EnumerationBounds};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("enumeration bound exceeded: {0}")]
    BoundExceeded(String),
    #[error("unknown chain `{0}`")]
    UnknownChain(String),
    #[error("chain error: {0}")]
    Chain(#[from] crate::chaining::ChainingError),
    #[error("rate vector length {0} does not match commodity count {1}")]
    RateLengthMismatch(usize, usize),
    #[error("direction vector must be nonzero")]
    ZeroDirection,
    #[error("micro-packet scale {0} exceeds the cap {1}")]
    MicroPacketScaleTooLarge(BigInt, u64),
    #[error("flow is not decomposable; residual mass {0}")]
    NotDecomposable(String),
    #[error("flow map has a negative entry on edge {0:?}")]
    NegativeFlow(EdgeId),
    #[error("multicast commodity `{0}` with {1} terminals is not supported by the compact formulation")]
    CompactUnsupported(String, usize),
    #[error("LP solver failed: {0}")]
    Solver(String),
}

/// Arrival rate per commodity, aligned with the oracle's commodity order.
#[derive(Debug, Clone, PartialEq)]
pub struct RateVector(pub Vec<Rat>);

/// A route-decomposition witness: per commodity, a weight for each
/// enumerated route, summing to the commodity's rate.
#[derive(Debug, Clone)]
pub struct FlowAssignment {
    pub weights: Vec<Vec<Rat>>,
}

#[derive(Debug, Clone)]
pub enum CapacityDecision {
    Feasible(FlowAssignment),
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThetaStar {
    Finite(Rat),
    Unbounded,
}

impl ThetaStar {
    pub fn finite(&self) -> Option<&Rat> {
        match self {
            ThetaStar::Finite(r) => Some(r),
            ThetaStar::Unbounded => None,
        }
    }
}

/// Enumerated capacity-region oracle over a fixed commodity set.
pub struct CapacityOracle<'a> {
    net: &'a Network,
    commodities: Vec<Commodity>,
    lgs: Vec<Rc<LayeredGraph>>,
    routes: Vec<Vec<Route>>,
}

impl<'a> CapacityOracle<'a> {
    pub fn build(
        net: &'a Network,
        chains: &BTreeMap<String, ServiceChain>,
        commodities: &[Commodity],
        bounds: &EnumerationBounds,
    ) -> Result<Self, OracleError> {
        let mut lg_cache: BTreeMap<String, Rc<LayeredGraph>> = BTreeMap::new();
        let mut lgs = Vec::with_capacity(commodities.len());
        let mut routes = Vec::with_capacity(commodities.len());
        for c in commodities {
            let lg = match lg_cache.get(&c.chain_id) {
                Some(lg) => Rc::clone(lg),
                None => {
                    let chain = chains
                        .get(&c.chain_id)
                        .ok_or_else(|| OracleError::UnknownChain(c.chain_id.clone()))?;
                    let lg = Rc::new(build_layered_graph(net, chain)?);
                    lg_cache.insert(c.chain_id.clone(), Rc::clone(&lg));
                    lg
                }
            };
            let rs = enumerate_routes(&lg, c.source, &c.destinations, bounds)?;
            if rs.is_empty() {
                return Err(OracleError::BoundExceeded(format!(
                    "commodity `{}` has no feasible route",
                    c.id
                )));
            }
            lgs.push(lg);
            routes.push(rs);
        }
        Ok(CapacityOracle {
            net,
            commodities: commodities.to_vec(),
            lgs,
            routes,
        })
    }

    pub fn routes(&self, commodity: usize) -> &[Route] {
        &self.routes[commodity]
    }

    pub fn layered_graph(&self, commodity: usize) -> &LayeredGraph {
        &self.lgs[commodity]
    }

    pub fn commodities(&self) -> &[Commodity] {
        &self.commodities
    }

    fn route_count(&self) -> usize {
        self.routes.iter().map(Vec::len).sum()
    }

    /// Capacity rows shared by both LP forms: per stored link and per node,
    /// sum of route loads weighted by the route variables.
    fn capacity_rows(&self, var_of: impl Fn(usize, usize) -> usize) -> Vec<simplex::Constraint> {
        let mut link_rows: Vec<Vec<(usize, Rat)>> = vec![Vec::new(); self.net.link_count()];
        let mut node_rows: Vec<Vec<(usize, Rat)>> = vec![Vec::new(); self.net.node_count()];
        for (ci, routes) in self.routes.iter().enumerate() {
            let lg = &self.lgs[ci];
            for (ki, route) in routes.iter().enumerate() {
                let var = var_of(ci, ki);
                let mut link_load: BTreeMap<usize, Rat> = BTreeMap::new();
                let mut node_load: BTreeMap<usize, Rat> = BTreeMap::new();
                for &e in &route.edges {
                    match lg.edge(e).kind {
                        EdgeKind::Transmission { arc } => {
                            *link_load.entry(arc.link.0).or_insert_with(Rat::zero) +=
                                lg.profile().w(lg.edge(e).from.layer).clone();
                        }
                        EdgeKind::Computation { node, stage } => {
                            *node_load.entry(node.0).or_insert_with(Rat::zero) +=
                                lg.profile().x_at(stage, node);
                        }
                    }
                }
                for (l, w) in link_load {
                    link_rows[l].push((var, w));
                }
                for (u, x) in node_load {
                    node_rows[u].push((var, x));
                }
            }
        }
        let mut rows = Vec::new();
        for (l, coeffs) in link_rows.into_iter().enumerate() {
            if coeffs.is_empty() {
                continue;
            }
            rows.push(simplex::Constraint {
                coeffs,
                rel: simplex::Rel::Le,
                rhs: self.net.link_capacity(crate::topology::LinkId(l)).clone(),
            });
        }
        for (u, coeffs) in node_rows.into_iter().enumerate() {
            if coeffs.is_empty() {
                continue;
            }
            rows.push(simplex::Constraint {
                coeffs,
                rel: simplex::Rel::Le,
                rhs: self.net.compute_capacity(NodeId(u)).clone(),
            });
        }
        rows
    }

    fn var_index(&self) -> Vec<usize> {
        // Prefix offsets of each commodity's route variables.
        let mut offs = Vec::with_capacity(self.routes.len() + 1);
        let mut acc = 0;
        for rs in &self.routes {
            offs.push(acc);
            acc += rs.len();
        }
        offs.push(acc);
        offs
    }

    /// Decides membership of a rate vector in the capacity region and, when
    /// feasible, returns a route-decomposition witness.
    pub fn capacity_feasible(&self, rates: &RateVector) -> Result<CapacityDecision, OracleError> {
        if rates.0.len() != self.commodities.len() {
            return Err(OracleError::RateLengthMismatch(
                rates.0.len(),
                self.commodities.len(),
            ));
        }
        let offs = self.var_index();
        let num_vars = self.route_count();
        let mut constraints = Vec::new();
        for (ci, rs) in self.routes.iter().enumerate() {
            let coeffs = (0..rs.len()).map(|k| (offs[ci] + k, Rat::one())).collect();
            constraints.push(simplex::Constraint {
                coeffs,
                rel: simplex::Rel::Eq,
                rhs: rates.0[ci].clone(),
            });
        }
        constraints.extend(self.capacity_rows(|ci, ki| offs[ci] + ki));
        let lp = simplex::LinProg {
            num_vars,
            constraints,
            objective: vec![],
            maximize: false,
        };
        match simplex::solve(&lp) {
            simplex::LpOutcome::Infeasible => Ok(CapacityDecision::Infeasible),
            simplex::LpOutcome::Unbounded => {
                Err(OracleError::Solver("feasibility LP reported unbounded".into()))
            }
            simplex::LpOutcome::Optimal { solution, .. } => {
                let weights = self
                    .routes
                    .iter()
                    .enumerate()
                    .map(|(ci, rs)| solution[offs[ci]..offs[ci] + rs.len()].to_vec())
                    .collect();
                Ok(CapacityDecision::Feasible(FlowAssignment { weights }))
            }
        }
    }

    /// Largest theta such that theta * direction lies in the capacity
    /// region, by exact LP maximization.
    pub fn max_scalar_rate(&self, direction: &RateVector) -> Result<ThetaStar, OracleError> {
        if direction.0.len() != self.commodities.len() {
            return Err(OracleError::RateLengthMismatch(
                direction.0.len(),
                self.commodities.len(),
            ));
        }
        if direction.0.iter().all(Rat::is_zero) {
            return Err(OracleError::ZeroDirection);
        }
        let offs = self.var_index();
        let theta = self.route_count();
        let mut constraints = Vec::new();
        for (ci, rs) in self.routes.iter().enumerate() {
            let mut coeffs: Vec<(usize, Rat)> =
                (0..rs.len()).map(|k| (offs[ci] + k, Rat::one())).collect();
            coeffs.push((theta, -direction.0[ci].clone()));
            constraints.push(simplex::Constraint {
                coeffs,
                rel: simplex::Rel::Eq,
                rhs: Rat::zero(),
            });
        }
        constraints.extend(self.capacity_rows(|ci, ki| offs[ci] + ki));
        let lp = simplex::LinProg {
            num_vars: theta + 1,
            constraints,
            objective: vec![(theta, Rat::one())],
            maximize: true,
        };
        match simplex::solve(&lp) {
            simplex::LpOutcome::Infeasible => {
                Err(OracleError::Solver("max-rate LP reported infeasible".into()))
            }
            simplex::LpOutcome::Unbounded => Ok(ThetaStar::Unbounded),
            simplex::LpOutcome::Optimal { objective, .. } => Ok(ThetaStar::Finite(objective)),
        }
    }

    /// Independent exact recheck of a feasibility witness: route weights are
    /// nonnegative, sum to the rates, and their accumulated loads respect
    /// every link and node capacity.
    pub fn verify_assignment(
        &self,
        rates: &RateVector,
        assignment: &FlowAssignment,
    ) -> Result<(), Vec<String>> {
        let mut violations = Vec::new();
        let mut link_load: Vec<Rat> = vec![Rat::zero(); self.net.link_count()];
        let mut node_load: Vec<Rat> = vec![Rat::zero(); self.net.node_count()];
        for (ci, c) in self.commodities.iter().enumerate() {
            let weights = &assignment.weights[ci];
            if weights.len() != self.routes[ci].len() {
                violations.push(format!("commodity `{}`: weight vector length", c.id));
                continue;
            }
            let mut total = Rat::zero();
            for (ki, w) in weights.iter().enumerate() {
                if w.is_negative() {
                    violations.push(format!("commodity `{}` route {ki}: negative weight", c.id));
                }
                total += w;
                if w.is_zero() {
                    continue;
                }
                let lg = &self.lgs[ci];
                for &e in &self.routes[ci][ki].edges {
                    match lg.edge(e).kind {
                        EdgeKind::Transmission { arc } => {
                            link_load[arc.link.0] +=
                                w * &lg.profile().w(lg.edge(e).from.layer).clone();
                        }
                        EdgeKind::Computation { node, stage } => {
                            node_load[node.0] += w * &lg.profile().x_at(stage, node);
                        }
                    }
                }
            }
            if total != rates.0[ci] {
                violations.push(format!(
                    "commodity `{}`: weights sum to {}, rate is {}",
                    c.id,
                    format_rat(&total),
                    format_rat(&rates.0[ci])
                ));
            }
        }
        for (l, load) in link_load.iter().enumerate() {
            let cap = self.net.link_capacity(crate::topology::LinkId(l));
            if load > cap {
                violations.push(format!(
                    "link {l}: load {} exceeds capacity {}",
                    format_rat(load),
                    format_rat(cap)
                ));
            }
        }
        for (u, load) in node_load.iter().enumerate() {
            let cap = self.net.compute_capacity(NodeId(u));
            if load > cap {
                violations.push(format!(
                    "node {u}: load {} exceeds capacity {}",
                    format_rat(load),
                    format_rat(cap)
                ));
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    /// Structured text dump of a witness for audit.
    pub fn export_assignment(&self, rates: &RateVector, assignment: &FlowAssignment) -> String {
        let mut out = String::from("# capacity-region feasibility witness\n");
        for (ci, c) in self.commodities.iter().enumerate() {
            out.push_str(&format!(
                "commodity {} rate {}\n",
                c.id,
                format_rat(&rates.0[ci])
            ));
            let lg = &self.lgs[ci];
            for (ki, w) in assignment.weights[ci].iter().enumerate() {
                if w.is_zero() {
                    continue;
                }
                let route = &self.routes[ci][ki];
                let actions: Vec<String> = crate::chaining::map_to_physical(route, lg)
                    .iter()
                    .map(|a| match a {
                        crate::chaining::PhysicalAction::Transmit { arc, stage } => {
                            let (u, v) = self.net.arc_endpoints(*arc);
                            format!(
                                "transmit {}->{}@{}",
                                self.net.node_name(u),
                                self.net.node_name(v),
                                stage
                            )
                        }
                        crate::chaining::PhysicalAction::Process { node, function } => {
                            format!("process f{}@{}", function, self.net.node_name(*node))
                        }
                        crate::chaining::PhysicalAction::Duplicate { node, copies, .. } => {
                            format!("duplicate x{} @{}", copies, self.net.node_name(*node))
                        }
                    })
                    .collect();
                out.push_str(&format!(
                    "  weight {} route: {}\n",
                    format_rat(w),
                    actions.join("; ")
                ));
            }
        }
        out
    }
}

/// Flow values on layered edges: packet rate on transmission edges, compute
/// rate on computation edges.
pub type FlowMap = BTreeMap<EdgeId, Rat>;

/// Accumulates the edge flows induced by routes at given rates.
pub fn compose_flow(lg: &LayeredGraph, parts: &[(Route, Rat)]) -> FlowMap {
    let mut flow = FlowMap::new();
    for (route, rate) in parts {
        for &e in &route.edges {
            let load = lg.edge_load(e);
            *flow.entry(e).or_insert_with(Rat::zero) += rate * &load;
        }
    }
    flow.retain(|_, v| !v.is_zero());
    flow
}

/// Layered nodes at which conservation is not required for these routes:
/// the source copy, terminal copies, and duplication (branch) nodes.
pub fn conservation_exempt_nodes(lg: &LayeredGraph, parts: &[(Route, Rat)]) -> BTreeSet<usize> {
    let mut exempt = BTreeSet::new();
    for (route, _) in parts {
        exempt.insert(lg.lnode_index(route.source));
        for t in &route.terminals {
            exempt.insert(lg.lnode_index(*t));
        }
        for (node, out) in route.out_map(lg) {
            if out.len() > 1 {
                exempt.insert(node);
            }
        }
    }
    exempt
}

/// Checks generalized flow conservation at every non-exempt layered node:
/// transmission inflow plus scaled computation inflow equals transmission
/// outflow plus computation outflow divided by the next function's
/// per-unit cost. Returns the nonzero residuals.
pub fn verify_conservation(
    lg: &LayeredGraph,
    flow: &FlowMap,
    exempt: &BTreeSet<usize>,
) -> Vec<(usize, Rat)> {
    let mut residuals = Vec::new();
    let profile = lg.profile();
    for idx in 0..lg.lnode_count() {
        if exempt.contains(&idx) {
            continue;
        }
        let l = lg.lnode_at(idx);
        let mut balance = Rat::zero();
        let mut touched = false;
        for &e in lg.in_edges(l) {
            let Some(f) = flow.get(&e) else { continue };
            touched = true;
            match lg.edge(e).kind {
                EdgeKind::Transmission { .. } => balance += f,
                EdgeKind::Computation { node, stage } => {
                    // f compute units consumed produce xi * f / r packets.
                    let r = profile.compute_per_unit_at(stage, node);
                    balance += &(profile.scale(stage) * f) / &r;
                }
            }
        }
        for &e in lg.out_edges(l) {
            let Some(f) = flow.get(&e) else { continue };
            touched = true;
            match lg.edge(e).kind {
                EdgeKind::Transmission { .. } => balance -= f,
                EdgeKind::Computation { node, stage } => {
                    // f compute units drawn consume f / r packets.
                    let r = profile.compute_per_unit_at(stage, node);
                    balance -= &(f / &r);
                }
            }
        }
        if touched && !balance.is_zero() {
            residuals.push((idx, balance));
        }
    }
    residuals
}

/// Result of a successful decomposition.
#[derive(Debug)]
pub struct Decomposition {
    pub parts: Vec<(Route, Rat)>,
    /// The micro-packet scale: the smallest integer making every edge carry
    /// an integral number of micro packets.
    pub scale: BigInt,
}

const MICRO_PACKET_SCALE_CAP: u64 = 1_000_000;

/// Decomposes a route-induced edge flow into a convex combination of service
/// chain routes by iterative peeling: repeatedly extract a route through the
/// positive-flow support and subtract the largest multiple that keeps the
/// flow nonnegative. Backtracks over route choices, so any flow composed of
/// enumerable routes decomposes exactly.
pub fn decompose_flow(
    lg: &LayeredGraph,
    flow: &FlowMap,
    source: NodeId,
    destinations: &BTreeSet<NodeId>,
    bounds: &EnumerationBounds,
) -> Result<Decomposition, OracleError> {
    for (e, f) in flow {
        if f.is_negative() {
            return Err(OracleError::NegativeFlow(*e));
        }
    }
    // Micro-packet scale: lcm of the denominators of flow/load ratios.
    let mut scale = BigInt::one();
    for (&e, f) in flow {
        if f.is_zero() {
            continue;
        }
        let ratio = f / lg.edge_load(e);
        scale = scale.lcm(ratio.denom());
        if scale > BigInt::from(MICRO_PACKET_SCALE_CAP) {
            return Err(OracleError::MicroPacketScaleTooLarge(
                scale,
                MICRO_PACKET_SCALE_CAP,
            ));
        }
    }
    let mut work: FlowMap = flow.clone();
    work.retain(|_, v| !v.is_zero());
    let all_routes = enumerate_routes(lg, source, destinations, bounds)?;
    let mut parts = Vec::new();
    if !peel(lg, &mut work, &all_routes, &mut parts) {
        let residual: Rat = work.values().sum();
        return Err(OracleError::NotDecomposable(format_rat(&residual)));
    }
    // Exact round-trip check.
    debug_assert_eq!(&compose_flow(lg, &parts), flow);
    Ok(Decomposition { parts, scale })
}

fn peel(
    lg: &LayeredGraph,
    flow: &mut FlowMap,
    all_routes: &[Route],
    parts: &mut Vec<(Route, Rat)>,
) -> bool {
    if flow.is_empty() {
        return true;
    }
    let support: BTreeSet<EdgeId> = flow.keys().copied().collect();
    for route in all_routes
        .iter()
        .filter(|r| r.edges.iter().all(|e| support.contains(e)))
    {
        let rate = route
            .edges
            .iter()
            .map(|&e| &flow[&e] / &lg.edge_load(e))
            .min()
            .expect("route has edges");
        if rate.is_zero() {
            continue;
        }
        let snapshot = flow.clone();
        for &e in &route.edges {
            let load = lg.edge_load(e);
            let entry = flow.get_mut(&e).expect("edge in support");
            *entry -= &rate * &load;
        }
        flow.retain(|_, v| !v.is_zero());
        parts.push((route.clone(), rate));
        if peel(lg, flow, all_routes, parts) {
            return true;
        }
        parts.pop();
        *flow = snapshot;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaining::{RouteKind, ServiceFunction};
    use crate::controller::ArrivalKind;
    use crate::rat::{rat, rat_int};
    use crate::topology::Directionality;

    fn forwarding_commodity(id: &str, s: NodeId, d: NodeId) -> Commodity {
        Commodity {
            id: id.into(),
            source: s,
            destinations: BTreeSet::from([d]),
            chain_id: "fwd".into(),
            rate: Rat::one(),
            arrivals: ArrivalKind::Poisson,
        }
    }

    fn line3() -> (Network, BTreeMap<String, ServiceChain>) {
        let net = Network::build(
            Directionality::Directed,
            vec![
                ("a".into(), rat_int(0)),
                ("b".into(), rat_int(0)),
                ("c".into(), rat_int(0)),
            ],
            vec![
                ("a".into(), "b".into(), rat_int(1)),
                ("b".into(), "c".into(), rat_int(1)),
            ],
        )
        .unwrap();
        let chains = BTreeMap::from([("fwd".into(), ServiceChain::new("fwd", vec![]))]);
        (net, chains)
    }

    #[test]
    fn zero_rate_vector_is_feasible() {
        let (net, chains) = line3();
        let c = forwarding_commodity("c1", NodeId(0), NodeId(2));
        let oracle =
            CapacityOracle::build(&net, &chains, &[c], &EnumerationBounds::default()).unwrap();
        let rates = RateVector(vec![Rat::zero()]);
        match oracle.capacity_feasible(&rates).unwrap() {
            CapacityDecision::Feasible(fa) => {
                oracle.verify_assignment(&rates, &fa).unwrap();
            }
            CapacityDecision::Infeasible => panic!("zero must be feasible"),
        }
    }

    #[test]
    fn line_capacity_is_one() {
        let (net, chains) = line3();
        let c = forwarding_commodity("c1", NodeId(0), NodeId(2));
        let oracle =
            CapacityOracle::build(&net, &chains, &[c], &EnumerationBounds::default()).unwrap();
        let theta = oracle
            .max_scalar_rate(&RateVector(vec![Rat::one()]))
            .unwrap();
        assert_eq!(theta, ThetaStar::Finite(rat_int(1)));
        match oracle
            .capacity_feasible(&RateVector(vec![rat(101, 100)]))
            .unwrap()
        {
            CapacityDecision::Infeasible => {}
            CapacityDecision::Feasible(_) => panic!("1.01 exceeds the line capacity"),
        }
    }

    #[test]
    fn conservation_holds_on_route_induced_flow_and_flags_perturbations() {
        // One compute node, expansion xi = 2, r = 3.
        let net = Network::build(
            Directionality::Directed,
            vec![
                ("s".into(), rat_int(0)),
                ("u".into(), rat_int(3)),
                ("d".into(), rat_int(0)),
            ],
            vec![
                ("s".into(), "u".into(), rat_int(1)),
                ("u".into(), "d".into(), rat_int(2)),
            ],
        )
        .unwrap();
        let u = net.node_id("u").unwrap();
        let chain = ServiceChain::new(
            "phi",
            vec![ServiceFunction::new(rat_int(3), rat_int(2), [u])],
        );
        let lg = build_layered_graph(&net, &chain).unwrap();
        let routes = enumerate_routes(
            &lg,
            net.node_id("s").unwrap(),
            &BTreeSet::from([net.node_id("d").unwrap()]),
            &EnumerationBounds::default(),
        )
        .unwrap();
        assert_eq!(routes.len(), 1);
        let parts = vec![(routes[0].clone(), Rat::one())];
        let flow = compose_flow(&lg, &parts);
        let exempt = conservation_exempt_nodes(&lg, &parts);
        assert!(verify_conservation(&lg, &flow, &exempt).is_empty());
        // Zero flow also passes.
        assert!(verify_conservation(&lg, &FlowMap::new(), &exempt).is_empty());
        // Perturb the interior computation edge: exactly its two endpoints
        // report residuals.
        let (edge, _) = lg
            .edges()
            .find(|(_, e)| matches!(e.kind, EdgeKind::Computation { .. }))
            .unwrap();
        let mut perturbed = flow.clone();
        *perturbed.get_mut(&edge).unwrap() += rat(1, 10);
        let violations = verify_conservation(&lg, &perturbed, &exempt);
        let endpoints = BTreeSet::from([
            lg.lnode_index(lg.edge(edge).from),
            lg.lnode_index(lg.edge(edge).to),
        ]);
        let flagged: BTreeSet<usize> = violations.iter().map(|(i, _)| *i).collect();
        assert_eq!(flagged, endpoints);
    }

    #[test]
    fn single_path_flow_decomposes_to_itself() {
        let (net, chains) = line3();
        let chain = chains.get("fwd").unwrap();
        let lg = build_layered_graph(&net, chain).unwrap();
        let routes = enumerate_routes(
            &lg,
            NodeId(0),
            &BTreeSet::from([NodeId(2)]),
            &EnumerationBounds::default(),
        )
        .unwrap();
        let parts = vec![(routes[0].clone(), rat(7, 3))];
        let flow = compose_flow(&lg, &parts);
        let d = decompose_flow(
            &lg,
            &flow,
            NodeId(0),
            &BTreeSet::from([NodeId(2)]),
            &EnumerationBounds::default(),
        )
        .unwrap();
        assert_eq!(d.parts.len(), 1);
        assert_eq!(d.parts[0].1, rat(7, 3));
        assert_eq!(d.scale, BigInt::from(3));
    }

    #[test]
    fn expanded_split_flow_decomposes_into_two_paths() {
        // Expansion x = 3, w = 2: after processing at u the two output
        // packets take different paths to d. The induced edge flow is not a
        // single service chain path but decomposes into two, each of
        // weight 1/2.
        let net = Network::build(
            Directionality::Directed,
            vec![
                ("s".into(), rat_int(0)),
                ("u".into(), rat_int(3)),
                ("v".into(), rat_int(0)),
                ("d".into(), rat_int(0)),
            ],
            vec![
                ("s".into(), "u".into(), rat_int(1)),
                ("u".into(), "d".into(), rat_int(1)),
                ("u".into(), "v".into(), rat_int(1)),
                ("v".into(), "d".into(), rat_int(1)),
            ],
        )
        .unwrap();
        let u = net.node_id("u").unwrap();
        let chain = ServiceChain::new(
            "phi",
            vec![ServiceFunction::new(rat_int(3), rat_int(2), [u])],
        );
        let lg = build_layered_graph(&net, &chain).unwrap();
        let trans_edge = |from: &str, to: &str, layer: usize| -> EdgeId {
            lg.edges()
                .find(|(_, e)| {
                    e.from.layer == layer
                        && e.from.node == net.node_id(from).unwrap()
                        && e.to.node == net.node_id(to).unwrap()
                        && matches!(e.kind, EdgeKind::Transmission { .. })
                })
                .unwrap()
                .0
        };
        let comp_edge = lg
            .edges()
            .find(|(_, e)| matches!(e.kind, EdgeKind::Computation { .. }))
            .unwrap()
            .0;
        // One packet per slot in, three compute units at u, and the two
        // output packets split over u->d and u->v->d at stage 1.
        let flow = FlowMap::from([
            (trans_edge("s", "u", 0), rat_int(1)),
            (comp_edge, rat_int(3)),
            (trans_edge("u", "d", 1), rat_int(1)),
            (trans_edge("u", "v", 1), rat_int(1)),
            (trans_edge("v", "d", 1), rat_int(1)),
        ]);
        let d = decompose_flow(
            &lg,
            &flow,
            net.node_id("s").unwrap(),
            &BTreeSet::from([net.node_id("d").unwrap()]),
            &EnumerationBounds::default(),
        )
        .unwrap();
        assert_eq!(d.parts.len(), 2);
        for (route, w) in &d.parts {
            assert_eq!(*w, rat(1, 2));
            route.validate(&lg).unwrap();
        }
        // Minimal micro-packet scale for these ratios.
        assert_eq!(d.scale, BigInt::from(2));
    }

    #[test]
    fn compose_then_decompose_is_identity() {
        let (net, chains) = line3();
        let chain = chains.get("fwd").unwrap();
        let lg = build_layered_graph(&net, chain).unwrap();
        let routes = enumerate_routes(
            &lg,
            NodeId(0),
            &BTreeSet::from([NodeId(2)]),
            &EnumerationBounds::default(),
        )
        .unwrap();
        let parts: Vec<(Route, Rat)> = routes
            .iter()
            .map(|r| (r.clone(), rat(1, 5)))
            .collect();
        let flow = compose_flow(&lg, &parts);
        let d = decompose_flow(
            &lg,
            &flow,
            NodeId(0),
            &BTreeSet::from([NodeId(2)]),
            &EnumerationBounds::default(),
        )
        .unwrap();
        assert_eq!(compose_flow(&lg, &d.parts), flow);
    }

    #[test]
    fn cyclic_flow_is_rejected_with_residual() {
        // Positive flow on a cycle disconnected from any route.
        let net = Network::build(
            Directionality::Undirected,
            vec![
                ("a".into(), rat_int(0)),
                ("b".into(), rat_int(0)),
                ("c".into(), rat_int(0)),
            ],
            vec![
                ("a".into(), "b".into(), rat_int(1)),
                ("b".into(), "c".into(), rat_int(1)),
            ],
        )
        .unwrap();
        let chain = ServiceChain::new("fwd", vec![]);
        let lg = build_layered_graph(&net, &chain).unwrap();
        // Flow bouncing b->c and c->b with nothing reaching it from a.
        let mut flow = FlowMap::new();
        for (id, e) in lg.edges() {
            let (u, v) = (e.from.node, e.to.node);
            if (u == NodeId(1) && v == NodeId(2)) || (u == NodeId(2) && v == NodeId(1)) {
                flow.insert(id, rat_int(1));
            }
        }
        let err = decompose_flow(
            &lg,
            &flow,
            NodeId(0),
            &BTreeSet::from([NodeId(2)]),
            &EnumerationBounds::default(),
        )
        .unwrap_err();
        assert!(matches!(err, OracleError::NotDecomposable(_)));
    }

    #[test]
    fn multicast_tree_flow_round_trips() {
        let net = Network::build(
            Directionality::Directed,
            vec![
                ("s".into(), rat_int(0)),
                ("m".into(), rat_int(0)),
                ("a".into(), rat_int(0)),
                ("b".into(), rat_int(0)),
            ],
            vec![
                ("s".into(), "m".into(), rat_int(1)),
                ("m".into(), "a".into(), rat_int(1)),
                ("m".into(), "b".into(), rat_int(1)),
                ("s".into(), "a".into(), rat_int(1)),
            ],
        )
        .unwrap();
        let chain = ServiceChain::new("fwd", vec![]);
        let lg = build_layered_graph(&net, &chain).unwrap();
        let dests = BTreeSet::from([net.node_id("a").unwrap(), net.node_id("b").unwrap()]);
        let trees = enumerate_routes(
            &lg,
            net.node_id("s").unwrap(),
            &dests,
            &EnumerationBounds::default(),
        )
        .unwrap();
        assert!(trees.len() >= 2);
        let parts: Vec<(Route, Rat)> = trees
            .iter()
            .take(2)
            .map(|t| (t.clone(), rat(1, 4)))
            .collect();
        let flow = compose_flow(&lg, &parts);
        let d = decompose_flow(
            &lg,
            &flow,
            net.node_id("s").unwrap(),
            &dests,
            &EnumerationBounds::default(),
        )
        .unwrap();
        assert_eq!(compose_flow(&lg, &d.parts), flow);
        for (r, _) in &d.parts {
            assert_eq!(r.kind, RouteKind::Arborescence);
        }
    }
}
