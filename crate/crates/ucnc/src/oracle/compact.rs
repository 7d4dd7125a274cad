//! Compact arc-flow formulation of the maximum supportable rate, for
//! instances whose route sets are too large to enumerate.
//!
//! Unicast commodities become per-edge flows with unit conservation in the
//! layered graph (cycles never help, so this is the same region as the
//! enumerated form). A two-terminal multicast commodity becomes a pooled
//! trunk flow into a split node plus one branch flow per terminal; any
//! feasible system uncrosses into arborescences of equal rate and no more
//! load, so the region again matches. Solved in f64 by `minilp`; use the
//! enumerated oracle when exact boundary values are needed.

use std::collections::BTreeMap;
use std::rc::Rc;

use minilp::{ComparisonOp, OptimizationDirection, Problem, Variable};

use crate::chaining::{build_layered_graph, EdgeKind, LNode, LayeredGraph, ServiceChain};
use crate::controller::Commodity;
use crate::oracle::OracleError;
use crate::rat::{rat_to_f64, Rat};
use crate::topology::{LinkId, Network, NodeId};

const INF: (f64, f64) = (0.0, f64::INFINITY);

pub fn max_scalar_rate_compact(
    net: &Network,
    chains: &BTreeMap<String, ServiceChain>,
    commodities: &[Commodity],
    direction: &[Rat],
) -> Result<f64, OracleError> {
    if direction.len() != commodities.len() {
        return Err(OracleError::RateLengthMismatch(
            direction.len(),
            commodities.len(),
        ));
    }
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let theta = problem.add_var(1.0, INF);
    let mut lg_cache: BTreeMap<String, Rc<LayeredGraph>> = BTreeMap::new();
    let mut link_terms: Vec<Vec<(Variable, f64)>> = vec![Vec::new(); net.link_count()];
    let mut node_terms: Vec<Vec<(Variable, f64)>> = vec![Vec::new(); net.node_count()];

    for (ci, c) in commodities.iter().enumerate() {
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
        let dir = rat_to_f64(&direction[ci]);
        let dests: Vec<NodeId> = c.destinations.iter().copied().collect();
        match dests.len() {
            1 => add_unicast(
                &mut problem,
                &lg,
                c.source,
                dests[0],
                dir,
                theta,
                &mut link_terms,
                &mut node_terms,
            ),
            2 => add_two_terminal_multicast(
                &mut problem,
                &lg,
                c.source,
                (dests[0], dests[1]),
                dir,
                theta,
                &mut link_terms,
                &mut node_terms,
            ),
            n => return Err(OracleError::CompactUnsupported(c.id.clone(), n)),
        }
    }

    for (l, terms) in link_terms.into_iter().enumerate() {
        if !terms.is_empty() {
            problem.add_constraint(
                terms,
                ComparisonOp::Le,
                rat_to_f64(net.link_capacity(LinkId(l))),
            );
        }
    }
    for (u, terms) in node_terms.into_iter().enumerate() {
        if !terms.is_empty() {
            problem.add_constraint(
                terms,
                ComparisonOp::Le,
                rat_to_f64(net.compute_capacity(NodeId(u))),
            );
        }
    }

    match problem.solve() {
        Ok(solution) => Ok(solution.objective()),
        Err(minilp::Error::Infeasible) => Err(OracleError::Solver(
            "compact rate LP reported infeasible".into(),
        )),
        Err(minilp::Error::Unbounded) => Ok(f64::INFINITY),
    }
}

/// One flow variable per layered edge; registers capacity terms and adds the
/// conservation rows. `divergence` gives the theta coefficient per node.
fn add_flow_system(
    problem: &mut Problem,
    lg: &LayeredGraph,
    theta_coeff: impl Fn(usize) -> Vec<(Variable, f64)>,
    link_terms: &mut [Vec<(Variable, f64)>],
    node_terms: &mut [Vec<(Variable, f64)>],
) -> Vec<Variable> {
    let mut edge_vars = Vec::with_capacity(lg.edge_count());
    for (_, e) in lg.edges() {
        let v = problem.add_var(0.0, INF);
        match e.kind {
            EdgeKind::Transmission { arc } => {
                link_terms[arc.link.0].push((v, lg.profile().w_f64(e.from.layer)));
            }
            EdgeKind::Computation { node, stage } => {
                node_terms[node.0].push((v, lg.profile().x_f64_at(stage, node)));
            }
        }
        edge_vars.push(v);
    }
    for idx in 0..lg.lnode_count() {
        let l = lg.lnode_at(idx);
        let mut terms: Vec<(Variable, f64)> = Vec::new();
        for &e in lg.out_edges(l) {
            terms.push((edge_vars[e.0], 1.0));
        }
        for &e in lg.in_edges(l) {
            terms.push((edge_vars[e.0], -1.0));
        }
        terms.extend(theta_coeff(idx));
        if !terms.is_empty() {
            problem.add_constraint(terms, ComparisonOp::Eq, 0.0);
        }
    }
    edge_vars
}

#[allow(clippy::too_many_arguments)]
fn add_unicast(
    problem: &mut Problem,
    lg: &LayeredGraph,
    source: NodeId,
    dest: NodeId,
    dir: f64,
    theta: Variable,
    link_terms: &mut [Vec<(Variable, f64)>],
    node_terms: &mut [Vec<(Variable, f64)>],
) {
    let s = lg.lnode_index(LNode {
        layer: 0,
        node: source,
    });
    let d = lg.lnode_index(LNode {
        layer: lg.last_layer(),
        node: dest,
    });
    add_flow_system(
        problem,
        lg,
        |idx| {
            // out - in - dir*theta = 0 at the source; + dir*theta at the sink.
            if idx == s && idx == d {
                vec![]
            } else if idx == s {
                vec![(theta, -dir)]
            } else if idx == d {
                vec![(theta, dir)]
            } else {
                vec![]
            }
        },
        link_terms,
        node_terms,
    );
}

/// Trunk flow from the source into a split node y_v, plus one branch flow
/// from the split nodes to each terminal.
#[allow(clippy::too_many_arguments)]
fn add_two_terminal_multicast(
    problem: &mut Problem,
    lg: &LayeredGraph,
    source: NodeId,
    dests: (NodeId, NodeId),
    dir: f64,
    theta: Variable,
    link_terms: &mut [Vec<(Variable, f64)>],
    node_terms: &mut [Vec<(Variable, f64)>],
) {
    let s = lg.lnode_index(LNode {
        layer: 0,
        node: source,
    });
    let t1 = lg.lnode_index(LNode {
        layer: lg.last_layer(),
        node: dests.0,
    });
    let t2 = lg.lnode_index(LNode {
        layer: lg.last_layer(),
        node: dests.1,
    });
    let split: Vec<Variable> = (0..lg.lnode_count()).map(|_| problem.add_var(0.0, INF)).collect();
    // Trunk: sources dir*theta at s, sinks y_v everywhere.
    add_flow_system(
        problem,
        lg,
        |idx| {
            let mut terms = vec![(split[idx], 1.0)];
            if idx == s {
                terms.push((theta, -dir));
            }
            terms
        },
        link_terms,
        node_terms,
    );
    // Branches: sources y_v everywhere, sink dir*theta at the terminal.
    for t in [t1, t2] {
        add_flow_system(
            problem,
            lg,
            |idx| {
                let mut terms = vec![(split[idx], -1.0)];
                if idx == t {
                    terms.push((theta, dir));
                }
                terms
            },
            link_terms,
            node_terms,
        );
    }
}
