//! Physical network model: nodes with processing capacity, links with
//! transmission capacity, directed or undirected.

use std::collections::BTreeMap;

use num_traits::Signed;
use thiserror::Error;

use crate::rat::{rat_int, rat_to_f64, Rat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkId(pub usize);

/// A directed arc. In a directed network every stored link is one arc; in an
/// undirected network each stored link yields a forward and a reversed arc
/// that share the link's capacity and queues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Arc {
    pub link: LinkId,
    pub reversed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Directionality {
    Directed,
    Undirected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub name: String,
    pub compute_capacity: Rat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub from: NodeId,
    pub to: NodeId,
    pub capacity: Rat,
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("link references unknown node `{0}`")]
    UnknownNode(String),
    #[error("self-loop link at `{0}`")]
    SelfLoop(String),
    #[error("duplicate link {0} -> {1}")]
    DuplicateLink(String, String),
    #[error("negative capacity on {0}")]
    NegativeCapacity(String),
}

#[derive(Debug, Clone)]
pub struct Network {
    nodes: Vec<NodeSpec>,
    links: Vec<LinkSpec>,
    directionality: Directionality,
    name_index: BTreeMap<String, NodeId>,
    out_arcs: Vec<Vec<Arc>>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.links == other.links
            && self.directionality == other.directionality
    }
}

impl Network {
    pub fn build(
        directionality: Directionality,
        nodes: Vec<(String, Rat)>,
        links: Vec<(String, String, Rat)>,
    ) -> Result<Network, TopologyError> {
        let mut name_index = BTreeMap::new();
        let mut node_specs = Vec::with_capacity(nodes.len());
        for (i, (name, cap)) in nodes.into_iter().enumerate() {
            if cap.is_negative() {
                return Err(TopologyError::NegativeCapacity(format!("node `{name}`")));
            }
            if name_index.insert(name.clone(), NodeId(i)).is_some() {
                return Err(TopologyError::DuplicateNode(name));
            }
            node_specs.push(NodeSpec {
                name,
                compute_capacity: cap,
            });
        }
        let mut link_specs = Vec::with_capacity(links.len());
        let mut seen = BTreeMap::new();
        for (from, to, cap) in links {
            let &u = name_index
                .get(&from)
                .ok_or_else(|| TopologyError::UnknownNode(from.clone()))?;
            let &v = name_index
                .get(&to)
                .ok_or_else(|| TopologyError::UnknownNode(to.clone()))?;
            if u == v {
                return Err(TopologyError::SelfLoop(from));
            }
            if cap.is_negative() {
                return Err(TopologyError::NegativeCapacity(format!(
                    "link {from} -> {to}"
                )));
            }
            let key = match directionality {
                Directionality::Directed => (u, v),
                // An undirected link is stored once; either orientation is a dup.
                Directionality::Undirected => (u.min(v), u.max(v)),
            };
            if seen.insert(key, ()).is_some() {
                return Err(TopologyError::DuplicateLink(from, to));
            }
            link_specs.push(LinkSpec {
                from: u,
                to: v,
                capacity: cap,
            });
        }
        let mut out_arcs = vec![Vec::new(); node_specs.len()];
        for (i, link) in link_specs.iter().enumerate() {
            out_arcs[link.from.0].push(Arc {
                link: LinkId(i),
                reversed: false,
            });
            if directionality == Directionality::Undirected {
                out_arcs[link.to.0].push(Arc {
                    link: LinkId(i),
                    reversed: true,
                });
            }
        }
        Ok(Network {
            nodes: node_specs,
            links: link_specs,
            directionality,
            name_index,
            out_arcs,
        })
    }

    pub fn directionality(&self) -> Directionality {
        self.directionality
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Stored links. In a directed network this equals the arc count; in an
    /// undirected network each stored link carries both directions.
    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.name_index.get(name).copied()
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id.0].name
    }

    pub fn node_spec(&self, id: NodeId) -> &NodeSpec {
        &self.nodes[id.0]
    }

    pub fn compute_capacity(&self, id: NodeId) -> &Rat {
        &self.nodes[id.0].compute_capacity
    }

    pub fn link_spec(&self, id: LinkId) -> &LinkSpec {
        &self.links[id.0]
    }

    pub fn link_capacity(&self, id: LinkId) -> &Rat {
        &self.links[id.0].capacity
    }

    pub fn arc_endpoints(&self, arc: Arc) -> (NodeId, NodeId) {
        let link = &self.links[arc.link.0];
        if arc.reversed {
            (link.to, link.from)
        } else {
            (link.from, link.to)
        }
    }

    pub fn out_arcs(&self, node: NodeId) -> &[Arc] {
        &self.out_arcs[node.0]
    }

    pub fn arcs(&self) -> impl Iterator<Item = Arc> + '_ {
        self.links.iter().enumerate().flat_map(move |(i, _)| {
            let fwd = Arc {
                link: LinkId(i),
                reversed: false,
            };
            let rev = (self.directionality == Directionality::Undirected).then_some(Arc {
                link: LinkId(i),
                reversed: true,
            });
            std::iter::once(fwd).chain(rev)
        })
    }

    pub fn compute_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().enumerate().filter_map(|(i, n)| {
            (n.compute_capacity > rat_int(0)).then_some(NodeId(i))
        })
    }

    pub fn link_capacities_f64(&self) -> Vec<f64> {
        self.links.iter().map(|l| rat_to_f64(&l.capacity)).collect()
    }

    pub fn node_capacities_f64(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .map(|n| rat_to_f64(&n.compute_capacity))
            .collect()
    }

    /// Hop counts from `from` along arcs (BFS); `None` for unreachable nodes.
    pub fn hop_distances(&self, from: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.nodes.len()];
        dist[from.0] = Some(0);
        let mut queue = std::collections::VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u.0].unwrap();
            for &arc in &self.out_arcs[u.0] {
                let (_, v) = self.arc_endpoints(arc);
                if dist[v.0].is_none() {
                    dist[v.0] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Hop counts to `to` along arcs (reverse BFS).
    pub fn hop_distances_to(&self, to: NodeId) -> Vec<Option<usize>> {
        let mut rev_adj = vec![Vec::new(); self.nodes.len()];
        for arc in self.arcs() {
            let (u, v) = self.arc_endpoints(arc);
            rev_adj[v.0].push(u);
        }
        let mut dist = vec![None; self.nodes.len()];
        dist[to.0] = Some(0);
        let mut queue = std::collections::VecDeque::from([to]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u.0].unwrap();
            for &v in &rev_adj[u.0] {
                if dist[v.0].is_none() {
                    dist[v.0] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Connectivity of the underlying undirected graph.
    pub fn is_connected_undirected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for l in &self.links {
            adj[l.from.0].push(l.to);
            adj[l.to.0].push(l.from);
        }
        let mut seen = vec![false; self.nodes.len()];
        seen[0] = true;
        let mut stack = vec![NodeId(0)];
        while let Some(u) = stack.pop() {
            for &v in &adj[u.0] {
                if !seen[v.0] {
                    seen[v.0] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// The 14-edge Abilene backbone with both directions materialized as unit-
/// capacity directed links. Node numbering west to east:
///
/// | id | city          | id | city         |
/// |----|---------------|----|--------------|
/// | 1  | Seattle       | 7  | Atlanta      |
/// | 2  | Sunnyvale     | 8  | Indianapolis |
/// | 3  | Denver        | 9  | Chicago      |
/// | 4  | Los Angeles   | 10 | New York     |
/// | 5  | Houston       | 11 | Washington   |
/// | 6  | Kansas City   |    |              |
///
/// Nodes 3 and 8 carry unit processing capacity; every other node is a pure
/// router.
pub const ABILENE_UNDIRECTED_EDGES: [(usize, usize); 14] = [
    (1, 2),
    (1, 3),
    (2, 3),
    (2, 4),
    (3, 6),
    (4, 5),
    (5, 6),
    (5, 7),
    (6, 8),
    (7, 8),
    (7, 11),
    (8, 9),
    (9, 10),
    (10, 11),
];

pub fn abilene_preset() -> Network {
    let nodes = (1..=11)
        .map(|i| {
            let cap = if i == 3 || i == 8 {
                rat_int(1)
            } else {
                rat_int(0)
            };
            (i.to_string(), cap)
        })
        .collect();
    let mut links = Vec::with_capacity(28);
    for (u, v) in ABILENE_UNDIRECTED_EDGES {
        links.push((u.to_string(), v.to_string(), rat_int(1)));
        links.push((v.to_string(), u.to_string(), rat_int(1)));
    }
    Network::build(Directionality::Directed, nodes, links)
        .expect("preset topology is statically valid")
}
