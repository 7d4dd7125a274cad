//! Built-in scenarios on the Abilene backbone, including the seeded
//! mixed-cast generator.

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chaining::{ServiceChain, ServiceFunction};
use crate::controller::{ArrivalKind, Commodity};
use crate::harness::{Policy, Scenario};
use crate::rat::{rat, rat_int, Rat};
use crate::topology::{abilene_preset, Directionality, Network, NodeId, ABILENE_UNDIRECTED_EDGES};

pub const PRESETS: [(&str, &str); 5] = [
    (
        "abilene-2uc",
        "two unicast commodities (1->11, 4->7) through a two-function chain at nodes 3 and 8",
    ),
    (
        "abilene-shrink",
        "one unicast commodity 2->7 through a flow-shrinking function (r=1/3, scale=1/3)",
    ),
    (
        "abilene-expand",
        "one unicast commodity 2->7 through a flow-expanding function (r=1, scale=3)",
    ),
    (
        "abilene-mc",
        "one multicast commodity 1->{7,11} through a two-function chain at nodes 3 and 8",
    ),
    (
        "mixed-18",
        "seeded generator: three chains, 12 unicast + 6 multicast commodities, random scalings and hosts",
    ),
];

fn base_scenario(
    name: &str,
    network: Network,
    chains: Vec<ServiceChain>,
    commodities: Vec<Commodity>,
    lambda_grid: Vec<Rat>,
) -> Scenario {
    Scenario {
        name: name.to_string(),
        network,
        chains: chains.into_iter().map(|c| (c.id.clone(), c)).collect(),
        commodities,
        policy: Policy::UcncEnto,
        horizon: 100_000,
        seed: 1,
        lambda_grid,
    }
}

fn commodity(id: &str, net: &Network, source: &str, dests: &[&str], chain: &str) -> Commodity {
    Commodity {
        id: id.to_string(),
        source: net.node_id(source).expect("preset node"),
        destinations: dests
            .iter()
            .map(|d| net.node_id(d).expect("preset node"))
            .collect(),
        chain_id: chain.to_string(),
        rate: rat_int(1),
        arrivals: ArrivalKind::Poisson,
    }
}

fn hosts38(net: &Network) -> [NodeId; 2] {
    [net.node_id("3").unwrap(), net.node_id("8").unwrap()]
}

/// Looks up a built-in scenario; `mixed-18` uses generator seed 1.
pub fn preset(name: &str) -> Option<Scenario> {
    let net = abilene_preset();
    match name {
        "abilene-2uc" => {
            let h = hosts38(&net);
            let chain = ServiceChain::new(
                "phi",
                vec![
                    ServiceFunction::new(rat_int(1), rat_int(1), h),
                    ServiceFunction::new(rat_int(1), rat_int(1), h),
                ],
            );
            let commodities = vec![
                commodity("c1", &net, "1", &["11"], "phi"),
                commodity("c2", &net, "4", &["7"], "phi"),
            ];
            Some(base_scenario(
                name,
                net,
                vec![chain],
                commodities,
                vec![
                    rat(30, 100),
                    rat(35, 100),
                    rat(40, 100),
                    rat(45, 100),
                    rat(50, 100),
                    rat(55, 100),
                ],
            ))
        }
        "abilene-shrink" => {
            let h = hosts38(&net);
            let chain = ServiceChain::new(
                "phi",
                vec![ServiceFunction::new(rat(1, 3), rat(1, 3), h)],
            );
            let commodities = vec![commodity("c1", &net, "2", &["7"], "phi")];
            Some(base_scenario(
                name,
                net,
                vec![chain],
                commodities,
                vec![rat_int(1), rat(3, 2), rat_int(2), rat(5, 2), rat_int(3)],
            ))
        }
        "abilene-expand" => {
            let h = hosts38(&net);
            let chain = ServiceChain::new(
                "phi",
                vec![ServiceFunction::new(rat_int(1), rat_int(3), h)],
            );
            let commodities = vec![commodity("c1", &net, "2", &["7"], "phi")];
            Some(base_scenario(
                name,
                net,
                vec![chain],
                commodities,
                vec![rat(3, 10), rat(1, 2), rat(2, 3), rat(4, 5), rat_int(1)],
            ))
        }
        "abilene-mc" => {
            let h = hosts38(&net);
            let chain = ServiceChain::new(
                "phi",
                vec![
                    ServiceFunction::new(rat_int(1), rat_int(1), h),
                    ServiceFunction::new(rat_int(1), rat_int(1), h),
                ],
            );
            let commodities = vec![commodity("m1", &net, "1", &["7", "11"], "phi")];
            Some(base_scenario(
                name,
                net,
                vec![chain],
                commodities,
                vec![rat(1, 5), rat(2, 5), rat(3, 5), rat(4, 5), rat(9, 10)],
            ))
        }
        "mixed-18" => Some(mixed18(1)),
        _ => None,
    }
}

/// Mixed-cast generator: three chains (two of length 2, one of length 3),
/// per-function scalings drawn uniformly from {0.50, 0.51, ..., 2.00}, four
/// random hosts per function (unit capacity), and per chain four unicast
/// plus two 2-destination multicast commodities whose endpoints are at
/// least two hops apart. Fully determined by `generator_seed`.
pub fn mixed18(generator_seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(generator_seed);
    let template = abilene_preset();
    let n = template.node_count();
    let chain_lengths = [2usize, 2, 3];

    let mut chains = Vec::new();
    let mut all_hosts: BTreeSet<usize> = BTreeSet::new();
    let mut chain_hosts: Vec<Vec<BTreeSet<usize>>> = Vec::new();
    let mut chain_scalings: Vec<Vec<(Rat, Rat)>> = Vec::new();
    for &m in &chain_lengths {
        let mut fns_hosts = Vec::new();
        let mut fns_scalings = Vec::new();
        for _ in 0..m {
            let r = rat(rng.gen_range(50..=200), 100);
            let xi = rat(rng.gen_range(50..=200), 100);
            let mut hosts: BTreeSet<usize> = BTreeSet::new();
            while hosts.len() < 4 {
                hosts.insert(rng.gen_range(0..n));
            }
            all_hosts.extend(hosts.iter().copied());
            fns_hosts.push(hosts);
            fns_scalings.push((r, xi));
        }
        chain_hosts.push(fns_hosts);
        chain_scalings.push(fns_scalings);
    }

    // Same backbone, compute capacity only at drawn hosts.
    let nodes = (1..=n)
        .map(|i| {
            let cap = if all_hosts.contains(&(i - 1)) {
                rat_int(1)
            } else {
                rat_int(0)
            };
            (i.to_string(), cap)
        })
        .collect();
    let mut links = Vec::new();
    for (u, v) in ABILENE_UNDIRECTED_EDGES {
        links.push((u.to_string(), v.to_string(), rat_int(1)));
        links.push((v.to_string(), u.to_string(), rat_int(1)));
    }
    let network = Network::build(Directionality::Directed, nodes, links)
        .expect("generator topology is valid");

    for (ci, (hosts, scalings)) in chain_hosts.iter().zip(chain_scalings.iter()).enumerate() {
        let functions = hosts
            .iter()
            .zip(scalings.iter())
            .map(|(hs, (r, xi))| {
                ServiceFunction::new(
                    r.clone(),
                    xi.clone(),
                    hs.iter().map(|&h| NodeId(h)),
                )
            })
            .collect();
        chains.push(ServiceChain::new(format!("phi{}", ci + 1), functions));
    }

    // Hop distances on the shared backbone.
    let dist: Vec<Vec<Option<usize>>> = (0..n)
        .map(|u| network.hop_distances(NodeId(u)))
        .collect();
    let far_enough = |s: usize, d: usize| dist[s][d].is_some_and(|h| h >= 2);
    let mut commodities = Vec::new();
    for (ci, chain) in chains.iter().enumerate() {
        for k in 0..4 {
            let (s, d) = loop {
                let s = rng.gen_range(0..n);
                let d = rng.gen_range(0..n);
                if s != d && far_enough(s, d) {
                    break (s, d);
                }
            };
            commodities.push(Commodity {
                id: format!("u{}-{}", ci + 1, k + 1),
                source: NodeId(s),
                destinations: [NodeId(d)].into(),
                chain_id: chain.id.clone(),
                rate: rat_int(1),
                arrivals: ArrivalKind::Poisson,
            });
        }
        for k in 0..2 {
            let (s, d1, d2) = loop {
                let s = rng.gen_range(0..n);
                let d1 = rng.gen_range(0..n);
                let d2 = rng.gen_range(0..n);
                if s != d1 && s != d2 && d1 != d2 && far_enough(s, d1) && far_enough(s, d2) {
                    break (s, d1, d2);
                }
            };
            commodities.push(Commodity {
                id: format!("m{}-{}", ci + 1, k + 1),
                source: NodeId(s),
                destinations: [NodeId(d1), NodeId(d2)].into(),
                chain_id: chain.id.clone(),
                rate: rat_int(1),
                arrivals: ArrivalKind::Poisson,
            });
        }
    }

    Scenario {
        name: format!("mixed-18(seed={generator_seed})"),
        network,
        chains: chains.into_iter().map(|c| (c.id.clone(), c)).collect(),
        commodities,
        policy: Policy::UcncEnto,
        horizon: 100_000,
        seed: 1,
        lambda_grid: vec![
            rat(2, 100),
            rat(4, 100),
            rat(6, 100),
            rat(8, 100),
            rat(10, 100),
            rat(12, 100),
        ],
    }
}
