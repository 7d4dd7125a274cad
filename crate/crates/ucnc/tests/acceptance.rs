//! Acceptance suite: one test per criterion, each printing a pass line with
//! the measured values. Horizons are 10^5 slots unless a criterion is about
//! something other than stability. Run with `--nocapture` to see the lines.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ucnc::chaining::{build_layered_graph, Route, ServiceChain, ServiceFunction};
use ucnc::controller::{
    edge_costs, measured_approx_ratio, select_route_multicast, select_route_unicast,
    ArrivalKind, Commodity, VirtualQueues,
};
use ucnc::harness::{self, presets, Policy, Scenario};
use ucnc::oracle::{
    compact::max_scalar_rate_compact, compose_flow, conservation_exempt_nodes, decompose_flow,
    enumerate_routes, verify_conservation, CapacityDecision, CapacityOracle, EnumerationBounds,
    RateVector, ThetaStar,
};
use ucnc::rat::{rat, rat_from_f64_bounded, rat_int, Rat};
use ucnc::topology::{Directionality, Network, NodeId};

/// Queue-growth slope below this is stable.
const STABLE_SLOPE: f64 = 1e-3;
/// Slope above this is saturated overload (criteria 1-4).
const OVERLOAD_SLOPE: f64 = 1e-1;
/// Overload threshold for the mixed-18 runs, whose binding excess is small.
const MIXED_OVERLOAD_SLOPE: f64 = 1e-2;

fn theta(oracle: &CapacityOracle, direction: Vec<Rat>) -> Rat {
    match oracle.max_scalar_rate(&RateVector(direction)).unwrap() {
        ThetaStar::Finite(t) => t,
        ThetaStar::Unbounded => panic!("unexpected unbounded rate"),
    }
}

fn oracle_for<'a>(s: &'a Scenario) -> CapacityOracle<'a> {
    CapacityOracle::build(
        &s.network,
        &s.chains,
        &s.commodities,
        &EnumerationBounds::default(),
    )
    .unwrap()
}

fn run_slope(s: &Scenario, multiplier: Rat, policy: Policy) -> f64 {
    let mut s = s.clone();
    s.policy = policy;
    harness::run(&s, &multiplier, s.seed, false).unwrap().growth_slope
}

#[test]
fn criterion_01_capacity_boundary_two_unicast() {
    let s = presets::preset("abilene-2uc").unwrap();
    let oracle = oracle_for(&s);
    let t = theta(&oracle, vec![rat_int(1), rat_int(1)]);
    assert_eq!(t, rat(1, 2), "symmetric boundary must be exactly 1/2");

    let m_stable = harness::run(&s, &rat(45, 100), s.seed, false).unwrap();
    assert!(
        m_stable.growth_slope < STABLE_SLOPE,
        "slope {} at 0.45",
        m_stable.growth_slope
    );
    for cm in &m_stable.per_commodity {
        assert!(
            (cm.throughput - 0.45).abs() <= 0.05 * 0.45,
            "throughput {} of `{}` not within 5% of 0.45",
            cm.throughput,
            cm.id
        );
    }
    let m_over = harness::run(&s, &rat(55, 100), s.seed, false).unwrap();
    assert!(
        m_over.growth_slope > OVERLOAD_SLOPE,
        "slope {} at 0.55",
        m_over.growth_slope
    );
    println!(
        "[criterion 01] PASS theta*=1/2 exact; slope(0.45)={:.2e} < 1e-3; slope(0.55)={:.3} > 1e-1",
        m_stable.growth_slope, m_over.growth_slope
    );
}

#[test]
fn criterion_02_flow_shrinkage_vs_nearest_destination() {
    let s = presets::preset("abilene-shrink").unwrap();
    let oracle = oracle_for(&s);
    let unrestricted = theta(&oracle, vec![rat_int(1)]);
    assert_eq!(unrestricted, rat_int(3));

    // Restrict processing to node 8 (the placement the heuristic uses).
    let mut restricted = s.clone();
    let n8 = restricted.network.node_id("8").unwrap();
    restricted.chains.get_mut("phi").unwrap().functions[0].hosts = BTreeSet::from([n8]);
    let oracle8 = oracle_for(&restricted);
    let at8 = theta(&oracle8, vec![rat_int(1)]);
    assert_eq!(at8, rat_int(2));

    let ucnc = run_slope(&s, rat(5, 2), Policy::UcncEnto);
    let heuristic = run_slope(&s, rat(5, 2), Policy::NearestToDestination);
    assert!(ucnc < STABLE_SLOPE, "ucnc slope {ucnc} at 2.5");
    assert!(heuristic > OVERLOAD_SLOPE, "heuristic slope {heuristic} at 2.5");
    println!(
        "[criterion 02] PASS theta*=3 vs 2 exact; slope(ucnc@2.5)={ucnc:.2e}, slope(nearest-dest@2.5)={heuristic:.3}"
    );
}

#[test]
fn criterion_03_flow_expansion_vs_nearest_source() {
    let s = presets::preset("abilene-expand").unwrap();
    let oracle = oracle_for(&s);
    let unrestricted = theta(&oracle, vec![rat_int(1)]);
    assert_eq!(unrestricted, rat_int(1));

    let mut restricted = s.clone();
    let n3 = restricted.network.node_id("3").unwrap();
    restricted.chains.get_mut("phi").unwrap().functions[0].hosts = BTreeSet::from([n3]);
    let oracle3 = oracle_for(&restricted);
    let at3 = theta(&oracle3, vec![rat_int(1)]);
    assert_eq!(at3, rat(2, 3));

    let ucnc = run_slope(&s, rat(4, 5), Policy::UcncEnto);
    let heuristic = run_slope(&s, rat(4, 5), Policy::NearestToSource);
    assert!(ucnc < STABLE_SLOPE, "ucnc slope {ucnc} at 0.8");
    assert!(heuristic > OVERLOAD_SLOPE, "heuristic slope {heuristic} at 0.8");
    println!(
        "[criterion 03] PASS theta*=1 vs 2/3 exact; slope(ucnc@0.8)={ucnc:.2e}, slope(nearest-src@0.8)={heuristic:.3}"
    );
}

#[test]
fn criterion_04_multicast_gain() {
    let s = presets::preset("abilene-mc").unwrap();
    let oracle = oracle_for(&s);
    let mc = theta(&oracle, vec![rat_int(1)]);
    assert_eq!(mc, rat_int(1));

    // Split into per-destination unicasts: symmetric rate halves.
    let split: Vec<Commodity> =
        harness::multicast_as_unicast(&s.network, &s.commodities[0]).unwrap();
    let split_oracle = CapacityOracle::build(
        &s.network,
        &s.chains,
        &split,
        &EnumerationBounds::default(),
    )
    .unwrap();
    let uc = theta(&split_oracle, vec![rat_int(1), rat_int(1)]);
    assert_eq!(uc, rat(1, 2));

    let mc_stable = run_slope(&s, rat(9, 10), Policy::UcncEnto);
    let split_over = run_slope(&s, rat(9, 10), Policy::MulticastAsUnicast);
    let split_stable = run_slope(&s, rat(2, 5), Policy::MulticastAsUnicast);
    assert!(mc_stable < STABLE_SLOPE, "multicast slope {mc_stable} at 0.9");
    assert!(split_over > OVERLOAD_SLOPE, "split slope {split_over} at 0.9");
    assert!(split_stable < STABLE_SLOPE, "split slope {split_stable} at 0.4");
    println!(
        "[criterion 04] PASS theta*=1 vs 1/2 per destination; slopes mc@0.9={mc_stable:.2e}, split@0.9={split_over:.3}, split@0.4={split_stable:.2e}"
    );
}

#[test]
fn criterion_05_mixed_cast_statistical_reproduction() {
    let seeds: Vec<u64> = (1..=10).collect();
    let mut multicast_wins = 0usize;
    for &gs in &seeds {
        let s = presets::mixed18(gs);
        let ones = vec![rat_int(1); s.commodities.len()];
        let theta_mc =
            max_scalar_rate_compact(&s.network, &s.chains, &s.commodities, &ones).unwrap();
        let mut split = Vec::new();
        for c in &s.commodities {
            if c.is_multicast() {
                split.extend(harness::multicast_as_unicast(&s.network, c).unwrap());
            } else {
                split.push(c.clone());
            }
        }
        let ones24 = vec![rat_int(1); split.len()];
        let theta_uc =
            max_scalar_rate_compact(&s.network, &s.chains, &split, &ones24).unwrap();
        if theta_mc > theta_uc + 1e-6 {
            multicast_wins += 1;
        }

        let below = rat_from_f64_bounded(0.9 * theta_mc, 1_000_000);
        let above = rat_from_f64_bounded(1.1 * theta_mc, 1_000_000);
        let stable = harness::run(&s, &below, s.seed, false).unwrap().growth_slope;
        let over = harness::run(&s, &above, s.seed, false).unwrap().growth_slope;
        assert!(
            stable < STABLE_SLOPE,
            "seed {gs}: slope {stable} at 0.9*theta ({theta_mc})"
        );
        assert!(
            over > MIXED_OVERLOAD_SLOPE,
            "seed {gs}: slope {over} at 1.1*theta ({theta_mc})"
        );
    }
    assert!(
        multicast_wins * 10 >= seeds.len() * 8,
        "multicast rate exceeded split rate in only {multicast_wins}/{} seeds",
        seeds.len()
    );
    println!(
        "[criterion 05] PASS multicast theta* > split theta* in {multicast_wins}/10 seeds; UCNC stable at 0.9*theta* and unstable at 1.1*theta* in all 10"
    );
}

/// Deterministic small random instance for the oracle property criteria.
struct SmallInstance {
    net: Network,
    chain: ServiceChain,
    source: NodeId,
    destinations: BTreeSet<NodeId>,
}

fn random_instance(rng: &mut ChaCha8Rng, max_nodes: usize, max_terminals: usize) -> SmallInstance {
    loop {
        let n = rng.gen_range(3..=max_nodes);
        let mut nodes = Vec::new();
        for i in 0..n {
            // Give compute capacity to roughly half the nodes.
            let cap = if rng.gen_bool(0.5) { rat_int(1) } else { rat_int(0) };
            nodes.push((format!("n{i}"), cap));
        }
        let mut links = Vec::new();
        // Ring for connectivity plus a couple of chords; dense graphs have
        // too many arborescences to enumerate.
        for i in 0..n {
            links.push((format!("n{i}"), format!("n{}", (i + 1) % n), rat_int(1)));
        }
        for _ in 0..rng.gen_range(0..=2) {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a != b && !links.iter().any(|(x, y, _)| x == &format!("n{a}") && y == &format!("n{b}")) {
                links.push((format!("n{a}"), format!("n{b}"), rat_int(1)));
            }
        }
        let net = Network::build(Directionality::Directed, nodes, links).unwrap();
        let compute: Vec<NodeId> = net.compute_nodes().collect();
        let m = rng.gen_range(0..=2usize.min(compute.len()));
        let scaling_choices = [rat(1, 2), rat_int(1), rat_int(2)];
        let functions = (0..m)
            .map(|_| {
                let hosts: BTreeSet<NodeId> = (0..rng.gen_range(1..=compute.len()))
                    .map(|_| compute[rng.gen_range(0..compute.len())])
                    .collect();
                ServiceFunction::new(
                    scaling_choices[rng.gen_range(0..3)].clone(),
                    scaling_choices[rng.gen_range(0..3)].clone(),
                    hosts,
                )
            })
            .collect();
        let chain = ServiceChain::new("phi", functions);
        let source = NodeId(rng.gen_range(0..n));
        let terminal_count = rng.gen_range(1..=max_terminals.min(n - 1));
        let mut destinations = BTreeSet::new();
        while destinations.len() < terminal_count {
            let d = NodeId(rng.gen_range(0..n));
            if d != source {
                destinations.insert(d);
            }
        }
        let candidate = SmallInstance {
            net,
            chain,
            source,
            destinations,
        };
        // Keep only instances whose route sets enumerate quickly; bail out
        // of oversized ones early.
        if let Ok(lg) = build_layered_graph(&candidate.net, &candidate.chain) {
            let probe = EnumerationBounds {
                max_routes: 2_000,
                ..Default::default()
            };
            match enumerate_routes(&lg, candidate.source, &candidate.destinations, &probe) {
                Ok(routes) if !routes.is_empty() => return candidate,
                _ => continue,
            }
        }
    }
}

#[test]
fn criterion_06_oracle_soundness() {
    // Feasibility witnesses re-verify and theta* is tight on the presets.
    for name in ["abilene-2uc", "abilene-shrink", "abilene-expand", "abilene-mc"] {
        let s = presets::preset(name).unwrap();
        let oracle = oracle_for(&s);
        let dir = vec![rat_int(1); s.commodities.len()];
        let t = theta(&oracle, dir.clone());
        let boundary = RateVector(dir.iter().map(|d| d * &t).collect::<Vec<Rat>>());
        match oracle.capacity_feasible(&boundary).unwrap() {
            CapacityDecision::Feasible(fa) => {
                oracle.verify_assignment(&boundary, &fa).unwrap();
                let dump = oracle.export_assignment(&boundary, &fa);
                assert!(dump.contains("weight"));
            }
            CapacityDecision::Infeasible => panic!("{name}: boundary rate must be feasible"),
        }
        let beyond = RateVector(
            dir.iter()
                .map(|d| d * &(&t + rat(1, 1000)))
                .collect::<Vec<Rat>>(),
        );
        assert!(
            matches!(
                oracle.capacity_feasible(&beyond).unwrap(),
                CapacityDecision::Infeasible
            ),
            "{name}: theta*+1e-3 must be infeasible"
        );
    }

    // Compose-then-decompose round trip and conservation on 100 instances.
    let mut rng = ChaCha8Rng::seed_from_u64(0x6f7261636c65);
    let bounds = EnumerationBounds {
        max_routes: 2_000,
        ..Default::default()
    };
    for case in 0..100 {
        let inst = random_instance(&mut rng, 5, 2);
        let lg = build_layered_graph(&inst.net, &inst.chain).unwrap();
        let routes = enumerate_routes(&lg, inst.source, &inst.destinations, &bounds).unwrap();
        let take = routes.len().min(3);
        let parts: Vec<(Route, Rat)> = routes
            .iter()
            .take(take)
            .map(|r| {
                (
                    r.clone(),
                    rat(rng.gen_range(1..=6), rng.gen_range(1..=6)),
                )
            })
            .collect();
        let flow = compose_flow(&lg, &parts);
        let d = decompose_flow(&lg, &flow, inst.source, &inst.destinations, &bounds)
            .unwrap_or_else(|e| panic!("case {case}: decompose failed: {e}"));
        assert_eq!(compose_flow(&lg, &d.parts), flow, "case {case}: round trip");

        // Conservation holds on every route-induced flow and flags a
        // perturbed edge.
        let exempt = conservation_exempt_nodes(&lg, &parts);
        assert!(
            verify_conservation(&lg, &flow, &exempt).is_empty(),
            "case {case}: conservation violated on composed flow"
        );
        let (&edge, _) = flow.iter().next().unwrap();
        let mut perturbed = flow.clone();
        *perturbed.get_mut(&edge).unwrap() += rat(1, 7);
        let violations = verify_conservation(&lg, &perturbed, &exempt);
        let endpoints = BTreeSet::from([
            lg.lnode_index(lg.edge(edge).from),
            lg.lnode_index(lg.edge(edge).to),
        ]);
        let flagged: BTreeSet<usize> = violations.iter().map(|(i, _)| *i).collect();
        let expected: BTreeSet<usize> =
            endpoints.difference(&exempt).copied().collect();
        assert_eq!(flagged, expected, "case {case}: perturbation flags endpoints");
    }
    println!("[criterion 06] PASS witnesses re-verified, theta* tight, 100 compose/decompose round trips exact, conservation checks flag perturbations");
}

#[test]
fn criterion_07_controller_matches_enumerated_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x706f6c696379);
    let bounds = EnumerationBounds {
        max_routes: 2_000,
        ..Default::default()
    };
    let mut max_ratio = 1.0f64;
    for case in 0..50 {
        let inst = random_instance(&mut rng, 8, 3);
        let lg = build_layered_graph(&inst.net, &inst.chain).unwrap();
        // Dyadic queue values keep every cost sum exact in f64.
        let mut vq = VirtualQueues::new(&inst.net);
        for q in vq.link.iter_mut() {
            *q = rng.gen_range(0..64) as f64 / 16.0;
        }
        for q in vq.node.iter_mut() {
            *q = rng.gen_range(0..64) as f64 / 16.0;
        }
        let costs = edge_costs(&vq, lg.profile(), &lg);
        let routes = enumerate_routes(&lg, inst.source, &inst.destinations, &bounds).unwrap();
        let best_cost = routes
            .iter()
            .map(|r| r.cost(&costs))
            .fold(f64::INFINITY, f64::min);
        let selected = if inst.destinations.len() == 1 {
            let &d = inst.destinations.iter().next().unwrap();
            select_route_unicast(&lg, &costs, inst.source, d).unwrap()
        } else {
            select_route_multicast(&lg, &costs, inst.source, &inst.destinations).unwrap()
        };
        assert_eq!(
            selected.cost(&costs),
            best_cost,
            "case {case}: selected cost differs from enumerated minimum"
        );
        if inst.destinations.len() > 1 {
            let ratio = measured_approx_ratio(&lg, &costs, inst.source, &inst.destinations)
                .unwrap()
                .unwrap();
            assert!(
                ratio <= 2.0 + 1e-12,
                "case {case}: approximation ratio {ratio} exceeds 2"
            );
            max_ratio = max_ratio.max(ratio);
        }
    }
    println!(
        "[criterion 07] PASS 50 instances: selected routes equal enumerated minima; max measured approx ratio {max_ratio:.3} <= 2"
    );
}

#[test]
fn criterion_08_scheduling_properties() {
    // Audited ENTO run on the two-unicast scenario.
    let s = presets::preset("abilene-2uc").unwrap();
    let m = harness::run(&s, &rat(45, 100), s.seed, true).unwrap();
    let audit = m.audit.unwrap();
    assert_eq!(audit.priority_violations, 0);
    assert_eq!(audit.work_conservation_violations, 0);
    // Hop bound n*(M+1) = 11*3.
    assert!(audit.max_hops_seen <= 33, "max hops {}", audit.max_hops_seen);
    // Physical rate stability inside the region: max_e Q_e(T)/T < 1e-2.
    assert!(
        m.max_final_queue_over_horizon < 1e-2,
        "rate stability {} at 0.45",
        m.max_final_queue_over_horizon
    );

    // Multicast run exercises duplication inheritance.
    let mc = presets::preset("abilene-mc").unwrap();
    let m2 = harness::run(&mc, &rat(1, 2), mc.seed, true).unwrap();
    let audit2 = m2.audit.unwrap();
    assert!(audit2.duplications_checked > 0);
    assert_eq!(audit2.duplication_hop_violations, 0);
    assert_eq!(audit2.priority_violations, 0);

    // FIFO stays stable at the same operating point.
    let fifo_slope = run_slope(&s, rat(45, 100), Policy::UcncFifo);
    assert!(fifo_slope < STABLE_SLOPE, "fifo slope {fifo_slope}");
    println!(
        "[criterion 08] PASS audited ENTO order clean over {} slots, {} duplications inherit hops, max hops {} <= 33, fifo slope {fifo_slope:.2e}",
        audit.slots_checked, audit2.duplications_checked, audit.max_hops_seen
    );
}

fn undirected_line() -> (Network, BTreeMap<String, ServiceChain>, Vec<Commodity>) {
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
    let chains = BTreeMap::from([("fwd".to_string(), ServiceChain::new("fwd", vec![]))]);
    let commodities = vec![
        Commodity {
            id: "right".into(),
            source: net.node_id("a").unwrap(),
            destinations: [net.node_id("c").unwrap()].into(),
            chain_id: "fwd".into(),
            rate: rat_int(1),
            arrivals: ArrivalKind::Poisson,
        },
        Commodity {
            id: "left".into(),
            source: net.node_id("c").unwrap(),
            destinations: [net.node_id("a").unwrap()].into(),
            chain_id: "fwd".into(),
            rate: rat_int(1),
            arrivals: ArrivalKind::Poisson,
        },
    ];
    (net, chains, commodities)
}

#[test]
fn criterion_09_undirected_capacity_halves() {
    let (net, chains, commodities) = undirected_line();
    let oracle =
        CapacityOracle::build(&net, &chains, &commodities, &EnumerationBounds::default())
            .unwrap();
    let shared = theta(&oracle, vec![rat_int(1), rat_int(1)]);
    assert_eq!(shared, rat(1, 2));

    // The directed twin has a unit capacity per direction.
    let directed = Network::build(
        Directionality::Directed,
        vec![
            ("a".into(), rat_int(0)),
            ("b".into(), rat_int(0)),
            ("c".into(), rat_int(0)),
        ],
        vec![
            ("a".into(), "b".into(), rat_int(1)),
            ("b".into(), "a".into(), rat_int(1)),
            ("b".into(), "c".into(), rat_int(1)),
            ("c".into(), "b".into(), rat_int(1)),
        ],
    )
    .unwrap();
    let directed_commodities: Vec<Commodity> = commodities
        .iter()
        .map(|c| Commodity {
            source: NodeId(c.source.0),
            destinations: c.destinations.iter().map(|d| NodeId(d.0)).collect(),
            ..c.clone()
        })
        .collect();
    let oracle_dir = CapacityOracle::build(
        &directed,
        &chains,
        &directed_commodities,
        &EnumerationBounds::default(),
    )
    .unwrap();
    let per_direction = theta(&oracle_dir, vec![rat_int(1), rat_int(1)]);
    assert_eq!(per_direction, rat_int(1));
    assert_eq!(shared, per_direction / rat_int(2), "capacity halves");

    // UCNC with both-direction arrivals stays stable strictly inside.
    let scenario = Scenario {
        name: "undirected-line".into(),
        network: net,
        chains,
        commodities,
        policy: Policy::UcncEnto,
        horizon: 100_000,
        seed: 1,
        lambda_grid: vec![rat(45, 100)],
    };
    let slope = harness::run(&scenario, &rat(45, 100), 1, false)
        .unwrap()
        .growth_slope;
    assert!(slope < STABLE_SLOPE, "slope {slope} at 0.45 per direction");
    println!(
        "[criterion 09] PASS undirected theta*=1/2 vs directed 1; slope(0.45/direction)={slope:.2e}"
    );
}

#[test]
fn criterion_10_byte_identical_csv() {
    let mut s = presets::preset("abilene-mc").unwrap();
    s.horizon = 5_000;
    let grid = [rat(3, 10), rat(1, 2)];
    let seeds = [1u64, 2];
    let first = harness::sweep(&s, &grid, &seeds).unwrap();
    let second = harness::sweep(&s, &grid, &seeds).unwrap();
    assert_eq!(first.as_bytes(), second.as_bytes());
    // Also across policies sharing a scenario.
    s.policy = Policy::MulticastAsUnicast;
    let third = harness::sweep(&s, &grid, &seeds).unwrap();
    let fourth = harness::sweep(&s, &grid, &seeds).unwrap();
    assert_eq!(third.as_bytes(), fourth.as_bytes());
    assert_ne!(first.as_bytes(), third.as_bytes());
    println!("[criterion 10] PASS identical (scenario, seed) sweeps are byte-identical");
}
