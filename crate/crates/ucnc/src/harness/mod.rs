//! Scenario runner: builds the per-chain layered graphs, drives the slot
//! loop (arrivals, route selection, admission, service, virtual-queue
//! update), and emits CSV metrics across rate sweeps and seeds.

pub mod config;
pub mod presets;

use std::collections::BTreeMap;
use std::rc::Rc;

use rand::distributions::{Bernoulli, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use thiserror::Error;

use crate::chaining::{build_layered_graph, ChainingError, EdgeKind, LayeredGraph, Route, RouteError, ServiceChain};
use crate::controller::{
    edge_costs, select_route_multicast, select_route_unicast, update_virtual_queues,
    virtual_arrivals, ArrivalKind, ArrivalLoads, Commodity, VirtualQueues,
};
use crate::dataplane::{AuditReport, Dataplane, DataplaneError, RouteRuntime, SchedulingPolicy};
use crate::rat::{format_rat, rat_to_f64, Rat};
use crate::topology::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    UcncEnto,
    UcncFifo,
    NearestToSource,
    NearestToDestination,
    MulticastAsUnicast,
}

impl Policy {
    pub const ALL: [Policy; 5] = [
        Policy::UcncEnto,
        Policy::UcncFifo,
        Policy::NearestToSource,
        Policy::NearestToDestination,
        Policy::MulticastAsUnicast,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::UcncEnto => "ucnc-ento",
            Policy::UcncFifo => "ucnc-fifo",
            Policy::NearestToSource => "nearest-to-source",
            Policy::NearestToDestination => "nearest-to-destination",
            Policy::MulticastAsUnicast => "multicast-as-unicast",
        }
    }

    pub fn parse(s: &str) -> Option<Policy> {
        Policy::ALL.into_iter().find(|p| p.name() == s)
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Chain(#[from] ChainingError),
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error(transparent)]
    Dataplane(#[from] DataplaneError),
    #[error("commodity `{0}` references unknown chain `{1}`")]
    UnknownChain(String, String),
    #[error("scenario has no commodities")]
    NoCommodities,
    #[error("sweep needs at least one seed")]
    EmptySeeds,
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("sweep grid must be sorted ascending")]
    GridNotSorted,
    #[error("multicast-as-unicast needs at least one multicast commodity")]
    NoMulticastCommodity,
    #[error("`{0}` is not a multicast commodity")]
    NotMulticast(String),
    #[error("no computation node reachable for commodity `{0}`")]
    NoComputeNode(String),
    #[error("computation node `{0}` cannot host function {1} of chain `{2}`")]
    CannotHostChain(String, usize, String),
    #[error("Bernoulli arrival rate {0} exceeds 1 for commodity `{1}`")]
    BernoulliRate(String, String),
    #[error("scenario invalid: {0}")]
    Validation(String),
}

/// A complete experiment description.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub network: Network,
    pub chains: BTreeMap<String, ServiceChain>,
    pub commodities: Vec<Commodity>,
    pub policy: Policy,
    pub horizon: u64,
    pub seed: u64,
    pub lambda_grid: Vec<Rat>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.commodities.is_empty() {
            return Err(HarnessError::NoCommodities);
        }
        if self.horizon < 1 {
            return Err(HarnessError::Validation("horizon must be at least 1".into()));
        }
        if self.lambda_grid.is_empty() {
            return Err(HarnessError::EmptyGrid);
        }
        for chain in self.chains.values() {
            chain.validate(&self.network)?;
        }
        let mut any_chain_nonempty = false;
        for c in &self.commodities {
            let chain = self
                .chains
                .get(&c.chain_id)
                .ok_or_else(|| HarnessError::UnknownChain(c.id.clone(), c.chain_id.clone()))?;
            any_chain_nonempty |= !chain.is_empty();
            if c.destinations.is_empty() {
                return Err(HarnessError::Validation(format!(
                    "commodity `{}` has no destinations",
                    c.id
                )));
            }
        }
        if any_chain_nonempty && self.network.compute_nodes().next().is_none() {
            return Err(HarnessError::Validation(
                "no node has processing capacity but a chain needs it".into(),
            ));
        }
        if self.policy == Policy::MulticastAsUnicast
            && !self.commodities.iter().any(Commodity::is_multicast)
        {
            return Err(HarnessError::NoMulticastCommodity);
        }
        Ok(())
    }
}

/// Splits a multicast commodity into one unicast commodity per destination,
/// keeping source, chain, rate, and arrival law.
pub fn multicast_as_unicast(
    net: &Network,
    commodity: &Commodity,
) -> Result<Vec<Commodity>, HarnessError> {
    if !commodity.is_multicast() {
        return Err(HarnessError::NotMulticast(commodity.id.clone()));
    }
    Ok(commodity
        .destinations
        .iter()
        .map(|&d| Commodity {
            id: format!("{}#{}", commodity.id, net.node_name(d)),
            source: commodity.source,
            destinations: [d].into(),
            chain_id: commodity.chain_id.clone(),
            rate: commodity.rate.clone(),
            arrivals: commodity.arrivals,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NearestFlavor {
    Source,
    Destination,
}

/// Fixed-placement baseline: pick the computation node closest to the
/// source (or destination), run the whole chain there, and connect it with
/// shortest-hop paths. Scheduling stays as configured.
pub fn nearest_route(
    net: &Network,
    chains: &BTreeMap<String, ServiceChain>,
    lg: &LayeredGraph,
    commodity: &Commodity,
    flavor: NearestFlavor,
) -> Result<Route, HarnessError> {
    let chain = chains
        .get(&commodity.chain_id)
        .ok_or_else(|| HarnessError::UnknownChain(commodity.id.clone(), commodity.chain_id.clone()))?;
    let dist: Vec<Option<usize>> = match flavor {
        NearestFlavor::Source => net.hop_distances(commodity.source),
        NearestFlavor::Destination => {
            let per_dest: Vec<Vec<Option<usize>>> = commodity
                .destinations
                .iter()
                .map(|&d| net.hop_distances_to(d))
                .collect();
            (0..net.node_count())
                .map(|v| per_dest.iter().filter_map(|m| m[v]).min())
                .collect()
        }
    };
    let chosen = net
        .compute_nodes()
        .filter_map(|v| dist[v.0].map(|d| (d, v)))
        .min()
        .map(|(_, v)| v)
        .ok_or_else(|| HarnessError::NoComputeNode(commodity.id.clone()))?;
    for (i, f) in chain.functions.iter().enumerate() {
        if !f.hosts.contains(&chosen) {
            return Err(HarnessError::CannotHostChain(
                net.node_name(chosen).to_string(),
                i + 1,
                chain.id.clone(),
            ));
        }
    }
    // Hop-count costs with all other hosts barred force the shortest-hop
    // route through the chosen node.
    let costs: Vec<f64> = lg
        .edges()
        .map(|(_, e)| match e.kind {
            EdgeKind::Transmission { .. } => 1.0,
            EdgeKind::Computation { node, .. } if node == chosen => 0.0,
            EdgeKind::Computation { .. } => f64::INFINITY,
        })
        .collect();
    let route = if commodity.is_multicast() {
        select_route_multicast(lg, &costs, commodity.source, &commodity.destinations)?
    } else {
        let &d = commodity.destinations.iter().next().expect("validated nonempty");
        select_route_unicast(lg, &costs, commodity.source, d)?
    };
    Ok(route)
}

#[derive(Debug, Clone)]
pub struct CommodityMetrics {
    pub id: String,
    pub throughput: f64,
    pub mean_delay: Option<f64>,
    pub delivered: u64,
}

#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub per_commodity: Vec<CommodityMetrics>,
    pub vq_sum_final: f64,
    pub max_backlog: f64,
    pub growth_slope: f64,
    /// max_e Q_e(T) / T over physical queues, the rate-stability statistic.
    pub max_final_queue_over_horizon: f64,
    /// Total virtual backlog per slot.
    pub vq_trace: Vec<f64>,
    /// Largest single physical queue backlog per slot.
    pub max_backlog_trace: Vec<f64>,
    pub audit: Option<AuditReport>,
}

/// Least-squares slope of the second half of a trace, per slot.
pub fn growth_slope(trace: &[f64]) -> f64 {
    let n = trace.len();
    if n < 4 {
        return 0.0;
    }
    let window = &trace[n / 2..];
    let m = window.len() as f64;
    let t_mean = (m - 1.0) / 2.0;
    let y_mean = window.iter().sum::<f64>() / m;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, y) in window.iter().enumerate() {
        let dt = i as f64 - t_mean;
        num += dt * (y - y_mean);
        den += dt * dt;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

enum ArrivalSampler {
    Zero,
    Poisson(Poisson<f64>),
    Bernoulli(Bernoulli),
}

impl ArrivalSampler {
    fn build(kind: ArrivalKind, rate: f64, id: &str) -> Result<ArrivalSampler, HarnessError> {
        if rate == 0.0 {
            return Ok(ArrivalSampler::Zero);
        }
        match kind {
            ArrivalKind::Poisson => Ok(ArrivalSampler::Poisson(
                Poisson::new(rate).expect("positive finite rate"),
            )),
            ArrivalKind::Bernoulli => {
                if rate > 1.0 {
                    return Err(HarnessError::BernoulliRate(format!("{rate}"), id.into()));
                }
                Ok(ArrivalSampler::Bernoulli(
                    Bernoulli::new(rate).expect("probability within range"),
                ))
            }
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u64 {
        match self {
            ArrivalSampler::Zero => 0,
            ArrivalSampler::Poisson(p) => p.sample(rng) as u64,
            ArrivalSampler::Bernoulli(b) => b.sample(rng) as u64,
        }
    }
}

/// Runs one simulation at `multiplier` times every commodity's base rate.
/// Deterministic given (scenario, multiplier, seed).
pub fn run(
    scenario: &Scenario,
    multiplier: &Rat,
    seed: u64,
    audit: bool,
) -> Result<RunMetrics, HarnessError> {
    let net = &scenario.network;
    // Effective commodity list and scheduling discipline.
    let (commodities, scheduling, fixed_flavor) = match scenario.policy {
        Policy::UcncEnto => (scenario.commodities.clone(), SchedulingPolicy::Ento, None),
        Policy::UcncFifo => (scenario.commodities.clone(), SchedulingPolicy::Fifo, None),
        Policy::NearestToSource => (
            scenario.commodities.clone(),
            SchedulingPolicy::Ento,
            Some(NearestFlavor::Source),
        ),
        Policy::NearestToDestination => (
            scenario.commodities.clone(),
            SchedulingPolicy::Ento,
            Some(NearestFlavor::Destination),
        ),
        Policy::MulticastAsUnicast => {
            let mut list = Vec::new();
            for c in &scenario.commodities {
                if c.is_multicast() {
                    list.extend(multicast_as_unicast(net, c)?);
                } else {
                    list.push(c.clone());
                }
            }
            (list, SchedulingPolicy::Ento, None)
        }
    };
    let horizon = scenario.horizon;
    if horizon == 0 {
        return Ok(RunMetrics {
            per_commodity: commodities
                .iter()
                .map(|c| CommodityMetrics {
                    id: c.id.clone(),
                    throughput: 0.0,
                    mean_delay: None,
                    delivered: 0,
                })
                .collect(),
            vq_sum_final: 0.0,
            max_backlog: 0.0,
            growth_slope: 0.0,
            max_final_queue_over_horizon: 0.0,
            vq_trace: Vec::new(),
            max_backlog_trace: Vec::new(),
            audit: None,
        });
    }

    // Layered graph per chain, shared.
    let mut chain_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut lgs: Vec<Rc<LayeredGraph>> = Vec::new();
    for c in &commodities {
        if !chain_index.contains_key(&c.chain_id) {
            let chain = scenario
                .chains
                .get(&c.chain_id)
                .ok_or_else(|| HarnessError::UnknownChain(c.id.clone(), c.chain_id.clone()))?;
            chain_index.insert(c.chain_id.clone(), lgs.len());
            lgs.push(Rc::new(build_layered_graph(net, chain)?));
        }
    }
    let commodity_chain: Vec<usize> = commodities
        .iter()
        .map(|c| chain_index[&c.chain_id])
        .collect();

    // Fixed routes for the placement baselines.
    let fixed_routes: Vec<Option<Rc<RouteRuntime>>> = match fixed_flavor {
        None => vec![None; commodities.len()],
        Some(flavor) => commodities
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let lg = &lgs[commodity_chain[i]];
                nearest_route(net, &scenario.chains, lg, c, flavor)
                    .map(|r| Some(Rc::new(RouteRuntime::new(commodity_chain[i], r, lg))))
            })
            .collect::<Result<_, _>>()?,
    };

    let samplers: Vec<ArrivalSampler> = commodities
        .iter()
        .map(|c| {
            let rate = rat_to_f64(&(&c.rate * multiplier));
            ArrivalSampler::build(c.arrivals, rate, &c.id)
        })
        .collect::<Result<_, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vq = VirtualQueues::new(net);
    let link_caps = net.link_capacities_f64();
    let node_caps = net.node_capacities_f64();
    let mut loads = ArrivalLoads::zeros(net);
    let mut dp = Dataplane::new(net, lgs.clone(), commodities.len(), scheduling, audit);
    let mut vq_trace = Vec::with_capacity(horizon as usize);
    let mut max_backlog_trace = Vec::with_capacity(horizon as usize);
    let mut max_backlog = 0.0f64;
    // Per-slot edge costs per chain, computed on first use in the slot.
    let mut slot_costs: Vec<Option<Rc<Vec<f64>>>> = vec![None; lgs.len()];

    for t in 0..horizon {
        slot_costs.iter_mut().for_each(|c| *c = None);
        loads.clear();
        for (i, c) in commodities.iter().enumerate() {
            let count = samplers[i].sample(&mut rng);
            if count == 0 {
                continue;
            }
            let li = commodity_chain[i];
            let lg = &lgs[li];
            let runtime = match &fixed_routes[i] {
                Some(fixed) => Rc::clone(fixed),
                None => {
                    let costs = slot_costs[li]
                        .get_or_insert_with(|| Rc::new(edge_costs(&vq, lg.profile(), lg)))
                        .clone();
                    let route = if c.is_multicast() {
                        select_route_multicast(lg, &costs, c.source, &c.destinations)?
                    } else {
                        let &d = c.destinations.iter().next().expect("nonempty");
                        select_route_unicast(lg, &costs, c.source, d)?
                    };
                    Rc::new(RouteRuntime::new(li, route, lg))
                }
            };
            virtual_arrivals(&runtime.route, lg, count, &mut loads);
            dp.admit(i, &runtime, count, t)?;
        }
        dp.step(t)?;
        update_virtual_queues(&mut vq, &loads, &link_caps, &node_caps);
        vq_trace.push(vq.total());
        let slot_max = dp.max_queue_backlog();
        max_backlog_trace.push(slot_max);
        max_backlog = max_backlog.max(slot_max);
    }

    let t_f = horizon as f64;
    let per_commodity = commodities
        .iter()
        .enumerate()
        .map(|(i, c)| CommodityMetrics {
            id: c.id.clone(),
            throughput: dp.log().delivered(i) as f64 / t_f,
            mean_delay: dp.log().mean_delay(i),
            delivered: dp.log().delivered(i),
        })
        .collect();
    let max_final_queue = dp
        .link_backlogs()
        .into_iter()
        .chain(dp.node_backlogs())
        .fold(0.0f64, f64::max);
    Ok(RunMetrics {
        per_commodity,
        vq_sum_final: vq.total(),
        max_backlog,
        growth_slope: growth_slope(&vq_trace),
        max_final_queue_over_horizon: max_final_queue / t_f,
        vq_trace,
        max_backlog_trace,
        audit: dp.audit_report().cloned(),
    })
}

pub const CSV_HEADER: &str = "policy,lambda_multiplier,seed,commodity_id,throughput,mean_delay,delivered,vq_sum_final,max_backlog,growth_slope";

fn push_csv_rows(out: &mut String, scenario: &Scenario, multiplier: &Rat, seed: u64, m: &RunMetrics) {
    for cm in &m.per_commodity {
        let delay = cm
            .mean_delay
            .map(|d| format!("{d:.6}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{:.6},{},{},{:.6},{:.6},{:.9}\n",
            scenario.policy.name(),
            format_rat(multiplier),
            seed,
            cm.id,
            cm.throughput,
            delay,
            cm.delivered,
            m.vq_sum_final,
            m.max_backlog,
            m.growth_slope,
        ));
    }
}

/// One CSV row per (rate point, seed, commodity), rows ordered by
/// (multiplier, seed, commodity position). Deterministic byte-for-byte.
pub fn sweep(scenario: &Scenario, grid: &[Rat], seeds: &[u64]) -> Result<String, HarnessError> {
    scenario.validate()?;
    if seeds.is_empty() {
        return Err(HarnessError::EmptySeeds);
    }
    if grid.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(HarnessError::GridNotSorted);
    }
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for multiplier in grid {
        for &seed in &seeds {
            let metrics = run(scenario, multiplier, seed, false)?;
            push_csv_rows(&mut out, scenario, multiplier, seed, &metrics);
        }
    }
    Ok(out)
}

/// Gnuplot-friendly rendering of a sweep CSV: `#`-prefixed header,
/// space-separated columns, empty fields written as `nan`.
pub fn csv_to_gnuplot(csv: &str) -> String {
    let mut out = String::new();
    for (i, line) in csv.lines().enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        let rendered: Vec<String> = cols
            .iter()
            .map(|c| {
                if c.is_empty() {
                    "nan".to_string()
                } else {
                    c.to_string()
                }
            })
            .collect();
        if i == 0 {
            out.push_str("# ");
        }
        out.push_str(&rendered.join(" "));
        out.push('\n');
    }
    out
}
