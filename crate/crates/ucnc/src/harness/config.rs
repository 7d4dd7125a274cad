//! Human-editable TOML scenario documents.
//!
//! Capacities, scalings, and rates accept `"a/b"` fractions, decimal
//! strings, or plain numbers (floats are rationalized with denominators up
//! to 10^6). Serialization writes canonical fraction strings, so a document
//! round-trips exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chaining::{ServiceChain, ServiceFunction};
use crate::controller::{ArrivalKind, Commodity};
use crate::harness::{Policy, Scenario};
use crate::rat::{format_rat, parse_rat, rat_from_f64_bounded, Rat, RatParseError};
use crate::topology::{Directionality, Network, NodeId, TopologyError};

const FLOAT_DENOMINATOR_BOUND: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("TOML parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("TOML serialize error: {0}")]
    TomlSer(#[from] toml::ser::Error),
    #[error(transparent)]
    Rat(#[from] RatParseError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),
    #[error("unknown arrival kind `{0}` (expected poisson or bernoulli)")]
    UnknownArrivalKind(String),
    #[error("unknown directionality `{0}` (expected directed or undirected)")]
    UnknownDirectionality(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RatValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl RatValue {
    fn to_rat(&self) -> Result<Rat, ConfigError> {
        match self {
            RatValue::Text(s) => Ok(parse_rat(s)?),
            RatValue::Int(i) => Ok(Rat::from_integer((*i).into())),
            RatValue::Float(f) => Ok(rat_from_f64_bounded(*f, FLOAT_DENOMINATOR_BOUND)),
        }
    }

    fn from_rat(r: &Rat) -> RatValue {
        RatValue::Text(format_rat(r))
    }
}

fn default_compute() -> RatValue {
    RatValue::Int(0)
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeCfg {
    id: String,
    #[serde(default = "default_compute")]
    compute_capacity: RatValue,
}

#[derive(Debug, Serialize, Deserialize)]
struct LinkCfg {
    from: String,
    to: String,
    capacity: RatValue,
}

#[derive(Debug, Serialize, Deserialize)]
struct FunctionCfg {
    compute: RatValue,
    scale: RatValue,
    hosts: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    compute_at: BTreeMap<String, RatValue>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChainCfg {
    id: String,
    #[serde(default)]
    functions: Vec<FunctionCfg>,
}

fn default_arrivals() -> String {
    "poisson".into()
}

#[derive(Debug, Serialize, Deserialize)]
struct CommodityCfg {
    id: String,
    source: String,
    destinations: Vec<String>,
    chain: String,
    rate: RatValue,
    #[serde(default = "default_arrivals")]
    arrivals: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct ScenarioCfg {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    policy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_grid: Option<Vec<RatValue>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct ConfigDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    directionality: Option<String>,
    #[serde(default)]
    nodes: Vec<NodeCfg>,
    #[serde(default)]
    links: Vec<LinkCfg>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    chains: Vec<ChainCfg>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    commodities: Vec<CommodityCfg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scenario: Option<ScenarioCfg>,
}

fn network_from_doc(doc: &ConfigDoc) -> Result<Network, ConfigError> {
    let directionality = match doc.directionality.as_deref() {
        None | Some("directed") => Directionality::Directed,
        Some("undirected") => Directionality::Undirected,
        Some(other) => return Err(ConfigError::UnknownDirectionality(other.into())),
    };
    let nodes = doc
        .nodes
        .iter()
        .map(|n| Ok((n.id.clone(), n.compute_capacity.to_rat()?)))
        .collect::<Result<Vec<_>, ConfigError>>()?;
    let links = doc
        .links
        .iter()
        .map(|l| Ok((l.from.clone(), l.to.clone(), l.capacity.to_rat()?)))
        .collect::<Result<Vec<_>, ConfigError>>()?;
    Ok(Network::build(directionality, nodes, links)?)
}

/// Loads just the topology sections of a document.
pub fn parse_network(text: &str) -> Result<Network, ConfigError> {
    let doc: ConfigDoc = toml::from_str(text)?;
    network_from_doc(&doc)
}

fn node_id(net: &Network, name: &str) -> Result<NodeId, ConfigError> {
    net.node_id(name)
        .ok_or_else(|| ConfigError::UnknownNode(name.to_string()))
}

/// Loads a full scenario document; missing `[scenario]` fields fall back to
/// ucnc-ento, horizon 10^5, seed 1, grid [1].
pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigError> {
    let doc: ConfigDoc = toml::from_str(text)?;
    let network = network_from_doc(&doc)?;
    let mut chains = BTreeMap::new();
    for c in &doc.chains {
        let mut functions = Vec::new();
        for f in &c.functions {
            let mut sf = ServiceFunction::new(
                f.compute.to_rat()?,
                f.scale.to_rat()?,
                f.hosts
                    .iter()
                    .map(|h| node_id(&network, h))
                    .collect::<Result<Vec<_>, _>>()?,
            );
            for (host, r_u) in &f.compute_at {
                sf.host_compute_override
                    .insert(node_id(&network, host)?, r_u.to_rat()?);
            }
            functions.push(sf);
        }
        chains.insert(c.id.clone(), ServiceChain::new(c.id.clone(), functions));
    }
    let mut commodities = Vec::new();
    for c in &doc.commodities {
        let arrivals = match c.arrivals.as_str() {
            "poisson" => ArrivalKind::Poisson,
            "bernoulli" => ArrivalKind::Bernoulli,
            other => return Err(ConfigError::UnknownArrivalKind(other.into())),
        };
        commodities.push(Commodity {
            id: c.id.clone(),
            source: node_id(&network, &c.source)?,
            destinations: c
                .destinations
                .iter()
                .map(|d| node_id(&network, d))
                .collect::<Result<_, _>>()?,
            chain_id: c.chain.clone(),
            rate: c.rate.to_rat()?,
            arrivals,
        });
    }
    let sc = doc.scenario.unwrap_or_default();
    let policy = match sc.policy.as_deref() {
        None => Policy::UcncEnto,
        Some(p) => Policy::parse(p).ok_or_else(|| ConfigError::UnknownPolicy(p.into()))?,
    };
    let lambda_grid = match sc.lambda_grid {
        None => vec![Rat::from_integer(1.into())],
        Some(vs) => vs
            .iter()
            .map(RatValue::to_rat)
            .collect::<Result<Vec<_>, _>>()?,
    };
    Ok(Scenario {
        name: sc.name.unwrap_or_else(|| "scenario".into()),
        network,
        chains,
        commodities,
        policy,
        horizon: sc.horizon.unwrap_or(100_000),
        seed: sc.seed.unwrap_or(1),
        lambda_grid,
    })
}

fn doc_from_network(net: &Network) -> ConfigDoc {
    ConfigDoc {
        directionality: Some(
            match net.directionality() {
                Directionality::Directed => "directed",
                Directionality::Undirected => "undirected",
            }
            .to_string(),
        ),
        nodes: net
            .nodes()
            .map(|n| NodeCfg {
                id: net.node_name(n).to_string(),
                compute_capacity: RatValue::from_rat(net.compute_capacity(n)),
            })
            .collect(),
        links: (0..net.link_count())
            .map(|l| {
                let spec = net.link_spec(crate::topology::LinkId(l));
                LinkCfg {
                    from: net.node_name(spec.from).to_string(),
                    to: net.node_name(spec.to).to_string(),
                    capacity: RatValue::from_rat(&spec.capacity),
                }
            })
            .collect(),
        chains: Vec::new(),
        commodities: Vec::new(),
        scenario: None,
    }
}

pub fn serialize_network(net: &Network) -> Result<String, ConfigError> {
    Ok(toml::to_string(&doc_from_network(net))?)
}

pub fn serialize_scenario(s: &Scenario) -> Result<String, ConfigError> {
    let mut doc = doc_from_network(&s.network);
    doc.chains = s
        .chains
        .values()
        .map(|c| ChainCfg {
            id: c.id.clone(),
            functions: c
                .functions
                .iter()
                .map(|f| FunctionCfg {
                    compute: RatValue::from_rat(&f.compute_per_unit),
                    scale: RatValue::from_rat(&f.scale),
                    hosts: f
                        .hosts
                        .iter()
                        .map(|&h| s.network.node_name(h).to_string())
                        .collect(),
                    compute_at: f
                        .host_compute_override
                        .iter()
                        .map(|(&h, r)| {
                            (s.network.node_name(h).to_string(), RatValue::from_rat(r))
                        })
                        .collect(),
                })
                .collect(),
        })
        .collect();
    doc.commodities = s
        .commodities
        .iter()
        .map(|c| CommodityCfg {
            id: c.id.clone(),
            source: s.network.node_name(c.source).to_string(),
            destinations: c
                .destinations
                .iter()
                .map(|&d| s.network.node_name(d).to_string())
                .collect(),
            chain: c.chain_id.clone(),
            rate: RatValue::from_rat(&c.rate),
            arrivals: match c.arrivals {
                ArrivalKind::Poisson => "poisson".into(),
                ArrivalKind::Bernoulli => "bernoulli".into(),
            },
        })
        .collect();
    doc.scenario = Some(ScenarioCfg {
        name: Some(s.name.clone()),
        policy: Some(s.policy.name().to_string()),
        horizon: Some(s.horizon),
        seed: Some(s.seed),
        lambda_grid: Some(s.lambda_grid.iter().map(RatValue::from_rat).collect()),
    });
    Ok(toml::to_string(&doc)?)
}
