//! Scenario files.
//!
//! A scenario is TOML with 1-based node ids, rates in Mbps, link prices per
//! Gb and compute prices per CPU. Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::ControllerConfig;
use crate::error::{ModelError, SimError};
use crate::layered::{Client, CloudScenario, ComputeSite};
use crate::model::{Edge, NetworkGraph, UnitSystem, DEFAULT_A_MAX_FACTOR};
use crate::sim::{ArrivalProcess, Policy, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub units: UnitsSection,
    pub network: NetworkSection,
    #[serde(default)]
    pub compute: ComputeSection,
    pub clients: Vec<ClientSection>,
    #[serde(default)]
    pub simulation: SimSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitsSection {
    pub flow_unit_mbps: f64,
}

impl Default for UnitsSection {
    fn default() -> Self {
        Self {
            flow_unit_mbps: UnitSystem::default().flow_unit_mbps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub nodes: usize,
    /// Display names, one per node.
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    /// Each link also carries traffic from `b` to `a`.
    #[serde(default = "yes")]
    pub bidirectional: bool,
    pub capacity_mbps: f64,
    pub cost_per_gb: f64,
    pub links: Vec<LinkSection>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub a: usize,
    pub b: usize,
    #[serde(default)]
    pub capacity_mbps: Option<f64>,
    #[serde(default)]
    pub cost_per_gb: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComputeSection {
    pub chain_length: usize,
    pub cpu_rate_mbps: f64,
    pub budget_cpus: f64,
    pub cost_per_cpu: f64,
    #[serde(default)]
    pub overrides: Vec<ComputeOverride>,
}

impl Default for ComputeSection {
    fn default() -> Self {
        Self {
            chain_length: 0,
            cpu_rate_mbps: 1.0,
            budget_cpus: 0.0,
            cost_per_cpu: 0.0,
            overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeOverride {
    pub node: usize,
    #[serde(default)]
    pub budget_cpus: Option<f64>,
    #[serde(default)]
    pub cost_per_cpu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientSection {
    pub source: usize,
    pub destination: usize,
    pub gamma: f64,
    pub max_lifetime: usize,
    /// Every packet is born with `max_lifetime`.
    #[serde(default)]
    pub rate_mbps: Option<f64>,
    /// Rate per birth lifetime `1..=max_lifetime`.
    #[serde(default)]
    pub rates_mbps: Option<Vec<f64>>,
}

/// Simulation defaults carried by a scenario; the CLI may override them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSettings {
    pub horizon: usize,
    pub seed: u64,
    /// Penalty weight against 1 Mb queue units.
    pub v: f64,
    pub policy: String,
    pub arrivals: String,
    pub a_max_factor: f64,
    /// Slots left out of the post-warm-up cost average.
    pub warmup: usize,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            horizon: 100_000,
            seed: 1,
            v: 0.0,
            policy: "proposed".into(),
            arrivals: "poisson".into(),
            a_max_factor: DEFAULT_A_MAX_FACTOR,
            warmup: 0,
        }
    }
}

fn parse_arrivals(s: &str) -> Result<ArrivalProcess, SimError> {
    match s {
        "poisson" => Ok(ArrivalProcess::Poisson),
        "deterministic" => Ok(ArrivalProcess::Deterministic),
        "uniform" => Ok(ArrivalProcess::BoundedUniform),
        other => Err(SimError::Config(format!(
            "unknown arrival process `{other}` (expected poisson, deterministic or uniform)"
        ))),
    }
}

impl SimSettings {
    /// The run configuration, with V translated into `units`.
    pub fn to_config(&self, units: &UnitSystem) -> Result<SimConfig, SimError> {
        let policy: Policy = self.policy.parse().map_err(SimError::Config)?;
        if !(self.v >= 0.0) || !self.v.is_finite() {
            return Err(SimError::Config(format!(
                "V must be finite and non-negative, got {}",
                self.v
            )));
        }
        Ok(SimConfig {
            policy,
            horizon: self.horizon,
            seed: self.seed,
            arrivals: parse_arrivals(&self.arrivals)?,
            controller: ControllerConfig::with_v(units.controller_v(self.v)),
            warmup: self.warmup,
            ..SimConfig::default()
        })
    }
}

fn node_index(id: usize, n: usize, what: &str) -> Result<usize, ModelError> {
    if id == 0 || id > n {
        return Err(ModelError::BadScenario(format!(
            "{what}: node {id} is outside 1..={n}"
        )));
    }
    Ok(id - 1)
}

impl ScenarioFile {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        file.units()?;
        file.to_cloud()?;
        file.simulation.to_config(&file.units()?)?;
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn units(&self) -> Result<UnitSystem, ModelError> {
        UnitSystem::new(self.units.flow_unit_mbps)
    }

    /// The scenario in flow-units, validated.
    pub fn to_cloud(&self) -> Result<CloudScenario, ModelError> {
        let units = self.units()?;
        let net = &self.network;
        let n = net.nodes;
        if n == 0 {
            return Err(ModelError::BadScenario("network has no nodes".into()));
        }
        let mut edges = Vec::new();
        for (idx, link) in net.links.iter().enumerate() {
            let what = format!("link {}", idx + 1);
            let a = node_index(link.a, n, &what)?;
            let b = node_index(link.b, n, &what)?;
            let capacity = units.convert_rate(link.capacity_mbps.unwrap_or(net.capacity_mbps))?;
            let cost = units.link_cost(link.cost_per_gb.unwrap_or(net.cost_per_gb));
            edges.push(Edge {
                src: a,
                dst: b,
                capacity,
                cost,
            });
            if net.bidirectional {
                edges.push(Edge {
                    src: b,
                    dst: a,
                    capacity,
                    cost,
                });
            }
        }
        let labels = match &net.labels {
            Some(l) if l.len() != n => {
                return Err(ModelError::BadScenario(format!(
                    "{} labels for {n} nodes",
                    l.len()
                )));
            }
            Some(l) => l.clone(),
            None => (1..=n).map(|i| i.to_string()).collect(),
        };
        let physical = NetworkGraph::with_labels(labels, edges)?;

        let c = &self.compute;
        if !(c.cpu_rate_mbps > 0.0) {
            return Err(ModelError::BadScenario(
                "cpu_rate_mbps must be positive".into(),
            ));
        }
        let mut sites = vec![(c.budget_cpus, c.cost_per_cpu); n];
        for o in &c.overrides {
            let i = node_index(o.node, n, "compute override")?;
            if let Some(b) = o.budget_cpus {
                sites[i].0 = b;
            }
            if let Some(p) = o.cost_per_cpu {
                sites[i].1 = p;
            }
        }
        let compute = sites
            .into_iter()
            .map(|(budget_cpus, price)| ComputeSite {
                budget_cpus,
                cost_per_cpu: price,
            })
            .collect();

        let mut clients = Vec::new();
        for (k, cl) in self.clients.iter().enumerate() {
            let what = format!("client {}", k + 1);
            let source = node_index(cl.source, n, &what)?;
            let destination = node_index(cl.destination, n, &what)?;
            if cl.max_lifetime == 0 {
                return Err(ModelError::BadCommodity {
                    commodity: k,
                    reason: "max_lifetime must be at least 1".into(),
                });
            }
            let rates = match (&cl.rate_mbps, &cl.rates_mbps) {
                (Some(r), None) => {
                    let mut v = vec![0.0; cl.max_lifetime];
                    v[cl.max_lifetime - 1] = units.convert_rate(*r)?;
                    v
                }
                (None, Some(rs)) if rs.len() == cl.max_lifetime => rs
                    .iter()
                    .map(|&r| units.convert_rate(r))
                    .collect::<Result<_, _>>()?,
                (None, Some(rs)) => {
                    return Err(ModelError::BadCommodity {
                        commodity: k,
                        reason: format!("{} rates for max_lifetime {}", rs.len(), cl.max_lifetime),
                    });
                }
                _ => {
                    return Err(ModelError::BadCommodity {
                        commodity: k,
                        reason: "give exactly one of rate_mbps and rates_mbps".into(),
                    });
                }
            };
            clients.push(Client {
                source,
                destination,
                gamma: cl.gamma,
                rates,
            });
        }
        if !(self.simulation.a_max_factor >= 1.0) {
            return Err(ModelError::BadScenario(
                "a_max_factor must be at least 1".into(),
            ));
        }
        let scenario = CloudScenario {
            physical,
            compute,
            cpu_rate: units.convert_rate(c.cpu_rate_mbps)?,
            chain_length: c.chain_length,
            clients,
            a_max_factor: self.simulation.a_max_factor,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Axis of a parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Per-client arrival rate in Mbps.
    Lambda,
    /// Penalty weight against 1 Mb queue units.
    V,
    /// Maximum lifetime of every client.
    L,
}

impl std::str::FromStr for Axis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lambda" => Ok(Axis::Lambda),
            "V" | "v" => Ok(Axis::V),
            "L" | "l" => Ok(Axis::L),
            other => Err(format!("unknown axis `{other}` (expected lambda, V or L)")),
        }
    }
}

impl ScenarioFile {
    /// A copy with one axis set to `value`.
    pub fn with_axis(&self, axis: Axis, value: f64) -> Result<Self, SimError> {
        let mut s = self.clone();
        match axis {
            Axis::Lambda => {
                if !(value >= 0.0) {
                    return Err(SimError::Config(format!(
                        "rate {value} must be non-negative"
                    )));
                }
                for c in &mut s.clients {
                    match (&mut c.rate_mbps, &mut c.rates_mbps) {
                        (Some(r), _) => *r = value,
                        (None, Some(rs)) => {
                            let total: f64 = rs.iter().sum();
                            if total > 0.0 {
                                rs.iter_mut().for_each(|r| *r *= value / total);
                            } else if let Some(last) = rs.last_mut() {
                                *last = value;
                            }
                        }
                        (None, None) => {}
                    }
                }
            }
            Axis::V => {
                if !(value >= 0.0) || !value.is_finite() {
                    return Err(SimError::Config(format!(
                        "V {value} must be finite and non-negative"
                    )));
                }
                s.simulation.v = value;
            }
            Axis::L => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(SimError::Config(format!(
                        "lifetime {value} must be a positive integer"
                    )));
                }
                for c in &mut s.clients {
                    let total = match (&c.rate_mbps, &c.rates_mbps) {
                        (Some(r), _) => *r,
                        (None, Some(rs)) => rs.iter().sum(),
                        (None, None) => 0.0,
                    };
                    c.max_lifetime = value as usize;
                    c.rate_mbps = Some(total);
                    c.rates_mbps = None;
                }
            }
        }
        Ok(s)
    }
}
