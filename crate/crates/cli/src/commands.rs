use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use latnet_core::lp::min_cost;
use latnet_core::sim::aggregate;
use latnet_core::{
    build_layered_graph, detect_convergence, region_boundary, run, sweep, Axis, LpStatus,
    NetworkModel, Policy, ScenarioFile, SimConfig,
};
use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::output::{csv_bytes, num, opt, sha256_hex, OutputSet, RunManifest, MANIFEST_FORMAT};

/// Scenario values the command line may override.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Policy: proposed or dcnc.
    #[arg(long)]
    pub policy: Option<String>,
    /// Penalty weight V against 1 Mb queue units.
    #[arg(long = "V")]
    pub v: Option<f64>,
    /// Maximum lifetime of every client.
    #[arg(long = "L")]
    pub lifetime: Option<usize>,
    /// Per-client arrival rate in Mbps.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Horizon in slots; accepts forms like 1e6.
    #[arg(long = "T", value_parser = parse_count)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Overrides {
    fn apply(&self, base: &ScenarioFile) -> Result<ScenarioFile, CliError> {
        let mut s = base.clone();
        if let Some(l) = self.lifetime {
            s = s.with_axis(Axis::L, l as f64)?;
        }
        if let Some(r) = self.lambda {
            s = s.with_axis(Axis::Lambda, r)?;
        }
        if let Some(v) = self.v {
            s = s.with_axis(Axis::V, v)?;
        }
        if let Some(p) = &self.policy {
            p.parse::<Policy>().map_err(CliError::Config)?;
            s.simulation.policy = p.clone();
        }
        if let Some(t) = self.horizon {
            s.simulation.horizon = t;
        }
        if let Some(seed) = self.seed {
            s.simulation.seed = seed;
        }
        Ok(s)
    }

    fn record(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("policy", self.policy.clone());
        put("V", self.v.map(num));
        put("L", self.lifetime.map(|x| x.to_string()));
        put("lambda", self.lambda.map(num));
        put("T", self.horizon.map(|x| x.to_string()));
        put("seed", self.seed.map(|x| x.to_string()));
        m
    }

    fn is_empty(&self) -> bool {
        self.record().is_empty()
    }
}

/// Parses a non-negative integer count, allowing exponent notation.
pub fn parse_count(s: &str) -> Result<usize, String> {
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if x < 0.0 || x.fract() != 0.0 || x > 1e15 {
        return Err(format!("`{s}` is not a whole non-negative count"));
    }
    Ok(x as usize)
}

/// Comma-separated floats.
pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| {
            x.parse::<f64>()
                .map_err(|_| format!("`{x}` is not a number"))
        })
        .collect()
}

/// `a..b` (inclusive) or a comma-separated list of lifetimes.
pub fn parse_lifetimes(s: &str) -> Result<Vec<usize>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a
            .trim()
            .parse()
            .map_err(|_| format!("bad range start in `{s}`"))?;
        let b: usize = b
            .trim()
            .trim_start_matches('=')
            .parse()
            .map_err(|_| format!("bad range end in `{s}`"))?;
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| {
            x.parse::<usize>()
                .map_err(|_| format!("`{x}` is not a lifetime"))
        })
        .collect()
}

/// The scenario and parameters a command runs with, from a file plus
/// overrides or from a manifest.
pub struct Prepared<P> {
    pub scenario: ScenarioFile,
    pub params: P,
    manifest: RunManifest,
}

pub struct Source<'a> {
    pub scenario: Option<&'a Path>,
    pub manifest: Option<&'a Path>,
    pub overrides: &'a Overrides,
}

pub fn prepare<P: Serialize + DeserializeOwned>(
    command: &str,
    src: Source<'_>,
    params: P,
) -> Result<Prepared<P>, CliError> {
    if let Some(path) = src.manifest {
        if !src.overrides.is_empty() || src.scenario.is_some() {
            return Err(CliError::Config(
                "--manifest cannot be combined with a scenario or overrides".into(),
            ));
        }
        let m = RunManifest::load(path)?;
        if m.command != command {
            return Err(CliError::Config(format!(
                "manifest {} records a `{}` command, not `{command}`",
                path.display(),
                m.command
            )));
        }
        let scenario = ScenarioFile::from_toml_str(&m.effective_scenario)?;
        let params = serde_json::from_value(m.params.clone())
            .map_err(|e| CliError::Config(format!("manifest parameters: {e}")))?;
        return Ok(Prepared {
            scenario,
            params,
            manifest: RunManifest {
                outputs: BTreeMap::new(),
                ..m
            },
        });
    }
    let path = src
        .scenario
        .ok_or_else(|| CliError::Config("either --scenario or --manifest is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let base = ScenarioFile::from_toml_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let scenario = src.overrides.apply(&base)?;
    let effective = scenario.to_toml_string();
    let params_json = serde_json::to_value(&params).expect("parameters serialize");
    let manifest = RunManifest {
        format: MANIFEST_FORMAT,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        scenario_path: path.display().to_string(),
        scenario_sha256: sha256_hex(text.as_bytes()),
        overrides: src.overrides.record(),
        config_sha256: RunManifest::config_hash(command, &params_json, &effective),
        effective_scenario: effective,
        params: params_json,
        seed: scenario.simulation.seed,
        output_dir: String::new(),
        outputs: BTreeMap::new(),
    };
    Ok(Prepared {
        scenario,
        params,
        manifest,
    })
}

fn model_of(s: &ScenarioFile) -> Result<NetworkModel, CliError> {
    let lg = build_layered_graph(&s.to_cloud()?)?;
    Ok(lg.into_model())
}

fn config_of(s: &ScenarioFile) -> Result<SimConfig, CliError> {
    let cfg = s.simulation.to_config(&s.units()?)?;
    if cfg.horizon == 0 {
        return Err(CliError::Config(
            "horizon T must be at least one slot".into(),
        ));
    }
    Ok(cfg)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunParams {
    pub replication: u64,
    /// Convergence gap as a fraction of the total arrival rate.
    pub epsilon: f64,
    /// Write every `stride`-th slot to the metrics file.
    pub stride: usize,
}

pub fn cmd_run(p: Prepared<RunParams>, out_dir: PathBuf) -> Result<PathBuf, CliError> {
    let s = &p.scenario;
    let units = s.units()?;
    let model = model_of(s)?;
    let mut cfg = config_of(s)?;
    cfg.replication = p.params.replication;
    if p.params.stride == 0 {
        return Err(CliError::Config("stride must be at least 1".into()));
    }
    info!("running {} for {} slots", cfg.policy, cfg.horizon);
    let result = run(&model, &cfg)?;
    let tag = p.manifest.tag().to_string();
    let m = &result.metrics;
    let rows = (0..m.len()).step_by(p.params.stride).map(|t| {
        vec![
            t.to_string(),
            num(m.delivered[t]),
            num(m.delivered_raw[t]),
            num(m.dropped[t]),
            num(m.cost[t]),
            num(m.backlog[t]),
            num(m.virtual_backlog[t]),
            tag.clone(),
        ]
    });
    let metrics = csv_bytes(
        &[
            "slot",
            "delivered",
            "delivered_raw",
            "dropped",
            "cost",
            "backlog",
            "virtual_backlog",
            "config",
        ],
        rows,
    );
    let sum = &result.summary;
    let total = model.total_rate();
    let t_eps = detect_convergence(
        &m.delivered,
        model.required_rate(),
        p.params.epsilon * total,
    );
    let summary = csv_bytes(
        &[
            "policy",
            "horizon",
            "seed",
            "replication",
            "delivered",
            "delivered_mbps",
            "required_mbps",
            "reliability",
            "cost",
            "cost_after_warmup",
            "final_backlog",
            "final_virtual_backlog",
            "flow_matching_gap",
            "epsilon",
            "t_eps",
            "config",
        ],
        [vec![
            cfg.policy.to_string(),
            cfg.horizon.to_string(),
            cfg.seed.to_string(),
            cfg.replication.to_string(),
            num(sum.delivered_mean),
            num(units.to_mbps(sum.delivered_mean)),
            num(units.to_mbps(model.required_rate())),
            num(if total > 0.0 {
                sum.delivered_mean / total
            } else {
                0.0
            }),
            num(sum.cost_mean),
            num(sum.cost_mean_after_warmup),
            num(sum.final_backlog),
            num(sum.final_virtual_backlog),
            opt(sum.flow_matching_gap),
            num(p.params.epsilon),
            opt(t_eps),
            tag,
        ]],
    );
    println!(
        "{}: {:.3} Mbps delivered of {:.3} required, cost {:.4}/slot, t_eps {}",
        cfg.policy,
        units.to_mbps(sum.delivered_mean),
        units.to_mbps(model.required_rate()),
        sum.cost_mean,
        t_eps.map_or("none".into(), |t| t.to_string())
    );
    let mut set = OutputSet::new(out_dir);
    set.add("metrics.csv", metrics);
    set.add("summary.csv", summary);
    set.finish(p.manifest)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityParams {
    pub lifetimes: Vec<usize>,
    /// Multipliers on the scenario's rates at which h* is solved.
    pub scales: Vec<f64>,
    pub tolerance: f64,
    pub require_feasible: bool,
}

pub fn cmd_capacity(p: Prepared<CapacityParams>, out_dir: PathBuf) -> Result<PathBuf, CliError> {
    if p.params.lifetimes.is_empty() {
        return Err(CliError::Config("the lifetime range is empty".into()));
    }
    if p.params.scales.is_empty() || p.params.scales.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(CliError::Config(
            "scales must be a non-empty list of finite non-negative numbers".into(),
        ));
    }
    let units = p.scenario.units()?;
    let tag = p.manifest.tag().to_string();
    let mut rows = Vec::new();
    let mut infeasible = Vec::new();
    for &l in &p.params.lifetimes {
        let s = p.scenario.with_axis(Axis::L, l as f64)?;
        let model = model_of(&s)?;
        let boundary = region_boundary(&model, p.params.tolerance)?;
        println!(
            "L={l}: theta* = {} ({} probes)",
            boundary.theta, boundary.probes
        );
        for &scale in &p.params.scales {
            let scaled = model.scaled(scale)?;
            let (_, sol) = min_cost(&scaled)?;
            let feasible = sol.status == LpStatus::Optimal;
            if !feasible {
                infeasible.push(format!("L={l} scale={scale}"));
            }
            rows.push(vec![
                l.to_string(),
                num(boundary.theta),
                boundary.probes.to_string(),
                num(scale),
                num(units.to_mbps(scaled.total_rate())),
                feasible.to_string(),
                if feasible {
                    num(sol.objective)
                } else {
                    String::new()
                },
                tag.clone(),
            ]);
        }
    }
    let bytes = csv_bytes(
        &[
            "lifetime",
            "theta",
            "probes",
            "scale",
            "total_rate_mbps",
            "feasible",
            "h_star",
            "config",
        ],
        rows,
    );
    let mut set = OutputSet::new(out_dir);
    set.add("capacity.csv", bytes);
    let manifest = set.finish(p.manifest)?;
    if p.params.require_feasible && !infeasible.is_empty() {
        return Err(CliError::Infeasible(format!(
            "infeasible points: {}",
            infeasible.join(", ")
        )));
    }
    Ok(manifest)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepParams {
    pub axis: String,
    pub values: Vec<f64>,
    pub policies: Vec<String>,
    pub replications: u64,
    pub epsilon: f64,
}

pub fn cmd_sweep(
    p: Prepared<SweepParams>,
    jobs: usize,
    out_dir: PathBuf,
) -> Result<PathBuf, CliError> {
    let axis: Axis = p.params.axis.parse().map_err(CliError::Config)?;
    if p.params.policies.is_empty() {
        return Err(CliError::Config("the policy list is empty".into()));
    }
    if p.params.values.is_empty() {
        return Err(CliError::Config("the value list is empty".into()));
    }
    let policies: Vec<Policy> = p
        .params
        .policies
        .iter()
        .map(|x| x.parse().map_err(CliError::Config))
        .collect::<Result<_, _>>()?;
    let units = p.scenario.units()?;
    config_of(&p.scenario)?;
    let tag = p.manifest.tag().to_string();
    let mut rows = Vec::new();
    let mut agg_rows = Vec::new();
    for policy in policies {
        info!("sweeping {policy} over {} values", p.params.values.len());
        let make = |value: f64, _rep: u64| {
            let mut s = p.scenario.with_axis(axis, value)?;
            s.simulation.policy = policy.to_string();
            let model = build_layered_graph(&s.to_cloud()?)?.into_model();
            let cfg = s.simulation.to_config(&s.units()?)?;
            Ok((model, cfg))
        };
        let points = sweep(
            &p.params.values,
            p.params.replications,
            jobs,
            p.params.epsilon,
            make,
        )?;
        for pt in &points {
            let s = &pt.summary;
            rows.push(vec![
                policy.to_string(),
                p.params.axis.clone(),
                num(pt.value),
                pt.replication.to_string(),
                num(s.delivered_mean),
                num(units.to_mbps(s.delivered_mean)),
                num(s.cost_mean),
                num(s.cost_mean_after_warmup),
                num(s.final_backlog),
                num(s.final_virtual_backlog),
                opt(s.flow_matching_gap),
                opt(pt.convergence_time),
                tag.clone(),
            ]);
        }
        for a in aggregate(&points) {
            agg_rows.push(vec![
                policy.to_string(),
                p.params.axis.clone(),
                num(a.value),
                a.runs.to_string(),
                num(a.delivered.mean),
                num(a.delivered.stderr),
                num(units.to_mbps(a.delivered.mean)),
                num(a.cost.mean),
                num(a.cost.stderr),
                num(a.backlog.mean),
                num(a.virtual_backlog.mean),
                num(a.virtual_backlog.stderr),
                a.converged.to_string(),
                opt(a.convergence_time.map(|e| e.mean)),
                opt(a.convergence_time.map(|e| e.stderr)),
                tag.clone(),
            ]);
        }
    }
    println!("{} runs written", rows.len());
    let runs = csv_bytes(
        &[
            "policy",
            "axis",
            "value",
            "replication",
            "delivered",
            "delivered_mbps",
            "cost",
            "cost_after_warmup",
            "final_backlog",
            "final_virtual_backlog",
            "flow_matching_gap",
            "t_eps",
            "config",
        ],
        rows,
    );
    let summary = csv_bytes(
        &[
            "policy",
            "axis",
            "value",
            "runs",
            "delivered_mean",
            "delivered_stderr",
            "delivered_mbps",
            "cost_mean",
            "cost_stderr",
            "backlog_mean",
            "virtual_backlog_mean",
            "virtual_backlog_stderr",
            "converged",
            "t_eps_mean",
            "t_eps_stderr",
            "config",
        ],
        agg_rows,
    );
    let mut set = OutputSet::new(out_dir);
    set.add("sweep.csv", runs);
    set.add("sweep_summary.csv", summary);
    set.finish(p.manifest)
}

pub fn cmd_validate(path: &Path) -> Result<(), CliError> {
    let s = ScenarioFile::load(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let cloud = s.to_cloud()?;
    let lg = build_layered_graph(&cloud)?;
    config_of(&s)?;
    println!(
        "{}: {} nodes, {} links, {} clients, chain length {}; layered graph {} nodes, {} edges",
        path.display(),
        cloud.physical.node_count(),
        cloud.physical.edge_count(),
        cloud.clients.len(),
        cloud.chain_length,
        lg.graph().node_count(),
        lg.graph().edge_count()
    );
    for &k in lg.undeliverable() {
        println!(
            "warning: client {} cannot reach its destination within its lifetime",
            k + 1
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_accept_exponents() {
        assert_eq!(parse_count("1e6"), Ok(1_000_000));
        assert_eq!(parse_count("250"), Ok(250));
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
    }

    #[test]
    fn lifetime_ranges() {
        assert_eq!(parse_lifetimes("5..8").unwrap(), vec![5, 6, 7, 8]);
        assert_eq!(parse_lifetimes("5..=6").unwrap(), vec![5, 6]);
        assert_eq!(parse_lifetimes("7, 9").unwrap(), vec![7, 9]);
        assert!(parse_lifetimes("8..5").unwrap().is_empty());
        assert_eq!(parse_list("1e5,2").unwrap(), vec![1e5, 2.0]);
    }
}
