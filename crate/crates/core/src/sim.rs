//! The time-slotted closed loop and its metrics.
//!
//! Each slot draws arrivals, lets the policy decide, applies the decision to
//! the physical queues and records one metrics row. Runs are deterministic in
//! `(model, config)`: arrivals use stream `2r` and policy randomness stream
//! `2r + 1` of a ChaCha8 generator seeded with the master seed, where `r` is
//! the replication index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, Uniform};
use rayon::prelude::*;

use crate::controller::{Controller, ControllerConfig, VirtualQueueBank};
use crate::dcnc::{DcncBank, DcncConfig};
use crate::error::SimError;
use crate::matching::{flow_matching_gap, FlowMatcher, MatcherConfig};
use crate::model::NetworkModel;
use crate::queueing::{ArrivalSample, FlowDecision, LifetimeQueueBank, SlotLedger};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ArrivalProcess {
    #[default]
    Poisson,
    /// Exactly the mean rate every slot.
    Deterministic,
    /// Uniform on `[0, 2λ]`.
    BoundedUniform,
}

/// i.i.d. per-slot arrivals, clipped at each commodity's `a_max`.
#[derive(Debug, Clone)]
pub struct ArrivalGenerator {
    process: ArrivalProcess,
    /// `(commodity, node, lifetime, rate, a_max)` for every positive rate.
    entries: Vec<(usize, usize, usize, f64, f64)>,
    poisson: Vec<Option<Poisson<f64>>>,
    rng: ChaCha8Rng,
}

impl ArrivalGenerator {
    pub fn new(model: &NetworkModel, process: ArrivalProcess, rng: ChaCha8Rng) -> Self {
        let mut entries = Vec::new();
        for (k, c) in model.commodities().iter().enumerate() {
            for (i, l, r) in c.rates.entries() {
                if r > 0.0 {
                    entries.push((k, i, l, r, c.a_max));
                }
            }
        }
        let poisson = entries
            .iter()
            .map(|&(_, _, _, r, _)| match process {
                ArrivalProcess::Poisson => Some(Poisson::new(r).expect("positive finite rate")),
                _ => None,
            })
            .collect();
        Self {
            process,
            entries,
            poisson,
            rng,
        }
    }

    pub fn sample(&mut self, out: &mut ArrivalSample) {
        out.clear();
        for (idx, &(k, i, l, r, a_max)) in self.entries.iter().enumerate() {
            let v = match self.process {
                ArrivalProcess::Poisson => self.poisson[idx]
                    .as_ref()
                    .expect("built for Poisson")
                    .sample(&mut self.rng),
                ArrivalProcess::Deterministic => r,
                ArrivalProcess::BoundedUniform => Uniform::new_inclusive(0.0, 2.0 * r)
                    .expect("finite bounds")
                    .sample(&mut self.rng),
            };
            out.set(k, i, l, v.min(a_max));
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Policy {
    #[default]
    Proposed,
    Dcnc,
}

impl std::str::FromStr for Policy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "proposed" => Ok(Policy::Proposed),
            "dcnc" => Ok(Policy::Dcnc),
            other => Err(format!(
                "unknown policy `{other}` (expected proposed or dcnc)"
            )),
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Policy::Proposed => "proposed",
            Policy::Dcnc => "dcnc",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub policy: Policy,
    pub horizon: usize,
    pub seed: u64,
    pub replication: u64,
    pub arrivals: ArrivalProcess,
    /// V and controller knobs; the baseline uses only `v`.
    pub controller: ControllerConfig,
    pub matcher: MatcherConfig,
    /// Slots excluded from the post-warm-up cost average.
    pub warmup: usize,
    /// Virtual-queue snapshot period handed to the observer.
    pub snapshot_every: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            policy: Policy::Proposed,
            horizon: 1,
            seed: 0,
            replication: 0,
            arrivals: ArrivalProcess::Poisson,
            controller: ControllerConfig::default(),
            matcher: MatcherConfig::default(),
            warmup: 0,
            snapshot_every: None,
        }
    }
}

/// Per-slot series of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsRecord {
    pub delivered: Vec<f64>,
    pub delivered_raw: Vec<f64>,
    pub dropped: Vec<f64>,
    pub cost: Vec<f64>,
    pub backlog: Vec<f64>,
    pub virtual_backlog: Vec<f64>,
}

impl MetricsRecord {
    fn with_capacity(n: usize) -> Self {
        Self {
            delivered: Vec::with_capacity(n),
            delivered_raw: Vec::with_capacity(n),
            dropped: Vec::with_capacity(n),
            cost: Vec::with_capacity(n),
            backlog: Vec::with_capacity(n),
            virtual_backlog: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.delivered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delivered.is_empty()
    }

    /// Cumulative averages `(1/s) Σ_{t<s} series(t)` for `s = 1..=T`.
    pub fn running_mean(series: &[f64]) -> Vec<f64> {
        let mut acc = 0.0;
        series
            .iter()
            .enumerate()
            .map(|(t, v)| {
                acc += v;
                acc / (t + 1) as f64
            })
            .collect()
    }

    /// Mean of `series` over `range`; NaN when empty.
    pub fn window_mean(series: &[f64], range: std::ops::Range<usize>) -> f64 {
        let n = range.len();
        series[range].iter().sum::<f64>() / n as f64
    }
}

/// End-of-run aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub slots: usize,
    pub delivered_mean: f64,
    pub delivered_raw_mean: f64,
    pub dropped_mean: f64,
    pub cost_mean: f64,
    pub cost_mean_after_warmup: f64,
    pub final_backlog: f64,
    pub final_virtual_backlog: f64,
    /// Effective deliveries per slot, per commodity.
    pub delivered_by_commodity: Vec<f64>,
    /// Average per-slot usage of each capacity group over its capacity.
    pub group_utilization: Vec<f64>,
    /// Relative L1 gap between time-averaged actual and virtual flows.
    pub flow_matching_gap: Option<f64>,
    pub distribution_builds: u64,
    pub distribution_skips: u64,
    /// Average virtual flow ν̄ (proposed policy only).
    pub nu_mean: Option<FlowDecision>,
    /// Average actual flow μ̄ (proposed policy only).
    pub mu_mean: Option<FlowDecision>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: MetricsRecord,
    pub summary: RunSummary,
}

/// Receives each slot as it completes.
pub trait Observer {
    fn slot(&mut self, _t: usize, _ledger: &SlotLedger) {}
    fn snapshot(&mut self, _t: usize, _queues: &VirtualQueueBank) {}
}

impl Observer for () {}

fn rngs(cfg: &SimConfig) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut a = ChaCha8Rng::seed_from_u64(cfg.seed);
    a.set_stream(2 * cfg.replication);
    let mut p = ChaCha8Rng::seed_from_u64(cfg.seed);
    p.set_stream(2 * cfg.replication + 1);
    (a, p)
}

fn group_utilization(model: &NetworkModel, sums: &[f64], slots: usize) -> Vec<f64> {
    model
        .groups()
        .iter()
        .map(|g| g.edges.iter().map(|&e| sums[e]).sum::<f64>() / slots as f64 / g.capacity)
        .collect()
}

pub fn run(model: &NetworkModel, cfg: &SimConfig) -> Result<RunOutput, SimError> {
    run_observed(model, cfg, &mut ())
}

pub fn run_observed(
    model: &NetworkModel,
    cfg: &SimConfig,
    obs: &mut dyn Observer,
) -> Result<RunOutput, SimError> {
    if cfg.horizon == 0 {
        return Err(SimError::Config("horizon must be at least one slot".into()));
    }
    if !(cfg.controller.v >= 0.0 && cfg.controller.v.is_finite()) {
        return Err(SimError::Config(format!(
            "V must be finite and non-negative, got {}",
            cfg.controller.v
        )));
    }
    if cfg.warmup >= cfg.horizon {
        return Err(SimError::Config(format!(
            "warm-up {} must be shorter than the horizon {}",
            cfg.warmup, cfg.horizon
        )));
    }
    match cfg.policy {
        Policy::Proposed => run_proposed(model, cfg, obs),
        Policy::Dcnc => run_dcnc(model, cfg, obs),
    }
}

fn run_proposed(
    model: &NetworkModel,
    cfg: &SimConfig,
    obs: &mut dyn Observer,
) -> Result<RunOutput, SimError> {
    let (arr_rng, mut policy_rng) = rngs(cfg);
    let mut gen = ArrivalGenerator::new(model, cfg.arrivals, arr_rng);
    let mut ctl = Controller::new(model, cfg.controller.clone());
    let mut matcher = FlowMatcher::new(model, cfg.matcher.clone());
    let mut bank = LifetimeQueueBank::new(model);
    let mut a = ArrivalSample::zeros(model);
    let mut mu_sum = FlowDecision::zeros(model);
    let mut metrics = MetricsRecord::with_capacity(cfg.horizon);
    let k_count = model.commodity_count();
    let mut delivered_by = vec![0.0; k_count];

    for t in 0..cfg.horizon {
        gen.sample(&mut a);
        let nu = ctl.step(model, &a);
        let mu = matcher.step(model, nu, &a, &bank, &mut policy_rng);
        for k in 0..k_count {
            for (s, &v) in mu_sum.commodity_mut(k).iter_mut().zip(mu.commodity(k)) {
                *s += v;
            }
        }
        let ledger =
            bank.advance_slot(model.graph(), mu, &a)
                .map_err(|source| SimError::Invariant {
                    slot: t,
                    source,
                    dump: dump_state(&bank, ctl.queues()),
                })?;
        for (d, c) in delivered_by.iter_mut().zip(&ledger.commodities) {
            *d += c.delivered;
        }
        let delivered = ledger.delivered();
        metrics.delivered.push(delivered);
        metrics.delivered_raw.push(delivered);
        metrics.dropped.push(ledger.dropped());
        metrics.cost.push(ledger.cost());
        metrics.backlog.push(ledger.backlog());
        metrics.virtual_backlog.push(ctl.queues().l1());
        obs.slot(t, &ledger);
        if let Some(every) = cfg.snapshot_every {
            if every > 0 && (t + 1) % every == 0 {
                obs.snapshot(t, ctl.queues());
            }
        }
    }

    let slots = cfg.horizon;
    let inv = 1.0 / slots as f64;
    let nu_mean = matcher.stats().nu_mean();
    for k in 0..k_count {
        mu_sum.commodity_mut(k).iter_mut().for_each(|v| *v *= inv);
    }
    let edge_sums: Vec<f64> = (0..model.graph().edge_count())
        .map(|e| mu_sum.edge_total(e) * slots as f64)
        .collect();
    let summary = RunSummary {
        slots,
        delivered_mean: MetricsRecord::window_mean(&metrics.delivered, 0..slots),
        delivered_raw_mean: MetricsRecord::window_mean(&metrics.delivered_raw, 0..slots),
        dropped_mean: MetricsRecord::window_mean(&metrics.dropped, 0..slots),
        cost_mean: MetricsRecord::window_mean(&metrics.cost, 0..slots),
        cost_mean_after_warmup: MetricsRecord::window_mean(&metrics.cost, cfg.warmup..slots),
        final_backlog: *metrics.backlog.last().expect("horizon ≥ 1"),
        final_virtual_backlog: *metrics.virtual_backlog.last().expect("horizon ≥ 1"),
        delivered_by_commodity: delivered_by.iter().map(|d| d * inv).collect(),
        group_utilization: group_utilization(model, &edge_sums, slots),
        flow_matching_gap: Some(flow_matching_gap(&nu_mean, &mu_sum)),
        distribution_builds: matcher.builds(),
        distribution_skips: matcher.skips(),
        nu_mean: Some(nu_mean),
        mu_mean: Some(mu_sum),
    };
    Ok(RunOutput { metrics, summary })
}

fn run_dcnc(
    model: &NetworkModel,
    cfg: &SimConfig,
    obs: &mut dyn Observer,
) -> Result<RunOutput, SimError> {
    let (arr_rng, _) = rngs(cfg);
    let mut gen = ArrivalGenerator::new(model, cfg.arrivals, arr_rng);
    let mut bank = DcncBank::new(model);
    let dcfg = DcncConfig {
        v: cfg.controller.v,
    };
    let mut a = ArrivalSample::zeros(model);
    let mut metrics = MetricsRecord::with_capacity(cfg.horizon);
    let mut edge_sums = vec![0.0; model.graph().edge_count()];
    for t in 0..cfg.horizon {
        gen.sample(&mut a);
        let dec = bank.decide(model, &dcfg);
        for (e, s) in edge_sums.iter_mut().enumerate() {
            *s += dec.edge_total(e);
        }
        let led = bank
            .apply(model, &dec, &a)
            .map_err(|source| SimError::Invariant {
                slot: t,
                source,
                dump: format!("baseline backlog {}", bank.total_backlog()),
            })?;
        metrics.delivered.push(led.delivered);
        metrics.delivered_raw.push(led.delivered_raw);
        metrics.dropped.push(0.0);
        metrics.cost.push(led.cost);
        metrics.backlog.push(led.backlog);
        metrics.virtual_backlog.push(0.0);
        let row = SlotLedger {
            commodities: vec![crate::queueing::CommodityLedger {
                delivered: led.delivered,
                dropped: 0.0,
                backlog: led.backlog,
                cost: led.cost,
            }],
        };
        obs.slot(t, &row);
    }
    let slots = cfg.horizon;
    let summary = RunSummary {
        slots,
        delivered_mean: MetricsRecord::window_mean(&metrics.delivered, 0..slots),
        delivered_raw_mean: MetricsRecord::window_mean(&metrics.delivered_raw, 0..slots),
        dropped_mean: 0.0,
        cost_mean: MetricsRecord::window_mean(&metrics.cost, 0..slots),
        cost_mean_after_warmup: MetricsRecord::window_mean(&metrics.cost, cfg.warmup..slots),
        final_backlog: *metrics.backlog.last().expect("horizon ≥ 1"),
        final_virtual_backlog: 0.0,
        delivered_by_commodity: Vec::new(),
        group_utilization: group_utilization(model, &edge_sums, slots),
        flow_matching_gap: None,
        distribution_builds: 0,
        distribution_skips: 0,
        nu_mean: None,
        mu_mean: None,
    };
    Ok(RunOutput { metrics, summary })
}

fn dump_state(bank: &LifetimeQueueBank, u: &VirtualQueueBank) -> String {
    let mut s = String::new();
    for k in 0..bank.commodity_count() {
        let c = bank.counters(k);
        s.push_str(&format!(
            "commodity {k}: backlog {}, injected {}, delivered {}, dropped {}\n",
            bank.total_backlog(k),
            c.injected,
            c.delivered,
            c.dropped
        ));
    }
    s.push_str(&format!("virtual backlog {}", u.l1()));
    s
}

/// Relative slack on the deficit comparison, absorbing summation round-off.
const CONVERGENCE_SLACK: f64 = 1e-12;

/// The smallest τ such that for every `s` in `max(τ, 1)..=T` the running
/// deficit `target − (1/s) Σ_{t<s} delivered(t)` is at most `epsilon`;
/// `None` when even the final average misses.
pub fn detect_convergence(delivered: &[f64], target: f64, epsilon: f64) -> Option<usize> {
    let slack = CONVERGENCE_SLACK * target.abs().max(1.0);
    let mut acc = 0.0;
    let mut last_bad = None;
    for (t, v) in delivered.iter().enumerate() {
        acc += v;
        let deficit = target - acc / (t + 1) as f64;
        if deficit > epsilon + slack {
            last_bad = Some(t + 1);
        }
    }
    match last_bad {
        None => Some(0),
        Some(s) if s == delivered.len() => None,
        Some(s) => Some(s + 1),
    }
}

/// One run of a sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: f64,
    pub replication: u64,
    pub summary: RunSummary,
    pub convergence_time: Option<usize>,
}

/// Runs every `(value, replication)` pair built by `make` on at most `jobs`
/// threads; results come back in input order. Convergence times use a gap
/// of `epsilon` times each model's total arrival rate.
pub fn sweep<F>(
    values: &[f64],
    replications: u64,
    jobs: usize,
    epsilon: f64,
    make: F,
) -> Result<Vec<SweepPoint>, SimError>
where
    F: Fn(f64, u64) -> Result<(NetworkModel, SimConfig), SimError> + Sync,
{
    if values.is_empty() {
        return Err(SimError::Config("sweep needs at least one value".into()));
    }
    let tasks: Vec<(f64, u64)> = values
        .iter()
        .flat_map(|&v| (0..replications.max(1)).map(move |r| (v, r)))
        .collect();
    let one = |&(value, replication): &(f64, u64)| -> Result<SweepPoint, SimError> {
        let (model, mut cfg) = make(value, replication)?;
        cfg.replication = replication;
        let out = run(&model, &cfg)?;
        Ok(SweepPoint {
            value,
            replication,
            convergence_time: detect_convergence(
                &out.metrics.delivered,
                model.required_rate(),
                epsilon * model.total_rate(),
            ),
            summary: out.summary,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| SimError::Config(e.to_string()))?;
    pool.install(|| tasks.par_iter().map(one).collect())
}

/// Mean and standard error of one column across replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let stderr = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr }
    }
}

/// Per-value aggregates of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub runs: usize,
    pub delivered: Estimate,
    pub cost: Estimate,
    pub backlog: Estimate,
    pub virtual_backlog: Estimate,
    /// Runs that converged, and the estimate over those.
    pub converged: usize,
    pub convergence_time: Option<Estimate>,
}

pub fn aggregate(points: &[SweepPoint]) -> Vec<SweepRow> {
    let mut values: Vec<f64> = Vec::new();
    for p in points {
        if !values.contains(&p.value) {
            values.push(p.value);
        }
    }
    values
        .into_iter()
        .map(|v| {
            let ps: Vec<&SweepPoint> = points.iter().filter(|p| p.value == v).collect();
            let col = |f: &dyn Fn(&SweepPoint) -> f64| {
                Estimate::of(&ps.iter().map(|p| f(p)).collect::<Vec<_>>())
            };
            let times: Vec<f64> = ps
                .iter()
                .filter_map(|p| p.convergence_time.map(|t| t as f64))
                .collect();
            SweepRow {
                value: v,
                runs: ps.len(),
                delivered: col(&|p| p.summary.delivered_mean),
                cost: col(&|p| p.summary.cost_mean),
                backlog: col(&|p| p.summary.final_backlog),
                virtual_backlog: col(&|p| p.summary.final_virtual_backlog),
                converged: times.len(),
                convergence_time: (!times.is_empty()).then(|| Estimate::of(&times)),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::layered::build_layered_graph;

    fn brute_force(delivered: &[f64], target: f64, eps: f64) -> Option<usize> {
        let t = delivered.len();
        let deficit = |s: usize| target - delivered[..s].iter().sum::<f64>() / s as f64;
        (0..=t).find(|&tau| (tau.max(1)..=t).all(|s| deficit(s) <= eps + 1e-12 * target.max(1.0)))
    }

    #[test]
    fn convergence_constant_and_zero() {
        let target = 0.9 * 20.0;
        let d = vec![target; 50];
        assert_eq!(detect_convergence(&d, target, 0.0), Some(0));
        assert_eq!(detect_convergence(&[0.0; 50], target, 0.5), None);
    }

    #[test]
    fn convergence_matches_brute_force() {
        let target = 9.0;
        let mut d = vec![0.0; 10];
        d.extend([2.0 * target; 40]);
        let eps = 0.1 * target;
        let fast = detect_convergence(&d, target, eps);
        assert_eq!(fast, brute_force(&d, target, eps));
        // Deficit at s is 9·(1 − 2(s − 10)/s) ≤ 0.9 once s ≥ 19.
        assert_eq!(fast, Some(19));
        for eps in [0.0, 0.3, 2.0, 5.0, 9.0] {
            assert_eq!(
                detect_convergence(&d, target, eps),
                brute_force(&d, target, eps)
            );
        }
    }

    #[test]
    fn convergence_time_non_increasing_in_eps() {
        let d: Vec<f64> = (0..200).map(|t| ((t * 37) % 11) as f64).collect();
        let mut prev = None::<usize>;
        for eps in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let t = detect_convergence(&d, 5.0, eps);
            if let (Some(p), Some(c)) = (prev, t) {
                assert!(c <= p);
            }
            if prev.is_some() {
                assert!(t.is_some());
            }
            prev = t.or(prev);
        }
    }

    fn two_node_model(lifetime: usize) -> NetworkModel {
        let s = builtin::two_node(5.0, 1.0, lifetime, 4.0, 1.0).unwrap();
        build_layered_graph(&s).unwrap().into_model()
    }

    #[test]
    fn first_slot_holds_everything() {
        let m = two_node_model(2);
        let out = run(&m, &SimConfig::default()).unwrap();
        assert_eq!(out.metrics.delivered, vec![0.0]);
        assert_eq!(out.metrics.cost, vec![0.0]);
    }

    #[test]
    fn zero_horizon_rejected() {
        let m = two_node_model(2);
        let cfg = SimConfig {
            horizon: 0,
            ..SimConfig::default()
        };
        assert!(matches!(run(&m, &cfg), Err(SimError::Config(_))));
    }

    #[test]
    fn same_seed_same_series() {
        let s = builtin::abilene(&crate::model::UnitSystem::default(), 6, 60.0).unwrap();
        let m = build_layered_graph(&s).unwrap().into_model();
        let cfg = SimConfig {
            horizon: 300,
            seed: 11,
            controller: ControllerConfig::with_v(5.0),
            ..SimConfig::default()
        };
        let a = run(&m, &cfg).unwrap();
        let b = run(&m, &cfg).unwrap();
        assert_eq!(a.metrics, b.metrics);
        let mut par = cfg.clone();
        par.controller.parallel = true;
        assert_eq!(run(&m, &par).unwrap().metrics, a.metrics);
        let mut other = cfg.clone();
        other.replication = 1;
        assert_ne!(
            run(&m, &other).unwrap().metrics.delivered,
            a.metrics.delivered
        );
        let mut dcnc = cfg;
        dcnc.policy = Policy::Dcnc;
        assert_eq!(
            run(&m, &dcnc).unwrap().metrics,
            run(&m, &dcnc).unwrap().metrics
        );
    }

    #[test]
    fn generator_respects_a_max_and_mean() {
        let m = two_node_model(2);
        for process in [
            ArrivalProcess::Poisson,
            ArrivalProcess::Deterministic,
            ArrivalProcess::BoundedUniform,
        ] {
            let mut g = ArrivalGenerator::new(&m, process, ChaCha8Rng::seed_from_u64(3));
            let mut a = ArrivalSample::zeros(&m);
            let mut sum = 0.0;
            let n = 20_000;
            for _ in 0..n {
                g.sample(&mut a);
                assert!(a.total(0) <= m.commodities()[0].a_max);
                sum += a.total(0);
            }
            assert!((sum / n as f64 - 4.0).abs() < 0.1, "{process:?}");
        }
    }

    #[test]
    fn sweep_is_ordered_and_deterministic() {
        let make = |v: f64, _r: u64| {
            let s = builtin::two_node(5.0, 1.0, 2, v, 1.0)?;
            let m = build_layered_graph(&s)?.into_model();
            Ok((
                m,
                SimConfig {
                    horizon: 200,
                    seed: 5,
                    ..SimConfig::default()
                },
            ))
        };
        let pts = sweep(&[1.0, 2.0], 3, 2, 0.05, make).unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(
            pts.iter()
                .map(|p| (p.value, p.replication))
                .collect::<Vec<_>>()[..3],
            [(1.0, 0), (1.0, 1), (1.0, 2)]
        );
        let again = sweep(&[1.0, 2.0], 3, 1, 0.05, make).unwrap();
        for (a, b) in pts.iter().zip(&again) {
            assert_eq!(a.summary, b.summary);
        }
        assert_ne!(pts[0].summary.delivered_mean, pts[1].summary.delivered_mean);
        let rows = aggregate(&pts);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].runs, 3);
        assert!(sweep(&[], 1, 1, 0.05, make).is_err());
    }
}
