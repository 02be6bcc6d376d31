//! Flow matching: steer the actual network toward the time-averaged virtual
//! flows with a per-node, per-lifetime randomized routing distribution.
//!
//! The routing probability of edge `(i, j)` at lifetime `l` is
//! `x_ij^(l) / (x_in^(≥l+1) + λ_i^(≥l) − x_out^(≥l+1))`, where the denominator
//! is the steady-state stock at `(i, l)`. Averages are kept as raw sums; the
//! common `1/t` factor cancels in the ratio.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::model::{NetworkModel, NodeId};
use crate::queueing::{ArrivalSample, FlowDecision, LifetimeQueueBank};

/// Relative slack in the validity test of a distribution row.
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

/// Guard for the relative gap denominator.
pub const GAP_EPSILON: f64 = 1e-12;

/// Running sums of ν and of the arrivals over slots `0..t`.
#[derive(Debug, Clone)]
pub struct EmpiricalFlowStats {
    slots: u64,
    nu: FlowDecision,
    arrivals: ArrivalSample,
}

impl EmpiricalFlowStats {
    pub fn new(model: &NetworkModel) -> Self {
        Self {
            slots: 0,
            nu: FlowDecision::zeros(model),
            arrivals: ArrivalSample::zeros(model),
        }
    }

    pub fn slots(&self) -> u64 {
        self.slots
    }

    pub fn update(&mut self, nu: &FlowDecision, a: &ArrivalSample) {
        for k in 0..nu.commodity_count() {
            for (s, &v) in self.nu.commodity_mut(k).iter_mut().zip(nu.commodity(k)) {
                *s += v;
            }
            for (s, &v) in self
                .arrivals
                .commodity_mut(k)
                .iter_mut()
                .zip(a.commodity(k))
            {
                *s += v;
            }
        }
        self.slots += 1;
    }

    /// Σ_{τ<t} ν(τ).
    pub fn nu_sum(&self) -> &FlowDecision {
        &self.nu
    }

    /// Σ_{τ<t} a(τ).
    pub fn arrival_sum(&self) -> &ArrivalSample {
        &self.arrivals
    }

    /// ν̄(t); zero before the first slot.
    pub fn nu_mean(&self) -> FlowDecision {
        let mut m = self.nu.clone();
        if self.slots > 0 {
            let inv = 1.0 / self.slots as f64;
            for k in 0..m.commodity_count() {
                m.commodity_mut(k).iter_mut().for_each(|v| *v *= inv);
            }
        }
        m
    }

    /// λ̂_i^(≥l)(t); zero before the first slot.
    pub fn lambda_hat_at_least(&self, k: usize, node: NodeId, lifetime: usize) -> f64 {
        if self.slots == 0 {
            return 0.0;
        }
        self.arrivals.at_least(k, node, lifetime) / self.slots as f64
    }
}

/// α_i^(l)(j) for every edge and lifetime of every commodity.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingDistribution {
    /// Same layout as [`FlowDecision`]: `[k][e * L + l - 1]`.
    alpha: FlowDecision,
}

impl RoutingDistribution {
    /// Every packet stays where it is.
    pub fn hold_all(model: &NetworkModel) -> Self {
        Self {
            alpha: FlowDecision::zeros(model),
        }
    }

    pub fn alpha(&self, k: usize, edge: usize, lifetime: usize) -> f64 {
        self.alpha.get(k, edge, lifetime)
    }

    /// 1 − Σ_j α_i^(l)(j).
    pub fn hold(&self, model: &NetworkModel, k: usize, node: NodeId, lifetime: usize) -> f64 {
        1.0 - model
            .graph()
            .outgoing(node)
            .iter()
            .map(|&e| self.alpha.get(k, e, lifetime))
            .sum::<f64>()
    }

    pub fn as_flow_shape(&self) -> &FlowDecision {
        &self.alpha
    }

    /// Rows `(commodity, edge, lifetime, α)` with α > 0.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        self.alpha.nonzeros()
    }
}

/// Why a distribution could not be built.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipReason {
    pub commodity: usize,
    pub node: NodeId,
    pub lifetime: usize,
    pub outgoing: f64,
    pub denominator: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BuildOutcome {
    Ready(RoutingDistribution),
    Skip(SkipReason),
}

/// Evaluates every `(k, i, l)` row of the routing rule for flows `x` and
/// arrival totals `lambda` (any common scaling). Valid rows are written into
/// `alpha`; `on_invalid` sees each invalid row, whose entries are untouched.
///
/// A row is invalid when its outgoing total exceeds the denominator beyond
/// tolerance. Rows with no outgoing flow and a non-negative denominator hold.
fn evaluate_rows(
    model: &NetworkModel,
    x: &FlowDecision,
    lambda: &ArrivalSample,
    alpha: &mut FlowDecision,
    project_invalid: bool,
    mut on_invalid: impl FnMut(SkipReason) -> bool,
) {
    let graph = model.graph();
    let n = graph.node_count();
    for (k, c) in model.commodities().iter().enumerate() {
        let l_max = c.max_lifetime();
        let mut inflow = vec![0.0; n * l_max];
        let mut outflow = vec![0.0; n * l_max];
        x.node_totals(graph, k, &mut inflow, &mut outflow);
        let lam = lambda.commodity(k);
        for i in 0..n {
            if i == c.destination {
                continue;
            }
            let base = i * l_max;
            let mut in_ge_next = 0.0;
            let mut out_ge_next = 0.0;
            let mut lam_ge = 0.0;
            for l in (1..=l_max).rev() {
                lam_ge += lam[base + l - 1];
                let out_l = outflow[base + l - 1];
                let den = in_ge_next + lam_ge - out_ge_next;
                let scale = in_ge_next + lam_ge + out_ge_next + out_l;
                let tol = DISTRIBUTION_TOLERANCE * scale.max(f64::MIN_POSITIVE);
                let valid = if out_l == 0.0 {
                    den >= -tol
                } else {
                    den > 0.0 && out_l <= den + tol
                };
                if !valid
                    && on_invalid(SkipReason {
                        commodity: k,
                        node: i,
                        lifetime: l,
                        outgoing: out_l,
                        denominator: den,
                    })
                {
                    return;
                }
                if valid || project_invalid {
                    // Dividing by the larger of the two keeps Σα ≤ 1.
                    let norm = if out_l > den { out_l } else { den };
                    for &e in graph.outgoing(i) {
                        let v = if out_l == 0.0 {
                            0.0
                        } else {
                            x.get(k, e, l) / norm
                        };
                        alpha.set(k, e, l, v);
                    }
                }
                in_ge_next += inflow[base + l - 1];
                out_ge_next += out_l;
            }
        }
    }
}

/// Builds the routing distribution from the statistics of slots `0..t`.
/// Any invalid row makes the whole build a skip.
pub fn build_distribution(stats: &EmpiricalFlowStats, model: &NetworkModel) -> BuildOutcome {
    distribution_from_flows(model, stats.nu_sum(), stats.arrival_sum())
}

/// The routing rule applied to arbitrary flows and arrival rates.
pub fn distribution_from_flows(
    model: &NetworkModel,
    x: &FlowDecision,
    lambda: &ArrivalSample,
) -> BuildOutcome {
    let mut alpha = FlowDecision::zeros(model);
    let mut reason = None;
    evaluate_rows(model, x, lambda, &mut alpha, false, |r| {
        reason = Some(r);
        true
    });
    match reason {
        Some(r) => BuildOutcome::Skip(r),
        None => BuildOutcome::Ready(RoutingDistribution { alpha }),
    }
}

/// How the actual flow is drawn from a distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Realization {
    /// μ = Q·α exactly.
    Fluid,
    /// Whole quanta of the backlog are routed by a multinomial draw; the
    /// fractional remainder is held.
    Sampled { quantum: f64 },
}

/// Which part of the policy an invalid row freezes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum SkipScope {
    /// Any invalid row keeps the whole previous distribution.
    Global,
    /// Only invalid rows keep their previous probabilities.
    PerRow,
    /// Nothing is frozen: an overdrawn row sends `x_ij / max(den, x_i→)`,
    /// which forwards its whole backlog in the observed proportions.
    #[default]
    Project,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatcherConfig {
    pub realization: Realization,
    pub skip_scope: SkipScope,
    /// Cap per-slot group totals at this multiple of the group capacity.
    pub peak_cap: Option<f64>,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            realization: Realization::Fluid,
            skip_scope: SkipScope::Project,
            peak_cap: None,
        }
    }
}

/// Writes μ for every edge from the backlog at its source.
pub fn realize_flows<R: Rng + ?Sized>(
    model: &NetworkModel,
    dist: &RoutingDistribution,
    bank: &LifetimeQueueBank,
    realization: Realization,
    rng: &mut R,
    out: &mut FlowDecision,
) {
    out.clear();
    let graph = model.graph();
    match realization {
        Realization::Fluid => {
            for k in 0..model.commodity_count() {
                let l_max = bank.max_lifetime(k);
                let q = bank.commodity(k);
                let a = dist.alpha.commodity(k);
                let mu = out.commodity_mut(k);
                for (e, edge) in graph.edges().iter().enumerate() {
                    let src = &q[edge.src * l_max..(edge.src + 1) * l_max];
                    for l in 0..l_max {
                        let p = a[e * l_max + l];
                        if p != 0.0 {
                            mu[e * l_max + l] = src[l] * p;
                        }
                    }
                }
            }
        }
        Realization::Sampled { quantum } => {
            assert!(quantum > 0.0, "quantum must be positive");
            for k in 0..model.commodity_count() {
                let l_max = bank.max_lifetime(k);
                for i in 0..graph.node_count() {
                    let outs = graph.outgoing(i);
                    for l in 1..=l_max {
                        let q = bank.get(k, i, l);
                        let mut units = (q / quantum).floor() as u64;
                        if units == 0 {
                            continue;
                        }
                        let mut rest = 1.0;
                        for &e in outs {
                            let p = dist.alpha.get(k, e, l);
                            if p <= 0.0 || units == 0 {
                                rest -= p;
                                continue;
                            }
                            let cond = (p / rest).clamp(0.0, 1.0);
                            let drawn = Binomial::new(units, cond)
                                .expect("probability in [0, 1]")
                                .sample(rng);
                            out.set(k, e, l, drawn as f64 * quantum);
                            units -= drawn;
                            rest -= p;
                        }
                    }
                }
            }
        }
    }
}

/// Scales each group's per-slot total down to `factor` × its capacity.
pub fn apply_peak_cap(model: &NetworkModel, factor: f64, mu: &mut FlowDecision) {
    for g in model.groups() {
        let total: f64 = g.edges.iter().map(|&e| mu.edge_total(e)).sum();
        let limit = factor * g.capacity;
        if total > limit {
            let s = limit / total;
            for k in 0..mu.commodity_count() {
                let l_max = mu.max_lifetime(k);
                let d = mu.commodity_mut(k);
                for &e in &g.edges {
                    d[e * l_max..(e + 1) * l_max]
                        .iter_mut()
                        .for_each(|v| *v *= s);
                }
            }
        }
    }
}

/// ‖μ̄ − ν̄‖₁ / max(‖ν̄‖₁, ε); both arguments are averages (or sums) over the
/// same horizon.
pub fn flow_matching_gap(nu: &FlowDecision, mu: &FlowDecision) -> f64 {
    let mut diff = 0.0;
    let mut norm = 0.0;
    for k in 0..nu.commodity_count() {
        for (&a, &b) in nu.commodity(k).iter().zip(mu.commodity(k)) {
            diff += (a - b).abs();
            norm += a.abs();
        }
    }
    diff / norm.max(GAP_EPSILON)
}

/// Stateful flow matcher for one run.
#[derive(Debug, Clone)]
pub struct FlowMatcher {
    cfg: MatcherConfig,
    stats: EmpiricalFlowStats,
    current: Option<RoutingDistribution>,
    mu: FlowDecision,
    builds: u64,
    skips: u64,
    skipped_rows: u64,
}

impl FlowMatcher {
    pub fn new(model: &NetworkModel, cfg: MatcherConfig) -> Self {
        Self {
            cfg,
            stats: EmpiricalFlowStats::new(model),
            current: None,
            mu: FlowDecision::zeros(model),
            builds: 0,
            skips: 0,
            skipped_rows: 0,
        }
    }

    pub fn stats(&self) -> &EmpiricalFlowStats {
        &self.stats
    }

    pub fn distribution(&self) -> Option<&RoutingDistribution> {
        self.current.as_ref()
    }

    /// Successful builds so far.
    pub fn builds(&self) -> u64 {
        self.builds
    }

    /// Slots whose build was rejected (global scope) or that had at least one
    /// frozen row (per-row scope).
    pub fn skips(&self) -> u64 {
        self.skips
    }

    pub fn skipped_rows(&self) -> u64 {
        self.skipped_rows
    }

    /// Rebuilds the policy from slots `0..t`, realizes μ(t) from the backlog,
    /// then records ν(t) and a(t).
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        model: &NetworkModel,
        nu: &FlowDecision,
        a: &ArrivalSample,
        bank: &LifetimeQueueBank,
        rng: &mut R,
    ) -> &FlowDecision {
        if self.stats.slots() > 0 {
            self.rebuild(model);
        }
        match &self.current {
            Some(dist) => {
                realize_flows(model, dist, bank, self.cfg.realization, rng, &mut self.mu);
                if let Some(f) = self.cfg.peak_cap {
                    apply_peak_cap(model, f, &mut self.mu);
                }
            }
            None => self.mu.clear(),
        }
        self.stats.update(nu, a);
        &self.mu
    }

    fn rebuild(&mut self, model: &NetworkModel) {
        match self.cfg.skip_scope {
            SkipScope::Global => match build_distribution(&self.stats, model) {
                BuildOutcome::Ready(d) => {
                    self.current = Some(d);
                    self.builds += 1;
                }
                BuildOutcome::Skip(_) => {
                    self.skips += 1;
                    self.skipped_rows += 1;
                }
            },
            SkipScope::Project => {
                let mut alpha = self
                    .current
                    .take()
                    .map_or_else(|| FlowDecision::zeros(model), |d| d.alpha);
                let mut bad = 0u64;
                evaluate_rows(
                    model,
                    self.stats.nu_sum(),
                    self.stats.arrival_sum(),
                    &mut alpha,
                    true,
                    |_| {
                        bad += 1;
                        false
                    },
                );
                self.current = Some(RoutingDistribution { alpha });
                self.builds += 1;
                if bad > 0 {
                    self.skips += 1;
                    self.skipped_rows += bad;
                }
            }
            SkipScope::PerRow => {
                let mut alpha = match self.current.take() {
                    Some(d) => d.alpha,
                    None => FlowDecision::zeros(model),
                };
                let mut bad = 0u64;
                evaluate_rows(
                    model,
                    self.stats.nu_sum(),
                    self.stats.arrival_sum(),
                    &mut alpha,
                    false,
                    |_| {
                        bad += 1;
                        false
                    },
                );
                self.current = Some(RoutingDistribution { alpha });
                self.builds += 1;
                if bad > 0 {
                    self.skips += 1;
                    self.skipped_rows += bad;
                }
            }
        }
    }
}
