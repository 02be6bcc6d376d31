//! The deadline-constrained capacity region as a linear program.
//!
//! Variables are `x_k,e,l ≥ 0` for every commodity, edge and lifetime, except
//! edges leaving the commodity's destination. Rows:
//!
//! * reliability: `x_→d ≥ γ Σλ` per commodity;
//! * capacity: Σ over a group's edges, all commodities and lifetimes `≤ C`;
//! * conservation: `x_i→^(≥l) − x_→i^(≥l+1) ≤ λ_i^(≥l)` for `i ≠ d`.

use crate::error::LpError;
use crate::matching::{distribution_from_flows, BuildOutcome};
use crate::model::{EdgeId, NetworkModel};
use crate::queueing::{ArrivalSample, FlowDecision};

use super::{find_feasible, solve, LpInstance, LpSolution, LpStatus, Sense};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildOptions {
    /// Drop variables that can never carry flow: those whose packets cannot
    /// reach the destination before expiring and those no arrival can feed.
    /// The optimum and feasibility are unchanged.
    pub prune: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Reliability {
        commodity: usize,
    },
    Capacity {
        group: usize,
    },
    Conservation {
        commodity: usize,
        node: usize,
        lifetime: usize,
    },
}

#[derive(Debug, Clone)]
pub struct CapacityLp {
    pub instance: LpInstance,
    /// `(commodity, edge, lifetime)` of each variable.
    pub vars: Vec<(usize, EdgeId, usize)>,
    /// Kind of each row of `instance`.
    pub rows: Vec<RowKind>,
    index: Vec<Vec<Option<usize>>>,
    lifetimes: Vec<usize>,
}

impl CapacityLp {
    pub fn var_of(&self, k: usize, edge: EdgeId, lifetime: usize) -> Option<usize> {
        self.index[k][edge * self.lifetimes[k] + lifetime - 1]
    }

    /// Spreads a solution vector back onto the flow layout.
    pub fn to_flows(&self, model: &NetworkModel, x: &[f64]) -> FlowDecision {
        let mut f = FlowDecision::zeros(model);
        for (j, &(k, e, l)) in self.vars.iter().enumerate() {
            if x[j] > 0.0 {
                f.set(k, e, l, x[j]);
            }
        }
        f
    }
}

/// The unpruned program.
pub fn build_lp(model: &NetworkModel) -> Result<CapacityLp, LpError> {
    build_lp_with(model, BuildOptions::default())
}

pub fn build_lp_with(model: &NetworkModel, opts: BuildOptions) -> Result<CapacityLp, LpError> {
    build_inner(model, opts, false)
}

/// With `with_theta`, a last variable θ multiplies every arrival rate.
fn build_inner(
    model: &NetworkModel,
    opts: BuildOptions,
    with_theta: bool,
) -> Result<CapacityLp, LpError> {
    let graph = model.graph();
    let n = graph.node_count();
    let lifetimes = model.lifetimes();
    if let Some(k) = lifetimes.iter().position(|&l| l == 0) {
        return Err(LpError::Malformed(format!(
            "commodity {k} has maximum lifetime 0"
        )));
    }
    let mut inst = LpInstance::new();
    let mut vars = Vec::new();
    let mut index: Vec<Vec<Option<usize>>> = lifetimes
        .iter()
        .map(|&l| vec![None; graph.edge_count() * l])
        .collect();

    for (k, c) in model.commodities().iter().enumerate() {
        let l_max = lifetimes[k];
        let to_d = graph.hops_to(c.destination);
        // Highest lifetime a packet of this commodity can hold at each node.
        let mut feed: Vec<Option<usize>> = vec![None; n];
        if opts.prune {
            for s in 0..n {
                let top = (1..=l_max).rev().find(|&l| c.rates.get(s, l) > 0.0);
                let Some(top) = top else { continue };
                for (i, h) in graph.hops_from(s).into_iter().enumerate() {
                    if let Some(h) = h {
                        if h < top {
                            let v = top - h;
                            feed[i] = Some(feed[i].map_or(v, |f: usize| f.max(v)));
                        }
                    }
                }
            }
        }
        for (e, edge) in graph.edges().iter().enumerate() {
            if edge.src == c.destination {
                continue;
            }
            for l in 1..=l_max {
                if opts.prune {
                    let reaches =
                        edge.dst == c.destination || to_d[edge.dst].is_some_and(|h| h < l);
                    let fed = feed[edge.src].is_some_and(|f| l <= f);
                    if !reaches || !fed {
                        continue;
                    }
                }
                // Flows are free when θ is the objective.
                let cost = if with_theta { 0.0 } else { edge.cost };
                let j = inst.add_var(&format!("x_k{k}_e{e}_l{l}"), cost);
                index[k][e * l_max + l - 1] = Some(j);
                vars.push((k, e, l));
            }
        }
    }
    let theta = with_theta.then(|| inst.add_var("theta", -1.0));

    let mut rows = Vec::new();
    for (k, c) in model.commodities().iter().enumerate() {
        let l_max = lifetimes[k];
        let mut coeffs = Vec::new();
        for &e in graph.incoming(c.destination) {
            for l in 1..=l_max {
                if let Some(j) = index[k][e * l_max + l - 1] {
                    coeffs.push((j, 1.0));
                }
            }
        }
        let need = c.gamma * c.total_rate();
        let rhs = match theta {
            Some(t) => {
                coeffs.push((t, -need));
                0.0
            }
            None => need,
        };
        inst.add_constraint(&format!("rel_k{k}"), coeffs, Sense::Ge, rhs);
        rows.push(RowKind::Reliability { commodity: k });
    }
    for (g, group) in model.groups().iter().enumerate() {
        let mut coeffs = Vec::new();
        for &e in &group.edges {
            for (k, &l_max) in lifetimes.iter().enumerate() {
                for l in 1..=l_max {
                    if let Some(j) = index[k][e * l_max + l - 1] {
                        coeffs.push((j, 1.0));
                    }
                }
            }
        }
        if coeffs.is_empty() {
            continue;
        }
        inst.add_constraint(&format!("cap_g{g}"), coeffs, Sense::Le, group.capacity);
        rows.push(RowKind::Capacity { group: g });
    }
    for (k, c) in model.commodities().iter().enumerate() {
        let l_max = lifetimes[k];
        for i in 0..n {
            if i == c.destination {
                continue;
            }
            for l in 1..=l_max {
                let mut coeffs = Vec::new();
                for &e in graph.outgoing(i) {
                    for lp in l..=l_max {
                        if let Some(j) = index[k][e * l_max + lp - 1] {
                            coeffs.push((j, 1.0));
                        }
                    }
                }
                if coeffs.is_empty() {
                    continue;
                }
                for &e in graph.incoming(i) {
                    for lp in l + 1..=l_max {
                        if let Some(j) = index[k][e * l_max + lp - 1] {
                            coeffs.push((j, -1.0));
                        }
                    }
                }
                let lam = c.rates.at_least(i, l);
                let rhs = match theta {
                    Some(t) => {
                        if lam != 0.0 {
                            coeffs.push((t, -lam));
                        }
                        0.0
                    }
                    None => lam,
                };
                inst.add_constraint(&format!("cons_k{k}_n{i}_l{l}"), coeffs, Sense::Le, rhs);
                rows.push(RowKind::Conservation {
                    commodity: k,
                    node: i,
                    lifetime: l,
                });
            }
        }
    }
    Ok(CapacityLp {
        instance: inst,
        vars,
        rows,
        index,
        lifetimes,
    })
}

/// Minimum-cost solution h*(λ, γ) of the pruned program.
pub fn min_cost(model: &NetworkModel) -> Result<(CapacityLp, LpSolution), LpError> {
    let lp = build_lp_with(model, BuildOptions { prune: true })?;
    let sol = solve(&lp.instance)?;
    Ok((lp, sol))
}

fn feasible_at(model: &NetworkModel, theta: f64) -> Result<bool, LpError> {
    let scaled = model
        .scaled(theta)
        .map_err(|e| LpError::Malformed(e.to_string()))?;
    let lp = build_lp_with(&scaled, BuildOptions { prune: true })?;
    Ok(find_feasible(&lp.instance)?.status != LpStatus::Infeasible)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryResult {
    /// Largest feasible scaling found; infinite when no reliability is required.
    pub theta: f64,
    /// Feasibility programs solved.
    pub probes: usize,
}

/// Largest θ with (θλ, γ) feasible, where λ are the model's rates, found by
/// doubling and then bisecting to within `tolerance`.
pub fn region_boundary(model: &NetworkModel, tolerance: f64) -> Result<BoundaryResult, LpError> {
    if !(tolerance > 0.0) {
        return Err(LpError::Malformed(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    if model.required_rate() == 0.0 {
        return Ok(BoundaryResult {
            theta: f64::INFINITY,
            probes: 0,
        });
    }
    let mut probes = 0;
    let mut probe = |t: f64| {
        probes += 1;
        feasible_at(model, t)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while probe(hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Ok(BoundaryResult {
                theta: f64::INFINITY,
                probes,
            });
        }
    }
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        if probe(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(BoundaryResult { theta: lo, probes })
}

/// The same boundary from a single program that maximizes θ directly.
pub fn max_scaling(model: &NetworkModel) -> Result<f64, LpError> {
    let lp = build_inner(model, BuildOptions { prune: true }, true)?;
    match solve(&lp.instance) {
        Ok(sol) if sol.status == LpStatus::Optimal => Ok(-sol.objective),
        Ok(_) => Ok(0.0),
        Err(LpError::Unbounded) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// The randomized routing policy that realizes the flows `x` of `lp`.
pub fn extract_randomized_policy(lp: &CapacityLp, model: &NetworkModel, x: &[f64]) -> BuildOutcome {
    let flows = lp.to_flows(model, x);
    let mut lambda = ArrivalSample::zeros(model);
    for (k, c) in model.commodities().iter().enumerate() {
        for (i, l, r) in c.rates.entries() {
            lambda.set(k, i, l, r);
        }
    }
    distribution_from_flows(model, &flows, &lambda)
}
