//! Virtual-network controller: virtual queues, drift-plus-penalty weights and
//! group-wise max-weight allocation.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::model::{CapacityGroup, NetworkModel, NodeId};
use crate::queueing::{ArrivalSample, FlowDecision};

/// Order in which equal weights are resolved within a capacity group.
///
/// Both variants break remaining ties by lower commodity id, then lower edge id.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum TieBreak {
    #[default]
    SmallestLifetime,
    LargestLifetime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    /// Penalty weight V ≥ 0 on cost.
    pub v: f64,
    pub tie_break: TieBreak,
    /// Slots of delay τ before A(t) enters the destination deficit queue.
    pub arrival_delay: usize,
    /// Evaluate weights and groups on the rayon pool; results are identical.
    pub parallel: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            v: 0.0,
            tie_break: TieBreak::default(),
            arrival_delay: 0,
            parallel: false,
        }
    }
}

impl ControllerConfig {
    pub fn with_v(v: f64) -> Self {
        Self {
            v,
            ..Self::default()
        }
    }
}

/// Virtual queues U_d and U_i^(l) of every commodity.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualQueueBank {
    lifetimes: Vec<usize>,
    destinations: Vec<NodeId>,
    deficit: Vec<f64>,
    /// `[k][i * L + l - 1]`; entries at the destination stay 0.
    reservoir: Vec<Vec<f64>>,
}

impl VirtualQueueBank {
    pub fn new(model: &NetworkModel) -> Self {
        let n = model.graph().node_count();
        let lifetimes = model.lifetimes();
        Self {
            destinations: model.commodities().iter().map(|c| c.destination).collect(),
            deficit: vec![0.0; lifetimes.len()],
            reservoir: lifetimes.iter().map(|&l| vec![0.0; n * l]).collect(),
            lifetimes,
        }
    }

    pub fn commodity_count(&self) -> usize {
        self.lifetimes.len()
    }

    /// U_d of commodity `k`.
    pub fn destination(&self, k: usize) -> f64 {
        self.deficit[k]
    }

    pub fn set_destination(&mut self, k: usize, value: f64) {
        assert!(value >= 0.0);
        self.deficit[k] = value;
    }

    /// U_i^(l) of commodity `k`.
    pub fn get(&self, k: usize, node: NodeId, lifetime: usize) -> f64 {
        self.reservoir[k][node * self.lifetimes[k] + lifetime - 1]
    }

    pub fn set(&mut self, k: usize, node: NodeId, lifetime: usize, value: f64) {
        assert!(value >= 0.0);
        assert_ne!(node, self.destinations[k]);
        let l = self.lifetimes[k];
        self.reservoir[k][node * l + lifetime - 1] = value;
    }

    /// ‖U‖₁ over all commodities.
    pub fn l1(&self) -> f64 {
        self.deficit.iter().sum::<f64>() + self.reservoir.iter().flatten().sum::<f64>()
    }

    /// Non-zero entries as `(commodity, node, lifetime, value)`; U_d is
    /// reported at the destination node with lifetime 0.
    pub fn snapshot(&self) -> Vec<(usize, NodeId, usize, f64)> {
        let mut rows = Vec::new();
        for k in 0..self.commodity_count() {
            rows.push((k, self.destinations[k], 0, self.deficit[k]));
            let l_max = self.lifetimes[k];
            for (idx, &v) in self.reservoir[k].iter().enumerate() {
                if v != 0.0 {
                    rows.push((k, idx / l_max, idx % l_max + 1, v));
                }
            }
        }
        rows
    }
}

/// Per-slot weights, laid out like [`FlowDecision`].
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    lifetimes: Vec<usize>,
    data: Vec<Vec<f64>>,
}

impl Weights {
    pub fn new(model: &NetworkModel) -> Self {
        let e = model.graph().edge_count();
        let lifetimes = model.lifetimes();
        Self {
            data: lifetimes.iter().map(|&l| vec![0.0; e * l]).collect(),
            lifetimes,
        }
    }

    #[inline]
    pub fn get(&self, k: usize, edge: usize, lifetime: usize) -> f64 {
        self.data[k][edge * self.lifetimes[k] + lifetime - 1]
    }
}

fn commodity_weights(
    model: &NetworkModel,
    u: &VirtualQueueBank,
    v: f64,
    k: usize,
    out: &mut [f64],
    prefix: &mut Vec<f64>,
) {
    let graph = model.graph();
    let l_max = u.lifetimes[k];
    let dest = u.destinations[k];
    let n = graph.node_count();
    // prefix[i * (L + 1) + l] = U_i^(≤l), with U_i^(≤0) = 0.
    prefix.clear();
    prefix.resize(n * (l_max + 1), 0.0);
    let res = &u.reservoir[k];
    for i in 0..n {
        let mut acc = 0.0;
        for l in 1..=l_max {
            acc += res[i * l_max + l - 1];
            prefix[i * (l_max + 1) + l] = acc;
        }
    }
    let u_d = u.deficit[k];
    for (e, edge) in graph.edges().iter().enumerate() {
        let row = &mut out[e * l_max..(e + 1) * l_max];
        if edge.src == dest {
            row.iter_mut().for_each(|w| *w = f64::NEG_INFINITY);
            continue;
        }
        let penalty = v * edge.cost;
        let send = &prefix[edge.src * (l_max + 1)..(edge.src + 1) * (l_max + 1)];
        if edge.dst == dest {
            for l in 1..=l_max {
                row[l - 1] = -penalty - send[l] + u_d;
            }
        } else {
            let recv = &prefix[edge.dst * (l_max + 1)..(edge.dst + 1) * (l_max + 1)];
            for l in 1..=l_max {
                row[l - 1] = -penalty - send[l] + recv[l - 1];
            }
        }
    }
}

/// w_ij^(l) = −V e_ij − U_i^(≤l) + (U_d if j = d, else U_j^(≤l−1)); edges
/// leaving the destination get −∞.
pub fn compute_weights(
    model: &NetworkModel,
    u: &VirtualQueueBank,
    cfg: &ControllerConfig,
    out: &mut Weights,
) {
    if cfg.parallel {
        out.data
            .par_iter_mut()
            .enumerate()
            .for_each_init(Vec::new, |prefix, (k, d)| {
                commodity_weights(model, u, cfg.v, k, d, prefix)
            });
    } else {
        let mut prefix = Vec::new();
        for (k, d) in out.data.iter_mut().enumerate() {
            commodity_weights(model, u, cfg.v, k, d, &mut prefix);
        }
    }
}

/// The winning `(weight, commodity, edge, lifetime)` of one group, if positive.
fn group_winner(
    group: &CapacityGroup,
    weights: &Weights,
    tie: TieBreak,
    l_top: usize,
) -> Option<(f64, usize, usize, usize)> {
    let mut best: Option<(f64, usize, usize, usize)> = None;
    let mut visit = |l: usize| {
        for (k, &l_k) in weights.lifetimes.iter().enumerate() {
            if l > l_k {
                continue;
            }
            for &e in &group.edges {
                let w = weights.data[k][e * l_k + l - 1];
                if best.is_none_or(|b| w > b.0) {
                    best = Some((w, k, e, l));
                }
            }
        }
    };
    match tie {
        TieBreak::SmallestLifetime => (1..=l_top).for_each(&mut visit),
        TieBreak::LargestLifetime => (1..=l_top).rev().for_each(&mut visit),
    }
    best.filter(|b| b.0 > 0.0)
}

/// Gives each group's full capacity to its single best positive
/// `(edge, lifetime, commodity)`; group edge lists must be sorted ascending.
pub fn max_weight_allocate(
    weights: &Weights,
    groups: &[CapacityGroup],
    tie: TieBreak,
    parallel: bool,
    out: &mut FlowDecision,
) {
    out.clear();
    let l_top = weights.lifetimes.iter().copied().max().unwrap_or(0);
    let winners: Vec<_> = if parallel {
        groups
            .par_iter()
            .map(|g| group_winner(g, weights, tie, l_top).map(|w| (w, g.capacity)))
            .collect()
    } else {
        groups
            .iter()
            .map(|g| group_winner(g, weights, tie, l_top).map(|w| (w, g.capacity)))
            .collect()
    };
    for ((_, k, e, l), cap) in winners.into_iter().flatten() {
        out.set(k, e, l, cap);
    }
}

/// Applies one slot of virtual flows. `released` holds the arrival totals
/// A_k entering each destination deficit queue this slot.
pub fn update_virtual_queues(
    model: &NetworkModel,
    u: &mut VirtualQueueBank,
    nu: &FlowDecision,
    a: &ArrivalSample,
    released: &[f64],
    scratch: &mut (Vec<f64>, Vec<f64>),
) {
    let graph = model.graph();
    let n = graph.node_count();
    for (k, c) in model.commodities().iter().enumerate() {
        let l_max = u.lifetimes[k];
        let dest = u.destinations[k];
        let (inflow, outflow) = scratch;
        inflow.resize(n * l_max, 0.0);
        outflow.resize(n * l_max, 0.0);
        nu.node_totals(
            graph,
            k,
            &mut inflow[..n * l_max],
            &mut outflow[..n * l_max],
        );
        let into_d: f64 = inflow[dest * l_max..(dest + 1) * l_max].iter().sum();
        u.deficit[k] = (u.deficit[k] + c.gamma * released[k] - into_d).max(0.0);
        let arr = a.commodity(k);
        let res = &mut u.reservoir[k];
        for i in 0..n {
            if i == dest {
                continue;
            }
            let base = i * l_max;
            // Walk l downward so the ≥-sums accumulate in one pass.
            let mut out_ge = 0.0;
            let mut in_ge_next = 0.0;
            let mut a_ge = 0.0;
            for l in (1..=l_max).rev() {
                out_ge += outflow[base + l - 1];
                a_ge += arr[base + l - 1];
                let q = &mut res[base + l - 1];
                *q = (*q + out_ge - in_ge_next - a_ge).max(0.0);
                in_ge_next += inflow[base + l - 1];
            }
        }
    }
}

/// The virtual controller: owns U, produces ν(t) each slot.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    queues: VirtualQueueBank,
    weights: Weights,
    nu: FlowDecision,
    groups: Vec<CapacityGroup>,
    pending: VecDeque<Vec<f64>>,
    released: Vec<f64>,
    scratch: (Vec<f64>, Vec<f64>),
}

impl Controller {
    pub fn new(model: &NetworkModel, cfg: ControllerConfig) -> Self {
        assert!(
            cfg.v >= 0.0 && cfg.v.is_finite(),
            "V must be finite and non-negative"
        );
        let mut groups = model.groups().to_vec();
        for g in &mut groups {
            g.edges.sort_unstable();
        }
        let k = model.commodity_count();
        Self {
            queues: VirtualQueueBank::new(model),
            weights: Weights::new(model),
            nu: FlowDecision::zeros(model),
            groups,
            pending: (0..cfg.arrival_delay).map(|_| vec![0.0; k]).collect(),
            released: vec![0.0; k],
            scratch: (Vec::new(), Vec::new()),
            cfg,
        }
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn queues(&self) -> &VirtualQueueBank {
        &self.queues
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    /// Computes ν(t) from U(t), then advances U with ν(t) and a(t).
    pub fn step(&mut self, model: &NetworkModel, a: &ArrivalSample) -> &FlowDecision {
        compute_weights(model, &self.queues, &self.cfg, &mut self.weights);
        max_weight_allocate(
            &self.weights,
            &self.groups,
            self.cfg.tie_break,
            self.cfg.parallel,
            &mut self.nu,
        );
        let now: Vec<f64> = (0..a.commodity_count()).map(|k| a.total(k)).collect();
        if self.cfg.arrival_delay == 0 {
            self.released = now;
        } else {
            self.pending.push_back(now);
            self.released = self.pending.pop_front().expect("delay line is non-empty");
        }
        update_virtual_queues(
            model,
            &mut self.queues,
            &self.nu,
            a,
            &self.released,
            &mut self.scratch,
        );
        &self.nu
    }
}
