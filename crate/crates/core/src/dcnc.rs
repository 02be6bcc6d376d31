//! Lifetime-agnostic min-cost backpressure baseline.
//!
//! Each commodity keeps one backlog per node. Per capacity group the
//! commodity and edge with the largest `Q_i − Q_j − V e_ij` win the full
//! capacity when that weight is positive; the amount actually sent is clipped
//! to the backlog left at the sender. Backlogs remember their lifetime mix
//! only to measure timely throughput: transmissions drain the oldest packets
//! first, and expired packets keep travelling and are delivered late instead
//! of being dropped.

use crate::error::QueueError;
use crate::model::{EdgeId, NetworkModel, NodeId};
use crate::queueing::ArrivalSample;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcncConfig {
    pub v: f64,
}

/// Amounts sent per commodity, edge and lifetime `0..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct DcncDecision {
    lifetimes: Vec<usize>,
    /// `[k][e * (L + 1) + l]`.
    sends: Vec<Vec<f64>>,
}

impl DcncDecision {
    fn zeros(edges: usize, lifetimes: &[usize]) -> Self {
        Self {
            lifetimes: lifetimes.to_vec(),
            sends: lifetimes
                .iter()
                .map(|&l| vec![0.0; edges * (l + 1)])
                .collect(),
        }
    }

    pub fn get(&self, k: usize, edge: EdgeId, lifetime: usize) -> f64 {
        self.sends[k][edge * (self.lifetimes[k] + 1) + lifetime]
    }

    /// Σ over lifetimes for one commodity and edge.
    pub fn amount(&self, k: usize, edge: EdgeId) -> f64 {
        let w = self.lifetimes[k] + 1;
        self.sends[k][edge * w..(edge + 1) * w].iter().sum()
    }

    /// Σ over commodities and lifetimes on one edge.
    pub fn edge_total(&self, edge: EdgeId) -> f64 {
        (0..self.sends.len()).map(|k| self.amount(k, edge)).sum()
    }

    pub fn cost(&self, model: &NetworkModel) -> f64 {
        model
            .graph()
            .edges()
            .iter()
            .enumerate()
            .map(|(e, edge)| edge.cost * self.edge_total(e))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DcncLedger {
    /// Delivered with lifetime left.
    pub delivered: f64,
    /// Delivered in total, late packets included.
    pub delivered_raw: f64,
    pub cost: f64,
    pub backlog: f64,
}

/// Per-node backlogs with their lifetime composition `0..=L`.
#[derive(Debug, Clone)]
pub struct DcncBank {
    nodes: usize,
    lifetimes: Vec<usize>,
    destinations: Vec<NodeId>,
    /// `[k][i * (L + 1) + l]`.
    comp: Vec<Vec<f64>>,
    injected: Vec<f64>,
    delivered_raw: Vec<f64>,
}

impl DcncBank {
    pub fn new(model: &NetworkModel) -> Self {
        let nodes = model.graph().node_count();
        let lifetimes = model.lifetimes();
        Self {
            nodes,
            destinations: model.commodities().iter().map(|c| c.destination).collect(),
            comp: lifetimes
                .iter()
                .map(|&l| vec![0.0; nodes * (l + 1)])
                .collect(),
            injected: vec![0.0; lifetimes.len()],
            delivered_raw: vec![0.0; lifetimes.len()],
            lifetimes,
        }
    }

    /// Scalar backlog Q_i of commodity `k`.
    pub fn backlog(&self, k: usize, node: NodeId) -> f64 {
        let w = self.lifetimes[k] + 1;
        self.comp[k][node * w..(node + 1) * w].iter().sum()
    }

    pub fn composition(&self, k: usize, node: NodeId, lifetime: usize) -> f64 {
        self.comp[k][node * (self.lifetimes[k] + 1) + lifetime]
    }

    /// Adds packets with a given remaining lifetime; for tests and warm starts.
    pub fn add(&mut self, k: usize, node: NodeId, lifetime: usize, amount: f64) {
        assert!(amount >= 0.0 && lifetime <= self.lifetimes[k]);
        assert_ne!(node, self.destinations[k]);
        self.comp[k][node * (self.lifetimes[k] + 1) + lifetime] += amount;
        self.injected[k] += amount;
    }

    pub fn total_backlog(&self) -> f64 {
        self.comp.iter().flatten().sum()
    }

    /// The max-weight decision for the current backlogs.
    pub fn decide(&self, model: &NetworkModel, cfg: &DcncConfig) -> DcncDecision {
        let graph = model.graph();
        let k_count = self.lifetimes.len();
        let mut dec = DcncDecision::zeros(graph.edge_count(), &self.lifetimes);
        let q: Vec<Vec<f64>> = (0..k_count)
            .map(|k| (0..self.nodes).map(|i| self.backlog(k, i)).collect())
            .collect();
        // Composition not yet claimed by an earlier group this slot.
        let mut left = self.comp.clone();
        let mut groups: Vec<_> = model.groups().iter().collect();
        // Groups are served in order of their smallest edge id so clipping is deterministic.
        groups.sort_by_key(|g| g.edges.iter().copied().min());
        for g in groups {
            let mut edges = g.edges.clone();
            edges.sort_unstable();
            let mut best: Option<(f64, usize, EdgeId)> = None;
            for k in 0..k_count {
                let d = self.destinations[k];
                for &e in &edges {
                    let edge = graph.edge(e);
                    if edge.src == d {
                        continue;
                    }
                    let w = q[k][edge.src]
                        - if edge.dst == d { 0.0 } else { q[k][edge.dst] }
                        - cfg.v * edge.cost;
                    if best.is_none_or(|b| w > b.0) {
                        best = Some((w, k, e));
                    }
                }
            }
            let Some((w, k, e)) = best else { continue };
            if w <= 0.0 {
                continue;
            }
            let width = self.lifetimes[k] + 1;
            let src = graph.edge(e).src;
            let mut amount = g.capacity;
            for l in 0..width {
                if amount <= 0.0 {
                    break;
                }
                let avail = &mut left[k][src * width + l];
                let x = avail.min(amount);
                if x > 0.0 {
                    dec.sends[k][e * width + l] += x;
                    *avail -= x;
                    amount -= x;
                }
            }
        }
        dec
    }

    /// Applies a decision and the slot's arrivals.
    pub fn apply(
        &mut self,
        model: &NetworkModel,
        dec: &DcncDecision,
        a: &ArrivalSample,
    ) -> Result<DcncLedger, QueueError> {
        let graph = model.graph();
        let mut ledger = DcncLedger {
            cost: dec.cost(model),
            ..DcncLedger::default()
        };
        for k in 0..self.lifetimes.len() {
            let l_max = self.lifetimes[k];
            let w = l_max + 1;
            let d = self.destinations[k];
            let mut next = vec![0.0; self.nodes * w];
            // Held packets age by one; expired ones stay at lifetime 0.
            for i in 0..self.nodes {
                for l in 0..w {
                    let v = self.comp[k][i * w + l];
                    next[i * w + l.saturating_sub(1)] += v;
                }
            }
            for (e, edge) in graph.edges().iter().enumerate() {
                for l in 0..w {
                    let x = dec.sends[k][e * w + l];
                    if x == 0.0 {
                        continue;
                    }
                    let aged = l.saturating_sub(1);
                    let src_slot = &mut next[edge.src * w + aged];
                    *src_slot -= x;
                    if *src_slot < 0.0 {
                        if *src_slot < -1e-9 * x.max(1.0) {
                            return Err(QueueError::Invariant(format!(
                                "baseline sends {x} at lifetime {l} from node {} beyond its backlog",
                                edge.src
                            )));
                        }
                        *src_slot = 0.0;
                    }
                    if edge.dst == d {
                        ledger.delivered_raw += x;
                        self.delivered_raw[k] += x;
                        if l >= 1 {
                            ledger.delivered += x;
                        }
                    } else {
                        next[edge.dst * w + aged] += x;
                    }
                }
            }
            let arr = a.commodity(k);
            for i in 0..self.nodes {
                for l in 1..=l_max {
                    let v = arr[i * l_max + l - 1];
                    if v != 0.0 {
                        next[i * w + l] += v;
                        self.injected[k] += v;
                    }
                }
            }
            for l in 0..w {
                next[d * w + l] = 0.0;
            }
            self.comp[k] = next;
            let backlog: f64 = self.comp[k].iter().sum();
            let imbalance = self.injected[k] - self.delivered_raw[k] - backlog;
            if imbalance.abs() > 1e-6 * self.injected[k].max(1.0) {
                return Err(QueueError::Invariant(format!(
                    "baseline commodity {k}: conservation off by {imbalance}"
                )));
            }
        }
        ledger.backlog = self.total_backlog();
        Ok(ledger)
    }
}
