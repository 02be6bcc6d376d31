//! The lifetime-indexed physical queue system.
//!
//! Each node keeps one fluid queue per commodity and remaining lifetime. In
//! every slot, packets sent with lifetime `l` reach the neighbour with
//! `l - 1`, held packets age by one, exogenous arrivals of the slot become
//! usable in the next one, packets left at lifetime 0 are dropped and the
//! destination absorbs everything it receives.

use std::ops::Range;

use crate::error::QueueError;
use crate::model::{EdgeId, NetworkGraph, NetworkModel, NodeId};

/// Relative slack for comparisons between flows and backlogs.
pub const FLOW_TOLERANCE: f64 = 1e-9;

/// Flow variables indexed by commodity, edge and lifetime `1..=L_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowDecision {
    edges: usize,
    lifetimes: Vec<usize>,
    data: Vec<Vec<f64>>,
}

impl FlowDecision {
    pub fn zeros(model: &NetworkModel) -> Self {
        Self::with_shape(model.graph().edge_count(), &model.lifetimes())
    }

    pub fn with_shape(edges: usize, lifetimes: &[usize]) -> Self {
        Self {
            edges,
            lifetimes: lifetimes.to_vec(),
            data: lifetimes.iter().map(|&l| vec![0.0; edges * l]).collect(),
        }
    }

    pub fn commodity_count(&self) -> usize {
        self.lifetimes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges
    }

    pub fn max_lifetime(&self, commodity: usize) -> usize {
        self.lifetimes[commodity]
    }

    #[inline]
    fn index(&self, commodity: usize, edge: EdgeId, lifetime: usize) -> usize {
        debug_assert!(lifetime >= 1 && lifetime <= self.lifetimes[commodity]);
        edge * self.lifetimes[commodity] + lifetime - 1
    }

    #[inline]
    pub fn get(&self, commodity: usize, edge: EdgeId, lifetime: usize) -> f64 {
        self.data[commodity][self.index(commodity, edge, lifetime)]
    }

    #[inline]
    pub fn set(&mut self, commodity: usize, edge: EdgeId, lifetime: usize, amount: f64) {
        let i = self.index(commodity, edge, lifetime);
        self.data[commodity][i] = amount;
    }

    #[inline]
    pub fn add(&mut self, commodity: usize, edge: EdgeId, lifetime: usize, amount: f64) {
        let i = self.index(commodity, edge, lifetime);
        self.data[commodity][i] += amount;
    }

    /// Raw storage of one commodity, laid out as `edge * L + (l - 1)`.
    pub fn commodity(&self, commodity: usize) -> &[f64] {
        &self.data[commodity]
    }

    pub fn commodity_mut(&mut self, commodity: usize) -> &mut [f64] {
        &mut self.data[commodity]
    }

    pub fn clear(&mut self) {
        for d in &mut self.data {
            d.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Σ over commodities and lifetimes on one edge.
    pub fn edge_total(&self, edge: EdgeId) -> f64 {
        self.data
            .iter()
            .zip(&self.lifetimes)
            .map(|(d, &l)| d[edge * l..(edge + 1) * l].iter().sum::<f64>())
            .sum()
    }

    /// ⟨e, x⟩.
    pub fn cost(&self, graph: &NetworkGraph) -> f64 {
        let mut total = 0.0;
        for (d, &l) in self.data.iter().zip(&self.lifetimes) {
            for (e, edge) in graph.edges().iter().enumerate() {
                if edge.cost == 0.0 {
                    continue;
                }
                let s: f64 = d[e * l..(e + 1) * l].iter().sum();
                total += edge.cost * s;
            }
        }
        total
    }

    /// Non-zero entries as `(commodity, edge, lifetime, amount)`.
    pub fn nonzeros(&self) -> impl Iterator<Item = (usize, EdgeId, usize, f64)> + '_ {
        self.data
            .iter()
            .zip(&self.lifetimes)
            .enumerate()
            .flat_map(|(k, (d, &l))| {
                d.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(move |(i, &v)| (k, i / l, i % l + 1, v))
            })
    }

    pub fn check_nonnegative(&self) -> Result<(), QueueError> {
        match self.nonzeros().find(|&(_, _, _, v)| !(v >= 0.0)) {
            Some((commodity, edge, lifetime, amount)) => Err(QueueError::NegativeFlow {
                commodity,
                edge,
                lifetime,
                amount,
            }),
            None => Ok(()),
        }
    }

    /// L1 norm of all entries.
    pub fn l1(&self) -> f64 {
        self.data.iter().flatten().map(|v| v.abs()).sum()
    }

    /// Per-node, per-lifetime incoming and outgoing totals for one commodity,
    /// written into `inflow`/`outflow` laid out as `node * L + (l - 1)`.
    pub fn node_totals(
        &self,
        graph: &NetworkGraph,
        commodity: usize,
        inflow: &mut [f64],
        outflow: &mut [f64],
    ) {
        let l_max = self.lifetimes[commodity];
        inflow.iter_mut().for_each(|v| *v = 0.0);
        outflow.iter_mut().for_each(|v| *v = 0.0);
        let d = &self.data[commodity];
        for (e, edge) in graph.edges().iter().enumerate() {
            let row = &d[e * l_max..(e + 1) * l_max];
            if row.iter().all(|&v| v == 0.0) {
                continue;
            }
            let (src, dst) = (edge.src * l_max, edge.dst * l_max);
            for (l, &v) in row.iter().enumerate() {
                outflow[src + l] += v;
                inflow[dst + l] += v;
            }
        }
    }
}

/// Exogenous arrivals a_i^(l)(t) of one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalSample {
    nodes: usize,
    lifetimes: Vec<usize>,
    data: Vec<Vec<f64>>,
}

impl ArrivalSample {
    pub fn zeros(model: &NetworkModel) -> Self {
        Self::with_shape(model.graph().node_count(), &model.lifetimes())
    }

    pub fn with_shape(nodes: usize, lifetimes: &[usize]) -> Self {
        Self {
            nodes,
            lifetimes: lifetimes.to_vec(),
            data: lifetimes.iter().map(|&l| vec![0.0; nodes * l]).collect(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn commodity_count(&self) -> usize {
        self.lifetimes.len()
    }

    #[inline]
    pub fn get(&self, commodity: usize, node: NodeId, lifetime: usize) -> f64 {
        self.data[commodity][node * self.lifetimes[commodity] + lifetime - 1]
    }

    #[inline]
    pub fn set(&mut self, commodity: usize, node: NodeId, lifetime: usize, amount: f64) {
        let l = self.lifetimes[commodity];
        assert!((1..=l).contains(&lifetime));
        self.data[commodity][node * l + lifetime - 1] = amount;
    }

    /// a_i^(≥l)(t).
    pub fn at_least(&self, commodity: usize, node: NodeId, lifetime: usize) -> f64 {
        let l_max = self.lifetimes[commodity];
        let row = &self.data[commodity][node * l_max..(node + 1) * l_max];
        row[lifetime.max(1) - 1..].iter().sum()
    }

    /// A(t) for one commodity.
    pub fn total(&self, commodity: usize) -> f64 {
        self.data[commodity].iter().sum()
    }

    pub fn commodity(&self, commodity: usize) -> &[f64] {
        &self.data[commodity]
    }

    pub fn commodity_mut(&mut self, commodity: usize) -> &mut [f64] {
        &mut self.data[commodity]
    }

    pub fn clear(&mut self) {
        for d in &mut self.data {
            d.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Where a flow decision schedules more than a queue holds.
#[derive(Debug, Clone, PartialEq)]
pub struct AvailabilityViolation {
    pub commodity: usize,
    pub node: NodeId,
    pub lifetime: usize,
    pub excess: f64,
}

/// Per-commodity outcome of one slot.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CommodityLedger {
    /// Effective packets absorbed by the destination.
    pub delivered: f64,
    /// Packets whose lifetime expired.
    pub dropped: f64,
    /// Total backlog after the slot.
    pub backlog: f64,
    /// Transmission and processing cost ⟨e, x⟩ of this commodity's flows.
    pub cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SlotLedger {
    pub commodities: Vec<CommodityLedger>,
}

impl SlotLedger {
    pub fn delivered(&self) -> f64 {
        self.commodities.iter().map(|c| c.delivered).sum()
    }

    pub fn dropped(&self) -> f64 {
        self.commodities.iter().map(|c| c.dropped).sum()
    }

    pub fn backlog(&self) -> f64 {
        self.commodities.iter().map(|c| c.backlog).sum()
    }

    pub fn cost(&self) -> f64 {
        self.commodities.iter().map(|c| c.cost).sum()
    }
}

/// Cumulative per-commodity accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QueueCounters {
    pub injected: f64,
    pub delivered: f64,
    pub dropped: f64,
}

/// Physical queues Q_i^(l) for every commodity.
#[derive(Debug, Clone)]
pub struct LifetimeQueueBank {
    nodes: usize,
    lifetimes: Vec<usize>,
    destinations: Vec<NodeId>,
    backlog: Vec<Vec<f64>>,
    counters: Vec<QueueCounters>,
    inflow: Vec<f64>,
    outflow: Vec<f64>,
}

impl LifetimeQueueBank {
    pub fn new(model: &NetworkModel) -> Self {
        let nodes = model.graph().node_count();
        let lifetimes = model.lifetimes();
        let l_max = lifetimes.iter().copied().max().unwrap_or(0);
        Self {
            nodes,
            destinations: model.commodities().iter().map(|c| c.destination).collect(),
            backlog: lifetimes.iter().map(|&l| vec![0.0; nodes * l]).collect(),
            counters: vec![QueueCounters::default(); lifetimes.len()],
            inflow: vec![0.0; nodes * l_max],
            outflow: vec![0.0; nodes * l_max],
            lifetimes,
        }
    }

    pub fn commodity_count(&self) -> usize {
        self.lifetimes.len()
    }

    pub fn max_lifetime(&self, commodity: usize) -> usize {
        self.lifetimes[commodity]
    }

    #[inline]
    pub fn get(&self, commodity: usize, node: NodeId, lifetime: usize) -> f64 {
        self.backlog[commodity][node * self.lifetimes[commodity] + lifetime - 1]
    }

    /// Overwrites one queue; for tests and warm starts.
    pub fn set(&mut self, commodity: usize, node: NodeId, lifetime: usize, amount: f64) {
        assert!(amount >= 0.0, "backlog must be non-negative");
        assert_ne!(
            node, self.destinations[commodity],
            "destination queues are always empty"
        );
        let l = self.lifetimes[commodity];
        let slot = &mut self.backlog[commodity][node * l + lifetime - 1];
        self.counters[commodity].injected += amount - *slot;
        *slot = amount;
    }

    /// Raw backlog of one commodity, laid out as `node * L + (l - 1)`.
    pub fn commodity(&self, commodity: usize) -> &[f64] {
        &self.backlog[commodity]
    }

    pub fn counters(&self, commodity: usize) -> QueueCounters {
        self.counters[commodity]
    }

    pub fn total_backlog(&self, commodity: usize) -> f64 {
        self.backlog[commodity].iter().sum()
    }

    pub fn check_availability(
        &self,
        graph: &NetworkGraph,
        x: &FlowDecision,
    ) -> Vec<AvailabilityViolation> {
        let mut violations = Vec::new();
        for k in 0..self.commodity_count() {
            let l_max = self.lifetimes[k];
            let mut out = vec![0.0; self.nodes * l_max];
            let data = x.commodity(k);
            for (e, edge) in graph.edges().iter().enumerate() {
                for l in 0..l_max {
                    out[edge.src * l_max + l] += data[e * l_max + l];
                }
            }
            for (idx, &o) in out.iter().enumerate() {
                let q = self.backlog[k][idx];
                if o > q + FLOW_TOLERANCE * q.max(1.0) {
                    violations.push(AvailabilityViolation {
                        commodity: k,
                        node: idx / l_max,
                        lifetime: idx % l_max + 1,
                        excess: o - q,
                    });
                }
            }
        }
        violations
    }

    /// Applies one slot of flows `x` and arrivals `a`.
    pub fn advance_slot(
        &mut self,
        graph: &NetworkGraph,
        x: &FlowDecision,
        a: &ArrivalSample,
    ) -> Result<SlotLedger, QueueError> {
        x.check_nonnegative()?;
        let violations = self.check_availability(graph, x);
        if let Some(first) = violations.first() {
            return Err(QueueError::Availability {
                count: violations.len(),
                first: format!("{first:?}"),
            });
        }
        let mut ledger = SlotLedger {
            commodities: Vec::with_capacity(self.commodity_count()),
        };
        for k in 0..self.commodity_count() {
            ledger
                .commodities
                .push(self.advance_commodity(graph, k, x, a)?);
        }
        Ok(ledger)
    }

    fn advance_commodity(
        &mut self,
        graph: &NetworkGraph,
        k: usize,
        x: &FlowDecision,
        a: &ArrivalSample,
    ) -> Result<CommodityLedger, QueueError> {
        let l_max = self.lifetimes[k];
        let dest = self.destinations[k];
        let span = self.nodes * l_max;
        let (inflow, outflow) = (&mut self.inflow[..span], &mut self.outflow[..span]);
        x.node_totals(graph, k, inflow, outflow);
        let q = &mut self.backlog[k];
        let arrivals = a.commodity(k);

        let delivered: f64 = inflow[dest * l_max..(dest + 1) * l_max].iter().sum();
        let mut dropped = 0.0;
        let mut injected = 0.0;
        let mut backlog = 0.0;
        for i in 0..self.nodes {
            let base = i * l_max;
            if i == dest {
                if arrivals[base..base + l_max].iter().any(|&v| v != 0.0) {
                    return Err(QueueError::Invariant(format!(
                        "commodity {k}: arrivals at its destination {dest}"
                    )));
                }
                continue;
            }
            // Lifetime-1 packets that were neither sent on nor delivered expire.
            dropped += q[base] - outflow[base] + inflow[base];
            for l in 0..l_max {
                let aged = if l + 1 < l_max {
                    q[base + l + 1] - outflow[base + l + 1] + inflow[base + l + 1]
                } else {
                    0.0
                };
                let arriving = arrivals[base + l];
                injected += arriving;
                let mut v = aged + arriving;
                if v < 0.0 {
                    if v < -FLOW_TOLERANCE * (aged.abs() + 1.0) {
                        return Err(QueueError::Invariant(format!(
                            "commodity {k}: backlog {v} at node {i}, lifetime {}",
                            l + 1
                        )));
                    }
                    v = 0.0;
                }
                q[base + l] = v;
                backlog += v;
            }
        }
        if dropped < 0.0 {
            dropped = 0.0;
        }
        let c = &mut self.counters[k];
        c.injected += injected;
        c.delivered += delivered;
        c.dropped += dropped;
        let imbalance = c.injected - c.delivered - c.dropped - backlog;
        if imbalance.abs() > 1e-6 * c.injected.max(1.0) {
            return Err(QueueError::Invariant(format!(
                "commodity {k}: conservation off by {imbalance} (injected {}, delivered {}, dropped {}, backlog {backlog})",
                c.injected, c.delivered, c.dropped
            )));
        }

        let cost = {
            let d = x.commodity(k);
            graph
                .edges()
                .iter()
                .enumerate()
                .filter(|(_, e)| e.cost != 0.0)
                .map(|(e, edge)| edge.cost * d[e * l_max..(e + 1) * l_max].iter().sum::<f64>())
                .sum()
        };
        Ok(CommodityLedger {
            delivered,
            dropped,
            backlog,
            cost,
        })
    }
}

/// Average delivered amount per slot over `window`.
pub fn timely_throughput(delivered: &[f64], window: Range<usize>) -> Result<f64, QueueError> {
    if window.start >= window.end || window.end > delivered.len() {
        return Err(QueueError::BadWindow {
            start: window.start,
            end: window.end,
            len: delivered.len(),
        });
    }
    let n = (window.end - window.start) as f64;
    Ok(delivered[window].iter().sum::<f64>() / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CommoditySpec, Edge, RateTable};

    /// s(0) -> a(1) -> d(2), plus s -> d, unit capacities of 100.
    fn line_model(lifetime: usize) -> NetworkModel {
        let graph = NetworkGraph::new(
            3,
            vec![
                Edge {
                    src: 0,
                    dst: 1,
                    capacity: 100.0,
                    cost: 1.0,
                },
                Edge {
                    src: 1,
                    dst: 2,
                    capacity: 100.0,
                    cost: 1.0,
                },
                Edge {
                    src: 0,
                    dst: 2,
                    capacity: 100.0,
                    cost: 2.0,
                },
            ],
        )
        .unwrap();
        let c = CommoditySpec::new(2, 1.0, RateTable::all_at_max(3, lifetime, 0, 1.0));
        NetworkModel::with_singleton_groups(graph, vec![c]).unwrap()
    }

    #[test]
    fn availability_boundary() {
        let m = line_model(3);
        let mut bank = LifetimeQueueBank::new(&m);
        bank.set(0, 0, 2, 5.0);
        let mut x = FlowDecision::zeros(&m);
        assert!(bank.check_availability(m.graph(), &x).is_empty());
        x.set(0, 0, 2, 3.0);
        x.set(0, 2, 2, 2.0);
        assert!(bank.check_availability(m.graph(), &x).is_empty());
        x.set(0, 2, 2, 3.0);
        let v = bank.check_availability(m.graph(), &x);
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].node, v[0].lifetime), (0, 2));
        assert!((v[0].excess - 1.0).abs() < 1e-12);
        let a = ArrivalSample::zeros(&m);
        assert!(matches!(
            bank.advance_slot(m.graph(), &x, &a),
            Err(QueueError::Availability { .. })
        ));
    }

    #[test]
    fn pure_aging_drops_lifetime_one() {
        let m = line_model(2);
        let mut bank = LifetimeQueueBank::new(&m);
        bank.set(0, 1, 1, 3.0);
        bank.set(0, 1, 2, 5.0);
        let x = FlowDecision::zeros(&m);
        let a = ArrivalSample::zeros(&m);
        let ledger = bank.advance_slot(m.graph(), &x, &a).unwrap();
        assert_eq!(bank.get(0, 1, 1), 5.0);
        assert_eq!(bank.get(0, 1, 2), 0.0);
        assert_eq!(ledger.dropped(), 3.0);
        assert_eq!(ledger.delivered(), 0.0);
    }

    #[test]
    fn destination_absorbs_and_cost_is_inner_product() {
        let m = line_model(3);
        let mut bank = LifetimeQueueBank::new(&m);
        bank.set(0, 1, 1, 4.0);
        bank.set(0, 0, 3, 7.0);
        let mut x = FlowDecision::zeros(&m);
        x.set(0, 1, 1, 4.0);
        x.set(0, 2, 3, 7.0);
        let ledger = bank
            .advance_slot(m.graph(), &x, &ArrivalSample::zeros(&m))
            .unwrap();
        assert_eq!(ledger.delivered(), 11.0);
        assert_eq!(ledger.cost(), 4.0 * 1.0 + 7.0 * 2.0);
        assert_eq!(ledger.dropped(), 0.0);
        for l in 1..=3 {
            assert_eq!(bank.get(0, 2, l), 0.0);
        }
    }

    #[test]
    fn in_flight_expiry_is_dropped_at_receiver() {
        let m = line_model(2);
        let mut bank = LifetimeQueueBank::new(&m);
        bank.set(0, 0, 1, 2.0);
        let mut x = FlowDecision::zeros(&m);
        x.set(0, 0, 1, 2.0);
        let ledger = bank
            .advance_slot(m.graph(), &x, &ArrivalSample::zeros(&m))
            .unwrap();
        assert_eq!(ledger.dropped(), 2.0);
        assert_eq!(bank.total_backlog(0), 0.0);
    }

    #[test]
    fn arrivals_wait_one_slot() {
        let m = line_model(3);
        let mut bank = LifetimeQueueBank::new(&m);
        let mut a = ArrivalSample::zeros(&m);
        a.set(0, 0, 3, 6.0);
        bank.advance_slot(m.graph(), &FlowDecision::zeros(&m), &a)
            .unwrap();
        assert_eq!(bank.get(0, 0, 3), 6.0);
        a.clear();
        bank.advance_slot(m.graph(), &FlowDecision::zeros(&m), &a)
            .unwrap();
        assert_eq!(bank.get(0, 0, 2), 6.0);
        assert_eq!(bank.get(0, 0, 3), 0.0);
        let c = bank.counters(0);
        assert_eq!(c.injected, 6.0);
    }

    #[test]
    fn negative_flow_rejected() {
        let m = line_model(2);
        let mut bank = LifetimeQueueBank::new(&m);
        let mut x = FlowDecision::zeros(&m);
        x.set(0, 0, 1, -1.0);
        assert!(matches!(
            bank.advance_slot(m.graph(), &x, &ArrivalSample::zeros(&m)),
            Err(QueueError::NegativeFlow { .. })
        ));
    }

    #[test]
    fn throughput_windows() {
        assert_eq!(timely_throughput(&[0.0, 9.0, 9.0], 0..3).unwrap(), 6.0);
        assert_eq!(timely_throughput(&[0.0; 4], 0..4).unwrap(), 0.0);
        assert_eq!(timely_throughput(&[9.0; 5], 1..5).unwrap(), 9.0);
        assert!(timely_throughput(&[1.0], 1..1).is_err());
        assert!(timely_throughput(&[1.0], 0..2).is_err());
    }
}
