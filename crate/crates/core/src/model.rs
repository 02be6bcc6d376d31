//! Network graphs, commodities, unit conversion and capacity groups.
//!
//! Everything here is immutable once built and is shared read-only by the
//! controllers, the simulator and the LP oracle.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Per-sample arrival cap as a multiple of the largest mean rate.
pub const DEFAULT_A_MAX_FACTOR: f64 = 20.0;

pub type NodeId = usize;
pub type EdgeId = usize;

/// A directed link with its average capacity (flow-units/slot) and unit cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub capacity: f64,
    pub cost: f64,
}

/// Directed graph with incoming/outgoing adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    labels: Vec<String>,
    edges: Vec<Edge>,
    incoming: Vec<Vec<EdgeId>>,
    outgoing: Vec<Vec<EdgeId>>,
}

impl NetworkGraph {
    /// Builds a graph over nodes `0..node_count`, labelled `1..=node_count`.
    pub fn new(node_count: usize, edges: Vec<Edge>) -> Result<Self, ModelError> {
        let labels = (1..=node_count).map(|i| i.to_string()).collect();
        Self::with_labels(labels, edges)
    }

    pub fn with_labels(labels: Vec<String>, edges: Vec<Edge>) -> Result<Self, ModelError> {
        let node_count = labels.len();
        let mut incoming = vec![Vec::new(); node_count];
        let mut outgoing = vec![Vec::new(); node_count];
        for (index, e) in edges.iter().enumerate() {
            for node in [e.src, e.dst] {
                if node >= node_count {
                    return Err(ModelError::UnknownNode {
                        index,
                        node,
                        node_count,
                    });
                }
            }
            if e.src == e.dst {
                return Err(ModelError::SelfLoop { index, node: e.src });
            }
            if !(e.capacity > 0.0) || !e.capacity.is_finite() {
                return Err(ModelError::BadCapacity {
                    index,
                    capacity: e.capacity,
                });
            }
            if !(e.cost >= 0.0) || !e.cost.is_finite() {
                return Err(ModelError::BadCost {
                    index,
                    cost: e.cost,
                });
            }
            outgoing[e.src].push(index);
            incoming[e.dst].push(index);
        }
        Ok(Self {
            labels,
            edges,
            incoming,
            outgoing,
        })
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id]
    }

    /// Edges entering `node` (the set δ⁻).
    pub fn incoming(&self, node: NodeId) -> &[EdgeId] {
        &self.incoming[node]
    }

    /// Edges leaving `node` (the set δ⁺).
    pub fn outgoing(&self, node: NodeId) -> &[EdgeId] {
        &self.outgoing[node]
    }

    pub fn label(&self, node: NodeId) -> &str {
        &self.labels[node]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn find_edge(&self, src: NodeId, dst: NodeId) -> Option<EdgeId> {
        self.outgoing[src]
            .iter()
            .copied()
            .find(|&e| self.edges[e].dst == dst)
    }

    /// Hop distance from every node to `target` (reverse BFS).
    pub fn hops_to(&self, target: NodeId) -> Vec<Option<usize>> {
        self.bfs(target, true)
    }

    /// Hop distance from `source` to every node.
    pub fn hops_from(&self, source: NodeId) -> Vec<Option<usize>> {
        self.bfs(source, false)
    }

    fn bfs(&self, root: NodeId, reverse: bool) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.node_count()];
        let mut queue = VecDeque::new();
        dist[root] = Some(0);
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            let adj = if reverse {
                &self.incoming[u]
            } else {
                &self.outgoing[u]
            };
            for &e in adj {
                let v = if reverse {
                    self.edges[e].src
                } else {
                    self.edges[e].dst
                };
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

/// Mean arrival rates λ_i^(l) indexed by node and birth lifetime `1..=L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    node_count: usize,
    max_lifetime: usize,
    rates: Vec<f64>,
}

impl RateTable {
    pub fn new(node_count: usize, max_lifetime: usize) -> Self {
        Self {
            node_count,
            max_lifetime,
            rates: vec![0.0; node_count * max_lifetime],
        }
    }

    /// A table where all traffic enters at `source` with the full lifetime `L`.
    pub fn all_at_max(node_count: usize, max_lifetime: usize, source: NodeId, rate: f64) -> Self {
        let mut t = Self::new(node_count, max_lifetime);
        t.set(source, max_lifetime, rate);
        t
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn max_lifetime(&self) -> usize {
        self.max_lifetime
    }

    pub fn get(&self, node: NodeId, lifetime: usize) -> f64 {
        debug_assert!((1..=self.max_lifetime).contains(&lifetime));
        self.rates[node * self.max_lifetime + lifetime - 1]
    }

    pub fn set(&mut self, node: NodeId, lifetime: usize, rate: f64) {
        assert!(
            (1..=self.max_lifetime).contains(&lifetime),
            "lifetime {lifetime} outside 1..={}",
            self.max_lifetime
        );
        self.rates[node * self.max_lifetime + lifetime - 1] = rate;
    }

    /// λ_i^(≥l).
    pub fn at_least(&self, node: NodeId, lifetime: usize) -> f64 {
        (lifetime.max(1)..=self.max_lifetime)
            .map(|l| self.get(node, l))
            .sum()
    }

    /// Largest single mean rate.
    pub fn peak(&self) -> f64 {
        self.rates.iter().cloned().fold(0.0, f64::max)
    }

    /// ‖λ‖₁ for this commodity.
    pub fn total(&self) -> f64 {
        self.rates.iter().sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            node_count: self.node_count,
            max_lifetime: self.max_lifetime,
            rates: self.rates.iter().map(|r| r * factor).collect(),
        }
    }

    /// Non-zero entries as `(node, lifetime, rate)`.
    pub fn entries(&self) -> impl Iterator<Item = (NodeId, usize, f64)> + '_ {
        let lmax = self.max_lifetime;
        self.rates
            .iter()
            .enumerate()
            .filter(|(_, &r)| r != 0.0)
            .map(move |(k, &r)| (k / lmax, k % lmax + 1, r))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rates
    }
}

/// A destination-identified traffic class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommoditySpec {
    pub destination: NodeId,
    /// Required fraction of the arrival rate delivered within its lifetime.
    pub gamma: f64,
    pub rates: RateTable,
    /// Upper bound on any single per-slot arrival sample a_i^(l)(t).
    pub a_max: f64,
}

impl CommoditySpec {
    pub fn new(destination: NodeId, gamma: f64, rates: RateTable) -> Self {
        let a_max = DEFAULT_A_MAX_FACTOR * rates.peak();
        Self {
            destination,
            gamma,
            rates,
            a_max,
        }
    }

    pub fn max_lifetime(&self) -> usize {
        self.rates.max_lifetime()
    }

    pub fn total_rate(&self) -> f64 {
        self.rates.total()
    }

    /// γ‖λ‖₁, the timely-throughput target.
    pub fn required_rate(&self) -> f64 {
        self.gamma * self.rates.total()
    }

    fn validate(&self, index: usize, node_count: usize) -> Result<(), ModelError> {
        let bad = |reason: String| ModelError::BadCommodity {
            commodity: index,
            reason,
        };
        if self.destination >= node_count {
            return Err(bad(format!(
                "destination {} out of range",
                self.destination
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(bad(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.rates.max_lifetime() == 0 {
            return Err(bad("maximum lifetime must be at least 1".into()));
        }
        if self.rates.node_count() != node_count {
            return Err(bad(format!(
                "rate table covers {} nodes, graph has {node_count}",
                self.rates.node_count()
            )));
        }
        if let Some(r) = self
            .rates
            .as_slice()
            .iter()
            .find(|r| !(**r >= 0.0) || !r.is_finite())
        {
            return Err(bad(format!(
                "arrival rate {r} is not a non-negative number"
            )));
        }
        if (1..=self.max_lifetime()).any(|l| self.rates.get(self.destination, l) != 0.0) {
            return Err(bad("arrivals at the destination node".into()));
        }
        if !(self.a_max >= 0.0) {
            return Err(bad(format!("a_max {} must be non-negative", self.a_max)));
        }
        Ok(())
    }
}

/// Conversion between Mbps figures and the simulator's flow-units per slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    pub flow_unit_mbps: f64,
}

impl Default for UnitSystem {
    fn default() -> Self {
        Self {
            flow_unit_mbps: 10.0,
        }
    }
}

impl UnitSystem {
    pub fn new(flow_unit_mbps: f64) -> Result<Self, ModelError> {
        if !(flow_unit_mbps > 0.0) || !flow_unit_mbps.is_finite() {
            return Err(ModelError::BadUnits(format!(
                "flow unit must be a positive number of Mbps, got {flow_unit_mbps}"
            )));
        }
        Ok(Self { flow_unit_mbps })
    }

    pub fn convert_rate(&self, mbps: f64) -> Result<f64, ModelError> {
        if !(mbps >= 0.0) {
            return Err(ModelError::NegativeRate(mbps));
        }
        Ok(mbps / self.flow_unit_mbps)
    }

    pub fn to_mbps(&self, units: f64) -> f64 {
        units * self.flow_unit_mbps
    }

    /// Cost of carrying one flow-unit over a link priced per Gb.
    pub fn link_cost(&self, cost_per_gb: f64) -> f64 {
        cost_per_gb * self.flow_unit_mbps / 1000.0
    }

    /// Cost of processing one flow-unit on CPUs priced per CPU.
    pub fn compute_cost(&self, cost_per_cpu: f64, cpu_rate_mbps: f64) -> f64 {
        cost_per_cpu * self.flow_unit_mbps / cpu_rate_mbps
    }

    /// Translates a penalty weight quoted against 1 Mb queue units into this
    /// unit system. Queues and flows shrink by the flow unit while per-unit
    /// costs grow by it, so the weight scales with its inverse square.
    pub fn controller_v(&self, v_megabit: f64) -> f64 {
        v_megabit / (self.flow_unit_mbps * self.flow_unit_mbps)
    }
}

/// Physical resource a (possibly layered) edge draws on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Resource {
    /// A physical link, identified by its edge id in the physical graph.
    Link(EdgeId),
    /// Compute at a physical node.
    Compute(NodeId),
}

/// Edges that jointly share one physical capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityGroup {
    pub resource: Resource,
    pub edges: Vec<EdgeId>,
    pub capacity: f64,
}

/// Graph + capacity groups + commodities: the input to every controller.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    graph: NetworkGraph,
    groups: Vec<CapacityGroup>,
    group_of_edge: Vec<usize>,
    commodities: Vec<CommoditySpec>,
}

impl NetworkModel {
    pub fn new(
        graph: NetworkGraph,
        groups: Vec<CapacityGroup>,
        commodities: Vec<CommoditySpec>,
    ) -> Result<Self, ModelError> {
        let mut group_of_edge = vec![usize::MAX; graph.edge_count()];
        for (g, group) in groups.iter().enumerate() {
            if !(group.capacity > 0.0) {
                return Err(ModelError::BadScenario(format!(
                    "capacity group {g} has non-positive capacity {}",
                    group.capacity
                )));
            }
            for &e in &group.edges {
                if e >= graph.edge_count() {
                    return Err(ModelError::BadScenario(format!(
                        "capacity group {g} references missing edge {e}"
                    )));
                }
                if group_of_edge[e] != usize::MAX {
                    return Err(ModelError::BadScenario(format!(
                        "edge {e} belongs to groups {} and {g}",
                        group_of_edge[e]
                    )));
                }
                group_of_edge[e] = g;
            }
        }
        if let Some(e) = group_of_edge.iter().position(|&g| g == usize::MAX) {
            return Err(ModelError::BadScenario(format!(
                "edge {e} is not covered by any capacity group"
            )));
        }
        for (k, c) in commodities.iter().enumerate() {
            c.validate(k, graph.node_count())?;
        }
        Ok(Self {
            graph,
            groups,
            group_of_edge,
            commodities,
        })
    }

    /// One group per edge, capacity equal to the edge capacity.
    pub fn with_singleton_groups(
        graph: NetworkGraph,
        commodities: Vec<CommoditySpec>,
    ) -> Result<Self, ModelError> {
        let groups = graph
            .edges()
            .iter()
            .enumerate()
            .map(|(e, edge)| CapacityGroup {
                resource: Resource::Link(e),
                edges: vec![e],
                capacity: edge.capacity,
            })
            .collect();
        Self::new(graph, groups, commodities)
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn groups(&self) -> &[CapacityGroup] {
        &self.groups
    }

    pub fn group_of(&self, edge: EdgeId) -> usize {
        self.group_of_edge[edge]
    }

    pub fn commodities(&self) -> &[CommoditySpec] {
        &self.commodities
    }

    pub fn commodity_count(&self) -> usize {
        self.commodities.len()
    }

    /// Per-commodity maximum lifetimes, the shape of every flow array.
    pub fn lifetimes(&self) -> Vec<usize> {
        self.commodities.iter().map(|c| c.max_lifetime()).collect()
    }

    /// Σ_k γ_k ‖λ_k‖₁.
    pub fn required_rate(&self) -> f64 {
        self.commodities.iter().map(|c| c.required_rate()).sum()
    }

    pub fn total_rate(&self) -> f64 {
        self.commodities.iter().map(|c| c.total_rate()).sum()
    }

    /// Same topology with commodity rates replaced.
    pub fn with_rates(&self, rates: &[RateTable]) -> Result<Self, ModelError> {
        assert_eq!(rates.len(), self.commodities.len());
        let commodities = self
            .commodities
            .iter()
            .zip(rates)
            .map(|(c, r)| {
                let old_peak = c.rates.peak();
                let factor = if old_peak > 0.0 {
                    c.a_max / old_peak
                } else {
                    DEFAULT_A_MAX_FACTOR
                };
                let mut c2 = CommoditySpec::new(c.destination, c.gamma, r.clone());
                c2.a_max = factor * r.peak();
                c2
            })
            .collect();
        Self::new(self.graph.clone(), self.groups.clone(), commodities)
    }

    /// Same topology with every commodity's rates multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, ModelError> {
        let rates: Vec<RateTable> = self
            .commodities
            .iter()
            .map(|c| c.rates.scaled(factor))
            .collect();
        self.with_rates(&rates)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(src: usize, dst: usize) -> Edge {
        Edge {
            src,
            dst,
            capacity: 1.0,
            cost: 0.0,
        }
    }

    #[test]
    fn rejects_self_loops_and_dangling_edges() {
        assert!(matches!(
            NetworkGraph::new(2, vec![edge(1, 1)]),
            Err(ModelError::SelfLoop { .. })
        ));
        assert!(matches!(
            NetworkGraph::new(2, vec![edge(0, 2)]),
            Err(ModelError::UnknownNode { .. })
        ));
        let mut bad = edge(0, 1);
        bad.capacity = 0.0;
        assert!(NetworkGraph::new(2, vec![bad]).is_err());
        bad.capacity = 1.0;
        bad.cost = -1.0;
        assert!(NetworkGraph::new(2, vec![bad]).is_err());
    }

    #[test]
    fn adjacency_mirrors_edges() {
        let g = NetworkGraph::new(3, vec![edge(0, 1), edge(1, 2), edge(0, 2)]).unwrap();
        assert_eq!(g.outgoing(0), &[0, 2]);
        assert_eq!(g.incoming(2), &[1, 2]);
        assert!(g.incoming(0).is_empty());
        for (id, e) in g.edges().iter().enumerate() {
            assert!(g.outgoing(e.src).contains(&id));
            assert!(g.incoming(e.dst).contains(&id));
        }
        assert_eq!(g.hops_to(2), vec![Some(1), Some(1), Some(0)]);
        assert_eq!(g.hops_from(1), vec![None, Some(0), Some(1)]);
    }

    #[test]
    fn unit_conversion() {
        let u = UnitSystem::default();
        assert_eq!(u.convert_rate(1000.0).unwrap(), 100.0);
        assert_eq!(u.convert_rate(50.0).unwrap(), 5.0);
        assert_eq!(u.convert_rate(0.0).unwrap(), 0.0);
        assert!(u.convert_rate(-1.0).is_err());
        assert_eq!(u.to_mbps(u.convert_rate(370.0).unwrap()), 370.0);
        assert!(UnitSystem::new(0.0).is_err());
        assert!((u.link_cost(1.0) - 0.01).abs() < 1e-15);
        assert!((u.compute_cost(1.0, 50.0) - 0.2).abs() < 1e-15);
        assert_eq!(u.controller_v(5e7), 5e5);
    }

    #[test]
    fn commodity_validation() {
        let g = NetworkGraph::new(2, vec![edge(0, 1)]).unwrap();
        let ok = CommoditySpec::new(1, 0.9, RateTable::all_at_max(2, 3, 0, 4.0));
        assert!(NetworkModel::with_singleton_groups(g.clone(), vec![ok]).is_ok());
        let at_dest = CommoditySpec::new(1, 0.9, RateTable::all_at_max(2, 3, 1, 4.0));
        assert!(NetworkModel::with_singleton_groups(g.clone(), vec![at_dest]).is_err());
        let bad_gamma = CommoditySpec::new(1, 1.5, RateTable::all_at_max(2, 3, 0, 4.0));
        assert!(NetworkModel::with_singleton_groups(g, vec![bad_gamma]).is_err());
    }

    #[test]
    fn rate_table_sums() {
        let mut t = RateTable::new(2, 4);
        t.set(0, 2, 1.0);
        t.set(0, 4, 3.0);
        assert_eq!(t.at_least(0, 1), 4.0);
        assert_eq!(t.at_least(0, 3), 3.0);
        assert_eq!(t.at_least(0, 5), 0.0);
        assert_eq!(t.total(), 4.0);
        let e: Vec<_> = t.entries().collect();
        assert_eq!(e, vec![(0, 2, 1.0), (0, 4, 3.0)]);
    }
}
