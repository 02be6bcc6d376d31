//! Compute-augmented scenarios and their layered-graph reduction.
//!
//! A service chain of `S` functions becomes `S + 1` copies (stages) of the
//! physical graph. Transmission edges stay within a stage, processing edges
//! lift a packet from stage `s` to `s + 1` at the same physical node. Each
//! layered hop costs one slot and one unit of lifetime, so a chain of `S`
//! functions adds exactly `S` hops to any route.

use log::warn;

use crate::error::ModelError;
use crate::model::{
    CapacityGroup, CommoditySpec, Edge, EdgeId, NetworkGraph, NetworkModel, NodeId, RateTable,
    Resource,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComputeSite {
    pub budget_cpus: f64,
    /// Cost of keeping one CPU busy for one slot.
    pub cost_per_cpu: f64,
}

/// A (source, destination) service request.
#[derive(Debug, Clone, PartialEq)]
pub struct Client {
    pub source: NodeId,
    pub destination: NodeId,
    pub gamma: f64,
    /// Mean arrival rate for each birth lifetime `1..=L`; `rates.len()` is `L`.
    pub rates: Vec<f64>,
}

impl Client {
    /// All packets are born with the maximum lifetime.
    pub fn all_at_max(
        source: NodeId,
        destination: NodeId,
        gamma: f64,
        lifetime: usize,
        rate: f64,
    ) -> Self {
        let mut rates = vec![0.0; lifetime];
        if lifetime > 0 {
            rates[lifetime - 1] = rate;
        }
        Self {
            source,
            destination,
            gamma,
            rates,
        }
    }

    pub fn max_lifetime(&self) -> usize {
        self.rates.len()
    }

    pub fn total_rate(&self) -> f64 {
        self.rates.iter().sum()
    }
}

/// Physical network with compute, in flow-units per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudScenario {
    /// Links with capacity in flow-units/slot and cost per flow-unit.
    pub physical: NetworkGraph,
    /// One entry per physical node.
    pub compute: Vec<ComputeSite>,
    /// Flow-units per slot one CPU can process.
    pub cpu_rate: f64,
    /// Number of service functions `S`.
    pub chain_length: usize,
    pub clients: Vec<Client>,
    /// Per-sample arrival cap as a multiple of the mean rate.
    pub a_max_factor: f64,
}

impl CloudScenario {
    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.physical.node_count();
        if self.compute.len() != n {
            return Err(ModelError::BadScenario(format!(
                "{} compute sites for {n} nodes",
                self.compute.len()
            )));
        }
        if !(self.cpu_rate > 0.0) {
            return Err(ModelError::BadScenario(format!(
                "per-CPU processing rate must be positive, got {}",
                self.cpu_rate
            )));
        }
        for (i, site) in self.compute.iter().enumerate() {
            if !(site.budget_cpus >= 0.0) || !(site.cost_per_cpu >= 0.0) {
                return Err(ModelError::BadScenario(format!(
                    "node {}: compute budget and cost must be non-negative",
                    i + 1
                )));
            }
        }
        for (k, c) in self.clients.iter().enumerate() {
            if c.source >= n || c.destination >= n {
                return Err(ModelError::BadCommodity {
                    commodity: k,
                    reason: "source or destination out of range".into(),
                });
            }
            if c.rates.is_empty() {
                return Err(ModelError::BadCommodity {
                    commodity: k,
                    reason: "maximum lifetime must be at least 1".into(),
                });
            }
        }
        Ok(())
    }

    /// Sets every client's maximum lifetime, keeping its total rate at birth lifetime `L`.
    pub fn with_lifetime(&self, lifetime: usize) -> Self {
        let mut s = self.clone();
        for c in &mut s.clients {
            *c = Client::all_at_max(c.source, c.destination, c.gamma, lifetime, c.total_rate());
        }
        s
    }

    /// Sets every client's total rate to `rate`, preserving its lifetime profile.
    pub fn with_client_rate(&self, rate: f64) -> Self {
        let mut s = self.clone();
        for c in &mut s.clients {
            let total = c.total_rate();
            if total > 0.0 {
                for r in &mut c.rates {
                    *r *= rate / total;
                }
            } else if let Some(last) = c.rates.last_mut() {
                *last = rate;
            }
        }
        s
    }
}

/// What a layered edge is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayeredEdgeKind {
    /// Copy of physical link `link` within `stage`.
    Transmission { link: EdgeId, stage: usize },
    /// Processing at physical node `node`, lifting `stage` to `stage + 1`.
    Processing { node: NodeId, stage: usize },
}

impl LayeredEdgeKind {
    pub fn resource(&self) -> Resource {
        match *self {
            LayeredEdgeKind::Transmission { link, .. } => Resource::Link(link),
            LayeredEdgeKind::Processing { node, .. } => Resource::Compute(node),
        }
    }
}

/// The layered expansion of a [`CloudScenario`].
#[derive(Debug, Clone)]
pub struct LayeredGraph {
    model: NetworkModel,
    physical_nodes: usize,
    stages: usize,
    kinds: Vec<LayeredEdgeKind>,
    undeliverable: Vec<usize>,
}

impl LayeredGraph {
    pub fn model(&self) -> &NetworkModel {
        &self.model
    }

    pub fn into_model(self) -> NetworkModel {
        self.model
    }

    pub fn graph(&self) -> &NetworkGraph {
        self.model.graph()
    }

    /// Number of processing stages `S`; the graph has `S + 1` layers.
    pub fn chain_length(&self) -> usize {
        self.stages
    }

    pub fn physical_nodes(&self) -> usize {
        self.physical_nodes
    }

    pub fn node(&self, physical: NodeId, stage: usize) -> NodeId {
        stage * self.physical_nodes + physical
    }

    /// `(physical node, stage)` of a layered node.
    pub fn split(&self, node: NodeId) -> (NodeId, usize) {
        (node % self.physical_nodes, node / self.physical_nodes)
    }

    pub fn kind(&self, edge: EdgeId) -> LayeredEdgeKind {
        self.kinds[edge]
    }

    pub fn kinds(&self) -> &[LayeredEdgeKind] {
        &self.kinds
    }

    /// Clients whose lifetime is shorter than their shortest layered route.
    pub fn undeliverable(&self) -> &[usize] {
        &self.undeliverable
    }

    pub fn processing_edge(&self, physical: NodeId, stage: usize) -> Option<EdgeId> {
        self.kinds.iter().position(|k| {
            matches!(*k, LayeredEdgeKind::Processing { node, stage: s } if node == physical && s == stage)
        })
    }
}

/// Expands a scenario into its layered graph, one commodity per client.
pub fn build_layered_graph(scenario: &CloudScenario) -> Result<LayeredGraph, ModelError> {
    scenario.validate()?;
    let phys = &scenario.physical;
    let n = phys.node_count();
    let stages = scenario.chain_length;
    let layered = |i: NodeId, s: usize| s * n + i;

    let mut edges = Vec::new();
    let mut kinds = Vec::new();
    for s in 0..=stages {
        for (link, e) in phys.edges().iter().enumerate() {
            edges.push(Edge {
                src: layered(e.src, s),
                dst: layered(e.dst, s),
                capacity: e.capacity,
                cost: e.cost,
            });
            kinds.push(LayeredEdgeKind::Transmission { link, stage: s });
        }
    }
    for s in 0..stages {
        for (i, site) in scenario.compute.iter().enumerate() {
            let capacity = site.budget_cpus * scenario.cpu_rate;
            if capacity <= 0.0 {
                continue;
            }
            edges.push(Edge {
                src: layered(i, s),
                dst: layered(i, s + 1),
                capacity,
                cost: site.cost_per_cpu / scenario.cpu_rate,
            });
            kinds.push(LayeredEdgeKind::Processing { node: i, stage: s });
        }
    }

    let labels = (0..=stages)
        .flat_map(|s| {
            (0..n).map(move |i| {
                if stages == 0 {
                    phys.label(i).to_string()
                } else {
                    format!("{}@{s}", phys.label(i))
                }
            })
        })
        .collect();
    let graph = NetworkGraph::with_labels(labels, edges)?;

    let mut commodities = Vec::with_capacity(scenario.clients.len());
    let mut undeliverable = Vec::new();
    for (k, client) in scenario.clients.iter().enumerate() {
        let lifetime = client.max_lifetime();
        let mut rates = RateTable::new(graph.node_count(), lifetime);
        for (l, &r) in client.rates.iter().enumerate() {
            rates.set(layered(client.source, 0), l + 1, r);
        }
        let dest = layered(client.destination, stages);
        let mut spec = CommoditySpec::new(dest, client.gamma, rates);
        spec.a_max = scenario.a_max_factor * spec.rates.peak();
        let hops = graph.hops_from(layered(client.source, 0))[dest];
        match hops {
            Some(h) if h <= lifetime => {}
            _ => {
                warn!(
                    "client {k} ({} -> {}): lifetime {lifetime} is shorter than its shortest layered route ({})",
                    phys.label(client.source),
                    phys.label(client.destination),
                    hops.map_or("unreachable".to_string(), |h| format!("{h} hops")),
                );
                undeliverable.push(k);
            }
        }
        commodities.push(spec);
    }

    let groups = groups_for(&kinds, &graph, phys, scenario);
    let model = NetworkModel::new(graph, groups, commodities)?;
    Ok(LayeredGraph {
        model,
        physical_nodes: n,
        stages,
        kinds,
        undeliverable,
    })
}

fn groups_for(
    kinds: &[LayeredEdgeKind],
    graph: &NetworkGraph,
    phys: &NetworkGraph,
    scenario: &CloudScenario,
) -> Vec<CapacityGroup> {
    let mut link_members: Vec<Vec<EdgeId>> = vec![Vec::new(); phys.edge_count()];
    let mut node_members: Vec<Vec<EdgeId>> = vec![Vec::new(); phys.node_count()];
    for (e, kind) in kinds.iter().enumerate() {
        match *kind {
            LayeredEdgeKind::Transmission { link, .. } => link_members[link].push(e),
            LayeredEdgeKind::Processing { node, .. } => node_members[node].push(e),
        }
    }
    let mut groups = Vec::new();
    for (link, edges) in link_members.into_iter().enumerate() {
        groups.push(CapacityGroup {
            resource: Resource::Link(link),
            edges,
            capacity: phys.edge(link).capacity,
        });
    }
    for (node, edges) in node_members.into_iter().enumerate() {
        if edges.is_empty() {
            continue;
        }
        debug_assert!(edges.iter().all(|&e| graph.edge(e).capacity > 0.0));
        groups.push(CapacityGroup {
            resource: Resource::Compute(node),
            edges,
            capacity: scenario.compute[node].budget_cpus * scenario.cpu_rate,
        });
    }
    groups
}

/// The joint-capacity partition of a layered graph's edges.
pub fn shared_capacity_groups(lg: &LayeredGraph) -> &[CapacityGroup] {
    lg.model().groups()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_scenario(stages: usize, lifetime: usize) -> CloudScenario {
        let physical = NetworkGraph::new(
            2,
            vec![Edge {
                src: 0,
                dst: 1,
                capacity: 100.0,
                cost: 0.01,
            }],
        )
        .unwrap();
        CloudScenario {
            physical,
            compute: vec![
                ComputeSite {
                    budget_cpus: 2.0,
                    cost_per_cpu: 1.0,
                };
                2
            ],
            cpu_rate: 5.0,
            chain_length: stages,
            clients: vec![Client::all_at_max(0, 1, 0.9, lifetime, 4.0)],
            a_max_factor: 20.0,
        }
    }

    #[test]
    fn two_node_chain_with_one_function() {
        let lg = build_layered_graph(&chain_scenario(1, 3)).unwrap();
        let g = lg.graph();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.edge_count(), 4);
        let processing: Vec<_> = lg
            .kinds()
            .iter()
            .filter_map(|k| match *k {
                LayeredEdgeKind::Processing { node, .. } => Some(node),
                _ => None,
            })
            .collect();
        assert_eq!(processing, vec![0, 1]);
        let dist = g.hops_from(lg.node(0, 0));
        assert_eq!(dist[lg.node(1, 1)], Some(2));
        let c = &lg.model().commodities()[0];
        assert_eq!(c.destination, lg.node(1, 1));
        assert_eq!(c.rates.get(lg.node(0, 0), 3), 4.0);
        assert!(lg.undeliverable().is_empty());
    }

    #[test]
    fn processing_edges_use_cpu_budget() {
        let lg = build_layered_graph(&chain_scenario(1, 3)).unwrap();
        let e = lg.processing_edge(0, 0).unwrap();
        assert_eq!(lg.graph().edge(e).capacity, 10.0);
        assert!((lg.graph().edge(e).cost - 0.2).abs() < 1e-15);
        let groups = shared_capacity_groups(&lg);
        let link = groups
            .iter()
            .find(|g| g.resource == Resource::Link(0))
            .unwrap();
        assert_eq!(link.edges.len(), 2);
        assert_eq!(link.capacity, 100.0);
        let cpu = groups
            .iter()
            .find(|g| g.resource == Resource::Compute(0))
            .unwrap();
        assert_eq!(cpu.edges, vec![e]);
        assert_eq!(cpu.capacity, 10.0);
    }

    #[test]
    fn pure_routing_is_the_physical_graph() {
        let s = chain_scenario(0, 2);
        let lg = build_layered_graph(&s).unwrap();
        assert_eq!(lg.graph().edges(), s.physical.edges());
        assert_eq!(lg.graph().labels(), s.physical.labels());
        assert!(lg.model().groups().iter().all(|g| g.edges.len() == 1));
    }

    #[test]
    fn short_lifetime_is_flagged_not_rejected() {
        let lg = build_layered_graph(&chain_scenario(1, 1)).unwrap();
        assert_eq!(lg.undeliverable(), &[0]);
    }
}
