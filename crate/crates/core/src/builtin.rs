//! Built-in scenarios.

use crate::error::ModelError;
use crate::layered::{Client, CloudScenario, ComputeSite};
use crate::model::{Edge, NetworkGraph, UnitSystem, DEFAULT_A_MAX_FACTOR};

/// Abilene city names, indexed by 0-based node id (displayed 1-based).
pub const ABILENE_CITIES: [&str; 11] = [
    "Seattle",
    "Sunnyvale",
    "Denver",
    "Los Angeles",
    "Houston",
    "Kansas City",
    "Atlanta",
    "Indianapolis",
    "Chicago",
    "Washington",
    "New York",
];

/// Undirected Abilene links, 1-based node ids.
pub const ABILENE_LINKS: [(usize, usize); 14] = [
    (1, 2),
    (1, 3),
    (2, 3),
    (2, 4),
    (3, 6),
    (4, 5),
    (5, 6),
    (5, 7),
    (6, 8),
    (7, 8),
    (7, 10),
    (8, 9),
    (9, 11),
    (10, 11),
];

pub const ABILENE_LINK_MBPS: f64 = 1000.0;
pub const ABILENE_LINK_COST_PER_GB: f64 = 1.0;
pub const ABILENE_CPU_MBPS: f64 = 50.0;
pub const ABILENE_BUDGET_CPUS: f64 = 2.0;
/// Nodes (1-based) with the cheap compute price.
pub const ABILENE_CHEAP_NODES: [usize; 2] = [5, 6];
pub const ABILENE_CHEAP_CPU_COST: f64 = 1.0;
pub const ABILENE_CPU_COST: f64 = 2.0;
/// `(source, destination)` pairs, 1-based.
pub const ABILENE_CLIENTS: [(usize, usize); 2] = [(1, 9), (3, 11)];
pub const ABILENE_GAMMA: f64 = 0.9;

/// Two clients over Abilene, each needing one service function.
///
/// Every link carries 1 Gbps each way at 1 cost/Gb; every node hosts 2 CPUs
/// of 50 Mbps, priced 1/CPU at nodes 5 and 6 and 2/CPU elsewhere. Both
/// clients ask for 90% of `rate_mbps` to arrive within `lifetime` slots.
pub fn abilene(
    units: &UnitSystem,
    lifetime: usize,
    rate_mbps: f64,
) -> Result<CloudScenario, ModelError> {
    let capacity = units.convert_rate(ABILENE_LINK_MBPS)?;
    let cost = units.link_cost(ABILENE_LINK_COST_PER_GB);
    let mut edges = Vec::with_capacity(2 * ABILENE_LINKS.len());
    for &(a, b) in &ABILENE_LINKS {
        for (src, dst) in [(a - 1, b - 1), (b - 1, a - 1)] {
            edges.push(Edge {
                src,
                dst,
                capacity,
                cost,
            });
        }
    }
    let labels = (1..=ABILENE_CITIES.len()).map(|i| i.to_string()).collect();
    let physical = NetworkGraph::with_labels(labels, edges)?;
    let compute = (1..=ABILENE_CITIES.len())
        .map(|i| ComputeSite {
            budget_cpus: ABILENE_BUDGET_CPUS,
            cost_per_cpu: if ABILENE_CHEAP_NODES.contains(&i) {
                ABILENE_CHEAP_CPU_COST
            } else {
                ABILENE_CPU_COST
            },
        })
        .collect();
    let rate = units.convert_rate(rate_mbps)?;
    let clients = ABILENE_CLIENTS
        .iter()
        .map(|&(s, d)| Client::all_at_max(s - 1, d - 1, ABILENE_GAMMA, lifetime, rate))
        .collect();
    Ok(CloudScenario {
        physical,
        compute,
        cpu_rate: units.convert_rate(ABILENE_CPU_MBPS)?,
        chain_length: 1,
        clients,
        a_max_factor: DEFAULT_A_MAX_FACTOR,
    })
}

/// A single link `s -> d` without compute, one commodity.
pub fn two_node(
    capacity: f64,
    cost: f64,
    lifetime: usize,
    rate: f64,
    gamma: f64,
) -> Result<CloudScenario, ModelError> {
    let physical = NetworkGraph::new(
        2,
        vec![Edge {
            src: 0,
            dst: 1,
            capacity,
            cost,
        }],
    )?;
    Ok(CloudScenario {
        physical,
        compute: vec![
            ComputeSite {
                budget_cpus: 0.0,
                cost_per_cpu: 0.0,
            };
            2
        ],
        cpu_rate: 1.0,
        chain_length: 0,
        clients: vec![Client::all_at_max(0, 1, gamma, lifetime, rate)],
        a_max_factor: DEFAULT_A_MAX_FACTOR,
    })
}
