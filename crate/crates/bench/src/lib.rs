//! Fixtures for the per-slot control-loop benchmarks in `benches/control.rs`.

use latnet_core::{build_layered_graph, builtin, ArrivalSample, NetworkModel, UnitSystem};

/// Abilene at 100 Mbps per client with lifetime `l`, in 10 Mbps units.
pub fn abilene(l: usize) -> NetworkModel {
    let units = UnitSystem::new(10.0).expect("positive unit");
    let scenario = builtin::abilene(&units, l, 100.0).expect("valid built-in");
    build_layered_graph(&scenario)
        .expect("valid layered graph")
        .into_model()
}

/// Every rate delivered exactly at its mean.
pub fn mean_arrivals(model: &NetworkModel) -> ArrivalSample {
    let mut a = ArrivalSample::zeros(model);
    for (k, c) in model.commodities().iter().enumerate() {
        for (i, l, r) in c.rates.entries() {
            a.set(k, i, l, r);
        }
    }
    a
}
