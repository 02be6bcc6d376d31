//! Deadline-constrained multi-hop network control.
//!
//! The crate models packets that carry a remaining lifetime, drives a virtual
//! network with a drift-plus-penalty max-weight controller, steers the actual
//! network toward the virtual flows with a randomized routing policy, and
//! checks everything against a linear-programming oracle of the
//! deadline-constrained capacity region.

// Negated float comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod builtin;
pub mod controller;
pub mod dcnc;
pub mod error;
pub mod layered;
pub mod lp;
pub mod matching;
pub mod model;
pub mod queueing;
pub mod scenario;
pub mod sim;

pub use controller::{Controller, ControllerConfig, TieBreak, VirtualQueueBank, Weights};
pub use dcnc::{DcncBank, DcncConfig, DcncDecision};
pub use error::{LpError, ModelError, QueueError, SimError};
pub use layered::{
    build_layered_graph, shared_capacity_groups, Client, CloudScenario, ComputeSite, LayeredGraph,
};
pub use lp::{build_lp, region_boundary, solve, LpInstance, LpSolution, LpStatus};
pub use matching::{
    build_distribution, flow_matching_gap, BuildOutcome, EmpiricalFlowStats, FlowMatcher,
    MatcherConfig, RoutingDistribution, SkipScope,
};
pub use model::{
    CapacityGroup, CommoditySpec, Edge, EdgeId, NetworkGraph, NetworkModel, NodeId, RateTable,
    UnitSystem,
};
pub use queueing::{timely_throughput, ArrivalSample, FlowDecision, LifetimeQueueBank, SlotLedger};
pub use scenario::{Axis, ScenarioFile, SimSettings};
pub use sim::{
    detect_convergence, run, sweep, ArrivalGenerator, ArrivalProcess, MetricsRecord, Policy,
    RunOutput, RunSummary, SimConfig, SweepPoint,
};
