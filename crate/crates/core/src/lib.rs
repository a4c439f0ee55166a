//! Depot siting, fleet sizing and daily routing under random demand.
//!
//! The crate covers the whole pipeline: fitting a demand model from order
//! history and simulating demand days ([`scenario`]), preprocessing the road
//! network into a complete shortest-path graph ([`graph`]), solving the
//! two-stage stochastic program with a multicut L-shaped method
//! ([`lshaped`]) whose recourse problems are multi-depot routing problems
//! solved by column generation ([`colgen`]) with an exact pricing search
//! ([`pricing`]), recycling routes between demand days ([`recycle`]), and
//! evaluating a fixed first-stage decision on observed days ([`eval`]).
//! The optimization models run on a built-in simplex / branch-and-bound
//! kernel ([`lp`]).

pub mod colgen;
pub mod error;
pub mod eval;
pub mod graph;
pub mod instance;
pub mod io;
pub mod lp;
pub mod lshaped;
pub mod model;
pub mod pricing;
pub mod recycle;
pub mod scenario;
pub mod synthetic;
mod serde_util;

pub use error::{Error, Result};
pub use graph::{CompleteGraph, Metric};
pub use instance::{Instance, ResolvedDemand};
pub use model::{
    DemandRealization, FirstStageSolution, InstanceConfig, Network, NodeId, Route, TimeWindow,
};
