//! Multi-node execution on simulated nodes that exchange exported pages.

mod aggregate;
mod cluster;
mod config;
mod join;
mod network;
mod pages;
mod plan;

pub use aggregate::{run_aggregation, AggregateReport};
pub use cluster::{Node, SimCluster};
pub use config::ClusterConfig;
pub use join::{
    choose_join_plan, hash_join, hash_join_into, JoinInput, JoinOutput, JoinPlan, JoinProjection,
    JoinReport, KeyExpr,
};
pub use network::{Envelope, NetStats, Network};
pub use pages::MapWriter;
pub use plan::{plan_stages, JobStage};

use crate::engine::EngineError;
use crate::object::ObjectError;

#[derive(Debug, thiserror::Error)]
pub enum DistError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Object(#[from] ObjectError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad cluster config: {0}")]
    Config(String),
    #[error("delivery: {0}")]
    Delivery(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}
