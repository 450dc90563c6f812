use std::fmt;

use super::{DistError, JoinPlan};
use crate::engine::{decompose, Pipeline, Sink, Step};
use crate::tcap::Program;

/// One cluster-wide step of a job. Every node runs it before any node
/// starts the next.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum JobStage {
    /// Runs a pipeline on each node's local pages.
    Pipeline {
        pipeline: String,
    },
    /// Combines partial aggregates and folds them on their home nodes.
    Aggregation {
        target: String,
    },
    /// Hash-partitions a list over all nodes.
    Repartition {
        list: String,
    },
    /// Copies a list to every node.
    Broadcast {
        list: String,
    },
    BuildHashTable {
        list: String,
    },
    Probe {
        pipeline: String,
    },
}

impl fmt::Display for JobStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JobStage::Pipeline { pipeline } => write!(f, "pipeline {pipeline}"),
            JobStage::Aggregation { target } => write!(f, "aggregation {target}"),
            JobStage::Repartition { list } => write!(f, "repartition {list}"),
            JobStage::Broadcast { list } => write!(f, "broadcast {list}"),
            JobStage::BuildHashTable { list } => write!(f, "buildHashTable {list}"),
            JobStage::Probe { pipeline } => write!(f, "probe {pipeline}"),
        }
    }
}

fn has_join(pl: &Pipeline) -> bool {
    pl.steps.iter().any(|s| matches!(s, Step::Join(_)))
}

/// Turns a program's pipelines into job stages. A plain output pipeline
/// that only reads an aggregate is folded into the aggregation.
pub fn plan_stages(p: &Program, joins: JoinPlan) -> Result<Vec<JobStage>, DistError> {
    let pipes = decompose(p)?;
    let folded = |pl: &Pipeline| {
        pl.steps.is_empty()
            && matches!(pl.sink, Sink::Output { .. })
            && pipes
                .iter()
                .any(|a| a.target == pl.source && matches!(a.sink, Sink::Aggregate { .. }))
    };
    let mut out = Vec::new();
    for pl in &pipes {
        let name = pl.to_string();
        match &pl.sink {
            _ if folded(pl) => {}
            Sink::JoinBuild { .. } => {
                let list = pl.target.clone();
                out.push(match joins {
                    JoinPlan::Shuffle => JobStage::Repartition { list: list.clone() },
                    JoinPlan::Broadcast => JobStage::Broadcast { list: list.clone() },
                });
                out.push(JobStage::BuildHashTable { list });
            }
            sink => {
                if has_join(pl) {
                    if joins == JoinPlan::Shuffle {
                        out.push(JobStage::Repartition {
                            list: pl.source.clone(),
                        });
                    }
                    out.push(JobStage::Probe { pipeline: name });
                } else {
                    out.push(JobStage::Pipeline { pipeline: name });
                }
                if matches!(sink, Sink::Aggregate { .. }) {
                    out.push(JobStage::Aggregation {
                        target: pl.target.clone(),
                    });
                }
            }
        }
    }
    Ok(out)
}
