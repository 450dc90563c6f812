//! Vectorized pipeline execution over pages.

mod exec;
mod ops;
mod pipeline;
mod pool;
mod stage;
mod storage;
mod udf;
mod value;
mod vlist;

pub use exec::{Engine, EngineConfig, PipelineMetrics, RunReport};
pub use ops::{compare, hash_value, value_str, values_eq};
pub use pipeline::{decompose, JoinStep, Pipeline, Sink, Step};
pub use pool::{BufferPool, PoolStats};
pub use stage::{Stage, StageOp, StageResult};
pub use storage::{
    combine_values, key_value, map_value, merged_entries, new_partition_root, new_row_root,
    page_maps, read_cell, read_rows, row_count, set_key, set_rows, upsert_value, write_row, Datum,
    PcSet, SetBuilder, SetKind, Storage,
};
pub use udf::{read_field, MethodFn, OpaqueFn, StageCtx, UdfError, Udfs};
pub use value::{Column, Value};
pub use vlist::VectorList;

use crate::object::ObjectError;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("pipeline aborted in stage `{stage}` on chunk {chunk}: {message}")]
    PipelineAborted {
        stage: String,
        chunk: usize,
        message: String,
    },
    #[error("stage `{stage}`: {message}")]
    StageTypeError { stage: String, message: String },
    #[error(transparent)]
    Object(ObjectError),
    #[error("a page of {0} bytes cannot hold a single row")]
    PageTooSmall(usize),
    #[error("source `{0}` is not bound to a set")]
    UnboundSource(String),
    #[error("no set `{0}`")]
    UnknownSet(String),
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error("pin violation: {0}")]
    PinViolation(String),
}
