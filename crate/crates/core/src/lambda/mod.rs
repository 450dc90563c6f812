//! Lambda terms, computation graphs, and their compilation to TCAP.

mod compile;
mod graph;
mod term;

pub use compile::{
    compile_selection_predicate, compile_to_tcap, source_bindings, source_list_name,
};
pub use graph::{CompId, CompKind, Computation, ComputationGraph};
pub use term::{
    constant, make_lambda, make_lambda_from_member, make_lambda_from_method, make_lambda_from_self,
    make_lambda_multi, BinOp, Const, LambdaTerm, TermKind, TypeTag,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LambdaError {
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("slot {slot} is out of range for `{comp}` (arity {arity})")]
    SlotOutOfRange {
        slot: usize,
        arity: usize,
        comp: String,
    },
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("no join key: {0}")]
    NoJoinKey(String),
    #[error("duplicate name `{0}`")]
    DuplicateName(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("unsupported term: {0}")]
    Unsupported(String),
}
