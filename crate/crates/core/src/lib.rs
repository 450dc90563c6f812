pub mod containers;
pub mod distributed;
pub mod engine;
pub mod lambda;
pub mod object;
pub mod optimizer;
pub mod tcap;
pub mod workloads;
