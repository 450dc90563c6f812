//! Data generators and end-to-end workloads shared by tests, benches and the CLI.

pub mod join3;
pub mod kmeans;
pub mod matmul;
pub mod synthetic;
