use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "pc",
    version,
    about = "TCAP tools, engine demos and a simulated cluster"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Work with TCAP programs.
    #[command(subcommand)]
    Tcap(TcapCmd),
    /// Run a demo workload on a simulated cluster.
    Demo(DemoArgs),
}

#[derive(Debug, Subcommand)]
pub enum TcapCmd {
    /// Parse and print in canonical form.
    Parse { file: PathBuf },
    /// Check a program; silent when it is valid.
    Validate { file: PathBuf },
    /// Rewrite to a fixpoint and print the result.
    Optimize(OptimizeArgs),
    /// Print the job stages a program runs as.
    Plan {
        file: PathBuf,
        #[arg(long, default_value_t = 2)]
        nodes: usize,
        /// Plan joins as broadcasts instead of repartitions.
        #[arg(long)]
        broadcast: bool,
    },
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    pub file: PathBuf,
    /// Write the program here instead of stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Print every rule firing to stderr.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Demo {
    Kmeans,
    Join3,
    Matmul,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    pub demo: Demo,
    /// Cluster config file of key=value lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long)]
    pub chunk_size: Option<usize>,
    #[arg(long)]
    pub page_size: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub epsilon: f64,
    /// kmeans: number of points.
    #[arg(long, default_value_t = 10_000)]
    pub points: usize,
    /// join3: rows per input.
    #[arg(long, default_value_t = 1_000)]
    pub rows: usize,
    /// matmul: matrix dimension.
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    /// matmul: block dimension.
    #[arg(long, default_value_t = 4)]
    pub block: usize,
    /// join3 and matmul: force a broadcast join.
    #[arg(long)]
    pub broadcast: bool,
    /// Print per-stage metrics.
    #[arg(long)]
    pub trace: bool,
}
