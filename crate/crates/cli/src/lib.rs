//! Command implementations behind the `pc` and `tcap-opt` binaries. Output
//! goes to the writers passed in so tests can capture it.

mod args;
mod demo;

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use pc_core::distributed::{plan_stages, DistError, JoinPlan};
use pc_core::optimizer::{optimize_traced, OptimizerError};
use pc_core::tcap::{self, Program};

pub use args::{Cli, Command, Demo, DemoArgs, OptimizeArgs, TcapCmd};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    WriteFile { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Output(#[from] io::Error),
    #[error("{0} diagnostic(s)")]
    Diagnostics(usize),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("k-means did not converge in {0} iterations")]
    NotConverged(usize),
    #[error("{0}")]
    Check(String),
}

impl CliError {
    /// 2 for file and stream failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. } | CliError::WriteFile { .. } | CliError::Output(_) => 2,
            _ => 1,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn load(path: &Path, err: &mut dyn Write) -> Result<Program, CliError> {
    let text = read(path)?;
    tcap::parse(&text).map_err(|d| {
        let _ = writeln!(err, "{}", d.render(&path.display().to_string()));
        CliError::Diagnostics(1)
    })
}

fn report(path: &Path, diags: &[tcap::Diagnostic], err: &mut dyn Write) -> Result<(), CliError> {
    if diags.is_empty() {
        return Ok(());
    }
    for d in diags {
        writeln!(err, "{}", d.render(&path.display().to_string()))?;
    }
    Err(CliError::Diagnostics(diags.len()))
}

pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Tcap(cmd) => run_tcap(cmd, out, err),
        Command::Demo(args) => demo::run(&args, out, err),
    }
}

pub fn run_tcap(cmd: TcapCmd, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        TcapCmd::Parse { file } => {
            let p = load(&file, err)?;
            write!(out, "{}", tcap::print(&p))?;
        }
        TcapCmd::Validate { file } => {
            let p = load(&file, err)?;
            report(&file, &tcap::validate(&p), err)?;
        }
        TcapCmd::Optimize(args) => optimize(&args, out, err)?,
        TcapCmd::Plan {
            file,
            nodes,
            broadcast,
        } => {
            let p = load(&file, err)?;
            report(&file, &tcap::validate(&p), err)?;
            let stages = plan_stages(
                &p,
                if broadcast {
                    JoinPlan::Broadcast
                } else {
                    JoinPlan::Shuffle
                },
            )?;
            for (i, s) in stages.iter().enumerate() {
                writeln!(out, "{:>3}  {s}", i + 1)?;
            }
            writeln!(out, "{} job stages on {nodes} node(s)", stages.len())?;
        }
    }
    Ok(())
}

pub fn optimize(
    args: &OptimizeArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let p = load(&args.file, err)?;
    let (opt, firings) = match optimize_traced(&p) {
        Err(OptimizerError::Invalid(diags)) => return report(&args.file, &diags, err),
        r => r?,
    };
    if args.trace {
        for f in &firings {
            writeln!(err, "{}: {}", f.rule, f.detail)?;
        }
    }
    let text = tcap::print(&opt);
    match &args.output {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::WriteFile {
            path: path.clone(),
            source,
        })?,
        None => write!(out, "{text}")?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_split_io_from_content() {
        let io = || io::Error::new(io::ErrorKind::NotFound, "gone");
        assert_eq!(
            CliError::Read {
                path: "x".into(),
                source: io()
            }
            .exit_code(),
            2
        );
        assert_eq!(CliError::Output(io()).exit_code(), 2);
        assert_eq!(CliError::Diagnostics(3).exit_code(), 1);
        assert_eq!(CliError::NotConverged(9).exit_code(), 1);
    }

    #[test]
    fn plan_writes_stage_list() {
        let file = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus/join3.tcap");
        let (mut out, mut err) = (Vec::new(), Vec::new());
        run_tcap(
            TcapCmd::Plan {
                file,
                nodes: 4,
                broadcast: true,
            },
            &mut out,
            &mut err,
        )
        .unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().filter(|l| l.contains("broadcast")).count(), 2);
        assert!(text.ends_with("5 job stages on 4 node(s)\n"));
    }
}
