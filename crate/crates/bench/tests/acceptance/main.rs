//! Runs every acceptance criterion and prints one PASS/FAIL line each.
//! Exits non-zero if any criterion fails or overruns its time budget.

mod cluster;
mod engine;
mod optimizer;
mod perf;
mod storage;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

pub type Outcome = Result<String, String>;

/// Turns a false condition into a failure message.
#[macro_export]
macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    }};
}

struct Criterion {
    id: u8,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn criteria() -> Vec<Criterion> {
    vec![
        Criterion {
            id: 1,
            name: "zero-copy round trip",
            budget: secs(1),
            run: storage::zero_copy_round_trip,
        },
        Criterion {
            id: 2,
            name: "optimizer golden tests",
            budget: secs(1),
            run: optimizer::goldens,
        },
        Criterion {
            id: 3,
            name: "optimizer semantic preservation",
            budget: secs(120),
            run: optimizer::semantic_preservation,
        },
        Criterion {
            id: 4,
            name: "zombie bound",
            budget: secs(30),
            run: engine::zombie_bound,
        },
        Criterion {
            id: 5,
            name: "chunk-size invariance",
            budget: secs(30),
            run: engine::chunk_size_invariance,
        },
        Criterion {
            id: 6,
            name: "distributed aggregation oracle",
            budget: secs(60),
            run: cluster::aggregation_oracle,
        },
        Criterion {
            id: 7,
            name: "join oracle",
            budget: secs(60),
            run: cluster::join_oracle,
        },
        Criterion {
            id: 8,
            name: "allocation-policy behaviors",
            budget: secs(1),
            run: storage::allocation_policies,
        },
        Criterion {
            id: 9,
            name: "k-means demo",
            budget: secs(30),
            run: cluster::kmeans_demo,
        },
        Criterion {
            id: 10,
            name: "performance smoke",
            budget: secs(120),
            run: perf::filter_speedup,
        },
    ]
}

fn main() {
    // Filter arguments from `cargo test <name>` select criteria by name.
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for c in criteria() {
        if !filters.is_empty() && !filters.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let took = start.elapsed();
        let result = match result {
            Ok(_) if took > c.budget => Err(format!("took {took:.2?}, budget {:?}", c.budget)),
            r => r,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} {:>2} {:<34} {:>9.2?}  {detail}", c.id, c.name, took);
        failed += result.is_err() as usize;
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
