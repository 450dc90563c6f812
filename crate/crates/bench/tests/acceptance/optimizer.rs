use pc_core::engine::EngineConfig;
use pc_core::optimizer::optimize_traced;
use pc_core::tcap::{canonicalize, erase_labels, parse, Program};
use pc_core::workloads::synthetic::{random_query, run_query};

use crate::{ensure, Outcome};

fn corpus(name: &str) -> Result<Program, String> {
    let path = format!("{}/../../corpus/{name}", env!("CARGO_MANIFEST_DIR"));
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{path}: {e}"))?;
    parse(&text).map_err(|d| d.render(name))
}

fn shape(p: &Program) -> Program {
    canonicalize(&erase_labels(p))
}

pub fn goldens() -> Outcome {
    let mut fired = 0;
    for (input, golden) in [
        ("sel43.tcap", "sel43_opt.tcap"),
        ("join42.tcap", "join42_opt.tcap"),
    ] {
        let (got, firings) = optimize_traced(&corpus(input)?).map_err(|e| e.to_string())?;
        ensure!(
            shape(&got) == shape(&corpus(golden)?),
            "{input} does not optimize to {golden}"
        );
        fired += firings.len();
    }
    Ok(format!("2 programs, {fired} rule firings"))
}

pub fn semantic_preservation() -> Outcome {
    let config = EngineConfig {
        chunk_size: 64,
        page_size: 1 << 16,
        ..Default::default()
    };
    let (mut changed, mut rows) = (0, 0);
    let programs = 128;
    for seed in 0..programs {
        let q = random_query(0xacce_0000 + seed, 1000);
        let (opt, firings) =
            optimize_traced(&q.program).map_err(|e| format!("seed {seed}: {e}"))?;
        changed += !firings.is_empty() as usize;
        let before = run_query(&q, &q.program, config).map_err(|e| format!("seed {seed}: {e}"))?;
        let after = run_query(&q, &opt, config).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure!(
            before == after,
            "seed {seed}: results differ after optimization"
        );
        rows += before.values().map(Vec::len).sum::<usize>();
    }
    ensure!(changed > 0, "no program was rewritten");
    Ok(format!(
        "{programs} programs, {changed} rewritten, {rows} result rows"
    ))
}
