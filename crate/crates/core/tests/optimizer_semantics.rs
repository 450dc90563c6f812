use pc_core::engine::EngineConfig;
use pc_core::optimizer::{optimize, optimize_traced};
use pc_core::workloads::synthetic::{random_query, run_query};
use proptest::prelude::*;

fn config() -> EngineConfig {
    EngineConfig {
        chunk_size: 64,
        page_size: 1 << 16,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

    #[test]
    fn optimized_programs_compute_the_same_multisets(seed in any::<u64>()) {
        let q = random_query(seed, 1000);
        let opt = optimize(&q.program).unwrap();
        let before = run_query(&q, &q.program, config()).unwrap();
        let after = run_query(&q, &opt, config()).unwrap();
        prop_assert_eq!(before, after);
    }
}

#[test]
fn random_programs_give_both_rules_work() {
    let (mut redundant, mut pushed) = (0, 0);
    for seed in 0..200 {
        let q = random_query(seed, 0);
        let (_, firings) = optimize_traced(&q.program).unwrap();
        redundant += firings.iter().any(|f| f.rule.contains("redundant")) as usize;
        pushed += firings.iter().any(|f| f.rule.contains("push")) as usize;
    }
    assert!(redundant >= 20, "{redundant}");
    assert!(pushed >= 20, "{pushed}");
}
