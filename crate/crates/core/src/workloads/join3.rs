//! Three record sets joined on a shared integer key.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::synthetic::{rec_set, Rec};
use crate::distributed::{
    hash_join, DistError, JoinInput, JoinPlan, JoinReport, KeyExpr, SimCluster,
};

const WORDS: [&str; 4] = ["north", "south", "east", "west"];

/// Records with keys drawn uniformly from `0..keys`; `b` numbers the rows.
pub fn keyed_recs(seed: u64, n: usize, keys: i64) -> Vec<Rec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n as i64)
        .map(|i| Rec {
            a: rng.gen_range(0..keys.max(1)),
            b: i,
            c: rng.gen_range(0.0..1.0),
            s: WORDS[rng.gen_range(0..WORDS.len())].to_string(),
        })
        .collect()
}

/// Number of key-equal triples, counted per key.
pub fn expected_matches(sets: [&[Rec]; 3]) -> u64 {
    let count = |rows: &[Rec]| {
        let mut m = std::collections::HashMap::<i64, u64>::new();
        rows.iter().for_each(|r| *m.entry(r.a).or_default() += 1);
        m
    };
    let (x, y, z) = (count(sets[0]), count(sets[1]), count(sets[2]));
    x.iter()
        .map(|(k, n)| n * y.get(k).copied().unwrap_or(0) * z.get(k).copied().unwrap_or(0))
        .sum()
}

/// Loads the three sets as `demo.x`, `demo.y`, `demo.z` and joins them
/// into `demo.xyz`.
pub fn cluster_join3(
    cluster: &mut SimCluster,
    sets: [&[Rec]; 3],
    plan: JoinPlan,
) -> Result<JoinReport, DistError> {
    let reg = cluster.registry().clone();
    let page = cluster.config.page_size;
    for (name, rows) in ["x", "y", "z"].into_iter().zip(sets) {
        cluster.distribute("demo", name, &rec_set(&reg, rows, page)?)?;
    }
    let inputs: Vec<JoinInput> = ["x", "y", "z"]
        .iter()
        .map(|s| JoinInput::new("demo", s, KeyExpr::Field("a".into())))
        .collect();
    hash_join(cluster, &inputs, plan, "demo", "xyz")
}
