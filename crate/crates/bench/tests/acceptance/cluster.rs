use std::collections::BTreeMap;

use pc_core::containers::{MapValue, OwnedKey};
use pc_core::distributed::*;
use pc_core::engine::{decompose, Datum, Sink};
use pc_core::lambda::{compile_to_tcap, make_lambda_from_member, ComputationGraph};
use pc_core::workloads::kmeans::{
    cluster_kmeans, initial_centroids, point_registry, point_set, point_udfs, reference_kmeans,
    two_blobs, KMeansParams,
};
use pc_core::workloads::synthetic::{rec_registry, rec_set, rec_udfs, Rec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ensure, Outcome};

const WORDS: [&str; 9] = [
    "oak", "ash", "elm", "fir", "yew", "larch", "pine", "beech", "alder",
];

fn config(nodes: usize) -> ClusterConfig {
    ClusterConfig {
        nodes,
        n_threads: 2,
        k_combiners: 2,
        m_partitions: 3,
        page_size: 8192,
        chunk_size: 256,
        ..Default::default()
    }
}

fn cluster(cfg: ClusterConfig, sets: &[(&str, &[Rec])]) -> Result<SimCluster, String> {
    let reg = rec_registry();
    let mut c = SimCluster::new(cfg, reg.clone(), rec_udfs()).map_err(|e| e.to_string())?;
    for (name, rows) in sets {
        let set = rec_set(&reg, rows, 4096).map_err(|e| e.to_string())?;
        c.distribute("db", name, &set).map_err(|e| e.to_string())?;
    }
    Ok(c)
}

fn aggregate(
    nodes: usize,
    rows: &[Rec],
    key: &str,
    value: &str,
) -> Result<Vec<(OwnedKey, MapValue)>, String> {
    let mut c = cluster(config(nodes), &[("recs", rows)])?;
    let mut g = ComputationGraph::new();
    let r = g
        .reader("R", "db", "recs", "rec")
        .map_err(|e| e.to_string())?;
    let a = g
        .aggregate(
            "Agg",
            r,
            make_lambda_from_member(0, key),
            make_lambda_from_member(0, value),
            "sum",
        )
        .map_err(|e| e.to_string())?;
    g.writer("W", a, "out", "agg").map_err(|e| e.to_string())?;
    let p = compile_to_tcap(&g).map_err(|e| e.to_string())?;
    let pl = decompose(&p)
        .map_err(|e| e.to_string())?
        .into_iter()
        .find(|pl| matches!(pl.sink, Sink::Aggregate { .. }))
        .ok_or("no aggregation pipeline")?;
    c.bind_graph(&g);
    let report = run_aggregation(&mut c, &pl, "out", "agg").map_err(|e| e.to_string())?;
    ensure!(
        report.import_fixups == 0,
        "{} import fixups",
        report.import_fixups
    );
    ensure!(
        c.net.undelivered() == 0,
        "{} pages never delivered",
        c.net.undelivered()
    );
    c.collect_aggregate("out", "agg").map_err(|e| e.to_string())
}

pub fn aggregation_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rows: Vec<Rec> = (0..20_000)
        .map(|_| Rec {
            a: rng.gen_range(0..500),
            b: 1,
            c: rng.gen_range(-1e3..1e3),
            s: WORDS[rng.gen_range(0..WORDS.len())].to_string(),
        })
        .collect();
    let mut words: BTreeMap<String, i64> = BTreeMap::new();
    let mut sums: BTreeMap<i64, f64> = BTreeMap::new();
    for r in &rows {
        *words.entry(r.s.clone()).or_default() += r.b;
        *sums.entry(r.a).or_default() += r.c;
    }
    let words: Vec<(OwnedKey, MapValue)> = words
        .into_iter()
        .map(|(k, v)| (OwnedKey::Str(k), MapValue::Int(v)))
        .collect();
    let mut worst = 0.0f64;
    for nodes in [1, 2, 4] {
        ensure!(
            aggregate(nodes, &rows, "s", "b")? == words,
            "{nodes} node(s): word counts differ"
        );
        let got = aggregate(nodes, &rows, "a", "c")?;
        ensure!(
            got.len() == sums.len(),
            "{nodes} node(s): {} keys, expected {}",
            got.len(),
            sums.len()
        );
        for ((k, v), (ek, ev)) in got.iter().zip(&sums) {
            let MapValue::Double(v) = v else {
                return Err(format!("key {k:?}: not a double"));
            };
            ensure!(
                *k == OwnedKey::Int(*ek),
                "{nodes} node(s): key {k:?} != {ek}"
            );
            let rel = (v - ev).abs() / ev.abs().max(f64::MIN_POSITIVE);
            ensure!(
                rel < 1e-9,
                "{nodes} node(s), key {ek}: relative error {rel:e}"
            );
            worst = worst.max(rel);
        }
    }
    Ok(format!(
        "{} words exact, {} double keys, max rel err {worst:.1e}",
        words.len(),
        sums.len()
    ))
}

type Tuple = [(i64, i64); 3];

/// All key-equal triples by nested loops over the raw rows.
fn nested_loops(x: &[Rec], y: &[Rec], z: &[Rec]) -> Vec<Tuple> {
    let mut out = Vec::new();
    for p in x {
        for q in y.iter().filter(|q| q.a == p.a) {
            for r in z.iter().filter(|r| r.a == q.a) {
                out.push([(p.a, p.b), (q.a, q.b), (r.a, r.b)]);
            }
        }
    }
    out.sort();
    out
}

fn key_of(d: &Datum) -> Option<(i64, i64)> {
    let Datum::Record(_, f) = d else { return None };
    let get = |n: &str| f.iter().find(|(k, _)| k == n).map(|(_, v)| v);
    match (get("a")?, get("b")?) {
        (Datum::Int(a), Datum::Int(b)) => Some((*a, *b)),
        _ => None,
    }
}

fn join(nodes: usize, sets: [&[Rec]; 3], plan: JoinPlan) -> Result<Vec<Tuple>, String> {
    let mut c = cluster(
        config(nodes),
        &[("x", sets[0]), ("y", sets[1]), ("z", sets[2])],
    )?;
    let inputs: Vec<JoinInput> = ["x", "y", "z"]
        .iter()
        .map(|s| JoinInput::new("db", s, KeyExpr::Field("a".into())))
        .collect();
    let report = hash_join(&mut c, &inputs, plan, "out", "j").map_err(|e| e.to_string())?;
    ensure!(
        report.import_fixups == 0,
        "{} import fixups",
        report.import_fixups
    );
    let mut rows = Vec::new();
    for row in c.collect_rows("out", "j").map_err(|e| e.to_string())? {
        let keys: Option<Vec<_>> = row.iter().map(key_of).collect();
        let keys = keys.ok_or("join row is not three records")?;
        ensure!(keys.len() == 3, "join row has {} columns", keys.len());
        rows.push([keys[0], keys[1], keys[2]]);
    }
    ensure!(
        report.matches as usize == rows.len(),
        "report says {} matches, {} rows stored",
        report.matches,
        rows.len()
    );
    rows.sort();
    Ok(rows)
}

fn rows(seed: u64, n: usize, keys: i64) -> Vec<Rec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n as i64)
        .map(|b| Rec {
            a: rng.gen_range(0..keys),
            b,
            c: 0.0,
            s: "r".into(),
        })
        .collect()
}

pub fn join_oracle() -> Outcome {
    let (x, y, z) = (rows(70, 1000, 120), rows(71, 800, 120), rows(72, 600, 120));
    let want = nested_loops(&x, &y, &z);
    ensure!(!want.is_empty(), "oracle is empty");
    let dup = |n: usize, off: i64| {
        (0..n as i64)
            .map(|b| Rec {
                a: 7,
                b: b + off,
                c: 0.0,
                s: "d".into(),
            })
            .collect::<Vec<_>>()
    };
    let (d2, d3, d1) = (dup(2, 0), dup(3, 10), dup(1, 20));
    for plan in [JoinPlan::Shuffle, JoinPlan::Broadcast] {
        for nodes in [1, 3] {
            ensure!(
                join(nodes, [&x, &y, &z], plan)? == want,
                "{plan:?} on {nodes} node(s) differs from nested loops"
            );
            let got = join(nodes, [&d2, &d3, &d1], plan)?;
            ensure!(
                got == nested_loops(&d2, &d3, &d1) && got.len() == 6,
                "{plan:?}: duplicate keys gave {} tuples",
                got.len()
            );
        }
    }
    Ok(format!("{} tuples under both plans, 2x3 -> 6", want.len()))
}

pub fn kmeans_demo() -> Outcome {
    let (pts, means) = two_blobs(2024, 10_000, 10.0);
    let init = initial_centroids(&pts, 2, 2024);
    let params = KMeansParams {
        k: 2,
        max_iters: 100,
        epsilon: 1e-12,
    };
    let want = reference_kmeans(&pts, &init, params);
    let reg = point_registry();
    let cfg = config(3);
    let mut c = SimCluster::new(cfg, reg.clone(), point_udfs()).map_err(|e| e.to_string())?;
    let set = point_set(&reg, &pts, cfg.page_size).map_err(|e| e.to_string())?;
    c.distribute("kmeans", "points", &set)
        .map_err(|e| e.to_string())?;
    let got = cluster_kmeans(&mut c, "kmeans", "points", &init, params, |_, _| {})
        .map_err(|e| e.to_string())?;
    ensure!(
        got.converged && want.converged,
        "did not converge (cluster {}, reference {})",
        got.converged,
        want.converged
    );
    ensure!(
        got.iterations == want.iterations,
        "{} iterations vs reference {}",
        got.iterations,
        want.iterations
    );
    let mut diff = 0.0f64;
    for (g, w) in got.centroids.iter().zip(&want.centroids) {
        diff = diff.max((g[0] - w[0]).abs()).max((g[1] - w[1]).abs());
    }
    ensure!(
        diff < 1e-9,
        "centroids differ from the reference by {diff:e}"
    );
    let off = means
        .iter()
        .map(|m| {
            got.centroids
                .iter()
                .map(|c| (c[0] - m[0]).hypot(c[1] - m[1]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    ensure!(off < 0.1, "a blob mean is {off} from every centroid");
    Ok(format!(
        "{} iterations, max diff {diff:.1e}",
        got.iterations
    ))
}
