use pc_core::engine::{set_rows, Datum, Engine, EngineConfig, RunReport, UdfError, Value};
use pc_core::lambda::{
    compile_to_tcap, constant, make_lambda_from_member, make_lambda_from_method, ComputationGraph,
};
use pc_core::workloads::synthetic::{make_rec, random_recs, rec_registry, rec_set, rec_udfs, Rec};
use rand::SeedableRng;

use crate::{ensure, Outcome};

/// The projection: a new record built on the output page.
fn widened(r: &Rec) -> Rec {
    Rec {
        a: r.a * 2,
        b: r.b + 1,
        c: r.c / 2.0,
        s: format!("{}-{}", r.s, r.b),
    }
}

fn engine(config: EngineConfig) -> Engine {
    let mut udfs = rec_udfs();
    udfs.add_method("Rec", "widen", |ctx, o| {
        let int = |v: Value| match v {
            Value::Int(i) => Ok(i),
            v => Err(UdfError::Failed(format!("expected int, got {}", v.kind()))),
        };
        let a = int(ctx.field(o, "a")?)?;
        let b = int(ctx.field(o, "b")?)?;
        let Value::Double(c) = ctx.field(o, "c")? else {
            return Err(UdfError::Failed("c is not a double".into()));
        };
        let s = match ctx.field(o, "s")? {
            Value::Obj(s) => ctx.string(s)?,
            Value::Str(s) => s,
            v => return Err(UdfError::Failed(format!("s is {}", v.kind()))),
        };
        let w = widened(&Rec { a, b, c, s });
        Ok(Value::Obj(make_rec(ctx.heap(), &w)?))
    });
    Engine::new(rec_registry(), udfs, config)
}

/// Runs `filter(a > min_a)` then `widen` and returns the sink rows.
fn run(
    config: EngineConfig,
    rows: &[Rec],
    min_a: Option<i64>,
) -> Result<(Vec<Vec<Datum>>, RunReport), String> {
    let mut e = engine(config);
    let mut g = ComputationGraph::new();
    let r = g
        .reader("Recs", "db", "recs", "rec")
        .map_err(|e| e.to_string())?;
    let pred = min_a.map(|m| make_lambda_from_member(0, "a").gt(constant(m)));
    let s = g
        .selection("Sel", r, pred, Some(make_lambda_from_method(0, "widen")))
        .map_err(|e| e.to_string())?;
    g.writer("W", s, "out", "res").map_err(|e| e.to_string())?;
    let p = compile_to_tcap(&g).map_err(|e| e.to_string())?;
    e.storage.put(
        "db",
        "recs",
        rec_set(e.registry(), rows, 1 << 20).map_err(|e| e.to_string())?,
    );
    e.bind_graph(&g);
    let report = e.run(&p).map_err(|e| e.to_string())?;
    let set = e.storage.get("out", "res").ok_or("no output set")?;
    Ok((
        set_rows(set, e.registry()).map_err(|e| e.to_string())?,
        report,
    ))
}

/// Decodes a `Rec` row back into its fields.
fn decode(row: &[Datum]) -> Option<Rec> {
    let [Datum::Record(_, fields)] = row else {
        return None;
    };
    let get = |n: &str| fields.iter().find(|(f, _)| f == n).map(|(_, d)| d);
    match (get("a")?, get("b")?, get("c")?, get("s")?) {
        (Datum::Int(a), Datum::Int(b), Datum::Double(c), Datum::Str(s)) => Some(Rec {
            a: *a,
            b: *b,
            c: *c,
            s: s.clone(),
        }),
        _ => None,
    }
}

fn check_oracle(out: &[Vec<Datum>], want: &[Rec]) -> Result<(), String> {
    ensure!(
        out.len() == want.len(),
        "{} rows, expected {}",
        out.len(),
        want.len()
    );
    for (i, (row, w)) in out.iter().zip(want).enumerate() {
        let got = decode(row).ok_or_else(|| format!("row {i} is not a Rec: {row:?}"))?;
        ensure!(got == *w, "row {i}: {got:?} != {w:?}");
    }
    Ok(())
}

fn recs(seed: u64, n: usize) -> Vec<Rec> {
    random_recs(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed), n)
}

pub fn zombie_bound() -> Outcome {
    let rows = recs(4, 20_000);
    let want: Vec<Rec> = rows.iter().map(widened).collect();
    let big = EngineConfig {
        page_size: 64 << 20,
        ..Default::default()
    };
    let (base, _) = run(big, &rows, None)?;
    check_oracle(&base, &want)?;
    let mut summary = Vec::new();
    for page_size in [4 << 10, 16 << 10, 64 << 10] {
        let cfg = EngineConfig {
            page_size,
            chunk_size: 1024,
            ..Default::default()
        };
        let (out, report) = run(cfg, &rows, None)?;
        let m = &report.pipelines[0];
        ensure!(
            out == base,
            "page size {page_size}: output differs from the large-page run"
        );
        ensure!(
            m.pages_out >= 10,
            "page size {page_size}: only {} output pages",
            m.pages_out
        );
        let z = report.max_zombie_outputs();
        ensure!(z <= 2, "page size {page_size}: {z} zombie output pages");
        summary.push(format!("{}K:{}p/z{}", page_size >> 10, m.pages_out, z));
    }
    Ok(summary.join(" "))
}

pub fn chunk_size_invariance() -> Outcome {
    let rows = recs(5, 100_000);
    let want: Vec<Rec> = rows.iter().filter(|r| r.a > 3).map(widened).collect();
    let mut base: Option<Vec<Vec<Datum>>> = None;
    for chunk_size in [1, 7, 1024, 65536] {
        let (out, _) = run(
            EngineConfig {
                chunk_size,
                ..Default::default()
            },
            &rows,
            Some(3),
        )?;
        match &base {
            None => {
                check_oracle(&out, &want)?;
                base = Some(out);
            }
            Some(b) => ensure!(out == *b, "chunk size {chunk_size}: sink contents differ"),
        }
    }
    Ok(format!(
        "{} of {} rows kept at every chunk size",
        want.len(),
        rows.len()
    ))
}
