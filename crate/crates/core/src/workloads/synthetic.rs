//! Random records and random selection/join/aggregation queries over them.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::containers::make_string;
use crate::engine::{
    set_rows, Datum, Engine, EngineConfig, EngineError, PcSet, SetBuilder, UdfError, Udfs, Value,
};
use crate::lambda::{
    compile_to_tcap, constant, make_lambda, make_lambda_from_member, make_lambda_from_method,
    make_lambda_from_self, ComputationGraph, LambdaTerm,
};
use crate::object::{
    BehaviorDescriptor, FieldKind, Heap, ObjRef, ObjectError, ObjectPolicy, TypeRegistry,
};
use crate::tcap::Program;

#[derive(Clone, Debug, PartialEq)]
pub struct Rec {
    pub a: i64,
    pub b: i64,
    pub c: f64,
    pub s: String,
}

const WORDS: [&str; 5] = ["ash", "birch", "cedar", "elm", "fir"];

pub fn rec_registry() -> Arc<TypeRegistry> {
    let reg = TypeRegistry::new();
    reg.register(BehaviorDescriptor::record(
        "Rec",
        &[
            ("a", FieldKind::I64),
            ("b", FieldKind::I64),
            ("c", FieldKind::F64),
            ("s", FieldKind::Str),
        ],
    ))
    .expect("fresh registry");
    Arc::new(reg)
}

/// `getA`, `getB`, `getC`, `getS` on `Rec`, plus the opaque `bucket(rec) = a % 3`.
pub fn rec_udfs() -> Udfs {
    let mut u = Udfs::new();
    for (m, f) in [("getA", "a"), ("getB", "b"), ("getC", "c"), ("getS", "s")] {
        u.add_method("Rec", m, move |ctx, o| ctx.field(o, f));
    }
    u.add_function("bucket", |ctx, args| match args {
        [Value::Obj(o)] => match ctx.field(*o, "a")? {
            Value::Int(a) => Ok(Value::Int(a.rem_euclid(3))),
            v => Err(UdfError::Failed(format!("bucket: `a` is {}", v.kind()))),
        },
        _ => Err(UdfError::Failed("bucket takes one record".into())),
    });
    u
}

pub fn make_rec(heap: &mut Heap, r: &Rec) -> Result<ObjRef, ObjectError> {
    let reg = heap.registry().clone();
    let ty = reg.code_of("Rec").expect("Rec is registered");
    let desc = reg.lookup(ty).expect("Rec is registered");
    let off = |f: &str| desc.field(f).expect("Rec field").offset;
    let o = heap.make_object(ty, ObjectPolicy::FullRefCount)?;
    heap.set_i64(o, off("a"), r.a)?;
    heap.set_i64(o, off("b"), r.b)?;
    heap.set_f64(o, off("c"), r.c)?;
    let s = make_string(heap, &r.s)?;
    heap.move_handle(o.slot(off("s")), s)?;
    Ok(o)
}

pub fn rec_set(
    reg: &Arc<TypeRegistry>,
    rows: &[Rec],
    page_size: usize,
) -> Result<PcSet, EngineError> {
    let mut heap = Heap::new(reg.clone());
    let mut b = SetBuilder::new(&mut heap, page_size, &["rec"]);
    for r in rows {
        b.add(|h| Ok(vec![Value::Obj(make_rec(h, r)?)]))?;
    }
    Ok(b.finish())
}

pub fn random_recs(rng: &mut impl Rng, n: usize) -> Vec<Rec> {
    (0..n)
        .map(|_| Rec {
            a: rng.gen_range(0..10),
            b: rng.gen_range(-5..15),
            c: (rng.gen_range(0.0..100.0f64) * 4.0).round() / 4.0,
            s: WORDS.choose(rng).expect("non-empty").to_string(),
        })
        .collect()
}

/// A compiled query together with the inputs it reads.
pub struct RandomQuery {
    pub graph: ComputationGraph,
    pub program: Program,
    /// `(set name in db "syn", rows)`.
    pub inputs: Vec<(String, Vec<Rec>)>,
}

fn int_attr(rng: &mut impl Rng, slot: usize) -> LambdaTerm {
    match rng.gen_range(0..4) {
        0 => make_lambda_from_member(slot, "a"),
        1 => make_lambda_from_member(slot, "b"),
        2 => make_lambda_from_method(slot, "getA"),
        _ => make_lambda_from_method(slot, "getB"),
    }
}

fn atom(rng: &mut impl Rng, udfs: &Udfs, slot: usize) -> LambdaTerm {
    match rng.gen_range(0..7) {
        0 => int_attr(rng, slot).gt(constant(rng.gen_range(0..10i64))),
        1 => int_attr(rng, slot).le(constant(rng.gen_range(0..10i64))),
        2 => {
            make_lambda_from_member(slot, "s").eq(constant(*WORDS.choose(rng).expect("non-empty")))
        }
        3 => make_lambda_from_method(slot, "getC").lt(constant(rng.gen_range(10..90) as f64)),
        4 => int_attr(rng, slot)
            .plus(int_attr(rng, slot))
            .ge(constant(rng.gen_range(0..20i64))),
        5 => make_lambda(udfs, slot, "bucket")
            .expect("bucket is registered")
            .eq(constant(rng.gen_range(0..3i64))),
        _ => int_attr(rng, slot).ne(constant(rng.gen_range(0..10i64))),
    }
}

fn predicate(rng: &mut impl Rng, udfs: &Udfs, slots: &[usize]) -> LambdaTerm {
    let slot = *slots.choose(rng).expect("slots");
    let mut p = atom(rng, udfs, slot);
    for _ in 0..rng.gen_range(0..3) {
        let slot = *slots.choose(rng).expect("slots");
        let q = atom(rng, udfs, slot);
        p = match rng.gen_range(0..5) {
            0 => p.or(q),
            1 => p.and(q.not()),
            _ => p.and(q),
        };
    }
    p
}

fn projection(rng: &mut impl Rng, slot: usize) -> Option<LambdaTerm> {
    match rng.gen_range(0..5) {
        0 => None,
        1 => Some(make_lambda_from_member(slot, "s")),
        2 => Some(make_lambda_from_method(slot, "getA").plus(make_lambda_from_member(slot, "b"))),
        3 => Some(make_lambda_from_self(slot)),
        _ => Some(make_lambda_from_method(slot, "getC")),
    }
}

/// A random valid query: a selection, or a 2- or 3-way equi-join with extra
/// conjuncts, optionally followed by an aggregation.
pub fn random_query(seed: u64, max_rows: usize) -> RandomQuery {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let udfs = rec_udfs();
    let n_inputs: usize = *[1, 1, 2, 2, 3].choose(&mut rng).expect("non-empty");
    let mut g = ComputationGraph::new();
    let mut inputs = Vec::new();
    let mut readers = Vec::new();
    for i in 0..n_inputs {
        let set = format!("t{i}");
        let n = rng.gen_range(0..=max_rows / n_inputs.pow(2));
        inputs.push((set.clone(), random_recs(&mut rng, n)));
        readers.push(
            g.reader(&format!("R{i}"), "syn", &set, &format!("r{i}"))
                .expect("reader"),
        );
    }
    let top = if n_inputs == 1 {
        let pred = rng.gen_bool(0.9).then(|| predicate(&mut rng, &udfs, &[0]));
        let proj = projection(&mut rng, 0);
        g.selection("Sel", readers[0], pred, proj)
            .expect("selection")
    } else {
        let mut pred = make_lambda_from_member(0, "a").eq(make_lambda_from_method(1, "getA"));
        if n_inputs == 3 {
            pred = pred.and(make_lambda_from_member(1, "s").eq(make_lambda_from_member(2, "s")));
        }
        let slots: Vec<usize> = (0..n_inputs).collect();
        for _ in 0..rng.gen_range(0..4) {
            let slot = *slots.choose(&mut rng).expect("slots");
            let extra = predicate(&mut rng, &udfs, &[slot]);
            pred = if rng.gen_bool(0.5) {
                pred.and(extra)
            } else {
                extra.and(pred)
            };
        }
        if rng.gen_bool(0.2) {
            pred = pred.and(make_lambda_from_member(0, "b").lt(make_lambda_from_member(1, "b")));
        }
        let proj = if rng.gen_bool(0.3) {
            let s = rng.gen_range(0..n_inputs);
            Some(
                make_lambda_from_member(s, "c")
                    .plus(make_lambda_from_member((s + 1) % n_inputs, "a")),
            )
        } else {
            None
        };
        g.join("Join", &readers, pred, proj).expect("join")
    };
    if n_inputs == 1 && rng.gen_bool(0.3) {
        let sel = g
            .selection(
                "Pre",
                readers[0],
                Some(predicate(&mut rng, &udfs, &[0])),
                None,
            )
            .expect("selection");
        let combine = *["sum", "min", "max"].choose(&mut rng).expect("non-empty");
        let agg = g
            .aggregate(
                "Agg",
                sel,
                make_lambda_from_member(0, "s"),
                make_lambda_from_method(0, "getB"),
                combine,
            )
            .expect("aggregate");
        g.writer("WAgg", agg, "out", "agg").expect("writer");
    }
    g.writer("W", top, "out", "res").expect("writer");
    let program = compile_to_tcap(&g).expect("random queries compile");
    RandomQuery {
        graph: g,
        program,
        inputs,
    }
}

/// Runs `p` over `q`'s inputs and returns every output set as a sorted
/// multiset of decoded rows.
pub fn run_query(
    q: &RandomQuery,
    p: &Program,
    config: EngineConfig,
) -> Result<BTreeMap<String, Vec<String>>, EngineError> {
    let reg = rec_registry();
    let mut e = Engine::new(reg.clone(), rec_udfs(), config);
    for (set, rows) in &q.inputs {
        e.storage
            .put("syn", set, rec_set(&reg, rows, config.page_size)?);
    }
    e.bind_graph(&q.graph);
    e.run(p)?;
    let mut out = BTreeMap::new();
    for key in ["out.res", "out.agg"] {
        if let Some(set) = e.storage.get_key(key) {
            let mut rows: Vec<String> = set_rows(set, &reg)?
                .iter()
                .map(|r| format!("{r:?}"))
                .collect();
            rows.sort();
            out.insert(key.to_string(), rows);
        }
    }
    Ok(out)
}

/// Decoded rows of a single-column set, for callers comparing structure.
pub fn datum_rows(e: &Engine, db: &str, set: &str) -> Option<Vec<Vec<Datum>>> {
    set_rows(e.storage.get(db, set)?, e.registry()).ok()
}
