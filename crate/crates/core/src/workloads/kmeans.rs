//! k-means over `DataPoint` objects: each iteration is one distributed
//! aggregation keyed by the nearest centroid.

use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::containers::{MapValue, OwnedKey};
use crate::distributed::{run_aggregation, AggregateReport, DistError, SimCluster};
use crate::engine::{decompose, EngineError, PcSet, SetBuilder, Sink, UdfError, Udfs, Value};
use crate::lambda::{compile_to_tcap, make_lambda, ComputationGraph};
use crate::object::{
    BehaviorDescriptor, FieldKind, Heap, ObjRef, ObjectError, ObjectPolicy, TypeRegistry,
};

pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iters: usize,
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<Point>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest coordinate movement in each iteration.
    pub shifts: Vec<f64>,
}

pub fn point_registry() -> Arc<TypeRegistry> {
    let reg = TypeRegistry::new();
    reg.register(BehaviorDescriptor::record(
        "DataPoint",
        &[("x", FieldKind::F64), ("y", FieldKind::F64)],
    ))
    .expect("fresh registry");
    Arc::new(reg)
}

pub fn point_udfs() -> Udfs {
    let mut u = Udfs::new();
    u.add_method("DataPoint", "getX", |ctx, o| ctx.field(o, "x"));
    u.add_method("DataPoint", "getY", |ctx, o| ctx.field(o, "y"));
    u
}

/// `n` points from two unit-variance blobs whose means are `separation`
/// apart along x. Returns the points and the two means.
pub fn two_blobs(seed: u64, n: usize, separation: f64) -> (Vec<Point>, [Point; 2]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = [[0.0, 0.0], [separation, 0.0]];
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let pts = (0..n)
        .map(|i| {
            let m = means[i % 2];
            [m[0] + noise.sample(&mut rng), m[1] + noise.sample(&mut rng)]
        })
        .collect();
    (pts, means)
}

pub fn make_point(heap: &mut Heap, p: Point) -> Result<ObjRef, ObjectError> {
    let reg = heap.registry().clone();
    let ty = reg.code_of("DataPoint").expect("DataPoint is registered");
    let desc = reg.lookup(ty).expect("DataPoint is registered");
    let o = heap.make_object(ty, ObjectPolicy::FullRefCount)?;
    heap.set_f64(o, desc.field("x").expect("x").offset, p[0])?;
    heap.set_f64(o, desc.field("y").expect("y").offset, p[1])?;
    Ok(o)
}

pub fn point_set(
    reg: &Arc<TypeRegistry>,
    pts: &[Point],
    page_size: usize,
) -> Result<PcSet, EngineError> {
    let mut heap = Heap::new(reg.clone());
    let mut b = SetBuilder::new(&mut heap, page_size, &["point"]);
    for &p in pts {
        b.add(|h| Ok(vec![Value::Obj(make_point(h, p)?)]))?;
    }
    Ok(b.finish())
}

/// `k` distinct points picked with `seed`.
pub fn initial_centroids(pts: &[Point], k: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    sample(&mut rng, pts.len(), k.min(pts.len()))
        .into_iter()
        .map(|i| pts[i])
        .collect()
}

/// Index of the closest centroid; ties go to the lower index.
pub fn nearest(cs: &[Point], p: Point) -> usize {
    let d = |c: &Point| (p[0] - c[0]) * (p[0] - c[0]) + (p[1] - c[1]) * (p[1] - c[1]);
    let mut best = 0;
    for (i, c) in cs.iter().enumerate().skip(1) {
        if d(c) < d(&cs[best]) {
            best = i;
        }
    }
    best
}

/// New centroids from per-cluster `[sum x, sum y, count]`; empty clusters
/// keep their centroid. Also returns the largest coordinate movement.
pub fn recenter(old: &[Point], sums: &[[f64; 3]]) -> (Vec<Point>, f64) {
    let mut shift = 0.0f64;
    let new: Vec<Point> = old
        .iter()
        .zip(sums)
        .map(|(c, s)| {
            let n = if s[2] > 0.0 {
                [s[0] / s[2], s[1] / s[2]]
            } else {
                *c
            };
            shift = shift.max((n[0] - c[0]).abs()).max((n[1] - c[1]).abs());
            n
        })
        .collect();
    (new, shift)
}

fn iterate(
    init: &[Point],
    params: KMeansParams,
    mut step: impl FnMut(&[Point]) -> Result<Vec<[f64; 3]>, DistError>,
) -> Result<KMeansResult, DistError> {
    let mut r = KMeansResult {
        centroids: init.to_vec(),
        iterations: 0,
        converged: false,
        shifts: Vec::new(),
    };
    while r.iterations < params.max_iters {
        let sums = step(&r.centroids)?;
        let (next, shift) = recenter(&r.centroids, &sums);
        r.centroids = next;
        r.iterations += 1;
        r.shifts.push(shift);
        if shift < params.epsilon {
            r.converged = true;
            break;
        }
    }
    Ok(r)
}

/// Plain sequential k-means with the same update rule.
pub fn reference_kmeans(pts: &[Point], init: &[Point], params: KMeansParams) -> KMeansResult {
    iterate(init, params, |cs| {
        let mut sums = vec![[0.0; 3]; cs.len()];
        for &p in pts {
            let s = &mut sums[nearest(cs, p)];
            s[0] += p[0];
            s[1] += p[1];
            s[2] += 1.0;
        }
        Ok(sums)
    })
    .expect("sequential step cannot fail")
}

fn coords(ctx: &mut crate::engine::StageCtx<'_>, args: &[Value]) -> Result<Point, UdfError> {
    let [Value::Obj(o)] = args else {
        return Err(UdfError::Failed("expects one DataPoint".into()));
    };
    match (ctx.field(*o, "x")?, ctx.field(*o, "y")?) {
        (Value::Double(x), Value::Double(y)) => Ok([x, y]),
        _ => Err(UdfError::Failed(
            "DataPoint coordinates are not doubles".into(),
        )),
    }
}

/// Installs `getClose` for the given centroids and `withOne`, which maps a
/// point to `[x, y, 1]` so one sum yields both coordinates and the count.
fn install(udfs: &mut Udfs, cs: Vec<Point>) {
    udfs.add_function("getClose", move |ctx, args| {
        Ok(Value::Int(nearest(&cs, coords(ctx, args)?) as i64))
    });
    udfs.add_function("withOne", |ctx, args| {
        let p = coords(ctx, args)?;
        Ok(Value::DVec(vec![p[0], p[1], 1.0]))
    });
}

/// Runs k-means over `db.set` on the cluster. `on_iter` sees each
/// iteration's aggregation report.
pub fn cluster_kmeans(
    cluster: &mut SimCluster,
    db: &str,
    set: &str,
    init: &[Point],
    params: KMeansParams,
    mut on_iter: impl FnMut(usize, &AggregateReport),
) -> Result<KMeansResult, DistError> {
    install(cluster.udfs_mut(), init.to_vec());
    let mut g = ComputationGraph::new();
    let bad = |e: crate::lambda::LambdaError| {
        DistError::Engine(EngineError::InvalidProgram(e.to_string()))
    };
    let r = g.reader("Points", db, set, "point").map_err(bad)?;
    let key = make_lambda(cluster.udfs(), 0, "getClose").map_err(bad)?;
    let value = make_lambda(cluster.udfs(), 0, "withOne").map_err(bad)?;
    let agg = g
        .aggregate("GetNewCentroids", r, key, value, "sum")
        .map_err(bad)?;
    g.writer("W", agg, "kmeans", "centroids").map_err(bad)?;
    let program = compile_to_tcap(&g).map_err(bad)?;
    let pipeline = decompose(&program)?
        .into_iter()
        .find(|pl| matches!(pl.sink, Sink::Aggregate { .. }))
        .ok_or_else(|| DistError::Unsupported("no aggregation pipeline".into()))?;
    cluster.bind_graph(&g);
    let mut iteration = 0;
    iterate(init, params, |cs| {
        install(cluster.udfs_mut(), cs.to_vec());
        let report = run_aggregation(cluster, &pipeline, "kmeans", "centroids")?;
        let mut sums = vec![[0.0; 3]; cs.len()];
        for (k, v) in cluster.collect_aggregate("kmeans", "centroids")? {
            match (k, v) {
                (OwnedKey::Int(i), MapValue::DoubleVec(s))
                    if (i as usize) < sums.len() && s.len() == 3 =>
                {
                    sums[i as usize] = [s[0], s[1], s[2]];
                }
                other => {
                    return Err(DistError::Unsupported(format!(
                        "unexpected centroid entry {other:?}"
                    )))
                }
            }
        }
        iteration += 1;
        on_iter(iteration, &report);
        Ok(sums)
    })
}
