//! Blocked matrix multiply as a join on the inner block index followed by
//! an aggregation that sums partial products per output block.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::containers::{MapValue, OwnedKey, PVector};
use crate::distributed::{
    hash_join_into, run_aggregation, AggregateReport, DistError, JoinInput, JoinOutput, JoinPlan,
    JoinReport, KeyExpr, SimCluster,
};
use crate::engine::{
    decompose, EngineError, PcSet, SetBuilder, Sink, StageCtx, UdfError, Udfs, Value,
};
use crate::lambda::{compile_to_tcap, make_lambda, make_lambda_from_member, ComputationGraph};
use crate::object::{
    BehaviorDescriptor, FieldKind, Heap, ObjRef, ObjectError, ObjectPolicy, TypeRegistry,
};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        (0..n).for_each(|i| m.data[i * n + i] = 1.0);
        m
    }

    pub fn random(seed: u64, rows: usize, cols: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Textbook triple loop.
    pub fn multiply(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                out.data[i * other.cols + j] =
                    (0..self.cols).map(|k| self.at(i, k) * other.at(k, j)).sum();
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One sub-matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Chunk {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

pub fn to_chunks(m: &Matrix, bs: usize) -> Vec<Chunk> {
    let mut out = Vec::new();
    for (row, r0) in (0..m.rows).step_by(bs).enumerate() {
        for (col, c0) in (0..m.cols).step_by(bs).enumerate() {
            let (height, width) = (bs.min(m.rows - r0), bs.min(m.cols - c0));
            let values = (r0..r0 + height)
                .flat_map(|r| (c0..c0 + width).map(move |c| m.at(r, c)))
                .collect();
            out.push(Chunk {
                row,
                col,
                height,
                width,
                values,
            });
        }
    }
    out
}

pub fn matrix_registry() -> Arc<TypeRegistry> {
    let reg = TypeRegistry::new();
    reg.register(BehaviorDescriptor::record(
        "MatrixBlock",
        &[
            ("chunkRow", FieldKind::I32),
            ("chunkColumn", FieldKind::I32),
            ("chunkWidth", FieldKind::I32),
            ("chunkHeight", FieldKind::I32),
            ("values", FieldKind::VecF64),
        ],
    ))
    .expect("fresh registry");
    Arc::new(reg)
}

pub fn make_chunk(heap: &mut Heap, c: &Chunk) -> Result<ObjRef, ObjectError> {
    let reg = heap.registry().clone();
    let ty = reg
        .code_of("MatrixBlock")
        .expect("MatrixBlock is registered");
    let desc = reg.lookup(ty).expect("MatrixBlock is registered");
    let off = |f: &str| desc.field(f).expect("MatrixBlock field").offset;
    let o = heap.make_object(ty, ObjectPolicy::FullRefCount)?;
    heap.set_i32(o, off("chunkRow"), c.row as i32)?;
    heap.set_i32(o, off("chunkColumn"), c.col as i32)?;
    heap.set_i32(o, off("chunkWidth"), c.width as i32)?;
    heap.set_i32(o, off("chunkHeight"), c.height as i32)?;
    PVector::<f64>::embedded(o, off("values")).extend_from_slice(heap, &c.values)?;
    Ok(o)
}

pub fn chunk_set(
    reg: &Arc<TypeRegistry>,
    chunks: &[Chunk],
    page_size: usize,
) -> Result<PcSet, EngineError> {
    let mut heap = Heap::new(reg.clone());
    let mut b = SetBuilder::new(&mut heap, page_size, &["block"]);
    for c in chunks {
        b.add(|h| Ok(vec![Value::Obj(make_chunk(h, c)?)]))?;
    }
    Ok(b.finish())
}

fn read_chunk(ctx: &mut StageCtx<'_>, o: ObjRef) -> Result<Chunk, UdfError> {
    let int = |v: Value| match v {
        Value::Int(i) => Ok(i as usize),
        v => Err(UdfError::Failed(format!(
            "expected an int, got {}",
            v.kind()
        ))),
    };
    Ok(Chunk {
        row: int(ctx.field(o, "chunkRow")?)?,
        col: int(ctx.field(o, "chunkColumn")?)?,
        width: int(ctx.field(o, "chunkWidth")?)?,
        height: int(ctx.field(o, "chunkHeight")?)?,
        values: match ctx.field(o, "values")? {
            Value::DVec(v) => v,
            v => return Err(UdfError::Failed(format!("values is {}", v.kind()))),
        },
    })
}

/// Output block index packed into one integer key.
fn block_key(row: usize, col: usize) -> i64 {
    ((row as i64) << 32) | col as i64
}

/// `blockIndex(block)`: the packed (chunkRow, chunkColumn) of a block.
pub fn matrix_udfs() -> Udfs {
    let mut u = Udfs::new();
    u.add_function("blockIndex", |ctx, args| {
        let [Value::Obj(o)] = args else {
            return Err(UdfError::Failed("blockIndex takes one block".into()));
        };
        let c = read_chunk(ctx, *o)?;
        Ok(Value::Int(block_key(c.row, c.col)))
    });
    u
}

/// The product of the two joined blocks, built on the output page.
fn multiply_join(ctx: &mut StageCtx<'_>, objs: &[ObjRef]) -> Result<Vec<Value>, UdfError> {
    let (a, b) = (read_chunk(ctx, objs[0])?, read_chunk(ctx, objs[1])?);
    if a.width != b.height {
        return Err(UdfError::Failed(format!(
            "block widths {} and {} do not chain",
            a.width, b.height
        )));
    }
    let mut values = vec![0.0; a.height * b.width];
    for i in 0..a.height {
        for k in 0..a.width {
            let x = a.values[i * a.width + k];
            for j in 0..b.width {
                values[i * b.width + j] += x * b.values[k * b.width + j];
            }
        }
    }
    let c = Chunk {
        row: a.row,
        col: b.col,
        height: a.height,
        width: b.width,
        values,
    };
    Ok(vec![Value::Obj(make_chunk(ctx.heap(), &c)?)])
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatmulReport {
    pub join: JoinReport,
    pub aggregate: AggregateReport,
}

/// Computes `a * b` on the cluster with `bs`-sized blocks.
pub fn cluster_matmul(
    cluster: &mut SimCluster,
    a: &Matrix,
    b: &Matrix,
    bs: usize,
    plan: JoinPlan,
) -> Result<(Matrix, MatmulReport), DistError> {
    if a.cols != b.rows || bs == 0 {
        return Err(DistError::Unsupported(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let reg = cluster.registry().clone();
    let page = cluster.config.page_size;
    cluster.distribute("la", "A", &chunk_set(&reg, &to_chunks(a, bs), page)?)?;
    cluster.distribute("la", "B", &chunk_set(&reg, &to_chunks(b, bs), page)?)?;
    let inputs = [
        JoinInput::new("la", "A", KeyExpr::Field("chunkColumn".into())),
        JoinInput::new("la", "B", KeyExpr::Field("chunkRow".into())),
    ];
    let out = JoinOutput {
        db: "la",
        set: "AB",
        project: Some((&["block"], &multiply_join)),
    };
    let join = hash_join_into(cluster, &inputs, plan, out)?;

    let bad = |e: crate::lambda::LambdaError| {
        DistError::Engine(EngineError::InvalidProgram(e.to_string()))
    };
    let mut g = ComputationGraph::new();
    let r = g.reader("Products", "la", "AB", "block").map_err(bad)?;
    let key = make_lambda(cluster.udfs(), 0, "blockIndex").map_err(bad)?;
    let agg = g
        .aggregate(
            "LAMultiplyAggregate",
            r,
            key,
            make_lambda_from_member(0, "values"),
            "sum",
        )
        .map_err(bad)?;
    g.writer("W", agg, "la", "C").map_err(bad)?;
    let program = compile_to_tcap(&g).map_err(bad)?;
    let pipeline = decompose(&program)?
        .into_iter()
        .find(|pl| matches!(pl.sink, Sink::Aggregate { .. }))
        .ok_or_else(|| DistError::Unsupported("no aggregation pipeline".into()))?;
    cluster.bind_graph(&g);
    let aggregate = run_aggregation(cluster, &pipeline, "la", "C")?;

    let mut c = Matrix::zeros(a.rows, b.cols);
    for (k, v) in cluster.collect_aggregate("la", "C")? {
        let (OwnedKey::Int(k), MapValue::DoubleVec(vals)) = (k, v) else {
            return Err(DistError::Unsupported("unexpected product entry".into()));
        };
        let (r0, c0) = ((k >> 32) as usize * bs, (k & 0xffff_ffff) as usize * bs);
        let width = bs.min(b.cols - c0);
        for (i, x) in vals.into_iter().enumerate() {
            c.data[(r0 + i / width) * c.cols + c0 + i % width] = x;
        }
    }
    Ok((c, MatmulReport { join, aggregate }))
}
