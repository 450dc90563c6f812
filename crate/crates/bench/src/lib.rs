//! Shared workloads for the benches and the acceptance run: a chunked
//! filter through compiled engine stages, and a row-at-a-time baseline that
//! pays a virtual call per row per operator.

use std::cell::Cell;
use std::rc::Rc;
use std::sync::Arc;

use pc_core::engine::{Column, EngineError, Stage, StageCtx, StageResult, Udfs, Value, VectorList};
use pc_core::object::{Heap, TypeRegistry};
use pc_core::tcap::parse;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `x > threshold` followed by a filter, compiled from TCAP.
pub fn filter_stages(threshold: i64) -> Result<[Stage; 2], EngineError> {
    let text = format!(
        "C(x,b) <= APPLY(In(x), In(x), 'F', 'gt', [('type', 'const_comparison'), ('op', '>'), ('const', '{threshold}')]);\n\
         D(x) <= FILTER(C(b), C(x), 'F', []);\n"
    );
    let p = parse(&text).map_err(|d| EngineError::InvalidProgram(d.to_string()))?;
    Ok([Stage::compile(&p.stmts[0])?, Stage::compile(&p.stmts[1])?])
}

/// Survivor count and sum of `values > threshold`, pushed through the
/// stages `chunk` rows at a time.
pub fn vectorized_filter(
    values: &[i64],
    threshold: i64,
    chunk: usize,
) -> Result<(usize, i64), EngineError> {
    let stages = filter_stages(threshold)?;
    let mut heap = Heap::new(Arc::new(TypeRegistry::new()));
    let mut ctx = StageCtx::new(&mut heap);
    let udfs = Udfs::new();
    let (mut count, mut sum) = (0, 0i64);
    for part in values.chunks(chunk.max(1)) {
        let mut vl = VectorList::new(part.len());
        vl.push("x", Column::Int(part.to_vec()));
        for s in &stages {
            vl = match s.run(&mut ctx, &udfs, &vl)? {
                StageResult::Done(v) => v,
                StageResult::Split { .. } => {
                    return Err(EngineError::InvalidProgram(
                        "filter cannot run out of page".into(),
                    ))
                }
            };
        }
        if let Some(Column::Int(xs)) = vl.column("x").map(|c| c.as_ref()) {
            count += xs.len();
            sum = xs.iter().fold(sum, |a, &x| a.wrapping_add(x));
        }
    }
    Ok((count, sum))
}

/// An expression evaluated once per row.
pub trait RowExpr {
    fn eval(&self, row: &Value) -> Value;
}

pub struct RowColumn;

impl RowExpr for RowColumn {
    fn eval(&self, row: &Value) -> Value {
        row.clone()
    }
}

pub struct RowConst(pub Value);

impl RowExpr for RowConst {
    fn eval(&self, _: &Value) -> Value {
        self.0.clone()
    }
}

pub struct RowGreater(pub Box<dyn RowExpr>, pub Box<dyn RowExpr>);

impl RowExpr for RowGreater {
    fn eval(&self, row: &Value) -> Value {
        match (self.0.eval(row), self.1.eval(row)) {
            (Value::Int(a), Value::Int(b)) => Value::Bool(a > b),
            _ => Value::Bool(false),
        }
    }
}

/// A push-based operator that sees one row per call.
pub trait RowOperator {
    fn push(&mut self, row: Value);
}

pub struct RowFilter {
    pub predicate: Box<dyn RowExpr>,
    pub next: Box<dyn RowOperator>,
}

impl RowOperator for RowFilter {
    fn push(&mut self, row: Value) {
        if let Value::Bool(true) = self.predicate.eval(&row) {
            self.next.push(row);
        }
    }
}

/// Counts and sums integer rows into a shared cell so the caller can read
/// them after the operator chain is boxed away.
pub struct RowSink {
    pub out: Rc<Cell<(usize, i64)>>,
}

impl RowOperator for RowSink {
    fn push(&mut self, row: Value) {
        if let Value::Int(x) = row {
            let (c, s) = self.out.get();
            self.out.set((c + 1, s.wrapping_add(x)));
        }
    }
}

/// The same filter interpreted one row at a time: every operator and
/// expression node is a boxed virtual call.
pub fn row_at_a_time_filter(values: &[i64], threshold: i64) -> (usize, i64) {
    let out = Rc::new(Cell::new((0, 0)));
    let mut root: Box<dyn RowOperator> = Box::new(RowFilter {
        predicate: Box::new(RowGreater(
            Box::new(RowColumn),
            Box::new(RowConst(Value::Int(threshold))),
        )),
        next: Box::new(RowSink { out: out.clone() }),
    });
    for &x in values {
        root.push(std::hint::black_box(Value::Int(x)));
    }
    out.get()
}

/// Deterministic values in `0..1000`.
pub fn filter_input(n: usize, seed: u64) -> Vec<i64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(0..1000)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_filters_agree_with_iterator_count() {
        let xs = filter_input(10_000, 3);
        let want = xs
            .iter()
            .filter(|&&x| x > 400)
            .fold((0, 0i64), |(c, s), &x| (c + 1, s + x));
        assert_eq!(vectorized_filter(&xs, 400, 1024).unwrap(), want);
        assert_eq!(vectorized_filter(&xs, 400, 7).unwrap(), want);
        assert_eq!(row_at_a_time_filter(&xs, 400), want);
    }

    #[test]
    fn empty_input() {
        assert_eq!(vectorized_filter(&[], 0, 16).unwrap(), (0, 0));
        assert_eq!(row_at_a_time_filter(&[], 0), (0, 0));
    }
}
