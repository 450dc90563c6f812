use std::cmp::Ordering;
use std::collections::HashMap;

use super::ops::{arith, compare, const_value, hash_value, values_eq};
use super::{Column, EngineError, MethodFn, StageCtx, UdfError, Udfs, Value, VectorList};
use crate::containers::{builtin, PVector, VecElem};
use crate::lambda::Const;
use crate::object::{ObjectError, TypeCode};
use crate::tcap::{Op, Stmt};

/// What a compiled stage computes.
#[derive(Clone, Debug, PartialEq)]
pub enum StageOp {
    AttAccess(String),
    MethodCall(String),
    Native(String),
    Equality {
        negate: bool,
    },
    Compare(String),
    ConstCompare {
        op: String,
        value: Value,
    },
    And,
    Or,
    Not,
    Arith(String),
    ConstArith {
        op: String,
        value: Value,
        const_left: bool,
    },
    Flatten,
    Filter,
    Hash,
}

/// One APPLY, FILTER or HASH statement ready to run over vector lists.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub name: String,
    pub op: StageOp,
    pub input: Vec<String>,
    pub copy: Vec<String>,
    /// The appended column, absent for filters.
    pub out: Option<String>,
}

enum RowError {
    Udf(UdfError),
    Type(String),
}

impl From<UdfError> for RowError {
    fn from(e: UdfError) -> Self {
        RowError::Udf(e)
    }
}

pub enum StageResult {
    Done(VectorList),
    /// The live page filled up at row `rest_from`: `done` holds the output
    /// for the rows before it.
    Split {
        done: VectorList,
        rest_from: usize,
    },
}

fn type_error(stage: &str, message: impl Into<String>) -> EngineError {
    EngineError::StageTypeError {
        stage: stage.to_string(),
        message: message.into(),
    }
}

fn cmp_holds(op: &str, ord: Ordering) -> bool {
    match op {
        ">" => ord == Ordering::Greater,
        "<" => ord == Ordering::Less,
        ">=" => ord != Ordering::Less,
        "<=" => ord != Ordering::Greater,
        "==" => ord == Ordering::Equal,
        "!=" => ord != Ordering::Equal,
        _ => false,
    }
}

impl Stage {
    pub fn compile(s: &Stmt) -> Result<Stage, EngineError> {
        let name = s.out.clone();
        let err = |m: String| type_error(&name, m);
        let (input, copy, out, op) = match &s.op {
            Op::Filter { input, copy, .. } => (input, copy, None, StageOp::Filter),
            Op::Hash { input, copy, .. } => (input, copy, s.cols.last().cloned(), StageOp::Hash),
            Op::Apply {
                input, copy, kv, ..
            } => {
                let need = |k: &str| {
                    kv.get(k)
                        .map(str::to_string)
                        .ok_or_else(|| err(format!("missing `{k}` annotation")))
                };
                let konst = || -> Result<Value, EngineError> {
                    let text = need("const")?;
                    Ok(const_value(&Const::parse(
                        &text,
                        kv.get("constType") == Some("string"),
                    )))
                };
                let op = match kv.get("type").unwrap_or("") {
                    "attAccess" => StageOp::AttAccess(need("attName")?),
                    "methodCall" => StageOp::MethodCall(need("methodName")?),
                    "nativeOpaque" => StageOp::Native(need("functionId")?),
                    "equalityCheck" => StageOp::Equality {
                        negate: kv.get("op") == Some("!="),
                    },
                    "comparison" => StageOp::Compare(need("op")?),
                    "const_comparison" => StageOp::ConstCompare {
                        op: need("op")?,
                        value: konst()?,
                    },
                    "bool_and" => StageOp::And,
                    "bool_or" => StageOp::Or,
                    "bool_not" => StageOp::Not,
                    "arithmetic" => StageOp::Arith(need("op")?),
                    "const_arithmetic" => StageOp::ConstArith {
                        op: need("op")?,
                        value: konst()?,
                        const_left: kv.get("side") == Some("left"),
                    },
                    "flatten" => StageOp::Flatten,
                    other => return Err(err(format!("unknown APPLY type `{other}`"))),
                };
                (input, copy, s.cols.last().cloned(), op)
            }
            other => return Err(err(format!("{} is not a pipeline stage", other.kind()))),
        };
        Ok(Stage {
            name,
            op,
            input: input.cols.clone(),
            copy: copy.cols.clone(),
            out,
        })
    }

    fn arity(&self) -> usize {
        match self.op {
            StageOp::Equality { .. }
            | StageOp::Compare(_)
            | StageOp::And
            | StageOp::Or
            | StageOp::Arith(_) => 2,
            StageOp::Native(_) => self.input.len(),
            _ => 1,
        }
    }

    pub fn run(
        &self,
        ctx: &mut StageCtx<'_>,
        udfs: &Udfs,
        vl: &VectorList,
    ) -> Result<StageResult, EngineError> {
        if self.input.len() != self.arity() {
            return Err(type_error(
                &self.name,
                format!(
                    "expects {} input columns, got {}",
                    self.arity(),
                    self.input.len()
                ),
            ));
        }
        let inputs = vl
            .project(&self.input)
            .map_err(|m| type_error(&self.name, m))?;
        let copy = vl
            .project(&self.copy)
            .map_err(|m| type_error(&self.name, m))?;
        let args: Vec<&Column> = inputs.columns().map(|(_, c)| c.as_ref()).collect();
        let out = || self.out.clone().expect("stage appends a column");
        match &self.op {
            StageOp::Filter => match args[0] {
                Column::Bool(mask) => Ok(StageResult::Done(copy.filter(mask))),
                c if c.is_empty() => Ok(StageResult::Done(copy)),
                c => Err(type_error(
                    &self.name,
                    format!("filter on a {} column", c.kind()),
                )),
            },
            StageOp::Hash => {
                let mut done = copy;
                done.push(out(), Column::Hash(hash_column(ctx, args[0])));
                Ok(StageResult::Done(done))
            }
            StageOp::Flatten => {
                let (idx, col) = self.flatten(ctx, args[0])?;
                let mut done = copy.gather(&idx);
                done.push(out(), col);
                Ok(StageResult::Done(done))
            }
            _ => {
                let (col, stop) = self.compute(ctx, udfs, &args, vl.len())?;
                match stop {
                    None => {
                        let mut done = copy;
                        done.push(out(), col);
                        Ok(StageResult::Done(done))
                    }
                    Some(row) => {
                        let mut done = copy.slice(0, row);
                        done.push(out(), col);
                        Ok(StageResult::Split {
                            done,
                            rest_from: row,
                        })
                    }
                }
            }
        }
    }

    /// The new column; if user code ran out of page space, also the row
    /// where it stopped (the column then covers only earlier rows).
    fn compute(
        &self,
        ctx: &mut StageCtx<'_>,
        udfs: &Udfs,
        args: &[&Column],
        n: usize,
    ) -> Result<(Column, Option<usize>), EngineError> {
        if let Some(col) = self.fast_path(args) {
            return Ok((col, None));
        }
        let mut values = Vec::with_capacity(n);
        let mut stop = None;
        let mut methods: HashMap<TypeCode, MethodFn> = HashMap::new();
        for row in 0..n {
            let v = match self.eval_row(ctx, udfs, args, row, &mut methods) {
                Ok(v) => v,
                Err(RowError::Udf(UdfError::Object(e))) if e.is_out_of_memory() => {
                    stop = Some(row);
                    break;
                }
                Err(RowError::Udf(UdfError::Object(e))) => return Err(EngineError::Object(e)),
                Err(RowError::Udf(UdfError::Failed(message))) => {
                    return Err(EngineError::PipelineAborted {
                        stage: self.name.clone(),
                        chunk: 0,
                        message,
                    })
                }
                Err(RowError::Type(m)) => return Err(type_error(&self.name, m)),
            };
            values.push(v);
        }
        let col = Column::from_values(values).map_err(|m| type_error(&self.name, m))?;
        Ok((col, stop))
    }

    fn fast_path(&self, args: &[&Column]) -> Option<Column> {
        match (&self.op, args) {
            (
                StageOp::ConstCompare {
                    op,
                    value: Value::Int(c),
                },
                [Column::Int(xs)],
            ) => {
                let c = *c;
                Some(Column::Bool(match op.as_str() {
                    ">" => xs.iter().map(|&x| x > c).collect(),
                    "<" => xs.iter().map(|&x| x < c).collect(),
                    ">=" => xs.iter().map(|&x| x >= c).collect(),
                    "<=" => xs.iter().map(|&x| x <= c).collect(),
                    "==" => xs.iter().map(|&x| x == c).collect(),
                    "!=" => xs.iter().map(|&x| x != c).collect(),
                    _ => return None,
                }))
            }
            (StageOp::ConstCompare { op, value }, [Column::Double(xs)]) => {
                let c = match value {
                    Value::Int(c) => *c as f64,
                    Value::Double(c) => *c,
                    _ => return None,
                };
                Some(Column::Bool(
                    xs.iter()
                        .map(|x| x.partial_cmp(&c).is_some_and(|o| cmp_holds(op, o)))
                        .collect(),
                ))
            }
            (StageOp::And, [Column::Bool(a), Column::Bool(b)]) => Some(Column::Bool(
                a.iter().zip(b).map(|(x, y)| *x && *y).collect(),
            )),
            (StageOp::Or, [Column::Bool(a), Column::Bool(b)]) => Some(Column::Bool(
                a.iter().zip(b).map(|(x, y)| *x || *y).collect(),
            )),
            (StageOp::Not, [Column::Bool(a)]) => Some(Column::Bool(a.iter().map(|x| !x).collect())),
            _ => None,
        }
    }

    fn eval_row(
        &self,
        ctx: &mut StageCtx<'_>,
        udfs: &Udfs,
        args: &[&Column],
        row: usize,
        methods: &mut HashMap<TypeCode, MethodFn>,
    ) -> Result<Value, RowError> {
        let fail = RowError::Type;
        let a = args[0].get(row);
        let bool_of = |v: &Value| match v {
            Value::Bool(b) => Ok(*b),
            other => Err(fail(format!("expected bool, got {}", other.kind()))),
        };
        Ok(match &self.op {
            StageOp::AttAccess(att) => match a {
                Value::Obj(o) => ctx.field(o, att)?,
                Value::Null => Value::Null,
                other => {
                    return Err(fail(format!(
                        "attribute `{att}` read from a {} value",
                        other.kind()
                    )))
                }
            },
            StageOp::MethodCall(m) => match a {
                Value::Obj(o) => {
                    let f = match methods.get(&o.ty) {
                        Some(f) => f.clone(),
                        None => {
                            let tname = ctx.type_name(o);
                            let f = udfs.method(&tname, m).cloned().ok_or_else(|| {
                                fail(format!("type `{tname}` has no method `{m}`"))
                            })?;
                            methods.insert(o.ty, f.clone());
                            f
                        }
                    };
                    f(ctx, o)?
                }
                other => {
                    return Err(fail(format!(
                        "method `{m}` called on a {} value",
                        other.kind()
                    )))
                }
            },
            StageOp::Native(id) => {
                let f = udfs
                    .function(id)
                    .cloned()
                    .ok_or_else(|| fail(format!("unknown function `{id}`")))?;
                let vals: Vec<Value> = args.iter().map(|c| c.get(row)).collect();
                f(ctx, &vals)?
            }
            StageOp::Equality { negate } => {
                Value::Bool(values_eq(ctx.heap_ref(), &a, &args[1].get(row)) != *negate)
            }
            StageOp::Compare(op) => {
                let b = args[1].get(row);
                Value::Bool(compare(ctx.heap_ref(), &a, &b).is_some_and(|o| cmp_holds(op, o)))
            }
            StageOp::ConstCompare { op, value } => {
                if op == "==" || op == "!=" {
                    Value::Bool(values_eq(ctx.heap_ref(), &a, value) == (op == "=="))
                } else {
                    Value::Bool(
                        compare(ctx.heap_ref(), &a, value).is_some_and(|o| cmp_holds(op, o)),
                    )
                }
            }
            StageOp::And => Value::Bool(bool_of(&a)? && bool_of(&args[1].get(row))?),
            StageOp::Or => Value::Bool(bool_of(&a)? || bool_of(&args[1].get(row))?),
            StageOp::Not => Value::Bool(!bool_of(&a)?),
            StageOp::Arith(op) => {
                let b = args[1].get(row);
                arith(op, &a, &b)
                    .ok_or_else(|| fail(format!("cannot compute {} {op} {}", a.kind(), b.kind())))?
            }
            StageOp::ConstArith {
                op,
                value,
                const_left,
            } => {
                let (x, y) = if *const_left {
                    (value.clone(), a)
                } else {
                    (a, value.clone())
                };
                arith(op, &x, &y)
                    .ok_or_else(|| fail(format!("cannot compute {} {op} {}", x.kind(), y.kind())))?
            }
            StageOp::Filter | StageOp::Flatten | StageOp::Hash => unreachable!("handled by run"),
        })
    }

    fn flatten(
        &self,
        ctx: &mut StageCtx<'_>,
        col: &Column,
    ) -> Result<(Vec<usize>, Column), EngineError> {
        let mut idx = Vec::new();
        let mut values = Vec::new();
        for row in 0..col.len() {
            let items: Vec<Value> = match col.get(row) {
                Value::DVec(d) => d.into_iter().map(Value::Double).collect(),
                Value::Null => Vec::new(),
                Value::Obj(o) => {
                    let view = ctx
                        .view(o)
                        .map_err(|e| type_error(&self.name, e.to_string()))?;
                    match o.ty {
                        t if t == builtin::VECTOR_HANDLE => {
                            PVector::<crate::containers::HandleElem>::of(o)
                                .handles(&view)
                                .into_iter()
                                .map(|h| h.map_or(Value::Null, Value::Obj))
                                .collect()
                        }
                        t if t == builtin::VECTOR_F64 => list_of::<f64>(&view, o, Value::Double),
                        t if t == builtin::VECTOR_I64 => list_of::<i64>(&view, o, Value::Int),
                        _ => return Err(type_error(&self.name, "flatten needs a vector value")),
                    }
                }
                other => {
                    return Err(type_error(
                        &self.name,
                        format!("cannot flatten a {} value", other.kind()),
                    ))
                }
            };
            for v in items {
                idx.push(row);
                values.push(v);
            }
        }
        let col = Column::from_values(values).map_err(|m| type_error(&self.name, m))?;
        Ok((idx, col))
    }
}

fn list_of<T: VecElem>(
    view: &crate::object::BlockView<'_>,
    o: crate::object::ObjRef,
    wrap: fn(T) -> Value,
) -> Vec<Value> {
    PVector::<T>::of(o)
        .to_vec(view)
        .into_iter()
        .map(wrap)
        .collect()
}

pub(crate) fn hash_column(ctx: &StageCtx<'_>, col: &Column) -> Vec<u64> {
    match col {
        Column::Int(v) => v
            .iter()
            .map(|&x| crate::containers::hash_u64(x as u64))
            .collect(),
        Column::Hash(v) => v.clone(),
        _ => (0..col.len())
            .map(|i| hash_value(ctx.heap_ref(), &col.get(i)))
            .collect(),
    }
}

impl From<ObjectError> for EngineError {
    fn from(e: ObjectError) -> Self {
        EngineError::Object(e)
    }
}
