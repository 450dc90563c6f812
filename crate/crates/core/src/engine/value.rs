use crate::object::ObjRef;

/// A single cell of a vector list.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Null,
    Int(i64),
    Double(f64),
    Bool(bool),
    Str(String),
    DVec(Vec<f64>),
    Obj(ObjRef),
}

impl Value {
    pub fn kind(&self) -> &'static str {
        match self {
            Value::Null => "null",
            Value::Int(_) => "int",
            Value::Double(_) => "double",
            Value::Bool(_) => "bool",
            Value::Str(_) => "string",
            Value::DVec(_) => "dvec",
            Value::Obj(_) => "handle",
        }
    }
}

/// One column of a vector list. Object columns hold raw references into
/// pinned pages or the live output page.
#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Int(Vec<i64>),
    Double(Vec<f64>),
    Bool(Vec<bool>),
    Str(Vec<String>),
    DVec(Vec<Vec<f64>>),
    Hash(Vec<u64>),
    Obj(Vec<Option<ObjRef>>),
}

/// Kept rows of a plain column. Every row is written and the cursor only
/// advances past kept ones, so the loop has no data-dependent branch.
fn select<T: Copy + Default>(v: &[T], mask: &[bool]) -> Vec<T> {
    let n = v.len().min(mask.len());
    let mut out = vec![T::default(); n + 1];
    let mut j = 0;
    for (x, &m) in v[..n].iter().zip(&mask[..n]) {
        out[j] = *x;
        j += m as usize;
    }
    out.truncate(j);
    out
}

macro_rules! each_column {
    ($col:expr, $v:ident => $body:expr) => {
        match $col {
            Column::Int($v) => $body,
            Column::Double($v) => $body,
            Column::Bool($v) => $body,
            Column::Str($v) => $body,
            Column::DVec($v) => $body,
            Column::Hash($v) => $body,
            Column::Obj($v) => $body,
        }
    };
}

macro_rules! map_column {
    ($col:expr, $v:ident => $body:expr) => {
        match $col {
            Column::Int($v) => Column::Int($body),
            Column::Double($v) => Column::Double($body),
            Column::Bool($v) => Column::Bool($body),
            Column::Str($v) => Column::Str($body),
            Column::DVec($v) => Column::DVec($body),
            Column::Hash($v) => Column::Hash($body),
            Column::Obj($v) => Column::Obj($body),
        }
    };
}

impl Column {
    pub fn len(&self) -> usize {
        each_column!(self, v => v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Column::Int(_) => "int",
            Column::Double(_) => "double",
            Column::Bool(_) => "bool",
            Column::Str(_) => "string",
            Column::DVec(_) => "dvec",
            Column::Hash(_) => "hash",
            Column::Obj(_) => "handle",
        }
    }

    pub fn get(&self, i: usize) -> Value {
        match self {
            Column::Int(v) => Value::Int(v[i]),
            Column::Double(v) => Value::Double(v[i]),
            Column::Bool(v) => Value::Bool(v[i]),
            Column::Str(v) => Value::Str(v[i].clone()),
            Column::DVec(v) => Value::DVec(v[i].clone()),
            Column::Hash(v) => Value::Int(v[i] as i64),
            Column::Obj(v) => v[i].map_or(Value::Null, Value::Obj),
        }
    }

    /// Rows where `mask` is true, in order.
    #[allow(clippy::clone_on_copy)]
    pub fn filter(&self, mask: &[bool]) -> Column {
        match self {
            Column::Int(v) => Column::Int(select(v, mask)),
            Column::Double(v) => Column::Double(select(v, mask)),
            Column::Bool(v) => Column::Bool(select(v, mask)),
            Column::Hash(v) => Column::Hash(select(v, mask)),
            c => {
                map_column!(c, v => v.iter().zip(mask).filter(|(_, &m)| m).map(|(x, _)| x.clone()).collect())
            }
        }
    }

    /// Rows at `idx`, in that order (repeats allowed).
    #[allow(clippy::clone_on_copy)]
    pub fn gather(&self, idx: &[usize]) -> Column {
        map_column!(self, v => idx.iter().map(|&i| v[i].clone()).collect())
    }

    pub fn slice(&self, from: usize, to: usize) -> Column {
        map_column!(self, v => v[from..to].to_vec())
    }

    /// An empty column of the same kind.
    pub fn empty_like(&self) -> Column {
        map_column!(self, _v => Vec::new())
    }

    pub fn append(&mut self, other: &Column) -> Result<(), String> {
        match (self, other) {
            (Column::Int(a), Column::Int(b)) => a.extend_from_slice(b),
            (Column::Double(a), Column::Double(b)) => a.extend_from_slice(b),
            (Column::Bool(a), Column::Bool(b)) => a.extend_from_slice(b),
            (Column::Str(a), Column::Str(b)) => a.extend_from_slice(b),
            (Column::DVec(a), Column::DVec(b)) => a.extend_from_slice(b),
            (Column::Hash(a), Column::Hash(b)) => a.extend_from_slice(b),
            (Column::Obj(a), Column::Obj(b)) => a.extend_from_slice(b),
            (a, b) => {
                return Err(format!(
                    "cannot append {} column to {} column",
                    b.kind(),
                    a.kind()
                ))
            }
        }
        Ok(())
    }

    /// Builds a column from per-row values, which must share one kind
    /// (nulls are only allowed among handles). An empty input yields an
    /// empty handle column.
    pub fn from_values(values: Vec<Value>) -> Result<Column, String> {
        let first = values.iter().find(|v| !matches!(v, Value::Null));
        let mismatch = |v: &Value, want: &str| {
            format!("stage produced {} where {want} was expected", v.kind())
        };
        Ok(match first {
            None | Some(Value::Obj(_)) => Column::Obj(
                values
                    .into_iter()
                    .map(|v| match v {
                        Value::Obj(o) => Ok(Some(o)),
                        Value::Null => Ok(None),
                        other => Err(mismatch(&other, "handle")),
                    })
                    .collect::<Result<_, _>>()?,
            ),
            Some(Value::Int(_)) => Column::Int(
                values
                    .into_iter()
                    .map(|v| {
                        if let Value::Int(x) = v {
                            Ok(x)
                        } else {
                            Err(mismatch(&v, "int"))
                        }
                    })
                    .collect::<Result<_, _>>()?,
            ),
            Some(Value::Double(_)) => Column::Double(
                values
                    .into_iter()
                    .map(|v| {
                        if let Value::Double(x) = v {
                            Ok(x)
                        } else {
                            Err(mismatch(&v, "double"))
                        }
                    })
                    .collect::<Result<_, _>>()?,
            ),
            Some(Value::Bool(_)) => Column::Bool(
                values
                    .into_iter()
                    .map(|v| {
                        if let Value::Bool(x) = v {
                            Ok(x)
                        } else {
                            Err(mismatch(&v, "bool"))
                        }
                    })
                    .collect::<Result<_, _>>()?,
            ),
            Some(Value::Str(_)) => Column::Str(
                values
                    .into_iter()
                    .map(|v| {
                        if let Value::Str(x) = v {
                            Ok(x)
                        } else {
                            Err(mismatch(&v, "string"))
                        }
                    })
                    .collect::<Result<_, _>>()?,
            ),
            Some(Value::DVec(_)) => Column::DVec(
                values
                    .into_iter()
                    .map(|v| {
                        if let Value::DVec(x) = v {
                            Ok(x)
                        } else {
                            Err(mismatch(&v, "dvec"))
                        }
                    })
                    .collect::<Result<_, _>>()?,
            ),
            Some(Value::Null) => unreachable!(),
        })
    }

    /// Object references in this column, if it is a handle column.
    pub fn objects(&self) -> &[Option<ObjRef>] {
        match self {
            Column::Obj(v) => v,
            _ => &[],
        }
    }
}
