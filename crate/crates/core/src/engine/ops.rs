use std::borrow::Cow;
use std::cmp::Ordering;

use super::Value;
use crate::containers::{builtin, hash_bytes, hash_u64, read_string, PVector};
use crate::lambda::Const;
use crate::object::{Heap, ObjRef};

fn obj_str(heap: &Heap, o: ObjRef) -> Option<&str> {
    if o.ty != builtin::STRING {
        return None;
    }
    let view = heap.view(o.block).ok()?;
    Some(read_string(&view, o.off))
}

/// Text of a string value or a reference to a string object.
pub fn value_str<'a>(heap: &'a Heap, v: &'a Value) -> Option<Cow<'a, str>> {
    match v {
        Value::Str(s) => Some(Cow::Borrowed(s)),
        Value::Obj(o) => obj_str(heap, *o).map(Cow::Borrowed),
        _ => None,
    }
}

fn payload(heap: &Heap, o: ObjRef) -> Option<&[u8]> {
    let view = heap.view(o.block).ok()?;
    let h = view.header(o.off);
    Some(view.slice(o.payload(), h.payload_size))
}

fn doubles(heap: &Heap, v: &Value) -> Option<Vec<f64>> {
    match v {
        Value::DVec(d) => Some(d.clone()),
        Value::Obj(o) if o.ty == builtin::VECTOR_F64 => {
            let view = heap.view(o.block).ok()?;
            Some(PVector::<f64>::of(*o).to_vec(&view))
        }
        _ => None,
    }
}

/// Equality across value kinds: numbers compare numerically, strings by
/// text whether inline or referenced, other objects by identity or
/// identical payload bytes.
pub fn values_eq(heap: &Heap, a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Null, Value::Null) => true,
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Int(_) | Value::Double(_), Value::Int(_) | Value::Double(_)) => {
            as_f64(a) == as_f64(b)
        }
        (Value::Obj(x), Value::Obj(y)) if x == y => true,
        _ => {
            if let (Some(x), Some(y)) = (value_str(heap, a), value_str(heap, b)) {
                return x == y;
            }
            if let (Some(x), Some(y)) = (doubles(heap, a), doubles(heap, b)) {
                return x == y;
            }
            match (a, b) {
                (Value::Obj(x), Value::Obj(y)) => {
                    x.ty == y.ty && payload(heap, *x) == payload(heap, *y)
                }
                _ => false,
            }
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Int(x) => Some(*x as f64),
        Value::Double(x) => Some(*x),
        _ => None,
    }
}

/// Ordering for comparisons; `None` when the kinds are not comparable.
pub fn compare(heap: &Heap, a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => Some(x.cmp(y)),
        (Value::Bool(x), Value::Bool(y)) => Some(x.cmp(y)),
        (Value::Int(_) | Value::Double(_), Value::Int(_) | Value::Double(_)) => {
            as_f64(a)?.partial_cmp(&as_f64(b)?)
        }
        _ => {
            let (x, y) = (value_str(heap, a)?, value_str(heap, b)?);
            Some(x.as_ref().cmp(y.as_ref()))
        }
    }
}

/// Hash consistent with [`values_eq`] within one value kind.
pub fn hash_value(heap: &Heap, v: &Value) -> u64 {
    match v {
        Value::Null => hash_u64(0),
        Value::Int(x) => hash_u64(*x as u64),
        Value::Double(x) => hash_u64(x.to_bits()),
        Value::Bool(b) => hash_u64(*b as u64),
        Value::Str(s) => hash_bytes(s.as_bytes()),
        Value::DVec(d) => hash_bytes(&d.iter().flat_map(|x| x.to_le_bytes()).collect::<Vec<_>>()),
        Value::Obj(o) => match obj_str(heap, *o) {
            Some(s) => hash_bytes(s.as_bytes()),
            None => match doubles(heap, v) {
                Some(d) => hash_value(heap, &Value::DVec(d)),
                None => hash_bytes(payload(heap, *o).unwrap_or(&[])),
            },
        },
    }
}

pub fn const_value(c: &Const) -> Value {
    match c {
        Const::Int(v) => Value::Int(*v),
        Const::Double(v) => Value::Double(*v),
        Const::Bool(v) => Value::Bool(*v),
        Const::Str(s) => Value::Str(s.clone()),
    }
}

/// `a op b` for `+ - *`; integers stay integers.
pub fn arith(op: &str, a: &Value, b: &Value) -> Option<Value> {
    Some(match (a, b) {
        (Value::Int(x), Value::Int(y)) => Value::Int(match op {
            "+" => x.wrapping_add(*y),
            "-" => x.wrapping_sub(*y),
            "*" => x.wrapping_mul(*y),
            _ => return None,
        }),
        (Value::DVec(x), Value::DVec(y)) if x.len() == y.len() => Value::DVec(
            x.iter()
                .zip(y)
                .map(|(p, q)| match op {
                    "+" => p + q,
                    "-" => p - q,
                    _ => p * q,
                })
                .collect(),
        ),
        _ => {
            let (x, y) = (as_f64(a)?, as_f64(b)?);
            Value::Double(match op {
                "+" => x + y,
                "-" => x - y,
                "*" => x * y,
                _ => return None,
            })
        }
    })
}
