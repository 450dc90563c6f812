use super::{ColRef, Kv, Op, Program, Stmt};

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
}

fn colref(r: &ColRef) -> String {
    format!("{}({})", r.list, r.cols.join(","))
}

fn kv(kv: &Kv) -> String {
    let pairs: Vec<String> =
        kv.0.iter()
            .map(|(k, v)| format!("({}, {})", quote(k), quote(v)))
            .collect();
    format!("[{}]", pairs.join(", "))
}

pub(crate) fn stmt(s: &Stmt) -> String {
    let args = match &s.op {
        Op::Apply {
            input,
            copy,
            comp,
            stage,
            kv: m,
        } => {
            format!(
                "{}, {}, {}, {}, {}",
                colref(input),
                colref(copy),
                quote(comp),
                quote(stage),
                kv(m)
            )
        }
        Op::Filter {
            input,
            copy,
            comp,
            kv: m,
        }
        | Op::Hash {
            input,
            copy,
            comp,
            kv: m,
        } => {
            format!(
                "{}, {}, {}, {}",
                colref(input),
                colref(copy),
                quote(comp),
                kv(m)
            )
        }
        Op::Join {
            left_hash,
            left_copy,
            right_hash,
            right_copy,
            comp,
            kv: m,
        } => format!(
            "{}, {}, {}, {}, {}, {}",
            colref(left_hash),
            colref(left_copy),
            colref(right_hash),
            colref(right_copy),
            quote(comp),
            kv(m)
        ),
        Op::Aggregate {
            key,
            value,
            comp,
            kv: m,
        } => {
            format!(
                "{}, {}, {}, {}",
                colref(key),
                colref(value),
                quote(comp),
                kv(m)
            )
        }
        Op::Output {
            input,
            db,
            set,
            comp,
            kv: m,
        } => {
            format!(
                "{}, {}, {}, {}, {}",
                colref(input),
                quote(db),
                quote(set),
                quote(comp),
                kv(m)
            )
        }
    };
    format!(
        "{}({}) <= {}({});",
        s.out,
        s.cols.join(","),
        s.op.kind(),
        args
    )
}

/// Canonical text: one statement per line, comments dropped.
pub fn print(p: &Program) -> String {
    p.stmts.iter().map(|s| stmt(s) + "\n").collect()
}
