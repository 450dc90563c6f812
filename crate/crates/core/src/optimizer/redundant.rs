use super::rewrite::{bypass, lineage, list_cols, prune};
use super::Firing;
use crate::tcap::{validate, Op, Program};

fn matchable(op: &Op) -> bool {
    match op {
        Op::Apply { input, kv, .. } => {
            input.cols.len() == 1
                && match kv.get("type") {
                    Some("methodCall") => kv.get("methodName").is_some(),
                    Some("attAccess") => kv.get("attName").is_some(),
                    _ => false,
                }
        }
        _ => false,
    }
}

fn input_of(op: &Op) -> &crate::tcap::ColRef {
    match op {
        Op::Apply { input, .. } | Op::Filter { input, .. } | Op::Hash { input, .. } => input,
        _ => unreachable!("single-input statement"),
    }
}

/// For descendant `d`, the nearest matching ancestor reachable through a
/// chain of single-input statements, with the statements in between
/// (nearest to `d` first).
fn ancestor(p: &Program, d: usize) -> Option<(usize, Vec<usize>)> {
    let ds = &p.stmts[d];
    let din = input_of(&ds.op);
    let root = lineage(p, &din.list, &din.cols[0]);
    let mut path = Vec::new();
    let mut cur = din.list.clone();
    while let Some(s) = p.find(&cur) {
        let st = &p.stmts[s];
        if matchable(&st.op) && st.op.kv() == ds.op.kv() {
            let sin = input_of(&st.op);
            if lineage(p, &sin.list, &sin.cols[0]) == root {
                return Some((s, path));
            }
        }
        match st.op {
            Op::Apply { .. } | Op::Filter { .. } | Op::Hash { .. } => {
                path.push(s);
                cur = input_of(&st.op).list.clone();
            }
            _ => return None,
        }
    }
    None
}

/// Carries column `col` through the copy list of statement `i`.
fn widen(p: &mut Program, i: usize, col: &str) {
    let src = match &p.stmts[i].op {
        Op::Apply { copy, .. } | Op::Filter { copy, .. } | Op::Hash { copy, .. } => {
            copy.list.clone()
        }
        _ => return,
    };
    let in_cols = list_cols(p, &src);
    let s = &mut p.stmts[i];
    let new_col = match s.op {
        Op::Filter { .. } => None,
        _ => s.cols.last().cloned(),
    };
    if let Op::Apply { copy, .. } | Op::Filter { copy, .. } | Op::Hash { copy, .. } = &mut s.op {
        if copy.cols.iter().any(|c| c == col) {
            return;
        }
        copy.cols = in_cols
            .into_iter()
            .filter(|c| c == col || copy.cols.contains(c))
            .collect();
        s.cols = copy.cols.iter().cloned().chain(new_col).collect();
    }
}

/// One firing of the redundant-apply rule, if any pair qualifies.
pub(crate) fn fire(p: &Program) -> Option<(Program, Firing)> {
    for d in 0..p.stmts.len() {
        if !matchable(&p.stmts[d].op) || p.consumers(&p.stmts[d].out).is_empty() {
            continue;
        }
        let Some((a, path)) = ancestor(p, d) else {
            continue;
        };
        let mut q = p.clone();
        let m_a = q.stmts[a].cols.last().unwrap().clone();
        for &i in path.iter().rev() {
            widen(&mut q, i, &m_a);
        }
        let ds = q.stmts[d].clone();
        let m_d = ds.cols.last().unwrap().clone();
        bypass(&mut q, d, &input_of(&ds.op).list, Some((&m_d, &m_a)));
        prune(&mut q);
        if validate(&q).is_empty() {
            let detail = format!(
                "`{}` repeats `{}`; reusing column `{m_a}`",
                ds.out, p.stmts[a].out
            );
            return Some((
                q,
                Firing {
                    rule: "eliminate_redundant_apply",
                    detail,
                },
            ));
        }
    }
    None
}
