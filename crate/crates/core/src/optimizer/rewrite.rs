use std::collections::{HashMap, HashSet};

use crate::tcap::{Op, Program};

/// Columns of a list, whether defined by a statement or a source.
pub(crate) fn list_cols(p: &Program, list: &str) -> Vec<String> {
    match p.get(list) {
        Some(s) => s.cols.clone(),
        None => p
            .sources()
            .into_iter()
            .find(|c| c.list == list)
            .map(|c| c.cols)
            .unwrap_or_default(),
    }
}

pub(crate) fn is_flatten(op: &Op) -> bool {
    matches!(op, Op::Apply { kv, .. } if kv.get("type") == Some("flatten"))
}

/// Where a column's values come from: the defining list and its name there.
pub(crate) fn lineage(p: &Program, list: &str, col: &str) -> (String, String) {
    let mut list = list.to_string();
    loop {
        let Some(s) = p.get(&list) else {
            return (list, col.to_string());
        };
        let next = match &s.op {
            Op::Apply { copy, .. } | Op::Hash { copy, .. } => {
                if s.cols.last().map(String::as_str) == Some(col) {
                    return (list, col.to_string());
                }
                &copy.list
            }
            Op::Filter { copy, .. } => &copy.list,
            Op::Join {
                left_copy,
                right_copy,
                ..
            } => {
                if left_copy.cols.iter().any(|c| c == col) {
                    &left_copy.list
                } else {
                    &right_copy.list
                }
            }
            Op::Aggregate { .. } => return (list, col.to_string()),
            Op::Output { input, .. } => &input.list,
        };
        list = next.clone();
    }
}

/// The selections whose columns are carried into a statement's output.
fn carried(op: &Op) -> Vec<&crate::tcap::ColRef> {
    match op {
        Op::Apply { copy, .. } | Op::Hash { copy, .. } | Op::Filter { copy, .. } => vec![copy],
        Op::Join {
            left_copy,
            right_copy,
            ..
        } => vec![left_copy, right_copy],
        Op::Output { input, .. } => vec![input],
        Op::Aggregate { .. } => Vec::new(),
    }
}

/// Removes statement `idx` and re-points its readers at `to`. With a rename
/// `(from, into)`, the removed statement's column `from` is known as `into`
/// in `to`, and every list downstream that carries it is renamed too.
pub(crate) fn bypass(p: &mut Program, idx: usize, to: &str, rename: Option<(&str, &str)>) {
    let out = p.stmts[idx].out.clone();
    if let Some((from, into)) = rename {
        let mut tainted: HashSet<String> = HashSet::from([out.clone()]);
        loop {
            let mut grew = false;
            for (i, s) in p.stmts.iter().enumerate() {
                if i == idx || tainted.contains(&s.out) {
                    continue;
                }
                if carried(&s.op)
                    .iter()
                    .any(|r| tainted.contains(&r.list) && r.cols.iter().any(|c| c == from))
                {
                    tainted.insert(s.out.clone());
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }
        for (i, s) in p.stmts.iter_mut().enumerate() {
            if i == idx {
                continue;
            }
            for r in s.op.inputs_mut() {
                if tainted.contains(&r.list) {
                    rename_in(&mut r.cols, from, into);
                }
            }
            if tainted.contains(&s.out) {
                rename_in(&mut s.cols, from, into);
            }
        }
    }
    for s in p.stmts.iter_mut() {
        for r in s.op.inputs_mut() {
            if r.list == out {
                r.list = to.to_string();
            }
        }
    }
    p.stmts.remove(idx);
}

fn rename_in(cols: &mut [String], from: &str, into: &str) {
    for c in cols.iter_mut() {
        if c == from {
            *c = into.to_string();
        }
    }
}

/// Drops columns nobody reads and APPLYs whose result nobody reads.
/// Lists without readers are program results and stay untouched.
pub(crate) fn prune(p: &mut Program) {
    loop {
        let mut needed: HashMap<&str, HashSet<&str>> = HashMap::new();
        for s in &p.stmts {
            for r in s.op.inputs() {
                needed
                    .entry(r.list.as_str())
                    .or_default()
                    .extend(r.cols.iter().map(String::as_str));
            }
        }
        let mut dead_apply = None;
        let mut narrowed: Vec<(usize, Vec<Vec<String>>)> = Vec::new();
        for (i, s) in p.stmts.iter().enumerate() {
            let Some(need) = needed.get(s.out.as_str()) else {
                continue;
            };
            if let Op::Apply { input, .. } = &s.op {
                if !is_flatten(&s.op) && !need.contains(s.cols.last().unwrap().as_str()) {
                    dead_apply = Some((i, input.list.clone()));
                    break;
                }
            }
            let copies = carried(&s.op);
            if matches!(s.op, Op::Output { .. }) {
                continue;
            }
            let mut kept: Vec<Vec<String>> = copies
                .iter()
                .map(|r| {
                    r.cols
                        .iter()
                        .filter(|c| need.contains(c.as_str()))
                        .cloned()
                        .collect()
                })
                .collect();
            let total: usize = kept.iter().map(Vec::len).sum();
            let has_new = matches!(s.op, Op::Apply { .. } | Op::Hash { .. });
            if total == 0 && !has_new {
                if let Some((k, first)) = copies
                    .iter()
                    .enumerate()
                    .find_map(|(k, r)| r.cols.first().map(|c| (k, c)))
                {
                    kept[k].push(first.clone());
                }
            }
            if kept
                .iter()
                .zip(&copies)
                .any(|(k, r)| k.len() != r.cols.len())
            {
                narrowed.push((i, kept));
            }
        }
        if let Some((i, to)) = dead_apply {
            bypass(p, i, &to, None);
            continue;
        }
        if narrowed.is_empty() {
            return;
        }
        for (i, kept) in narrowed {
            let s = &mut p.stmts[i];
            let new_col = match s.op {
                Op::Apply { .. } | Op::Hash { .. } => s.cols.last().cloned(),
                _ => None,
            };
            let mut cols = Vec::new();
            match &mut s.op {
                Op::Apply { copy, .. } | Op::Hash { copy, .. } | Op::Filter { copy, .. } => {
                    copy.cols = kept[0].clone();
                    cols.extend(kept[0].iter().cloned());
                }
                Op::Join {
                    left_copy,
                    right_copy,
                    ..
                } => {
                    left_copy.cols = kept[0].clone();
                    right_copy.cols = kept[1].clone();
                    cols.extend(kept[0].iter().chain(&kept[1]).cloned());
                }
                Op::Aggregate { .. } | Op::Output { .. } => continue,
            }
            cols.extend(new_col);
            s.cols = cols;
        }
    }
}

/// A list name not used anywhere in `p`, derived from `base`.
pub(crate) fn fresh_list(p: &Program, base: &str) -> String {
    let taken = |n: &str| {
        p.find(n).is_some()
            || p.stmts
                .iter()
                .any(|s| s.op.inputs().iter().any(|r| r.list == n))
    };
    (1..)
        .map(|i| format!("{base}_{i}"))
        .find(|n| !taken(n))
        .unwrap()
}

/// A column name not used anywhere in `p`, derived from `base`.
pub(crate) fn fresh_col(p: &Program, base: &str, also: &HashSet<String>) -> String {
    let used: HashSet<&str> = p
        .stmts
        .iter()
        .flat_map(|s| {
            s.cols
                .iter()
                .chain(s.op.inputs().into_iter().flat_map(|r| r.cols.iter()))
        })
        .map(String::as_str)
        .collect();
    (1..)
        .map(|i| format!("{base}_{i}"))
        .find(|n| !used.contains(n.as_str()) && !also.contains(n))
        .unwrap()
}
