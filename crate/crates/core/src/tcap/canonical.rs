use std::collections::HashMap;

use super::{Op, Program, Stmt};

/// Statement indices in sink-rooted post-order, producers visited in
/// argument order.
fn canonical_order(p: &Program) -> Vec<usize> {
    let index: HashMap<&str, usize> = p
        .stmts
        .iter()
        .enumerate()
        .map(|(i, s)| (s.out.as_str(), i))
        .collect();
    let sinks: Vec<usize> = (0..p.stmts.len())
        .filter(|&i| p.consumers(&p.stmts[i].out).is_empty())
        .collect();
    let mut done = vec![false; p.stmts.len()];
    let mut order = Vec::with_capacity(p.stmts.len());
    fn visit(
        i: usize,
        p: &Program,
        index: &HashMap<&str, usize>,
        done: &mut [bool],
        order: &mut Vec<usize>,
    ) {
        if done[i] {
            return;
        }
        done[i] = true;
        for list in p.stmts[i].op.input_lists() {
            if let Some(&j) = index.get(list) {
                visit(j, p, index, done, order);
            }
        }
        order.push(i);
    }
    for s in sinks {
        visit(s, p, &index, &mut done, &mut order);
    }
    // Statements on cycles are unreachable from sinks; keep them in place.
    for (i, d) in done.iter().enumerate() {
        if !d {
            order.push(i);
        }
    }
    order
}

/// Renames vector lists to `L1, L2, ...` and newly created columns to
/// `c1, c2, ...`, after reordering statements canonically. Source names and
/// source columns are kept. Two programs that differ only in generated names
/// and statement order canonicalize identically.
pub fn canonicalize(p: &Program) -> Program {
    let order = canonical_order(p);
    let mut list_names: HashMap<String, String> = HashMap::new();
    for (k, &i) in order.iter().enumerate() {
        list_names.insert(p.stmts[i].out.clone(), format!("L{}", k + 1));
    }
    let mut col_names: HashMap<(String, String), String> = HashMap::new();
    let mut fresh = 0usize;
    let mut stmts = Vec::with_capacity(order.len());
    for &i in &order {
        let s = &p.stmts[i];
        let lookup = |list: &str, col: &str, col_names: &HashMap<(String, String), String>| {
            col_names
                .get(&(list.to_string(), col.to_string()))
                .cloned()
                .unwrap_or_else(|| col.to_string())
        };
        let carried: Vec<(String, String)> = match &s.op {
            Op::Apply { copy, .. } | Op::Hash { copy, .. } | Op::Filter { copy, .. } => copy
                .cols
                .iter()
                .map(|c| (copy.list.clone(), c.clone()))
                .collect(),
            Op::Join {
                left_copy,
                right_copy,
                ..
            } => left_copy
                .cols
                .iter()
                .map(|c| (left_copy.list.clone(), c.clone()))
                .chain(
                    right_copy
                        .cols
                        .iter()
                        .map(|c| (right_copy.list.clone(), c.clone())),
                )
                .collect(),
            Op::Output { input, .. } => input
                .cols
                .iter()
                .map(|c| (input.list.clone(), c.clone()))
                .collect(),
            Op::Aggregate { .. } => Vec::new(),
        };
        let mut cols: Vec<String> = Vec::with_capacity(s.cols.len());
        for (j, c) in s.cols.iter().enumerate() {
            let name = match carried.get(j) {
                Some((l, src)) => lookup(l, src, &col_names),
                None => {
                    fresh += 1;
                    format!("c{fresh}")
                }
            };
            let name = if cols.contains(&name) {
                fresh += 1;
                format!("c{fresh}")
            } else {
                name
            };
            col_names.insert((s.out.clone(), c.clone()), name.clone());
            cols.push(name);
        }
        let mut op = s.op.clone();
        for r in op.inputs_mut() {
            r.cols = r
                .cols
                .iter()
                .map(|c| lookup(&r.list, c, &col_names))
                .collect();
            if let Some(n) = list_names.get(&r.list) {
                r.list = n.clone();
            }
        }
        stmts.push(Stmt {
            out: list_names[&s.out].clone(),
            cols,
            op,
            pos: s.pos,
        });
    }
    Program { stmts }
}

/// Replaces computation and stage names with placeholders, for comparisons
/// that should ignore generated labels.
pub fn erase_labels(p: &Program) -> Program {
    let mut p = p.clone();
    for s in &mut p.stmts {
        match &mut s.op {
            Op::Apply { comp, stage, .. } => {
                *comp = "comp".into();
                *stage = "stage".into();
            }
            Op::Filter { comp, .. }
            | Op::Hash { comp, .. }
            | Op::Join { comp, .. }
            | Op::Aggregate { comp, .. }
            | Op::Output { comp, .. } => *comp = "comp".into(),
        }
    }
    p
}
