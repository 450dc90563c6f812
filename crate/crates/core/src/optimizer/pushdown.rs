use std::collections::{BTreeSet, HashMap, HashSet};

use super::rewrite::{bypass, fresh_col, fresh_list, is_flatten, list_cols, prune};
use super::Firing;
use crate::tcap::{validate, ColRef, Kv, Op, Program, Stmt};

/// Where a column seen on the post-join chain comes from.
#[derive(Clone, Debug, PartialEq)]
enum Origin {
    /// A column of the join output.
    Base(String),
    /// The new column of the chain statement at this position.
    Made(usize),
}

/// The statements between a JOIN and a FILTER, top-down.
struct Chain {
    join: usize,
    stmts: Vec<usize>,
}

impl Chain {
    /// Origin of column `x` as seen in the list read by chain position `pos`.
    fn resolve(&self, p: &Program, pos: usize, x: &str) -> Origin {
        for k in (0..pos).rev() {
            let s = &p.stmts[self.stmts[k]];
            if s.cols.last().map(String::as_str) == Some(x) {
                return Origin::Made(k);
            }
        }
        Origin::Base(x.to_string())
    }

    fn apply_input<'a>(&self, p: &'a Program, k: usize) -> &'a ColRef {
        match &p.stmts[self.stmts[k]].op {
            Op::Apply { input, .. } => input,
            _ => unreachable!("chain holds APPLYs only"),
        }
    }
}

fn find_chain(p: &Program, f: usize) -> Option<Chain> {
    let Op::Filter { input, .. } = &p.stmts[f].op else {
        return None;
    };
    let mut stmts = Vec::new();
    let mut cur = input.list.clone();
    loop {
        if p.consumers(&cur).len() != 1 {
            return None;
        }
        let s = p.find(&cur)?;
        match &p.stmts[s].op {
            Op::Apply { input, .. } if !is_flatten(&p.stmts[s].op) => {
                stmts.push(s);
                cur = input.list.clone();
            }
            Op::Join { .. } => {
                stmts.reverse();
                return Some(Chain { join: s, stmts });
            }
            _ => return None,
        }
    }
}

/// A pushable conjunct: its origin, and the `&&` statement (chain position)
/// holding it with the other operand's column, if any.
struct Leaf {
    origin: Origin,
    parent: Option<(usize, String)>,
}

fn leaves(
    p: &Program,
    ch: &Chain,
    pos: usize,
    col: &str,
    parent: Option<(usize, String)>,
    out: &mut Vec<Leaf>,
) {
    let origin = ch.resolve(p, pos, col);
    if let Origin::Made(k) = origin {
        let s = &p.stmts[ch.stmts[k]];
        if s.op.kv().get("type") == Some("bool_and") {
            let inp = ch.apply_input(p, k);
            if inp.cols.len() == 2 {
                leaves(p, ch, k, &inp.cols[0], Some((k, inp.cols[1].clone())), out);
                leaves(p, ch, k, &inp.cols[1], Some((k, inp.cols[0].clone())), out);
                return;
            }
        }
    }
    out.push(Leaf { origin, parent });
}

/// Chain positions and join columns a conjunct needs.
fn support(
    p: &Program,
    ch: &Chain,
    o: &Origin,
    made: &mut BTreeSet<usize>,
    base: &mut BTreeSet<String>,
) {
    match o {
        Origin::Base(x) => {
            base.insert(x.clone());
        }
        Origin::Made(k) => {
            if made.insert(*k) {
                for x in &ch.apply_input(p, *k).cols {
                    support(p, ch, &ch.resolve(p, *k, x), made, base);
                }
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Left,
    Right,
}

/// One firing of the pushdown rule, if any conjunct qualifies.
pub(crate) fn fire(p: &Program) -> Option<(Program, Firing)> {
    for f in 0..p.stmts.len() {
        let Some(ch) = find_chain(p, f) else {
            continue;
        };
        let Op::Filter { input: pred, .. } = &p.stmts[f].op else {
            unreachable!()
        };
        let mut ls = Vec::new();
        leaves(p, &ch, ch.stmts.len(), &pred.cols[0], None, &mut ls);
        let terminal = p.consumers(&p.stmts[f].out).is_empty();
        if ls.len() == 1 && terminal {
            continue;
        }
        for leaf in &ls {
            if let Some(q) = push(p, f, &ch, leaf) {
                let detail = format!(
                    "moved conjunct of `{}` below `{}`",
                    p.stmts[f].out, p.stmts[ch.join].out
                );
                return Some((
                    q,
                    Firing {
                        rule: "push_filter_past_join",
                        detail,
                    },
                ));
            }
        }
    }
    None
}

fn push(p: &Program, f: usize, ch: &Chain, leaf: &Leaf) -> Option<Program> {
    let mut made = BTreeSet::new();
    let mut base = BTreeSet::new();
    support(p, ch, &leaf.origin, &mut made, &mut base);
    if base.is_empty() {
        return None;
    }
    if made
        .iter()
        .any(|&k| p.stmts[ch.stmts[k]].op.kv().get("type") == Some("nativeOpaque"))
    {
        return None;
    }
    let Op::Join {
        left_hash,
        left_copy,
        right_hash,
        right_copy,
        ..
    } = &p.stmts[ch.join].op
    else {
        unreachable!()
    };
    let side = if base.iter().all(|b| left_copy.cols.contains(b)) {
        Side::Left
    } else if base.iter().all(|b| right_copy.cols.contains(b)) {
        Side::Right
    } else {
        return None;
    };
    let mut x = if side == Side::Left {
        left_hash.list.clone()
    } else {
        right_hash.list.clone()
    };
    let mut succ = ch.join;
    loop {
        if p.consumers(&x).len() != 1 {
            break;
        }
        let Some(s) = p.find(&x) else {
            break;
        };
        match &p.stmts[s].op {
            Op::Apply { copy, .. } | Op::Filter { copy, .. } | Op::Hash { copy, .. }
                if base.iter().all(|b| copy.cols.contains(b)) =>
            {
                succ = s;
                x = copy.list.clone();
            }
            _ => break,
        }
    }
    let p_cols = list_cols(p, &x);
    let comp = p.stmts[f].op.comp().to_string();

    let mut q = p.clone();
    let mut names: HashMap<String, String> = HashMap::new();
    let mut reserved: HashSet<String> = HashSet::new();
    let order: Vec<usize> = made.iter().copied().collect();
    let map = |names: &HashMap<String, String>, ch: &Chain, k: usize, c: &str| match ch
        .resolve(p, k, c)
    {
        Origin::Base(b) => b,
        Origin::Made(_) => names[c].clone(),
    };
    let leaf_col = match &leaf.origin {
        Origin::Base(b) => b.clone(),
        Origin::Made(k) => p.stmts[ch.stmts[*k]].cols.last().unwrap().clone(),
    };
    let mut new_stmts = Vec::new();
    let mut cur = x.clone();
    let mut cur_cols = p_cols.clone();
    for (i, &k) in order.iter().enumerate() {
        let s = &p.stmts[ch.stmts[k]];
        let Op::Apply {
            input, stage, kv, ..
        } = &s.op
        else {
            unreachable!()
        };
        let reads: Vec<String> = input.cols.iter().map(|c| map(&names, ch, k, c)).collect();
        let old = s.cols.last().unwrap().clone();
        let new = fresh_col(&q, &old, &reserved);
        reserved.insert(new.clone());
        names.insert(old.clone(), new.clone());
        let mut later: HashSet<String> = HashSet::new();
        for &k2 in &order[i + 1..] {
            for c in &ch.apply_input(p, k2).cols {
                if let Origin::Made(_) = ch.resolve(p, k2, c) {
                    later.insert(c.clone());
                }
            }
        }
        later.insert(leaf_col.clone());
        let copy: Vec<String> = cur_cols
            .iter()
            .filter(|c| {
                p_cols.contains(c) || names.iter().any(|(o, n)| n == *c && later.contains(o))
            })
            .cloned()
            .collect();
        let out = fresh_list(&q, &s.out);
        let mut cols = copy.clone();
        cols.push(new);
        let op = Op::Apply {
            input: ColRef {
                list: cur.clone(),
                cols: reads,
            },
            copy: ColRef {
                list: cur.clone(),
                cols: copy,
            },
            comp: comp.clone(),
            stage: stage.clone(),
            kv: kv.clone(),
        };
        let st = Stmt {
            out: out.clone(),
            cols: cols.clone(),
            op,
            pos: Default::default(),
        };
        q.stmts.push(st.clone());
        new_stmts.push(st);
        cur = out;
        cur_cols = cols;
    }
    let pred_col = names.get(&leaf_col).cloned().unwrap_or(leaf_col.clone());
    let flt_out = fresh_list(&q, &format!("{}_p", p.stmts[f].out));
    let flt = Stmt {
        out: flt_out.clone(),
        cols: p_cols.clone(),
        op: Op::Filter {
            input: ColRef {
                list: cur.clone(),
                cols: vec![pred_col],
            },
            copy: ColRef {
                list: cur,
                cols: p_cols,
            },
            comp,
            kv: Kv::default(),
        },
        pos: Default::default(),
    };
    q.stmts.truncate(p.stmts.len());
    new_stmts.push(flt);

    match &mut q.stmts[succ].op {
        Op::Join {
            left_hash,
            left_copy,
            right_hash,
            right_copy,
            ..
        } => {
            let refs = if side == Side::Left {
                [left_hash, left_copy]
            } else {
                [right_hash, right_copy]
            };
            for r in refs {
                r.list = flt_out.clone();
            }
        }
        op => {
            for r in op.inputs_mut() {
                if r.list == x {
                    r.list = flt_out.clone();
                }
            }
        }
    }

    match &leaf.parent {
        None => {
            let Op::Filter { copy, .. } = &q.stmts[f].op else {
                unreachable!()
            };
            let to = copy.list.clone();
            bypass(&mut q, f, &to, None);
        }
        Some((k, other)) => {
            let idx = ch.stmts[*k];
            let s = q.stmts[idx].clone();
            let Op::Apply { input, .. } = &s.op else {
                unreachable!()
            };
            bypass(
                &mut q,
                idx,
                &input.list,
                Some((s.cols.last().unwrap(), other)),
            );
        }
    }
    let at = q.find(&p.stmts[succ].out).unwrap_or(0);
    for (i, st) in new_stmts.into_iter().enumerate() {
        q.stmts.insert(at + i, st);
    }
    prune(&mut q);
    validate(&q).is_empty().then_some(q)
}
