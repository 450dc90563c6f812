use std::collections::{HashMap, HashSet};

use super::{is_source_name, ColRef, DiagCode, Diagnostic, Op, Pos, Program};

fn diag(out: &mut Vec<Diagnostic>, code: DiagCode, pos: Pos, msg: String) {
    out.push(Diagnostic::new(code, pos, msg));
}

fn check_unique(out: &mut Vec<Diagnostic>, pos: Pos, what: &str, cols: &[String]) {
    let mut seen = HashSet::new();
    for c in cols {
        if !seen.insert(c) {
            diag(
                out,
                DiagCode::DuplicateColumn,
                pos,
                format!("column `{c}` appears twice in {what}"),
            );
        }
    }
}

fn check_single(out: &mut Vec<Diagnostic>, pos: Pos, what: &str, r: &ColRef) {
    if r.cols.len() != 1 {
        diag(
            out,
            DiagCode::ArityViolation,
            pos,
            format!(
                "{what} must select exactly one column, got {}",
                r.cols.len()
            ),
        );
    }
}

fn check_same_list(out: &mut Vec<Diagnostic>, pos: Pos, a: &ColRef, b: &ColRef) {
    if a.list != b.list {
        diag(
            out,
            DiagCode::InputMismatch,
            pos,
            format!(
                "both selections must read the same vector list, got `{}` and `{}`",
                a.list, b.list
            ),
        );
    }
}

/// Output columns must equal `expect`, optionally followed by `extra` new ones.
fn check_output(
    out: &mut Vec<Diagnostic>,
    pos: Pos,
    name: &str,
    cols: &[String],
    expect: &[String],
    extra: usize,
) {
    let kind = if extra == 0 {
        "no new column"
    } else {
        "exactly one new column"
    };
    if cols.len() != expect.len() + extra {
        diag(
            out,
            DiagCode::ArityViolation,
            pos,
            format!(
                "`{name}` has {} columns but must carry {} copied columns plus {kind}",
                cols.len(),
                expect.len()
            ),
        );
        return;
    }
    if cols[..expect.len()] != *expect {
        diag(
            out,
            DiagCode::ColumnMismatch,
            pos,
            format!(
                "`{name}` columns ({}) do not match the copied columns ({})",
                cols.join(","),
                expect.join(",")
            ),
        );
    }
    if extra == 1 && expect.contains(&cols[cols.len() - 1]) {
        diag(
            out,
            DiagCode::DuplicateColumn,
            pos,
            format!(
                "new column `{}` shadows a copied column",
                cols[cols.len() - 1]
            ),
        );
    }
}

/// Checks every structural rule; an empty result means the program is valid.
pub fn validate(p: &Program) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut schemas: HashMap<&str, &[String]> = HashMap::new();
    for s in &p.stmts {
        if schemas.insert(&s.out, &s.cols).is_some() {
            diag(
                &mut out,
                DiagCode::DuplicateOutput,
                s.pos,
                format!("`{}` is defined more than once", s.out),
            );
        }
    }
    let sources = p.sources();
    for src in &sources {
        if is_source_name(&src.list) {
            schemas.insert(&src.list, &src.cols);
        }
    }
    for s in &p.stmts {
        let pos = s.pos;
        check_unique(&mut out, pos, &format!("`{}`", s.out), &s.cols);
        let mut reported = HashSet::new();
        for r in s.op.inputs() {
            match schemas.get(r.list.as_str()) {
                None => {
                    if reported.insert(r.list.as_str()) {
                        diag(
                            &mut out,
                            DiagCode::UndefinedInput,
                            pos,
                            format!("input `{}` is not defined", r.list),
                        );
                    }
                }
                Some(cols) => {
                    for c in &r.cols {
                        if !cols.contains(c) {
                            diag(
                                &mut out,
                                DiagCode::UnknownColumn,
                                pos,
                                format!("`{}` has no column `{c}`", r.list),
                            );
                        }
                    }
                }
            }
        }
        match &s.op {
            Op::Apply { input, copy, .. } | Op::Hash { input, copy, .. } => {
                if input.cols.is_empty() {
                    diag(
                        &mut out,
                        DiagCode::ArityViolation,
                        pos,
                        "input selection is empty".into(),
                    );
                }
                if matches!(s.op, Op::Hash { .. }) {
                    check_single(&mut out, pos, "hash key", input);
                }
                check_same_list(&mut out, pos, input, copy);
                check_output(&mut out, pos, &s.out, &s.cols, &copy.cols, 1);
            }
            Op::Filter { input, copy, .. } => {
                check_single(&mut out, pos, "filter predicate", input);
                check_same_list(&mut out, pos, input, copy);
                check_output(&mut out, pos, &s.out, &s.cols, &copy.cols, 0);
            }
            Op::Join {
                left_hash,
                left_copy,
                right_hash,
                right_copy,
                ..
            } => {
                check_single(&mut out, pos, "left join hash", left_hash);
                check_single(&mut out, pos, "right join hash", right_hash);
                check_same_list(&mut out, pos, left_hash, left_copy);
                check_same_list(&mut out, pos, right_hash, right_copy);
                let joined: Vec<String> = left_copy
                    .cols
                    .iter()
                    .chain(&right_copy.cols)
                    .cloned()
                    .collect();
                check_unique(&mut out, pos, "the joined copy lists", &joined);
                check_output(&mut out, pos, &s.out, &s.cols, &joined, 0);
            }
            Op::Aggregate { key, value, .. } => {
                check_single(&mut out, pos, "aggregation key", key);
                check_single(&mut out, pos, "aggregation value", value);
                check_same_list(&mut out, pos, key, value);
                if s.cols.len() != 2 {
                    diag(
                        &mut out,
                        DiagCode::ArityViolation,
                        pos,
                        format!(
                            "aggregation output must have two columns (key, value), got {}",
                            s.cols.len()
                        ),
                    );
                }
            }
            Op::Output { input, .. } => {
                if input.cols.is_empty() {
                    diag(
                        &mut out,
                        DiagCode::ArityViolation,
                        pos,
                        "output selection is empty".into(),
                    );
                }
                check_output(&mut out, pos, &s.out, &s.cols, &input.cols, 0);
            }
        }
    }
    if let Some(i) = find_cycle(p) {
        let s = &p.stmts[i];
        diag(
            &mut out,
            DiagCode::CyclicProgram,
            s.pos,
            format!("`{}` depends on itself", s.out),
        );
    }
    out
}

/// Index of a statement on a dependency cycle, if any.
fn find_cycle(p: &Program) -> Option<usize> {
    let index: HashMap<&str, usize> = p
        .stmts
        .iter()
        .enumerate()
        .map(|(i, s)| (s.out.as_str(), i))
        .collect();
    let deps: Vec<Vec<usize>> = p
        .stmts
        .iter()
        .map(|s| {
            s.op.input_lists()
                .iter()
                .filter_map(|n| index.get(n).copied())
                .collect()
        })
        .collect();
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; p.stmts.len()];
    for root in 0..p.stmts.len() {
        if state[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        state[root] = 1;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if *next < deps[node].len() {
                let d = deps[node][*next];
                *next += 1;
                match state[d] {
                    0 => {
                        state[d] = 1;
                        stack.push((d, 0));
                    }
                    1 => return Some(d),
                    _ => {}
                }
            } else {
                state[node] = 2;
                stack.pop();
            }
        }
    }
    None
}
