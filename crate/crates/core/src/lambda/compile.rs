use std::collections::{BTreeMap, HashMap, HashSet};

use super::{
    BinOp, CompId, CompKind, ComputationGraph, Const, LambdaError, LambdaTerm, TermKind, TypeTag,
};
use crate::tcap::{validate, ColRef, Kv, Op, Program, Stmt};

/// Result of planning a term: either a column holding its value or a
/// constant that folds into the consuming statement.
#[derive(Clone, Debug)]
enum Operand {
    Col(String),
    Const(Const),
}

/// One APPLY to emit: reads `reads`, appends `out`.
struct Step {
    reads: Vec<String>,
    out: String,
    stage: String,
    kv: Kv,
}

struct Emitter {
    stmts: Vec<Stmt>,
    lists: HashMap<String, Vec<String>>,
    list_seq: HashMap<String, usize>,
    stage_seq: HashMap<(String, String), usize>,
    col_seq: BTreeMap<&'static str, usize>,
    reserved: HashSet<String>,
}

impl Emitter {
    fn new(reserved: HashSet<String>) -> Self {
        Emitter {
            stmts: Vec::new(),
            lists: HashMap::new(),
            list_seq: HashMap::new(),
            stage_seq: HashMap::new(),
            col_seq: BTreeMap::new(),
            reserved,
        }
    }

    fn fresh_col(&mut self, prefix: &'static str) -> String {
        loop {
            let n = self.col_seq.entry(prefix).or_insert(0);
            *n += 1;
            let name = format!("{prefix}{n}");
            if !self.reserved.contains(&name) {
                return name;
            }
        }
    }

    fn fresh_list(&mut self, comp: &str) -> String {
        loop {
            let n = self.list_seq.entry(comp.to_string()).or_insert(0);
            *n += 1;
            let name = format!("{comp}_{n}");
            if !self.lists.contains_key(&name) {
                return name;
            }
        }
    }

    fn stage(&mut self, comp: &str, kind: &str) -> String {
        let n = self
            .stage_seq
            .entry((comp.to_string(), kind.to_string()))
            .or_insert(0);
        *n += 1;
        format!("{kind}_{n}")
    }

    fn cols(&self, list: &str) -> Vec<String> {
        self.lists[list].clone()
    }

    fn emit(&mut self, comp: &str, cols: Vec<String>, op: Op) -> String {
        let out = self.fresh_list(comp);
        self.lists.insert(out.clone(), cols.clone());
        self.stmts.push(Stmt {
            out: out.clone(),
            cols,
            op,
            pos: Default::default(),
        });
        out
    }

    /// Flattens `t` into steps in post-order.
    fn plan(
        &mut self,
        comp: &str,
        t: &LambdaTerm,
        slot_cols: &[String],
        steps: &mut Vec<Step>,
    ) -> Result<Operand, LambdaError> {
        let slot = |s: usize| -> Result<String, LambdaError> {
            slot_cols
                .get(s)
                .cloned()
                .ok_or(LambdaError::SlotOutOfRange {
                    slot: s,
                    arity: slot_cols.len(),
                    comp: comp.to_string(),
                })
        };
        let reads = |t: &LambdaTerm| -> Result<Vec<String>, LambdaError> {
            t.slots.iter().map(|&s| slot(s)).collect()
        };
        let (reads, prefix, kind, kv) = match &t.kind {
            TermKind::Const(c) => return Ok(Operand::Const(c.clone())),
            TermKind::SelfRef => return Ok(Operand::Col(slot(t.slots[0])?)),
            TermKind::Member(a) => (
                reads(t)?,
                "mt",
                "att_access".to_string(),
                Kv::new(&[("type", "attAccess"), ("attName", a)]),
            ),
            TermKind::Method(m) => (
                reads(t)?,
                "mt",
                "method_call".to_string(),
                Kv::new(&[("type", "methodCall"), ("methodName", m)]),
            ),
            TermKind::Opaque(id) => (
                reads(t)?,
                "nat",
                "native".to_string(),
                Kv::new(&[("type", "nativeOpaque"), ("functionId", id)]),
            ),
            TermKind::Not => match self.plan(comp, &t.children[0], slot_cols, steps)? {
                Operand::Col(c) => (
                    vec![c],
                    "bool",
                    "!".to_string(),
                    Kv::new(&[("type", "bool_not")]),
                ),
                Operand::Const(_) => {
                    return Err(LambdaError::Unsupported(format!(
                        "negated constant in `{t}`"
                    )))
                }
            },
            TermKind::Binary(op) => {
                let a = self.plan(comp, &t.children[0], slot_cols, steps)?;
                let b = self.plan(comp, &t.children[1], slot_cols, steps)?;
                let prefix = if op.is_arithmetic() { "num" } else { "bool" };
                let kind = op.symbol().to_string();
                match (a, b) {
                    (Operand::Col(x), Operand::Col(y)) => {
                        let kv = match op {
                            BinOp::Eq => Kv::new(&[("type", "equalityCheck")]),
                            BinOp::Ne => Kv::new(&[("type", "equalityCheck"), ("op", "!=")]),
                            BinOp::And => Kv::new(&[("type", "bool_and")]),
                            BinOp::Or => Kv::new(&[("type", "bool_or")]),
                            o if o.is_arithmetic() => {
                                Kv::new(&[("type", "arithmetic"), ("op", o.symbol())])
                            }
                            o => Kv::new(&[("type", "comparison"), ("op", o.symbol())]),
                        };
                        (vec![x, y], prefix, kind, kv)
                    }
                    (Operand::Col(x), Operand::Const(c)) => {
                        (vec![x], prefix, kind, const_kv(*op, &c, false, t)?)
                    }
                    (Operand::Const(c), Operand::Col(y)) => {
                        (vec![y], prefix, kind, const_kv(*op, &c, true, t)?)
                    }
                    (Operand::Const(_), Operand::Const(_)) => {
                        return Err(LambdaError::Unsupported(format!(
                            "both operands of `{t}` are constants"
                        )))
                    }
                }
            }
        };
        let out = self.fresh_col(prefix);
        let stage = self.stage(comp, &kind);
        steps.push(Step {
            reads,
            out: out.clone(),
            stage,
            kv,
        });
        Ok(Operand::Col(out))
    }

    /// Emits the APPLY chain computing `terms` over `input`. Returns the
    /// final list and one column per term. Columns in `keep` survive to the
    /// end; everything else is dropped as soon as nothing reads it.
    fn apply_chain(
        &mut self,
        comp: &str,
        terms: &[&LambdaTerm],
        slot_cols: &[String],
        input: &str,
        keep: &[String],
    ) -> Result<(String, Vec<String>), LambdaError> {
        let mut steps = Vec::new();
        let mut results = Vec::new();
        for t in terms {
            t.check_types()?;
            match self.plan(comp, t, slot_cols, &mut steps)? {
                Operand::Col(c) => results.push(c),
                Operand::Const(_) => {
                    return Err(LambdaError::Unsupported(format!("constant result `{t}`")))
                }
            }
        }
        let mut live: HashSet<String> = keep.iter().chain(&results).cloned().collect();
        let mut needed_after = vec![HashSet::new(); steps.len()];
        for (i, s) in steps.iter().enumerate().rev() {
            needed_after[i] = live.clone();
            live.extend(s.reads.iter().cloned());
        }
        let mut cur = input.to_string();
        for (i, s) in steps.into_iter().enumerate() {
            let copy: Vec<String> = self
                .cols(&cur)
                .into_iter()
                .filter(|c| needed_after[i].contains(c))
                .collect();
            let mut cols = copy.clone();
            cols.push(s.out);
            let op = Op::Apply {
                input: ColRef {
                    list: cur.clone(),
                    cols: s.reads,
                },
                copy: ColRef {
                    list: cur.clone(),
                    cols: copy,
                },
                comp: comp.to_string(),
                stage: s.stage,
                kv: s.kv,
            };
            cur = self.emit(comp, cols, op);
        }
        Ok((cur, results))
    }

    /// Predicate chain plus FILTER; a missing or constant-true predicate
    /// emits nothing.
    fn filter(
        &mut self,
        comp: &str,
        pred: Option<&LambdaTerm>,
        slot_cols: &[String],
        input: &str,
    ) -> Result<String, LambdaError> {
        let Some(pred) = pred.filter(|p| !p.is_true()) else {
            return Ok(input.to_string());
        };
        if !matches!(pred.tag, TypeTag::Bool | TypeTag::Unknown) {
            return Err(LambdaError::TypeMismatch(format!(
                "selection predicate `{pred}` is not boolean"
            )));
        }
        let (list, res) = self.apply_chain(comp, &[pred], slot_cols, input, slot_cols)?;
        let copy: Vec<String> = self
            .cols(&list)
            .into_iter()
            .filter(|c| slot_cols.contains(c))
            .collect();
        let op = Op::Filter {
            input: ColRef {
                list: list.clone(),
                cols: res,
            },
            copy: ColRef {
                list,
                cols: copy.clone(),
            },
            comp: comp.to_string(),
            kv: Kv::default(),
        };
        Ok(self.emit(comp, copy, op))
    }

    /// Projection chain; the result selection holds only the projected column.
    fn project(
        &mut self,
        comp: &str,
        proj: Option<&LambdaTerm>,
        slot_cols: &[String],
        input: &str,
    ) -> Result<ColRef, LambdaError> {
        let Some(proj) = proj else {
            return Ok(ColRef {
                list: input.to_string(),
                cols: slot_cols.to_vec(),
            });
        };
        let (list, res) = self.apply_chain(comp, &[proj], slot_cols, input, &[])?;
        Ok(ColRef { list, cols: res })
    }
}

fn const_kv(op: BinOp, c: &Const, const_left: bool, t: &LambdaTerm) -> Result<Kv, LambdaError> {
    let text = c.render();
    let mut kv = if op.is_comparison() {
        let op = if const_left { op.flipped() } else { op };
        Kv::new(&[
            ("type", "const_comparison"),
            ("op", op.symbol()),
            ("const", &text),
        ])
    } else if op.is_arithmetic() {
        let mut kv = Kv::new(&[
            ("type", "const_arithmetic"),
            ("op", op.symbol()),
            ("const", &text),
        ]);
        if const_left && op == BinOp::Sub {
            kv.set("side", "left");
        }
        kv
    } else {
        return Err(LambdaError::Unsupported(format!(
            "constant operand of `{}` in `{t}`",
            op.symbol()
        )));
    };
    if c.needs_string_hint() {
        kv.set("constType", "string");
    }
    Ok(kv)
}

fn capitalize(s: &str) -> String {
    let mut cs = s.chars();
    match cs.next() {
        Some(f) => f.to_uppercase().chain(cs).collect(),
        None => String::new(),
    }
}

/// Name of the source list a reader over `column` produces.
pub fn source_list_name(column: &str) -> String {
    format!("In{}", capitalize(column))
}

/// Source list name to `(db, set)` for every reader of `g`.
pub fn source_bindings(g: &ComputationGraph) -> Vec<(String, String, String)> {
    g.comps()
        .iter()
        .filter_map(|c| match &c.kind {
            CompKind::Reader { db, set, column } => {
                Some((source_list_name(column), db.clone(), set.clone()))
            }
            _ => None,
        })
        .collect()
}

/// Compiles every computation of `g`, in creation order, into one program.
pub fn compile_to_tcap(g: &ComputationGraph) -> Result<Program, LambdaError> {
    let mut reserved = HashSet::new();
    for c in g.comps() {
        if let CompKind::Reader { column, .. } = &c.kind {
            if !reserved.insert(column.clone()) {
                return Err(LambdaError::DuplicateName(column.clone()));
            }
        }
    }
    let mut em = Emitter::new(reserved);
    let mut outputs: HashMap<CompId, ColRef> = HashMap::new();
    for (i, c) in g.comps().iter().enumerate() {
        let comp = c.name.as_str();
        let out = match &c.kind {
            CompKind::Reader { column, .. } => {
                let list = source_list_name(column);
                em.lists.insert(list.clone(), vec![column.clone()]);
                ColRef {
                    list,
                    cols: vec![column.clone()],
                }
            }
            CompKind::Selection {
                input,
                predicate,
                projection,
            } => {
                let inp = outputs[input].clone();
                let flt = em.filter(comp, predicate.as_ref(), &inp.cols, &inp.list)?;
                em.project(comp, projection.as_ref(), &inp.cols, &flt)?
            }
            CompKind::MultiSelect {
                input,
                predicate,
                projection,
            } => {
                let inp = outputs[input].clone();
                let flt = em.filter(comp, predicate.as_ref(), &inp.cols, &inp.list)?;
                let proj = em.project(comp, Some(projection), &inp.cols, &flt)?;
                let col = em.fresh_col("flat");
                let stage = em.stage(comp, "flatten");
                let op = Op::Apply {
                    input: proj.clone(),
                    copy: ColRef {
                        list: proj.list.clone(),
                        cols: Vec::new(),
                    },
                    comp: comp.to_string(),
                    stage,
                    kv: Kv::new(&[("type", "flatten")]),
                };
                let list = em.emit(comp, vec![col.clone()], op);
                ColRef {
                    list,
                    cols: vec![col],
                }
            }
            CompKind::Join {
                inputs,
                predicate,
                projection,
            } => {
                let sides: Vec<ColRef> = inputs.iter().map(|id| outputs[id].clone()).collect();
                let joined = compile_join(&mut em, comp, &sides, predicate)?;
                let flt = em.filter(comp, Some(predicate), &joined.cols, &joined.list)?;
                em.project(comp, projection.as_ref(), &joined.cols, &flt)?
            }
            CompKind::Aggregate {
                input,
                key,
                value,
                combine,
            } => {
                let inp = outputs[input].clone();
                let (list, res) = em.apply_chain(comp, &[key, value], &inp.cols, &inp.list, &[])?;
                let (k, v) = (em.fresh_col("key"), em.fresh_col("val"));
                let op = Op::Aggregate {
                    key: ColRef {
                        list: list.clone(),
                        cols: vec![res[0].clone()],
                    },
                    value: ColRef {
                        list,
                        cols: vec![res[1].clone()],
                    },
                    comp: comp.to_string(),
                    kv: Kv::new(&[("combine", combine)]),
                };
                let list = em.emit(comp, vec![k.clone(), v.clone()], op);
                ColRef {
                    list,
                    cols: vec![k, v],
                }
            }
            CompKind::Writer { input, db, set } => {
                let inp = outputs[input].clone();
                let op = Op::Output {
                    input: inp.clone(),
                    db: db.clone(),
                    set: set.clone(),
                    comp: comp.to_string(),
                    kv: Kv::default(),
                };
                let list = em.emit(comp, inp.cols.clone(), op);
                ColRef {
                    list,
                    cols: inp.cols,
                }
            }
        };
        outputs.insert(CompId(i), out);
    }
    let p = Program::new(em.stmts);
    let diags = validate(&p);
    if let Some(d) = diags.first() {
        return Err(LambdaError::InvalidGraph(format!(
            "compiled program is invalid: {d}"
        )));
    }
    Ok(p)
}

/// Left-deep hash joins in input order. Each step keys on the first
/// equality conjunct relating the joined prefix to the next input.
fn compile_join(
    em: &mut Emitter,
    comp: &str,
    sides: &[ColRef],
    pred: &LambdaTerm,
) -> Result<ColRef, LambdaError> {
    let all_cols: Vec<String> = sides.iter().flat_map(|s| s.cols.clone()).collect();
    let mut seen = HashSet::new();
    for c in &all_cols {
        if !seen.insert(c) {
            return Err(LambdaError::DuplicateName(format!(
                "column `{c}` appears in two join inputs"
            )));
        }
    }
    let arity = all_cols.len();
    for s in pred.all_slots() {
        if s >= arity {
            return Err(LambdaError::SlotOutOfRange {
                slot: s,
                arity,
                comp: comp.to_string(),
            });
        }
    }
    let conjuncts = pred.conjuncts();
    let mut acc = sides[0].clone();
    let mut lo = sides[0].cols.len();
    for side in &sides[1..] {
        let hi = lo + side.cols.len();
        let in_acc = |t: &LambdaTerm| {
            let s = t.all_slots();
            !s.is_empty() && s.iter().all(|&x| x < lo)
        };
        let in_side = |t: &LambdaTerm| {
            let s = t.all_slots();
            !s.is_empty() && s.iter().all(|&x| x >= lo && x < hi)
        };
        let key = conjuncts.iter().find_map(|c| match c.kind {
            TermKind::Binary(BinOp::Eq) => {
                let (a, b) = (&c.children[0], &c.children[1]);
                if in_acc(a) && in_side(b) {
                    Some((a, b))
                } else if in_acc(b) && in_side(a) {
                    Some((b, a))
                } else {
                    None
                }
            }
            _ => None,
        });
        let Some((lkey, rkey)) = key else {
            return Err(LambdaError::NoJoinKey(format!(
                "`{comp}` has no equality relating `{}` to earlier inputs",
                side.list
            )));
        };
        let left = hash_side(em, comp, lkey, &all_cols, &acc)?;
        let right = hash_side(em, comp, rkey, &all_cols, side)?;
        let mut cols = acc.cols.clone();
        cols.extend(side.cols.iter().cloned());
        let op = Op::Join {
            left_hash: ColRef {
                list: left.0.clone(),
                cols: vec![left.1],
            },
            left_copy: ColRef {
                list: left.0,
                cols: acc.cols.clone(),
            },
            right_hash: ColRef {
                list: right.0.clone(),
                cols: vec![right.1],
            },
            right_copy: ColRef {
                list: right.0,
                cols: side.cols.clone(),
            },
            comp: comp.to_string(),
            kv: Kv::default(),
        };
        let list = em.emit(comp, cols.clone(), op);
        acc = ColRef { list, cols };
        lo = hi;
    }
    Ok(acc)
}

/// Key chain plus HASH over one join side; returns the hashed list and its
/// hash column.
fn hash_side(
    em: &mut Emitter,
    comp: &str,
    key: &LambdaTerm,
    all_cols: &[String],
    side: &ColRef,
) -> Result<(String, String), LambdaError> {
    let (list, res) = em.apply_chain(comp, &[key], all_cols, &side.list, &side.cols)?;
    let h = em.fresh_col("hash");
    let copy: Vec<String> = em
        .cols(&list)
        .into_iter()
        .filter(|c| side.cols.contains(c))
        .collect();
    let mut cols = copy.clone();
    cols.push(h.clone());
    let op = Op::Hash {
        input: ColRef {
            list: list.clone(),
            cols: res,
        },
        copy: ColRef {
            list: list.clone(),
            cols: copy,
        },
        comp: comp.to_string(),
        kv: Kv::default(),
    };
    Ok((em.emit(comp, cols, op), h))
}

/// Compiles a single selection predicate over an existing list, as the
/// APPLY chain plus FILTER.
pub fn compile_selection_predicate(
    pred: &LambdaTerm,
    input: &ColRef,
    comp: &str,
) -> Result<Program, LambdaError> {
    let mut em = Emitter::new(input.cols.iter().cloned().collect());
    em.lists.insert(input.list.clone(), input.cols.clone());
    em.filter(comp, Some(pred), &input.cols, &input.list)?;
    Ok(Program::new(em.stmts))
}
