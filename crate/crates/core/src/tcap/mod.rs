//! The TCAP dataflow IR: statements over named vector lists.
//!
//! ```text
//! program := stmt*
//! stmt    := NAME '(' names ')' '<=' OP '(' args ')' ';'
//! input   := NAME '(' names ')'
//! kvlist  := '[' (pair (',' pair)*)? ']'
//! pair    := '(' QSTRING ',' QSTRING ')'
//! ```
//!
//! Statement forms:
//!
//! ```text
//! APPLY(in, copy, 'comp', 'stage', kv)
//! FILTER(pred, copy, 'comp', kv)
//! HASH(key, copy, 'comp', kv)
//! JOIN(lhash, lcopy, rhash, rcopy, 'comp', kv)
//! AGGREGATE(key, value, 'comp', kv)
//! OUTPUT(cols, 'db', 'set', 'comp', kv)
//! ```

mod canonical;
mod dag;
mod parse;
mod print;
mod validate;

pub use canonical::{canonicalize, erase_labels};
pub use dag::{build_dag, Dag, DagNode};
pub use parse::{parse, parse_unchecked};
pub use print::print;
pub use validate::validate;

use std::fmt;

/// Source position of a statement (1-based).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

/// `Name(col, col, ...)`: a selection of columns from a vector list.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ColRef {
    pub list: String,
    pub cols: Vec<String>,
}

impl ColRef {
    pub fn new(list: impl Into<String>, cols: &[&str]) -> Self {
        ColRef {
            list: list.into(),
            cols: cols.iter().map(|c| c.to_string()).collect(),
        }
    }
}

/// Ordered key/value annotations; values are plain strings.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Kv(pub Vec<(String, String)>);

impl Kv {
    pub fn new(pairs: &[(&str, &str)]) -> Self {
        Kv(pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        match self.0.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value.to_string(),
            None => self.0.push((key.to_string(), value.to_string())),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    Apply {
        input: ColRef,
        copy: ColRef,
        comp: String,
        stage: String,
        kv: Kv,
    },
    Filter {
        input: ColRef,
        copy: ColRef,
        comp: String,
        kv: Kv,
    },
    Hash {
        input: ColRef,
        copy: ColRef,
        comp: String,
        kv: Kv,
    },
    Join {
        left_hash: ColRef,
        left_copy: ColRef,
        right_hash: ColRef,
        right_copy: ColRef,
        comp: String,
        kv: Kv,
    },
    Aggregate {
        key: ColRef,
        value: ColRef,
        comp: String,
        kv: Kv,
    },
    Output {
        input: ColRef,
        db: String,
        set: String,
        comp: String,
        kv: Kv,
    },
}

impl Op {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Apply { .. } => "APPLY",
            Op::Filter { .. } => "FILTER",
            Op::Hash { .. } => "HASH",
            Op::Join { .. } => "JOIN",
            Op::Aggregate { .. } => "AGGREGATE",
            Op::Output { .. } => "OUTPUT",
        }
    }

    /// Every column selection the statement reads, in argument order.
    pub fn inputs(&self) -> Vec<&ColRef> {
        match self {
            Op::Apply { input, copy, .. }
            | Op::Filter { input, copy, .. }
            | Op::Hash { input, copy, .. } => {
                vec![input, copy]
            }
            Op::Join {
                left_hash,
                left_copy,
                right_hash,
                right_copy,
                ..
            } => {
                vec![left_hash, left_copy, right_hash, right_copy]
            }
            Op::Aggregate { key, value, .. } => vec![key, value],
            Op::Output { input, .. } => vec![input],
        }
    }

    pub fn inputs_mut(&mut self) -> Vec<&mut ColRef> {
        match self {
            Op::Apply { input, copy, .. }
            | Op::Filter { input, copy, .. }
            | Op::Hash { input, copy, .. } => {
                vec![input, copy]
            }
            Op::Join {
                left_hash,
                left_copy,
                right_hash,
                right_copy,
                ..
            } => {
                vec![left_hash, left_copy, right_hash, right_copy]
            }
            Op::Aggregate { key, value, .. } => vec![key, value],
            Op::Output { input, .. } => vec![input],
        }
    }

    /// Distinct input list names in first-use order.
    pub fn input_lists(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in self.inputs() {
            if !out.contains(&r.list.as_str()) {
                out.push(&r.list);
            }
        }
        out
    }

    pub fn comp(&self) -> &str {
        match self {
            Op::Apply { comp, .. }
            | Op::Filter { comp, .. }
            | Op::Hash { comp, .. }
            | Op::Join { comp, .. }
            | Op::Aggregate { comp, .. }
            | Op::Output { comp, .. } => comp,
        }
    }

    pub fn kv(&self) -> &Kv {
        match self {
            Op::Apply { kv, .. }
            | Op::Filter { kv, .. }
            | Op::Hash { kv, .. }
            | Op::Join { kv, .. }
            | Op::Aggregate { kv, .. }
            | Op::Output { kv, .. } => kv,
        }
    }

    pub fn kv_mut(&mut self) -> &mut Kv {
        match self {
            Op::Apply { kv, .. }
            | Op::Filter { kv, .. }
            | Op::Hash { kv, .. }
            | Op::Join { kv, .. }
            | Op::Aggregate { kv, .. }
            | Op::Output { kv, .. } => kv,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Stmt {
    pub out: String,
    pub cols: Vec<String>,
    pub op: Op,
    pub pos: Pos,
}

impl Stmt {
    pub fn new(out: impl Into<String>, cols: &[&str], op: Op) -> Self {
        Stmt {
            out: out.into(),
            cols: cols.iter().map(|c| c.to_string()).collect(),
            op,
            pos: Pos::default(),
        }
    }
}

/// Positions are ignored: two statements are equal when they print the same.
impl PartialEq for Stmt {
    fn eq(&self, other: &Self) -> bool {
        self.out == other.out && self.cols == other.cols && self.op == other.op
    }
}

impl Eq for Stmt {}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Program {
    pub stmts: Vec<Stmt>,
}

impl Program {
    pub fn new(stmts: Vec<Stmt>) -> Self {
        Program { stmts }
    }

    pub fn len(&self) -> usize {
        self.stmts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stmts.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.stmts.iter().position(|s| s.out == name)
    }

    pub fn get(&self, name: &str) -> Option<&Stmt> {
        self.stmts.iter().find(|s| s.out == name)
    }

    /// External inputs: referenced names that no statement defines, with the
    /// union of columns referenced on them, in first-use order.
    pub fn sources(&self) -> Vec<ColRef> {
        let mut out: Vec<ColRef> = Vec::new();
        for s in &self.stmts {
            for r in s.op.inputs() {
                if self.find(&r.list).is_some() {
                    continue;
                }
                let idx = match out.iter().position(|c| c.list == r.list) {
                    Some(i) => i,
                    None => {
                        out.push(ColRef {
                            list: r.list.clone(),
                            cols: Vec::new(),
                        });
                        out.len() - 1
                    }
                };
                for c in &r.cols {
                    if !out[idx].cols.contains(c) {
                        out[idx].cols.push(c.clone());
                    }
                }
            }
        }
        out
    }

    /// Statements that read `name`, in program order.
    pub fn consumers(&self, name: &str) -> Vec<usize> {
        (0..self.stmts.len())
            .filter(|&i| self.stmts[i].op.inputs().iter().any(|r| r.list == name))
            .collect()
    }
}

/// Source lists are named `In` or `In<Suffix>`.
pub fn is_source_name(name: &str) -> bool {
    name.starts_with("In")
        && name[2..]
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_')
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DiagCode {
    SyntaxError,
    UndefinedInput,
    DuplicateOutput,
    UnknownColumn,
    DuplicateColumn,
    ArityViolation,
    ColumnMismatch,
    InputMismatch,
    CyclicProgram,
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A problem found in a program, reported as `line:col: code: message`.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{}:{}: {code}: {message}", pos.line, pos.col)]
pub struct Diagnostic {
    pub code: DiagCode,
    pub pos: Pos,
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: DiagCode, pos: Pos, message: impl Into<String>) -> Self {
        Diagnostic {
            code,
            pos,
            message: message.into(),
        }
    }

    /// `file:line:col: code: message`
    pub fn render(&self, file: &str) -> String {
        format!("{file}:{self}")
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TcapError {
    #[error("{0}")]
    Diagnostic(#[from] Diagnostic),
    #[error("program has {} diagnostics, first: {}", .0.len(), .0[0])]
    Invalid(Vec<Diagnostic>),
}
