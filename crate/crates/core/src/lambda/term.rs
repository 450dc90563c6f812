use std::fmt;

use super::LambdaError;
use crate::engine::Udfs;

/// Coarse semantic type of a term's result.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TypeTag {
    Bool,
    Int,
    Double,
    Str,
    Handle(String),
    Unknown,
}

impl TypeTag {
    fn is_numeric(&self) -> Option<bool> {
        match self {
            TypeTag::Int | TypeTag::Double => Some(true),
            TypeTag::Unknown => None,
            _ => Some(false),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Const {
    Int(i64),
    Double(f64),
    Bool(bool),
    Str(String),
}

impl Const {
    pub fn tag(&self) -> TypeTag {
        match self {
            Const::Int(_) => TypeTag::Int,
            Const::Double(_) => TypeTag::Double,
            Const::Bool(_) => TypeTag::Bool,
            Const::Str(_) => TypeTag::Str,
        }
    }

    /// Text form stored in the `const` annotation.
    pub fn render(&self) -> String {
        match self {
            Const::Int(v) => v.to_string(),
            Const::Double(v) => format!("{v:?}"),
            Const::Bool(v) => v.to_string(),
            Const::Str(s) => s.clone(),
        }
    }

    /// Inverse of [`Const::render`]; `string_hint` forces a string reading.
    pub fn parse(text: &str, string_hint: bool) -> Const {
        if string_hint {
            return Const::Str(text.to_string());
        }
        if let Ok(v) = text.parse::<i64>() {
            return Const::Int(v);
        }
        if let Ok(v) = text.parse::<f64>() {
            return Const::Double(v);
        }
        match text {
            "true" => Const::Bool(true),
            "false" => Const::Bool(false),
            _ => Const::Str(text.to_string()),
        }
    }

    /// A string constant whose text would otherwise read back as another type.
    pub fn needs_string_hint(&self) -> bool {
        matches!(self, Const::Str(s) if !matches!(Const::parse(s, false), Const::Str(_)))
    }
}

impl From<i64> for Const {
    fn from(v: i64) -> Self {
        Const::Int(v)
    }
}

impl From<i32> for Const {
    fn from(v: i32) -> Self {
        Const::Int(v as i64)
    }
}

impl From<f64> for Const {
    fn from(v: f64) -> Self {
        Const::Double(v)
    }
}

impl From<bool> for Const {
    fn from(v: bool) -> Self {
        Const::Bool(v)
    }
}

impl From<&str> for Const {
    fn from(v: &str) -> Self {
        Const::Str(v.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Eq,
    Ne,
    Gt,
    Lt,
    Ge,
    Le,
    And,
    Or,
    Add,
    Sub,
    Mul,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Gt => ">",
            BinOp::Lt => "<",
            BinOp::Ge => ">=",
            BinOp::Le => "<=",
            BinOp::And => "&&",
            BinOp::Or => "||",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
        }
    }

    pub fn from_symbol(s: &str) -> Option<BinOp> {
        Some(match s {
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            ">" => BinOp::Gt,
            "<" => BinOp::Lt,
            ">=" => BinOp::Ge,
            "<=" => BinOp::Le,
            "&&" => BinOp::And,
            "||" => BinOp::Or,
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            _ => return None,
        })
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Gt | BinOp::Lt | BinOp::Ge | BinOp::Le
        )
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(self, BinOp::Add | BinOp::Sub | BinOp::Mul)
    }

    /// The comparison with its operands swapped: `a > b` iff `b < a`.
    pub fn flipped(self) -> BinOp {
        match self {
            BinOp::Gt => BinOp::Lt,
            BinOp::Lt => BinOp::Gt,
            BinOp::Ge => BinOp::Le,
            BinOp::Le => BinOp::Ge,
            other => other,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TermKind {
    Member(String),
    Method(String),
    /// A registered native function applied to one or more slots.
    Opaque(String),
    SelfRef,
    Binary(BinOp),
    Not,
    Const(Const),
}

/// A node of a lambda expression tree.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaTerm {
    pub kind: TermKind,
    pub children: Vec<LambdaTerm>,
    /// Input slots read by leaves; empty for inner nodes and constants.
    pub slots: Vec<usize>,
    pub tag: TypeTag,
}

pub fn make_lambda_from_member(slot: usize, att: &str) -> LambdaTerm {
    LambdaTerm::leaf(TermKind::Member(att.to_string()), vec![slot])
}

pub fn make_lambda_from_method(slot: usize, method: &str) -> LambdaTerm {
    LambdaTerm::leaf(TermKind::Method(method.to_string()), vec![slot])
}

pub fn make_lambda_from_self(slot: usize) -> LambdaTerm {
    LambdaTerm::leaf(TermKind::SelfRef, vec![slot])
}

/// A call to the registered native function `fn_id` on one slot.
pub fn make_lambda(udfs: &Udfs, slot: usize, fn_id: &str) -> Result<LambdaTerm, LambdaError> {
    make_lambda_multi(udfs, &[slot], fn_id)
}

/// A call to the registered native function `fn_id` on several slots.
pub fn make_lambda_multi(
    udfs: &Udfs,
    slots: &[usize],
    fn_id: &str,
) -> Result<LambdaTerm, LambdaError> {
    if !udfs.has_function(fn_id) {
        return Err(LambdaError::UnknownFunction(fn_id.to_string()));
    }
    Ok(LambdaTerm::leaf(
        TermKind::Opaque(fn_id.to_string()),
        slots.to_vec(),
    ))
}

pub fn constant(v: impl Into<Const>) -> LambdaTerm {
    let c = v.into();
    let tag = c.tag();
    LambdaTerm {
        kind: TermKind::Const(c),
        children: Vec::new(),
        slots: Vec::new(),
        tag,
    }
}

impl LambdaTerm {
    fn leaf(kind: TermKind, slots: Vec<usize>) -> LambdaTerm {
        LambdaTerm {
            kind,
            children: Vec::new(),
            slots,
            tag: TypeTag::Unknown,
        }
    }

    /// Declares the result type of a leaf.
    pub fn typed(mut self, tag: TypeTag) -> LambdaTerm {
        self.tag = tag;
        self
    }

    pub fn binary(self, op: BinOp, rhs: LambdaTerm) -> LambdaTerm {
        let tag = if op.is_arithmetic() {
            match (&self.tag, &rhs.tag) {
                (TypeTag::Int, TypeTag::Int) => TypeTag::Int,
                (TypeTag::Double, TypeTag::Int | TypeTag::Double)
                | (TypeTag::Int, TypeTag::Double) => TypeTag::Double,
                _ => TypeTag::Unknown,
            }
        } else {
            TypeTag::Bool
        };
        LambdaTerm {
            kind: TermKind::Binary(op),
            children: vec![self, rhs],
            slots: Vec::new(),
            tag,
        }
    }

    pub fn eq(self, rhs: LambdaTerm) -> LambdaTerm {
        self.binary(BinOp::Eq, rhs)
    }

    pub fn ne(self, rhs: LambdaTerm) -> LambdaTerm {
        self.binary(BinOp::Ne, rhs)
    }

    pub fn gt(self, rhs: LambdaTerm) -> LambdaTerm {
        self.binary(BinOp::Gt, rhs)
    }

    pub fn lt(self, rhs: LambdaTerm) -> LambdaTerm {
        self.binary(BinOp::Lt, rhs)
    }

    pub fn ge(self, rhs: LambdaTerm) -> LambdaTerm {
        self.binary(BinOp::Ge, rhs)
    }

    pub fn le(self, rhs: LambdaTerm) -> LambdaTerm {
        self.binary(BinOp::Le, rhs)
    }

    pub fn and(self, rhs: LambdaTerm) -> LambdaTerm {
        self.binary(BinOp::And, rhs)
    }

    pub fn or(self, rhs: LambdaTerm) -> LambdaTerm {
        self.binary(BinOp::Or, rhs)
    }

    pub fn plus(self, rhs: LambdaTerm) -> LambdaTerm {
        self.binary(BinOp::Add, rhs)
    }

    pub fn minus(self, rhs: LambdaTerm) -> LambdaTerm {
        self.binary(BinOp::Sub, rhs)
    }

    pub fn times(self, rhs: LambdaTerm) -> LambdaTerm {
        self.binary(BinOp::Mul, rhs)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> LambdaTerm {
        LambdaTerm {
            kind: TermKind::Not,
            children: vec![self],
            slots: Vec::new(),
            tag: TypeTag::Bool,
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(LambdaTerm::size).sum::<usize>()
    }

    /// Every slot read anywhere in the tree.
    pub fn all_slots(&self) -> Vec<usize> {
        let mut out = self.slots.clone();
        for c in &self.children {
            out.extend(c.all_slots());
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Splits a tree of `&&` nodes into its conjuncts, left to right.
    pub fn conjuncts(&self) -> Vec<&LambdaTerm> {
        match self.kind {
            TermKind::Binary(BinOp::And) => {
                let mut out = self.children[0].conjuncts();
                out.extend(self.children[1].conjuncts());
                out
            }
            _ => vec![self],
        }
    }

    pub fn is_true(&self) -> bool {
        matches!(self.kind, TermKind::Const(Const::Bool(true)))
    }

    /// Checks operand tags; unknown tags are accepted.
    pub fn check_types(&self) -> Result<(), LambdaError> {
        for c in &self.children {
            c.check_types()?;
        }
        let bad = |what: &str, t: &TypeTag| {
            Err(LambdaError::TypeMismatch(format!(
                "{what} applied to {t:?} operand in `{self}`"
            )))
        };
        match self.kind {
            TermKind::Binary(op) if op.is_arithmetic() => {
                for c in &self.children {
                    if c.tag.is_numeric() == Some(false) {
                        return bad("arithmetic", &c.tag);
                    }
                }
            }
            TermKind::Binary(BinOp::And | BinOp::Or) | TermKind::Not => {
                for c in &self.children {
                    if !matches!(c.tag, TypeTag::Bool | TypeTag::Unknown) {
                        return bad("boolean operator", &c.tag);
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

impl fmt::Display for LambdaTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let slots = || {
            self.slots
                .iter()
                .map(|s| format!("arg{s}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        match &self.kind {
            TermKind::Member(a) => write!(f, "{}.{a}", slots()),
            TermKind::Method(m) => write!(f, "{}.{m}()", slots()),
            TermKind::Opaque(id) => write!(f, "{id}({})", slots()),
            TermKind::SelfRef => write!(f, "{}", slots()),
            TermKind::Binary(op) => write!(
                f,
                "({} {} {})",
                self.children[0],
                op.symbol(),
                self.children[1]
            ),
            TermKind::Not => write!(f, "!{}", self.children[0]),
            TermKind::Const(c) => write!(f, "{}", c.render()),
        }
    }
}
