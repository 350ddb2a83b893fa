//! Serializable expression language shipped to the device: predicates select
//! items, mutations rewrite them, programs aggregate or sort them.
//!
//! Comparisons require operands of the same kind (no numeric coercion).
//! Integer arithmetic is checked; `F64` follows IEEE-754.

mod eval;
mod parse;
mod tlv;
mod typecheck;

pub use eval::{eval_expr, eval_mutation, eval_predicate, EvalError};
pub use parse::{parse_mutation, parse_predicate, parse_program, ParseError};
pub use tlv::{
    decode_ast, decode_mutation, decode_predicate, decode_program, encode_ast, encode_mutation_bytes,
    encode_predicate, encode_program_bytes, AstDecodeError,
};
pub(crate) use tlv::{decode_literal, encode_literal};
pub use typecheck::{typecheck, typecheck_mutation, typecheck_predicate, typecheck_program, TypeError};

use std::fmt;

use crate::item::{Kind, Value};

pub const MAX_DEPTH: usize = 64;
pub const MAX_NODES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub const ALL: [ArithOp; 4] = [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div];

    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

/// Literal constants that can appear in an expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    U64(u64),
    I64(i64),
    F64(F64Bits),
    Bool(bool),
    Utf8(String),
}

/// `f64` compared and hashed by bit pattern so ASTs have structural equality.
#[derive(Debug, Clone, Copy)]
pub struct F64Bits(pub f64);

impl PartialEq for F64Bits {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl Eq for F64Bits {}

impl std::hash::Hash for F64Bits {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state)
    }
}

impl Literal {
    pub fn kind(&self) -> Kind {
        match self {
            Literal::U64(_) => Kind::U64,
            Literal::I64(_) => Kind::I64,
            Literal::F64(_) => Kind::F64,
            Literal::Bool(_) => Kind::Bool,
            Literal::Utf8(_) => Kind::Utf8,
        }
    }

    pub fn to_value(&self) -> Value {
        match self {
            Literal::U64(v) => Value::U64(*v),
            Literal::I64(v) => Value::I64(*v),
            Literal::F64(v) => Value::F64(v.0),
            Literal::Bool(v) => Value::Bool(*v),
            Literal::Utf8(v) => Value::Utf8(v.clone()),
        }
    }

    /// `None` for `Bytes`, which has no literal form.
    pub fn from_value(value: &Value) -> Option<Self> {
        Some(match value {
            Value::U64(v) => Literal::U64(*v),
            Value::I64(v) => Literal::I64(*v),
            Value::F64(v) => Literal::F64(F64Bits(*v)),
            Value::Bool(v) => Literal::Bool(*v),
            Value::Utf8(v) => Literal::Utf8(v.clone()),
            Value::Bytes(_) => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Field(u16),
    Lit(Literal),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Arith(ArithOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn field(index: u16) -> Self {
        Expr::Field(index)
    }

    pub fn u64(v: u64) -> Self {
        Expr::Lit(Literal::U64(v))
    }

    pub fn i64(v: i64) -> Self {
        Expr::Lit(Literal::I64(v))
    }

    pub fn f64(v: f64) -> Self {
        Expr::Lit(Literal::F64(F64Bits(v)))
    }

    pub fn bool(v: bool) -> Self {
        Expr::Lit(Literal::Bool(v))
    }

    pub fn utf8(v: impl Into<String>) -> Self {
        Expr::Lit(Literal::Utf8(v.into()))
    }

    pub fn cmp(op: CmpOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Cmp(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn arith(op: ArithOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Arith(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn and(lhs: Expr, rhs: Expr) -> Self {
        Expr::And(Box::new(lhs), Box::new(rhs))
    }

    pub fn or(lhs: Expr, rhs: Expr) -> Self {
        Expr::Or(Box::new(lhs), Box::new(rhs))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(child: Expr) -> Self {
        Expr::Not(Box::new(child))
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Field(_) | Expr::Lit(_) => 1,
            Expr::Not(c) => 1 + c.node_count(),
            Expr::Cmp(_, l, r) | Expr::And(l, r) | Expr::Or(l, r) | Expr::Arith(_, l, r) => {
                1 + l.node_count() + r.node_count()
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Field(_) | Expr::Lit(_) => 1,
            Expr::Not(c) => 1 + c.depth(),
            Expr::Cmp(_, l, r) | Expr::And(l, r) | Expr::Or(l, r) | Expr::Arith(_, l, r) => {
                1 + l.depth().max(r.depth())
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Field(i) => write!(f, "${i}"),
            Expr::Lit(Literal::U64(v)) => write!(f, "{v}"),
            Expr::Lit(Literal::I64(v)) => write!(f, "{v}i"),
            Expr::Lit(Literal::F64(v)) => write!(f, "{:?}", v.0),
            Expr::Lit(Literal::Bool(v)) => write!(f, "{v}"),
            Expr::Lit(Literal::Utf8(v)) => write!(f, "{v:?}"),
            Expr::Cmp(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::Arith(op, l, r) => write!(f, "({l} {} {r})", op.symbol()),
            Expr::And(l, r) => write!(f, "({l} && {r})"),
            Expr::Or(l, r) => write!(f, "({l} || {r})"),
            Expr::Not(c) => write!(f, "!{c}"),
        }
    }
}

/// A Bool-typed expression selecting items.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Predicate(pub Expr);

impl Predicate {
    pub fn new(expr: Expr) -> Self {
        Self(expr)
    }

    pub fn always(value: bool) -> Self {
        Self(Expr::bool(value))
    }

    pub fn expr(&self) -> &Expr {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    pub field: u16,
    pub expr: Expr,
}

/// Simultaneous assignments: every right-hand side sees the original item.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mutation {
    pub assignments: Vec<Assignment>,
}

impl Mutation {
    pub fn new(assignments: Vec<Assignment>) -> Self {
        Self { assignments }
    }

    pub fn assign(field: u16, expr: Expr) -> Self {
        Self::new(vec![Assignment { field, expr }])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SortDir {
    Asc,
    Desc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Program {
    Count,
    Sum(u16),
    Min(u16),
    Max(u16),
    SortBy(u16, SortDir),
}

impl Program {
    /// Whether the program reduces to a single scalar.
    pub fn is_scalar(self) -> bool {
        !matches!(self, Program::SortBy(..))
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Program::Count => f.write_str("count()"),
            Program::Sum(i) => write!(f, "sum(${i})"),
            Program::Min(i) => write!(f, "min(${i})"),
            Program::Max(i) => write!(f, "max(${i})"),
            Program::SortBy(i, SortDir::Asc) => write!(f, "sortby(${i}, asc)"),
            Program::SortBy(i, SortDir::Desc) => write!(f, "sortby(${i}, desc)"),
        }
    }
}

/// Any of the three shippable method kinds.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Ast {
    Predicate(Predicate),
    Mutation(Mutation),
    Program(Program),
}
