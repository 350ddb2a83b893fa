use std::cmp::Ordering;

use thiserror::Error;

use super::{ArithOp, CmpOp, Expr, Literal, Mutation, Predicate};
use crate::item::{validate_item, Item, ItemSchema, ValidationError, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("integer division by zero")]
    DivByZero,
    #[error("integer overflow")]
    Overflow,
    #[error("ill-typed expression reached the evaluator")]
    IllTyped,
    #[error("mutation result is invalid: {0}")]
    Validation(#[from] ValidationError),
}

/// Borrowed view of a scalar so predicate evaluation never clones strings.
#[derive(Debug, Clone, Copy)]
enum Operand<'a> {
    U64(u64),
    I64(i64),
    F64(f64),
    Bool(bool),
    Str(&'a str),
    Bytes(&'a [u8]),
}

impl<'a> Operand<'a> {
    fn of_value(v: &'a Value) -> Self {
        match v {
            Value::U64(x) => Operand::U64(*x),
            Value::I64(x) => Operand::I64(*x),
            Value::F64(x) => Operand::F64(*x),
            Value::Bool(x) => Operand::Bool(*x),
            Value::Utf8(s) => Operand::Str(s),
            Value::Bytes(b) => Operand::Bytes(b),
        }
    }

    fn of_literal(l: &'a Literal) -> Self {
        match l {
            Literal::U64(x) => Operand::U64(*x),
            Literal::I64(x) => Operand::I64(*x),
            Literal::F64(x) => Operand::F64(x.0),
            Literal::Bool(x) => Operand::Bool(*x),
            Literal::Utf8(s) => Operand::Str(s),
        }
    }

    /// `None` for incomparable pairs: NaN, or mismatched kinds.
    fn compare(self, other: Operand<'_>) -> Option<Ordering> {
        match (self, other) {
            (Operand::U64(a), Operand::U64(b)) => Some(a.cmp(&b)),
            (Operand::I64(a), Operand::I64(b)) => Some(a.cmp(&b)),
            (Operand::F64(a), Operand::F64(b)) => a.partial_cmp(&b),
            (Operand::Bool(a), Operand::Bool(b)) => Some(a.cmp(&b)),
            (Operand::Str(a), Operand::Str(b)) => Some(a.as_bytes().cmp(b.as_bytes())),
            (Operand::Bytes(a), Operand::Bytes(b)) => Some(a.cmp(b)),
            _ => None,
        }
    }
}

fn operand<'a>(expr: &'a Expr, item: &'a Item) -> Option<Operand<'a>> {
    match expr {
        Expr::Field(i) => item.get(*i as usize).map(Operand::of_value),
        Expr::Lit(l) => Some(Operand::of_literal(l)),
        Expr::Cmp(..) | Expr::And(..) | Expr::Or(..) | Expr::Not(..) => {
            Some(Operand::Bool(eval_bool(expr, item)))
        }
        Expr::Arith(..) => None,
    }
}

fn test(op: CmpOp, ord: Option<Ordering>) -> bool {
    match op {
        CmpOp::Eq => ord == Some(Ordering::Equal),
        CmpOp::Ne => ord != Some(Ordering::Equal),
        CmpOp::Lt => ord == Some(Ordering::Less),
        CmpOp::Le => matches!(ord, Some(Ordering::Less | Ordering::Equal)),
        CmpOp::Gt => ord == Some(Ordering::Greater),
        CmpOp::Ge => matches!(ord, Some(Ordering::Greater | Ordering::Equal)),
    }
}

fn eval_bool(expr: &Expr, item: &Item) -> bool {
    match expr {
        Expr::Cmp(op, lhs, rhs) => match (operand(lhs, item), operand(rhs, item)) {
            (Some(l), Some(r)) => test(*op, l.compare(r)),
            _ => false,
        },
        Expr::And(lhs, rhs) => eval_bool(lhs, item) && eval_bool(rhs, item),
        Expr::Or(lhs, rhs) => eval_bool(lhs, item) || eval_bool(rhs, item),
        Expr::Not(child) => !eval_bool(child, item),
        Expr::Field(i) => matches!(item.get(*i as usize), Some(Value::Bool(true))),
        Expr::Lit(Literal::Bool(b)) => *b,
        Expr::Lit(_) | Expr::Arith(..) => false,
    }
}

/// Evaluates a typechecked predicate. Comparisons involving NaN are false,
/// except `!=`, which is true.
pub fn eval_predicate(item: &Item, pred: &Predicate) -> bool {
    eval_bool(&pred.0, item)
}

fn arith(op: ArithOp, lhs: Value, rhs: Value) -> Result<Value, EvalError> {
    Ok(match (lhs, rhs) {
        (Value::U64(a), Value::U64(b)) => Value::U64(match op {
            ArithOp::Add => a.checked_add(b).ok_or(EvalError::Overflow)?,
            ArithOp::Sub => a.checked_sub(b).ok_or(EvalError::Overflow)?,
            ArithOp::Mul => a.checked_mul(b).ok_or(EvalError::Overflow)?,
            ArithOp::Div if b == 0 => return Err(EvalError::DivByZero),
            ArithOp::Div => a / b,
        }),
        (Value::I64(a), Value::I64(b)) => Value::I64(match op {
            ArithOp::Add => a.checked_add(b).ok_or(EvalError::Overflow)?,
            ArithOp::Sub => a.checked_sub(b).ok_or(EvalError::Overflow)?,
            ArithOp::Mul => a.checked_mul(b).ok_or(EvalError::Overflow)?,
            ArithOp::Div if b == 0 => return Err(EvalError::DivByZero),
            ArithOp::Div => a.checked_div(b).ok_or(EvalError::Overflow)?,
        }),
        (Value::F64(a), Value::F64(b)) => Value::F64(match op {
            ArithOp::Add => a + b,
            ArithOp::Sub => a - b,
            ArithOp::Mul => a * b,
            ArithOp::Div => a / b,
        }),
        _ => return Err(EvalError::IllTyped),
    })
}

pub fn eval_expr(expr: &Expr, item: &Item) -> Result<Value, EvalError> {
    match expr {
        Expr::Field(i) => item.get(*i as usize).cloned().ok_or(EvalError::IllTyped),
        Expr::Lit(l) => Ok(l.to_value()),
        Expr::Arith(op, lhs, rhs) => arith(*op, eval_expr(lhs, item)?, eval_expr(rhs, item)?),
        Expr::Cmp(..) | Expr::And(..) | Expr::Or(..) | Expr::Not(..) => {
            Ok(Value::Bool(eval_bool(expr, item)))
        }
    }
}

/// Applies a typechecked mutation. Every right-hand side is evaluated against
/// the original item before any assignment lands; the result is revalidated
/// against the schema (a `Utf8` copy may exceed the target's bound).
pub fn eval_mutation(schema: &ItemSchema, item: &Item, mutation: &Mutation) -> Result<Item, EvalError> {
    let new_values = mutation
        .assignments
        .iter()
        .map(|a| eval_expr(&a.expr, item))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = item.clone();
    for (assignment, value) in mutation.assignments.iter().zip(new_values) {
        if assignment.field as usize >= out.len() {
            return Err(EvalError::IllTyped);
        }
        out.set(assignment.field as usize, value);
    }
    validate_item(schema, &out)?;
    Ok(out)
}
