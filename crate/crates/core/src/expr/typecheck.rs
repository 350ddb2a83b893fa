use thiserror::Error;

use super::{Ast, Expr, Mutation, Predicate, Program, MAX_DEPTH, MAX_NODES};
use crate::item::{ItemSchema, Kind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("type error at {path}: expected {expected}, found {found}")]
    Mismatch {
        path: String,
        expected: String,
        found: String,
    },
    #[error("unknown field index {index} at {path}")]
    UnknownField { path: String, index: u16 },
    #[error("expression depth exceeds {MAX_DEPTH}")]
    DepthExceeded,
    #[error("expression exceeds {MAX_NODES} nodes")]
    TooManyNodes,
    #[error("mutation has no assignments")]
    EmptyMutation,
    #[error("field {field} assigned more than once")]
    DuplicateAssignment { field: u16 },
    #[error("{what} is not allowed at {path}")]
    NotAllowed { path: String, what: &'static str },
}

fn mismatch(path: &str, expected: impl ToString, found: impl ToString) -> TypeError {
    TypeError::Mismatch {
        path: path.to_string(),
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

struct Checker<'a> {
    schema: &'a ItemSchema,
    allow_arith: bool,
}

impl Checker<'_> {
    fn kind_of(&self, expr: &Expr, path: &str) -> Result<Kind, TypeError> {
        match expr {
            Expr::Field(index) => self
                .schema
                .field(*index as usize)
                .map(|f| f.ty.kind())
                .ok_or_else(|| TypeError::UnknownField {
                    path: path.to_string(),
                    index: *index,
                }),
            Expr::Lit(lit) => Ok(lit.kind()),
            Expr::Cmp(_, lhs, rhs) => {
                let l = self.kind_of(lhs, &format!("{path}.lhs"))?;
                let rhs_path = format!("{path}.rhs");
                let r = self.kind_of(rhs, &rhs_path)?;
                if l != r {
                    return Err(mismatch(&rhs_path, l, r));
                }
                Ok(Kind::Bool)
            }
            Expr::And(lhs, rhs) | Expr::Or(lhs, rhs) => {
                for (child, side) in [(lhs, "lhs"), (rhs, "rhs")] {
                    let child_path = format!("{path}.{side}");
                    let k = self.kind_of(child, &child_path)?;
                    if k != Kind::Bool {
                        return Err(mismatch(&child_path, Kind::Bool, k));
                    }
                }
                Ok(Kind::Bool)
            }
            Expr::Not(child) => {
                let child_path = format!("{path}.child");
                let k = self.kind_of(child, &child_path)?;
                if k != Kind::Bool {
                    return Err(mismatch(&child_path, Kind::Bool, k));
                }
                Ok(Kind::Bool)
            }
            Expr::Arith(_, lhs, rhs) => {
                if !self.allow_arith {
                    return Err(TypeError::NotAllowed {
                        path: path.to_string(),
                        what: "arithmetic in a predicate",
                    });
                }
                let lhs_path = format!("{path}.lhs");
                let l = self.kind_of(lhs, &lhs_path)?;
                if !l.is_numeric() {
                    return Err(mismatch(&lhs_path, "numeric", l));
                }
                let rhs_path = format!("{path}.rhs");
                let r = self.kind_of(rhs, &rhs_path)?;
                if l != r {
                    return Err(mismatch(&rhs_path, l, r));
                }
                Ok(l)
            }
        }
    }
}

fn check_size(expr: &Expr) -> Result<(), TypeError> {
    if expr.depth() > MAX_DEPTH {
        return Err(TypeError::DepthExceeded);
    }
    if expr.node_count() > MAX_NODES {
        return Err(TypeError::TooManyNodes);
    }
    Ok(())
}

pub fn typecheck_predicate(schema: &ItemSchema, pred: &Predicate) -> Result<(), TypeError> {
    check_size(&pred.0)?;
    let checker = Checker {
        schema,
        allow_arith: false,
    };
    let kind = checker.kind_of(&pred.0, "root")?;
    if kind != Kind::Bool {
        return Err(mismatch("root", Kind::Bool, kind));
    }
    Ok(())
}

pub fn typecheck_mutation(schema: &ItemSchema, mutation: &Mutation) -> Result<(), TypeError> {
    if mutation.assignments.is_empty() {
        return Err(TypeError::EmptyMutation);
    }
    let checker = Checker {
        schema,
        allow_arith: true,
    };
    let mut nodes = 0;
    for (i, assignment) in mutation.assignments.iter().enumerate() {
        let path = format!("assign[{i}]");
        if mutation.assignments[..i].iter().any(|a| a.field == assignment.field) {
            return Err(TypeError::DuplicateAssignment {
                field: assignment.field,
            });
        }
        let target = schema
            .field(assignment.field as usize)
            .ok_or_else(|| TypeError::UnknownField {
                path: path.clone(),
                index: assignment.field,
            })?;
        check_size(&assignment.expr)?;
        nodes += assignment.expr.node_count();
        if nodes > MAX_NODES {
            return Err(TypeError::TooManyNodes);
        }
        let kind = checker.kind_of(&assignment.expr, &format!("{path}.expr"))?;
        if kind != target.ty.kind() {
            return Err(mismatch(&format!("{path}.expr"), target.ty.kind(), kind));
        }
    }
    Ok(())
}

pub fn typecheck_program(schema: &ItemSchema, program: &Program) -> Result<(), TypeError> {
    let (index, allow_utf8) = match *program {
        Program::Count => return Ok(()),
        Program::Sum(i) | Program::Min(i) | Program::Max(i) => (i, false),
        Program::SortBy(i, _) => (i, true),
    };
    let field = schema.field(index as usize).ok_or_else(|| TypeError::UnknownField {
        path: "program".to_string(),
        index,
    })?;
    let kind = field.ty.kind();
    if kind.is_numeric() || (allow_utf8 && kind == Kind::Utf8) {
        Ok(())
    } else if allow_utf8 {
        Err(mismatch("program", "numeric or utf8", kind))
    } else {
        Err(mismatch("program", "numeric", kind))
    }
}

pub fn typecheck(schema: &ItemSchema, ast: &Ast) -> Result<(), TypeError> {
    match ast {
        Ast::Predicate(p) => typecheck_predicate(schema, p),
        Ast::Mutation(m) => typecheck_mutation(schema, m),
        Ast::Program(p) => typecheck_program(schema, p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{ArithOp, Assignment, CmpOp, SortDir};

    fn weather() -> ItemSchema {
        ItemSchema::parse_spec("city:utf8(16),temp:f64,alert:bool").unwrap()
    }

    #[test]
    fn well_typed_comparison() {
        let p = Predicate(Expr::cmp(CmpOp::Gt, Expr::field(1), Expr::f64(30.0)));
        assert_eq!(typecheck_predicate(&weather(), &p), Ok(()));
    }

    #[test]
    fn utf8_against_f64_is_rejected() {
        let p = Predicate(Expr::cmp(CmpOp::Gt, Expr::field(0), Expr::f64(30.0)));
        assert_eq!(
            typecheck_predicate(&weather(), &p),
            Err(TypeError::Mismatch {
                path: "root.rhs".into(),
                expected: "utf8".into(),
                found: "f64".into()
            })
        );
    }

    #[test]
    fn unknown_field() {
        let p = Predicate(Expr::cmp(CmpOp::Eq, Expr::field(9), Expr::f64(1.0)));
        assert_eq!(
            typecheck_predicate(&weather(), &p),
            Err(TypeError::UnknownField {
                path: "root.lhs".into(),
                index: 9
            })
        );
    }

    #[test]
    fn root_must_be_bool() {
        let p = Predicate(Expr::field(1));
        assert!(matches!(typecheck_predicate(&weather(), &p), Err(TypeError::Mismatch { .. })));
        assert_eq!(typecheck_predicate(&weather(), &Predicate(Expr::field(2))), Ok(()));
    }

    #[test]
    fn logical_children_must_be_bool() {
        let p = Predicate(Expr::and(Expr::field(2), Expr::field(1)));
        assert!(matches!(
            typecheck_predicate(&weather(), &p),
            Err(TypeError::Mismatch { path, .. }) if path == "root.rhs"
        ));
    }

    #[test]
    fn arithmetic_only_in_mutations() {
        let sum = Expr::arith(ArithOp::Add, Expr::field(1), Expr::f64(1.0));
        let p = Predicate(Expr::cmp(CmpOp::Gt, sum.clone(), Expr::f64(1.0)));
        assert!(matches!(typecheck_predicate(&weather(), &p), Err(TypeError::NotAllowed { .. })));
        assert_eq!(typecheck_mutation(&weather(), &Mutation::assign(1, sum)), Ok(()));
    }

    #[test]
    fn mutation_rules() {
        let s = weather();
        assert_eq!(typecheck_mutation(&s, &Mutation::new(vec![])), Err(TypeError::EmptyMutation));
        assert!(matches!(
            typecheck_mutation(&s, &Mutation::assign(1, Expr::u64(1))),
            Err(TypeError::Mismatch { .. })
        ));
        let twice = Mutation::new(vec![
            Assignment { field: 2, expr: Expr::bool(true) },
            Assignment { field: 2, expr: Expr::bool(false) },
        ]);
        assert_eq!(typecheck_mutation(&s, &twice), Err(TypeError::DuplicateAssignment { field: 2 }));
        let mixed = Expr::arith(ArithOp::Add, Expr::field(1), Expr::u64(1));
        assert!(matches!(typecheck_mutation(&s, &Mutation::assign(1, mixed)), Err(TypeError::Mismatch { .. })));
        let on_bool = Expr::arith(ArithOp::Add, Expr::field(2), Expr::bool(true));
        assert!(matches!(typecheck_mutation(&s, &Mutation::assign(2, on_bool)), Err(TypeError::Mismatch { .. })));
    }

    #[test]
    fn program_rules() {
        let s = weather();
        assert_eq!(typecheck_program(&s, &Program::Count), Ok(()));
        assert_eq!(typecheck_program(&s, &Program::Sum(1)), Ok(()));
        assert!(typecheck_program(&s, &Program::Sum(0)).is_err());
        assert_eq!(typecheck_program(&s, &Program::SortBy(0, SortDir::Asc)), Ok(()));
        assert!(typecheck_program(&s, &Program::SortBy(2, SortDir::Asc)).is_err());
        assert!(matches!(typecheck_program(&s, &Program::Min(7)), Err(TypeError::UnknownField { .. })));
    }

    #[test]
    fn depth_limit() {
        let mut e = Expr::field(2);
        for _ in 0..64 {
            e = Expr::not(e);
        }
        assert_eq!(typecheck_predicate(&weather(), &Predicate(e)), Err(TypeError::DepthExceeded));
    }
}
