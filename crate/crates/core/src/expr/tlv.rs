//! Preorder tag-length-value encoding of expression ASTs.

use thiserror::Error;

use super::{
    ArithOp, Assignment, Ast, CmpOp, Expr, F64Bits, Literal, Mutation, Predicate, Program, SortDir,
    MAX_DEPTH, MAX_NODES,
};
use crate::codec::{Put, Reader, Truncated};

const FIELD_REF: u8 = 0x01;
const LIT_U64: u8 = 0x02;
const LIT_I64: u8 = 0x03;
const LIT_F64: u8 = 0x04;
const LIT_BOOL: u8 = 0x05;
const LIT_UTF8: u8 = 0x06;
const EQ: u8 = 0x10;
const NE: u8 = 0x11;
const LT: u8 = 0x12;
const LE: u8 = 0x13;
const GT: u8 = 0x14;
const GE: u8 = 0x15;
const AND: u8 = 0x20;
const OR: u8 = 0x21;
const NOT: u8 = 0x22;
const ADD: u8 = 0x30;
const SUB: u8 = 0x31;
const MUL: u8 = 0x32;
const DIV: u8 = 0x33;
const COUNT: u8 = 0x40;
const SUM: u8 = 0x41;
const MIN: u8 = 0x42;
const MAX: u8 = 0x43;
const SORT_BY: u8 = 0x44;
const MUTATION: u8 = 0x50;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AstDecodeError {
    #[error("unknown node tag {0:#04x}")]
    BadTag(u8),
    #[error("input truncated")]
    Truncated,
    #[error("trailing bytes after AST")]
    TrailingBytes,
    #[error("AST depth exceeds {MAX_DEPTH}")]
    DepthExceeded,
    #[error("AST exceeds {MAX_NODES} nodes")]
    TooManyNodes,
    #[error("string literal is not valid UTF-8")]
    InvalidUtf8,
    #[error("bool literal byte {0:#04x} is not 0 or 1")]
    BadBool(u8),
    #[error("sort direction byte {0:#04x} is not 0 or 1")]
    BadDirection(u8),
    #[error("expected a {expected}, found another AST kind")]
    WrongKind { expected: &'static str },
}

impl From<Truncated> for AstDecodeError {
    fn from(_: Truncated) -> Self {
        AstDecodeError::Truncated
    }
}

fn cmp_tag(op: CmpOp) -> u8 {
    match op {
        CmpOp::Eq => EQ,
        CmpOp::Ne => NE,
        CmpOp::Lt => LT,
        CmpOp::Le => LE,
        CmpOp::Gt => GT,
        CmpOp::Ge => GE,
    }
}

fn arith_tag(op: ArithOp) -> u8 {
    match op {
        ArithOp::Add => ADD,
        ArithOp::Sub => SUB,
        ArithOp::Mul => MUL,
        ArithOp::Div => DIV,
    }
}

pub(crate) fn encode_literal(lit: &Literal, out: &mut Vec<u8>) {
    match lit {
        Literal::U64(v) => {
            out.put_u8(LIT_U64);
            out.put_u64(*v);
        }
        Literal::I64(v) => {
            out.put_u8(LIT_I64);
            out.put_i64(*v);
        }
        Literal::F64(v) => {
            out.put_u8(LIT_F64);
            out.put_f64(v.0);
        }
        Literal::Bool(v) => {
            out.put_u8(LIT_BOOL);
            out.put_u8(*v as u8);
        }
        Literal::Utf8(v) => {
            out.put_u8(LIT_UTF8);
            out.put_bytes32(v.as_bytes());
        }
    }
}

fn encode_expr(expr: &Expr, out: &mut Vec<u8>) {
    match expr {
        Expr::Field(i) => {
            out.put_u8(FIELD_REF);
            out.put_u16(*i);
        }
        Expr::Lit(lit) => encode_literal(lit, out),
        Expr::Cmp(op, l, r) => {
            out.put_u8(cmp_tag(*op));
            encode_expr(l, out);
            encode_expr(r, out);
        }
        Expr::Arith(op, l, r) => {
            out.put_u8(arith_tag(*op));
            encode_expr(l, out);
            encode_expr(r, out);
        }
        Expr::And(l, r) => {
            out.put_u8(AND);
            encode_expr(l, out);
            encode_expr(r, out);
        }
        Expr::Or(l, r) => {
            out.put_u8(OR);
            encode_expr(l, out);
            encode_expr(r, out);
        }
        Expr::Not(c) => {
            out.put_u8(NOT);
            encode_expr(c, out);
        }
    }
}

fn encode_program(program: &Program, out: &mut Vec<u8>) {
    match *program {
        Program::Count => out.put_u8(COUNT),
        Program::Sum(f) => {
            out.put_u8(SUM);
            out.put_u16(f);
        }
        Program::Min(f) => {
            out.put_u8(MIN);
            out.put_u16(f);
        }
        Program::Max(f) => {
            out.put_u8(MAX);
            out.put_u16(f);
        }
        Program::SortBy(f, dir) => {
            out.put_u8(SORT_BY);
            out.put_u16(f);
            out.put_u8(match dir {
                SortDir::Asc => 0,
                SortDir::Desc => 1,
            });
        }
    }
}

fn encode_mutation(mutation: &Mutation, out: &mut Vec<u8>) {
    out.put_u8(MUTATION);
    out.put_u16(mutation.assignments.len() as u16);
    for a in &mutation.assignments {
        out.put_u16(a.field);
        encode_expr(&a.expr, out);
    }
}

pub fn encode_ast(ast: &Ast) -> Vec<u8> {
    let mut out = Vec::new();
    match ast {
        Ast::Predicate(p) => encode_expr(&p.0, &mut out),
        Ast::Mutation(m) => encode_mutation(m, &mut out),
        Ast::Program(p) => encode_program(p, &mut out),
    }
    out
}

pub fn encode_predicate(pred: &Predicate) -> Vec<u8> {
    let mut out = Vec::new();
    encode_expr(&pred.0, &mut out);
    out
}

pub fn encode_mutation_bytes(mutation: &Mutation) -> Vec<u8> {
    let mut out = Vec::new();
    encode_mutation(mutation, &mut out);
    out
}

pub fn encode_program_bytes(program: &Program) -> Vec<u8> {
    let mut out = Vec::new();
    encode_program(program, &mut out);
    out
}

struct Decoder<'a, 'b> {
    r: &'b mut Reader<'a>,
    nodes: usize,
}

impl Decoder<'_, '_> {
    fn expr(&mut self, depth: usize) -> Result<Expr, AstDecodeError> {
        if depth > MAX_DEPTH {
            return Err(AstDecodeError::DepthExceeded);
        }
        self.nodes += 1;
        if self.nodes > MAX_NODES {
            return Err(AstDecodeError::TooManyNodes);
        }
        let tag = self.r.u8()?;
        let binary = |d: &mut Self| -> Result<(Box<Expr>, Box<Expr>), AstDecodeError> {
            let l = d.expr(depth + 1)?;
            let r = d.expr(depth + 1)?;
            Ok((Box::new(l), Box::new(r)))
        };
        Ok(match tag {
            FIELD_REF => Expr::Field(self.r.u16()?),
            LIT_U64..=LIT_UTF8 => Expr::Lit(decode_literal_body(tag, self.r)?),
            EQ..=GE => {
                let op = CmpOp::ALL[(tag - EQ) as usize];
                let (l, r) = binary(self)?;
                Expr::Cmp(op, l, r)
            }
            ADD..=DIV => {
                let op = ArithOp::ALL[(tag - ADD) as usize];
                let (l, r) = binary(self)?;
                Expr::Arith(op, l, r)
            }
            AND => {
                let (l, r) = binary(self)?;
                Expr::And(l, r)
            }
            OR => {
                let (l, r) = binary(self)?;
                Expr::Or(l, r)
            }
            NOT => Expr::Not(Box::new(self.expr(depth + 1)?)),
            other => return Err(AstDecodeError::BadTag(other)),
        })
    }
}

fn decode_literal_body(tag: u8, r: &mut Reader<'_>) -> Result<Literal, AstDecodeError> {
    Ok(match tag {
        LIT_U64 => Literal::U64(r.u64()?),
        LIT_I64 => Literal::I64(r.i64()?),
        LIT_F64 => Literal::F64(F64Bits(r.f64()?)),
        LIT_BOOL => match r.u8()? {
            0 => Literal::Bool(false),
            1 => Literal::Bool(true),
            b => return Err(AstDecodeError::BadBool(b)),
        },
        LIT_UTF8 => {
            let raw = r.bytes32()?;
            Literal::Utf8(
                std::str::from_utf8(raw)
                    .map_err(|_| AstDecodeError::InvalidUtf8)?
                    .to_owned(),
            )
        }
        other => return Err(AstDecodeError::BadTag(other)),
    })
}

pub(crate) fn decode_literal(r: &mut Reader<'_>) -> Result<Literal, AstDecodeError> {
    let tag = r.u8()?;
    decode_literal_body(tag, r)
}

fn decode_from(r: &mut Reader<'_>) -> Result<Ast, AstDecodeError> {
    let tag = *r.clone().take(1)?.first().expect("one byte");
    match tag {
        MUTATION => {
            r.u8()?;
            let count = r.u16()? as usize;
            let mut assignments = Vec::with_capacity(r.capacity_hint(count, 4));
            let mut d = Decoder { r, nodes: 0 };
            for _ in 0..count {
                let field = d.r.u16()?;
                let expr = d.expr(1)?;
                assignments.push(Assignment { field, expr });
            }
            Ok(Ast::Mutation(Mutation { assignments }))
        }
        COUNT..=SORT_BY => {
            r.u8()?;
            Ok(Ast::Program(match tag {
                COUNT => Program::Count,
                SUM => Program::Sum(r.u16()?),
                MIN => Program::Min(r.u16()?),
                MAX => Program::Max(r.u16()?),
                _ => {
                    let field = r.u16()?;
                    let dir = match r.u8()? {
                        0 => SortDir::Asc,
                        1 => SortDir::Desc,
                        b => return Err(AstDecodeError::BadDirection(b)),
                    };
                    Program::SortBy(field, dir)
                }
            }))
        }
        _ => {
            let mut d = Decoder { r, nodes: 0 };
            Ok(Ast::Predicate(Predicate(d.expr(1)?)))
        }
    }
}

/// Decodes exactly one AST; the kind is determined by the leading tag.
pub fn decode_ast(bytes: &[u8]) -> Result<Ast, AstDecodeError> {
    let mut r = Reader::new(bytes);
    let ast = decode_from(&mut r)?;
    if !r.is_empty() {
        return Err(AstDecodeError::TrailingBytes);
    }
    Ok(ast)
}

pub fn decode_predicate(bytes: &[u8]) -> Result<Predicate, AstDecodeError> {
    match decode_ast(bytes)? {
        Ast::Predicate(p) => Ok(p),
        _ => Err(AstDecodeError::WrongKind { expected: "predicate" }),
    }
}

pub fn decode_mutation(bytes: &[u8]) -> Result<Mutation, AstDecodeError> {
    match decode_ast(bytes)? {
        Ast::Mutation(m) => Ok(m),
        _ => Err(AstDecodeError::WrongKind { expected: "mutation" }),
    }
}

pub fn decode_program(bytes: &[u8]) -> Result<Program, AstDecodeError> {
    match decode_ast(bytes)? {
        Ast::Program(p) => Ok(p),
        _ => Err(AstDecodeError::WrongKind { expected: "program" }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn count_is_one_byte() {
        assert_eq!(encode_ast(&Ast::Program(Program::Count)), [0x40]);
    }

    #[test]
    fn temp_greater_than_twenty() {
        let p = Predicate(Expr::cmp(CmpOp::Gt, Expr::field(1), Expr::f64(20.0)));
        // 20.0 = 1.25 * 2^4: exponent 0x403, mantissa 0.25 = 1 << 50
        let bits: u64 = (0x403u64 << 52) | (1u64 << 50);
        let mut expected = vec![0x14, 0x01, 0x01, 0x00, 0x04];
        expected.extend_from_slice(&bits.to_le_bytes());
        assert_eq!(&expected[5..], &[0, 0, 0, 0, 0, 0, 0x34, 0x40]);
        assert_eq!(encode_predicate(&p), expected);
        assert_eq!(decode_predicate(&expected).unwrap(), p);
    }

    #[test]
    fn mutation_and_program_layouts() {
        let m = Mutation::assign(2, Expr::bool(true));
        assert_eq!(encode_mutation_bytes(&m), [0x50, 0x01, 0x00, 0x02, 0x00, 0x05, 0x01]);
        assert_eq!(
            encode_program_bytes(&Program::SortBy(1, SortDir::Desc)),
            [0x44, 0x01, 0x00, 0x01]
        );
        assert_eq!(encode_program_bytes(&Program::Sum(3)), [0x41, 0x03, 0x00]);
    }

    #[test]
    fn decode_errors() {
        assert_eq!(decode_ast(&[0x7f]), Err(AstDecodeError::BadTag(0x7f)));
        assert_eq!(decode_ast(&[]), Err(AstDecodeError::Truncated));
        assert_eq!(decode_ast(&[0x14, 0x01]), Err(AstDecodeError::Truncated));
        assert_eq!(decode_ast(&[0x40, 0x00]), Err(AstDecodeError::TrailingBytes));
        assert_eq!(decode_ast(&[0x44, 0, 0, 2]), Err(AstDecodeError::BadDirection(2)));
        assert_eq!(decode_ast(&[0x05, 7]), Err(AstDecodeError::BadBool(7)));
        assert_eq!(
            decode_ast(&[0x06, 2, 0, 0, 0, 0xff, 0xff]),
            Err(AstDecodeError::InvalidUtf8)
        );
        let mut deep = vec![NOT; 64];
        deep.extend_from_slice(&[LIT_BOOL, 1]);
        assert_eq!(decode_ast(&deep), Err(AstDecodeError::DepthExceeded));
        assert_eq!(deep[1..].len(), 65);
        assert!(decode_ast(&deep[1..]).is_ok());
    }

    pub(crate) fn arb_literal() -> impl Strategy<Value = Literal> {
        prop_oneof![
            any::<u64>().prop_map(Literal::U64),
            any::<i64>().prop_map(Literal::I64),
            any::<u64>().prop_map(|b| Literal::F64(F64Bits(f64::from_bits(b)))),
            any::<bool>().prop_map(Literal::Bool),
            "[a-zA-Z0-9 ]{0,12}".prop_map(Literal::Utf8),
        ]
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            any::<u16>().prop_map(Expr::Field),
            arb_literal().prop_map(Expr::Lit),
        ];
        leaf.prop_recursive(6, 64, 2, |inner| {
            prop_oneof![
                (0..6usize, inner.clone(), inner.clone())
                    .prop_map(|(i, l, r)| Expr::cmp(CmpOp::ALL[i], l, r)),
                (0..4usize, inner.clone(), inner.clone())
                    .prop_map(|(i, l, r)| Expr::arith(ArithOp::ALL[i], l, r)),
                (inner.clone(), inner.clone()).prop_map(|(l, r)| Expr::and(l, r)),
                (inner.clone(), inner.clone()).prop_map(|(l, r)| Expr::or(l, r)),
                inner.prop_map(Expr::not),
            ]
        })
    }

    fn arb_ast() -> impl Strategy<Value = Ast> {
        prop_oneof![
            arb_expr().prop_map(|e| Ast::Predicate(Predicate(e))),
            prop::collection::vec((any::<u16>(), arb_expr()), 0..4).prop_map(|v| {
                Ast::Mutation(Mutation::new(
                    v.into_iter().map(|(field, expr)| Assignment { field, expr }).collect(),
                ))
            }),
            prop_oneof![
                Just(Program::Count),
                any::<u16>().prop_map(Program::Sum),
                any::<u16>().prop_map(Program::Min),
                any::<u16>().prop_map(Program::Max),
                (any::<u16>(), any::<bool>()).prop_map(|(f, d)| Program::SortBy(
                    f,
                    if d { SortDir::Desc } else { SortDir::Asc }
                )),
            ]
            .prop_map(Ast::Program),
        ]
    }

    proptest! {
        #[test]
        fn ast_round_trip(ast in arb_ast()) {
            let bytes = encode_ast(&ast);
            prop_assert_eq!(decode_ast(&bytes).unwrap(), ast);
        }

        #[test]
        fn decoder_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_ast(&bytes);
        }
    }
}
