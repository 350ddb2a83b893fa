//! Text syntax for predicates, mutations and programs.
//!
//! ```text
//! pred     := or
//! or       := and ('||' and)*
//! and      := unary ('&&' unary)*
//! unary    := '!' unary | cmp
//! cmp      := sum (('=='|'!='|'<'|'<='|'>'|'>=') sum)?
//! sum      := term (('+'|'-') term)*
//! term     := atom (('*'|'/') atom)*
//! atom     := literal | field | '(' or ')'
//! mutation := field ':=' sum-or-pred (',' field ':=' ...)*
//! program  := count() | sum(f) | min(f) | max(f) | sortby(f, asc|desc)
//! ```
//!
//! Integer literals take the kind of the operand they meet (`temp > 20`
//! against an `f64` field is `temp > 20.0`); alone they default to `u64`
//! (`i64` when negative).

use std::fmt;

use thiserror::Error;

use super::{
    ArithOp, Assignment, CmpOp, Expr, F64Bits, Literal, Mutation, Predicate, Program, SortDir,
};
use crate::item::{ItemSchema, Kind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    /// Byte offset into the source text.
    pub pos: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at offset {}", self.message, self.pos)
    }
}

impl ParseError {
    fn new(pos: usize, message: impl Into<String>) -> Self {
        Self {
            pos,
            message: message.into(),
        }
    }

    /// Source line with a caret under the offending position.
    pub fn render(&self, src: &str) -> String {
        let col = src[..self.pos.min(src.len())].chars().count();
        format!("{}\n{src}\n{}^", self.message, " ".repeat(col))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(u64),
    Float(f64),
    Str(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    End,
}

const OPS: [&str; 17] = [
    ":=", "==", "!=", "<=", ">=", "&&", "||", "<", ">", "!", "+", "-", "*", "/", "=", "&", "|",
];

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ParseError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let mut float = false;
            if i < bytes.len() && bytes[i] == b'.' {
                float = true;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                float = true;
                i += 1;
                if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                    i += 1;
                }
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let text = &src[start..i];
            let tok = if float {
                Tok::Float(text.parse().map_err(|_| ParseError::new(start, "malformed number"))?)
            } else {
                Tok::Int(text.parse().map_err(|_| ParseError::new(start, "integer literal too large"))?)
            };
            out.push((tok, start));
        } else if c == b'"' {
            i += 1;
            let mut s = String::new();
            loop {
                let Some(ch) = src[i..].chars().next() else {
                    return Err(ParseError::new(start, "unterminated string"));
                };
                i += ch.len_utf8();
                match ch {
                    '"' => break,
                    '\\' => {
                        let Some(esc) = src[i..].chars().next() else {
                            return Err(ParseError::new(start, "unterminated string"));
                        };
                        i += esc.len_utf8();
                        s.push(match esc {
                            'n' => '\n',
                            't' => '\t',
                            other => other,
                        });
                    }
                    other => s.push(other),
                }
            }
            out.push((Tok::Str(s), start));
        } else if c == b'(' {
            i += 1;
            out.push((Tok::LParen, start));
        } else if c == b')' {
            i += 1;
            out.push((Tok::RParen, start));
        } else if c == b',' {
            i += 1;
            out.push((Tok::Comma, start));
        } else if let Some(op) = OPS.iter().find(|op| src[i..].starts_with(**op)) {
            if matches!(*op, "=" | "&" | "|") {
                return Err(ParseError::new(start, format!("unexpected '{op}'")));
            }
            i += op.len();
            out.push((Tok::Op(op), start));
        } else {
            let ch = src[i..].chars().next().unwrap_or('?');
            return Err(ParseError::new(start, format!("unexpected character '{ch}'")));
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

/// Parse tree before literal kinds are resolved.
#[derive(Debug, Clone)]
enum Node {
    Field(u16),
    Int(i128, usize),
    Float(f64),
    Bool(bool),
    Str(String),
    Cmp(CmpOp, Box<Node>, Box<Node>),
    Arith(ArithOp, Box<Node>, Box<Node>),
    And(Box<Node>, Box<Node>),
    Or(Box<Node>, Box<Node>),
    Not(Box<Node>),
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    schema: &'a ItemSchema,
}

impl<'a> Parser<'a> {
    fn new(src: &str, schema: &'a ItemSchema) -> Result<Self, ParseError> {
        Ok(Self {
            toks: lex(src)?,
            pos: 0,
            schema,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if matches!(self.peek(), Tok::Op(o) if *o == op) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(ParseError::new(self.offset(), format!("expected {what}")))
        }
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        if *self.peek() == Tok::End {
            Ok(())
        } else {
            Err(ParseError::new(self.offset(), "unexpected trailing input"))
        }
    }

    fn field(&mut self) -> Result<u16, ParseError> {
        let (tok, at) = self.bump();
        match tok {
            Tok::Ident(name) => self
                .schema
                .index_of(&name)
                .map(|i| i as u16)
                .ok_or_else(|| ParseError::new(at, format!("unknown field '{name}'"))),
            _ => Err(ParseError::new(at, "expected a field name")),
        }
    }

    fn or(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.and()?;
        while self.eat_op("||") {
            lhs = Node::Or(Box::new(lhs), Box::new(self.and()?));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.unary()?;
        while self.eat_op("&&") {
            lhs = Node::And(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node, ParseError> {
        if self.eat_op("!") {
            return Ok(Node::Not(Box::new(self.unary()?)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Node, ParseError> {
        let lhs = self.sum()?;
        let op = match self.peek() {
            Tok::Op("==") => CmpOp::Eq,
            Tok::Op("!=") => CmpOp::Ne,
            Tok::Op("<") => CmpOp::Lt,
            Tok::Op("<=") => CmpOp::Le,
            Tok::Op(">") => CmpOp::Gt,
            Tok::Op(">=") => CmpOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.sum()?;
        Ok(Node::Cmp(op, Box::new(lhs), Box::new(rhs)))
    }

    fn sum(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op("+") => ArithOp::Add,
                Tok::Op("-") => ArithOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Node::Arith(op, Box::new(lhs), Box::new(self.term()?));
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let mut lhs = self.atom()?;
        loop {
            let op = match self.peek() {
                Tok::Op("*") => ArithOp::Mul,
                Tok::Op("/") => ArithOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            lhs = Node::Arith(op, Box::new(lhs), Box::new(self.atom()?));
        }
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let at = self.offset();
        match self.bump().0 {
            Tok::Int(v) => Ok(Node::Int(v as i128, at)),
            Tok::Float(v) => Ok(Node::Float(v)),
            Tok::Str(s) => Ok(Node::Str(s)),
            Tok::Op("-") => match self.bump().0 {
                Tok::Int(v) => Ok(Node::Int(-(v as i128), at)),
                Tok::Float(v) => Ok(Node::Float(-v)),
                _ => Err(ParseError::new(at, "'-' must precede a numeric literal")),
            },
            Tok::LParen => {
                let inner = self.or()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(inner)
            }
            Tok::Ident(name) => match name.as_str() {
                "true" => Ok(Node::Bool(true)),
                "false" => Ok(Node::Bool(false)),
                _ => self
                    .schema
                    .index_of(&name)
                    .map(|i| Node::Field(i as u16))
                    .ok_or_else(|| ParseError::new(at, format!("unknown field '{name}'"))),
            },
            Tok::End => Err(ParseError::new(at, "unexpected end of input")),
            _ => Err(ParseError::new(at, "expected a value")),
        }
    }
}

/// Kind of a node when it does not depend on context; `None` for bare
/// integer literals (and arithmetic over only those).
fn infer(node: &Node, schema: &ItemSchema) -> Option<Kind> {
    match node {
        Node::Field(i) => schema.field(*i as usize).map(|f| f.ty.kind()),
        Node::Int(..) => None,
        Node::Float(..) => Some(Kind::F64),
        Node::Bool(_) => Some(Kind::Bool),
        Node::Str(_) => Some(Kind::Utf8),
        Node::Cmp(..) | Node::And(..) | Node::Or(..) | Node::Not(_) => Some(Kind::Bool),
        Node::Arith(_, l, r) => infer(l, schema).or_else(|| infer(r, schema)),
    }
}

fn resolve(node: Node, hint: Option<Kind>, schema: &ItemSchema) -> Result<Expr, ParseError> {
    Ok(match node {
        Node::Field(i) => Expr::Field(i),
        Node::Int(v, at) => Expr::Lit(match hint {
            Some(Kind::F64) => Literal::F64(F64Bits(v as f64)),
            Some(Kind::I64) => Literal::I64(
                i64::try_from(v).map_err(|_| ParseError::new(at, "literal out of i64 range"))?,
            ),
            Some(Kind::U64) | None if v >= 0 => Literal::U64(
                u64::try_from(v).map_err(|_| ParseError::new(at, "literal out of u64 range"))?,
            ),
            None => Literal::I64(
                i64::try_from(v).map_err(|_| ParseError::new(at, "literal out of i64 range"))?,
            ),
            Some(Kind::U64) => return Err(ParseError::new(at, "negative literal for a u64 operand")),
            Some(other) => {
                return Err(ParseError::new(at, format!("integer literal where {other} expected")))
            }
        }),
        Node::Float(v) => Expr::f64(v),
        Node::Bool(b) => Expr::bool(b),
        Node::Str(s) => Expr::utf8(s),
        Node::Cmp(op, l, r) => {
            let hint = infer(&l, schema).or_else(|| infer(&r, schema));
            Expr::cmp(op, resolve(*l, hint, schema)?, resolve(*r, hint, schema)?)
        }
        Node::Arith(op, l, r) => {
            let hint = infer(&l, schema).or_else(|| infer(&r, schema)).or(hint);
            Expr::arith(op, resolve(*l, hint, schema)?, resolve(*r, hint, schema)?)
        }
        Node::And(l, r) => Expr::and(resolve(*l, None, schema)?, resolve(*r, None, schema)?),
        Node::Or(l, r) => Expr::or(resolve(*l, None, schema)?, resolve(*r, None, schema)?),
        Node::Not(c) => Expr::not(resolve(*c, None, schema)?),
    })
}

pub fn parse_predicate(schema: &ItemSchema, src: &str) -> Result<Predicate, ParseError> {
    let mut p = Parser::new(src, schema)?;
    let node = p.or()?;
    p.expect_end()?;
    Ok(Predicate(resolve(node, Some(Kind::Bool), schema)?))
}

pub fn parse_mutation(schema: &ItemSchema, src: &str) -> Result<Mutation, ParseError> {
    let mut p = Parser::new(src, schema)?;
    let mut assignments = Vec::new();
    loop {
        let field = p.field()?;
        if !p.eat_op(":=") {
            return Err(ParseError::new(p.offset(), "expected ':='"));
        }
        let node = p.or()?;
        let kind = schema.field(field as usize).map(|f| f.ty.kind());
        assignments.push(Assignment {
            field,
            expr: resolve(node, kind, schema)?,
        });
        if *p.peek() == Tok::Comma {
            p.bump();
            continue;
        }
        p.expect_end()?;
        return Ok(Mutation { assignments });
    }
}

pub fn parse_program(schema: &ItemSchema, src: &str) -> Result<Program, ParseError> {
    let mut p = Parser::new(src, schema)?;
    let at = p.offset();
    let name = match p.bump().0 {
        Tok::Ident(name) => name.to_ascii_lowercase(),
        _ => return Err(ParseError::new(at, "expected a program name")),
    };
    p.expect(Tok::LParen, "'('")?;
    let program = match name.as_str() {
        "count" => Program::Count,
        "sum" => Program::Sum(p.field()?),
        "min" => Program::Min(p.field()?),
        "max" => Program::Max(p.field()?),
        "sortby" => {
            let field = p.field()?;
            p.expect(Tok::Comma, "','")?;
            let at = p.offset();
            let dir = match p.bump().0 {
                Tok::Ident(d) if d.eq_ignore_ascii_case("asc") => SortDir::Asc,
                Tok::Ident(d) if d.eq_ignore_ascii_case("desc") => SortDir::Desc,
                _ => return Err(ParseError::new(at, "expected asc or desc")),
            };
            Program::SortBy(field, dir)
        }
        _ => return Err(ParseError::new(at, format!("unknown program '{name}'"))),
    };
    p.expect(Tok::RParen, "')'")?;
    p.expect_end()?;
    Ok(program)
}
