//! Shared harness for the acceptance suite: random schemas, items and
//! expressions, a naive reference evaluator, transport links and state hashes.

#![allow(dead_code)]

use std::cmp::Ordering;
use std::net::TcpListener;
use std::ops::Deref;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use ndpfs::device::{
    Device, DeviceConfig, ErrorCode, Notify, OpError, OpResult, ReadSource, Request, ResultHandle, Target,
};
use ndpfs::expr::{
    typecheck_mutation, typecheck_predicate, ArithOp, Assignment, CmpOp, Expr, Literal, Mutation, Predicate,
    Program, SortDir,
};
use ndpfs::item::{Field, FieldType, Item, ItemSchema, Kind, Value};
use ndpfs::wire::{loopback, serve, Client, ServerHandle};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

// ---- transports -------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Transport {
    Loopback,
    Tcp,
}

impl Transport {
    pub fn name(self) -> &'static str {
        match self {
            Transport::Loopback => "loopback",
            Transport::Tcp => "tcp",
        }
    }

    pub fn link(self, dev: &Arc<Device>) -> Link {
        match self {
            Transport::Loopback => Link {
                client: loopback(dev.clone()),
                _server: None,
            },
            Transport::Tcp => {
                let server = serve(dev.clone(), TcpListener::bind("127.0.0.1:0").unwrap()).unwrap();
                let client = Client::connect_tcp(&server.local_addr().to_string()).unwrap();
                Link {
                    client,
                    _server: Some(server),
                }
            }
        }
    }
}

/// A client plus, for TCP, the server it talks to. The client drops first.
pub struct Link {
    client: Client,
    _server: Option<ServerHandle>,
}

impl Deref for Link {
    type Target = Client;
    fn deref(&self) -> &Client {
        &self.client
    }
}

pub struct Vol {
    pub dir: tempfile::TempDir,
    pub dev: Arc<Device>,
}

impl Vol {
    pub fn new(config: DeviceConfig) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let dev = Arc::new(Device::create(dir.path().join("vol"), config).unwrap());
        Vol { dir, dev }
    }

    pub fn path(&self) -> PathBuf {
        self.dir.path().join("vol")
    }

    /// Waits for every connection to let go of the device, then drops it.
    pub fn release(dev: Arc<Device>) {
        let deadline = Instant::now() + Duration::from_secs(10);
        while Arc::strong_count(&dev) > 1 {
            assert!(Instant::now() < deadline, "device still referenced");
            std::thread::sleep(Duration::from_millis(1));
        }
        drop(dev);
    }
}

// ---- requests over a client ---------------------------------------------------

pub fn call(c: &Client, req: &Request) -> Result<OpResult, OpError> {
    c.submit(req, Notify::Interrupt).expect("transport").status
}

pub fn ok(c: &Client, req: &Request) -> OpResult {
    call(c, req).unwrap_or_else(|e| panic!("{req:?} failed: {e:?}"))
}

pub fn code_of(r: &Result<OpResult, OpError>) -> Option<ErrorCode> {
    r.as_ref().err().map(|e| e.code)
}

pub fn rows_of(r: OpResult) -> Vec<(u64, Item)> {
    match r {
        OpResult::Items { items, .. } => items,
        other => panic!("expected items, got {other:?}"),
    }
}

pub fn handle_of(r: OpResult) -> ResultHandle {
    match r {
        OpResult::Handle(h) => h,
        other => panic!("expected a handle, got {other:?}"),
    }
}

pub fn item_count(c: &Client, name: &str) -> u64 {
    c.open(name, Default::default(), None).unwrap().item_count
}

/// Live `(index, item)` rows of a whole container, read the classic way.
pub fn read_all(c: &Client, id: u64, count: u64) -> Vec<(u64, Item)> {
    rows_of(ok(
        c,
        &Request::Read(ReadSource::Range {
            container: id,
            lo: 0,
            hi: count,
        }),
    ))
}

pub fn read_handle(c: &Client, h: &ResultHandle) -> Vec<(u64, Item)> {
    rows_of(ok(
        c,
        &Request::Read(ReadSource::Handle {
            handle: h.handle_id,
            offset: 0,
            count: h.cardinality,
        }),
    ))
}

pub fn get_rows(c: &Client, target: Target, pred: &Predicate) -> Vec<(u64, Item)> {
    let h = handle_of(ok(c, &Request::Get { target, pred: pred.clone() }));
    let rows = read_handle(c, &h);
    assert_eq!(rows.len() as u64, h.cardinality);
    rows
}

// ---- hashing -----------------------------------------------------------------

pub fn hash_files(paths: &[PathBuf]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in paths {
        h.update(p.to_string_lossy().as_bytes());
        h.update(std::fs::read(p).unwrap_or_default());
    }
    h.finalize().into()
}

pub fn container_hash(dev: &Device, id: u64) -> [u8; 32] {
    hash_files(&dev.with_volume(|v| v.container_files(id)))
}

/// Every file under `root`, in path order.
pub fn tree_hash(root: &Path) -> [u8; 32] {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    files.sort();
    hash_files(&files)
}

/// Running digest of everything a criterion observed.
#[derive(Default)]
pub struct Transcript(Sha256);

impl Transcript {
    pub fn note(&mut self, what: impl std::fmt::Debug) {
        self.0.update(format!("{what:?}\n").as_bytes());
    }

    pub fn finish(self) -> [u8; 32] {
        self.0.finalize().into()
    }
}

// ---- reference evaluator -------------------------------------------------------

fn lit_value(l: &Literal) -> Value {
    match l {
        Literal::U64(v) => Value::U64(*v),
        Literal::I64(v) => Value::I64(*v),
        Literal::F64(v) => Value::F64(v.0),
        Literal::Bool(v) => Value::Bool(*v),
        Literal::Utf8(s) => Value::Utf8(s.clone()),
    }
}

/// `None` when the pair is unordered (a NaN) or of different kinds.
pub fn ref_order(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::U64(x), Value::U64(y)) => Some(x.cmp(y)),
        (Value::I64(x), Value::I64(y)) => Some(x.cmp(y)),
        (Value::F64(x), Value::F64(y)) => {
            if x.is_nan() || y.is_nan() {
                None
            } else if x < y {
                Some(Ordering::Less)
            } else if x > y {
                Some(Ordering::Greater)
            } else {
                Some(Ordering::Equal)
            }
        }
        (Value::Bool(x), Value::Bool(y)) => Some((*x as u8).cmp(&(*y as u8))),
        (Value::Utf8(x), Value::Utf8(y)) => Some(x.as_bytes().cmp(y.as_bytes())),
        (Value::Bytes(x), Value::Bytes(y)) => Some(x.as_slice().cmp(y.as_slice())),
        _ => None,
    }
}

fn ref_operand(e: &Expr, it: &Item) -> Option<Value> {
    match e {
        Expr::Field(i) => Some(it.values()[*i as usize].clone()),
        Expr::Lit(l) => Some(lit_value(l)),
        Expr::Arith(..) => None,
        _ => Some(Value::Bool(ref_truth(e, it))),
    }
}

pub fn ref_truth(e: &Expr, it: &Item) -> bool {
    match e {
        Expr::Cmp(op, l, r) => {
            let (Some(a), Some(b)) = (ref_operand(l, it), ref_operand(r, it)) else {
                return false;
            };
            let o = ref_order(&a, &b);
            match op {
                CmpOp::Eq => o == Some(Ordering::Equal),
                CmpOp::Ne => o != Some(Ordering::Equal),
                CmpOp::Lt => o == Some(Ordering::Less),
                CmpOp::Le => o == Some(Ordering::Less) || o == Some(Ordering::Equal),
                CmpOp::Gt => o == Some(Ordering::Greater),
                CmpOp::Ge => o == Some(Ordering::Greater) || o == Some(Ordering::Equal),
            }
        }
        Expr::And(l, r) => ref_truth(l, it) && ref_truth(r, it),
        Expr::Or(l, r) => ref_truth(l, it) || ref_truth(r, it),
        Expr::Not(c) => !ref_truth(c, it),
        Expr::Field(i) => it.values()[*i as usize] == Value::Bool(true),
        Expr::Lit(Literal::Bool(b)) => *b,
        _ => false,
    }
}

pub fn ref_value(e: &Expr, it: &Item) -> Result<Value, ErrorCode> {
    match e {
        Expr::Field(i) => Ok(it.values()[*i as usize].clone()),
        Expr::Lit(l) => Ok(lit_value(l)),
        Expr::Arith(op, l, r) => {
            let a = ref_value(l, it)?;
            let b = ref_value(r, it)?;
            match (a, b) {
                (Value::U64(x), Value::U64(y)) => match op {
                    ArithOp::Add => x.checked_add(y).map(Value::U64).ok_or(ErrorCode::Overflow),
                    ArithOp::Sub => x.checked_sub(y).map(Value::U64).ok_or(ErrorCode::Overflow),
                    ArithOp::Mul => x.checked_mul(y).map(Value::U64).ok_or(ErrorCode::Overflow),
                    ArithOp::Div if y == 0 => Err(ErrorCode::DivByZero),
                    ArithOp::Div => Ok(Value::U64(x / y)),
                },
                (Value::I64(x), Value::I64(y)) => match op {
                    ArithOp::Add => x.checked_add(y).map(Value::I64).ok_or(ErrorCode::Overflow),
                    ArithOp::Sub => x.checked_sub(y).map(Value::I64).ok_or(ErrorCode::Overflow),
                    ArithOp::Mul => x.checked_mul(y).map(Value::I64).ok_or(ErrorCode::Overflow),
                    ArithOp::Div if y == 0 => Err(ErrorCode::DivByZero),
                    ArithOp::Div if x == i64::MIN && y == -1 => Err(ErrorCode::Overflow),
                    ArithOp::Div => Ok(Value::I64(x / y)),
                },
                (Value::F64(x), Value::F64(y)) => Ok(Value::F64(match op {
                    ArithOp::Add => x + y,
                    ArithOp::Sub => x - y,
                    ArithOp::Mul => x * y,
                    ArithOp::Div => x / y,
                })),
                other => panic!("ill-typed arithmetic {other:?}"),
            }
        }
        _ => Ok(Value::Bool(ref_truth(e, it))),
    }
}

pub fn ref_mutate(schema: &ItemSchema, it: &Item, m: &Mutation) -> Result<Item, ErrorCode> {
    let mut fresh = Vec::new();
    for a in &m.assignments {
        fresh.push(ref_value(&a.expr, it)?);
    }
    let mut values = it.values().to_vec();
    for (a, v) in m.assignments.iter().zip(fresh) {
        values[a.field as usize] = v;
    }
    for (f, v) in schema.fields().iter().zip(&values) {
        let too_long = match (f.ty, v) {
            (FieldType::Utf8(max), Value::Utf8(s)) => s.len() > max as usize,
            (FieldType::Bytes(max), Value::Bytes(b)) => b.len() > max as usize,
            _ => false,
        };
        if too_long {
            return Err(ErrorCode::Validation);
        }
    }
    Ok(Item::new(values))
}

pub fn ref_filter(rows: &[(u64, Item)], pred: &Predicate) -> Vec<(u64, Item)> {
    rows.iter().filter(|(_, it)| ref_truth(&pred.0, it)).cloned().collect()
}

/// Post-images of the matching rows, or the error of the lowest failing one.
pub fn ref_set(
    schema: &ItemSchema,
    rows: &[(u64, Item)],
    pred: &Predicate,
    m: &Mutation,
) -> Result<Vec<(u64, Item)>, ErrorCode> {
    ref_filter(rows, pred)
        .into_iter()
        .map(|(i, it)| ref_mutate(schema, &it, m).map(|n| (i, n)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefOut {
    Scalar(Value),
    Rows(Vec<(u64, Item)>),
}

fn sort_order(a: &Value, b: &Value) -> Ordering {
    match (a, b) {
        (Value::F64(x), Value::F64(y)) => x.total_cmp(y),
        _ => ref_order(a, b).unwrap_or(Ordering::Equal),
    }
}

pub fn ref_scalar(schema: &ItemSchema, items: &[&Item], program: Program) -> Result<Value, ErrorCode> {
    let col = |f: u16| items.iter().map(move |it| it.values()[f as usize].clone());
    match program {
        Program::Count => Ok(Value::U64(items.len() as u64)),
        Program::Sum(f) => {
            let mut acc: Option<Value> = None;
            for v in col(f) {
                acc = Some(match (acc, v) {
                    (None, v) => v,
                    (Some(Value::U64(a)), Value::U64(b)) => Value::U64(a.checked_add(b).ok_or(ErrorCode::Overflow)?),
                    (Some(Value::I64(a)), Value::I64(b)) => Value::I64(a.checked_add(b).ok_or(ErrorCode::Overflow)?),
                    (Some(Value::F64(a)), Value::F64(b)) => Value::F64(a + b),
                    other => panic!("sum over {other:?}"),
                });
            }
            Ok(acc.unwrap_or(match schema.fields()[f as usize].ty {
                FieldType::U64 => Value::U64(0),
                FieldType::I64 => Value::I64(0),
                _ => Value::F64(0.0),
            }))
        }
        Program::Min(f) | Program::Max(f) => {
            let want = if matches!(program, Program::Min(_)) { Ordering::Less } else { Ordering::Greater };
            let mut best: Option<Value> = None;
            for v in col(f) {
                best = match best {
                    None => Some(v),
                    Some(b) if ref_order(&v, &b) == Some(want) => Some(v),
                    keep => keep,
                };
            }
            best.ok_or(ErrorCode::EmptyInput)
        }
        Program::SortBy(..) => unreachable!("not a scalar"),
    }
}

pub fn ref_program(schema: &ItemSchema, rows: &[(u64, Item)], program: Program) -> Result<RefOut, ErrorCode> {
    match program {
        Program::SortBy(f, dir) => {
            let mut out = rows.to_vec();
            out.sort_by(|a, b| {
                let o = sort_order(&a.1.values()[f as usize], &b.1.values()[f as usize]);
                if dir == SortDir::Desc {
                    o.reverse()
                } else {
                    o
                }
            });
            Ok(RefOut::Rows(out))
        }
        p => ref_scalar(schema, &rows.iter().map(|r| &r.1).collect::<Vec<_>>(), p).map(RefOut::Scalar),
    }
}

// ---- generators ------------------------------------------------------------------

pub struct Gen {
    pub rng: ChaCha8Rng,
}

const ALPHABET: [&str; 6] = ["a", "b", "c", "z", "é", "ß"];

impl Gen {
    pub fn new(seed: u64) -> Self {
        Gen {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.rng.gen_bool(p)
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    pub fn schema(&mut self) -> ItemSchema {
        let n = self.rng.gen_range(1..=6);
        let fields = (0..n)
            .map(|i| {
                let ty = match self.below(6) {
                    0 => FieldType::U64,
                    1 => FieldType::I64,
                    2 => FieldType::F64,
                    3 => FieldType::Bool,
                    4 => FieldType::Utf8([4, 8, 16][self.below(3)]),
                    _ => FieldType::Bytes([4, 8][self.below(2)]),
                };
                Field::new(format!("f{i}"), ty)
            })
            .collect();
        ItemSchema::new(fields).unwrap()
    }

    pub fn text(&mut self, max_bytes: usize) -> String {
        let target = self.rng.gen_range(0..=max_bytes);
        let mut s = String::new();
        loop {
            let c = ALPHABET[self.below(ALPHABET.len())];
            if s.len() + c.len() > target {
                return s;
            }
            s.push_str(c);
        }
    }

    pub fn value(&mut self, ty: FieldType) -> Value {
        match ty {
            FieldType::U64 => Value::U64(match self.below(10) {
                0..=6 => self.rng.gen_range(0..20),
                7 | 8 => self.rng.gen_range(0..1000),
                _ => [u64::MAX, u64::MAX / 2, 1 << 40][self.below(3)],
            }),
            FieldType::I64 => Value::I64(match self.below(10) {
                0..=6 => self.rng.gen_range(-10..10),
                7 | 8 => self.rng.gen_range(-1000..1000),
                _ => [i64::MIN, i64::MAX, -1][self.below(3)],
            }),
            FieldType::F64 => Value::F64(match self.below(10) {
                0..=5 => self.rng.gen_range(-20..20) as f64 * 0.5,
                6 | 7 => self.rng.gen_range(-1000.0..1000.0),
                _ => [f64::NAN, -0.0, 0.0, f64::INFINITY, f64::NEG_INFINITY, 1e300][self.below(6)],
            }),
            FieldType::Bool => Value::Bool(self.chance(0.5)),
            FieldType::Utf8(max) => Value::Utf8(self.text(max as usize)),
            FieldType::Bytes(max) => {
                let n = self.rng.gen_range(0..=max as usize);
                Value::Bytes((0..n).map(|_| [0u8, 1, 0xff][self.below(3)]).collect())
            }
        }
    }

    pub fn item(&mut self, schema: &ItemSchema) -> Item {
        Item::new(schema.fields().iter().map(|f| self.value(f.ty)).collect())
    }

    pub fn items(&mut self, schema: &ItemSchema, n: usize) -> Vec<Item> {
        (0..n).map(|_| self.item(schema)).collect()
    }

    fn literal(&mut self, kind: Kind) -> Expr {
        match kind {
            Kind::U64 => match self.value(FieldType::U64) {
                Value::U64(v) => Expr::u64(v),
                _ => unreachable!(),
            },
            Kind::I64 => match self.value(FieldType::I64) {
                Value::I64(v) => Expr::i64(v),
                _ => unreachable!(),
            },
            Kind::F64 => match self.value(FieldType::F64) {
                Value::F64(v) => Expr::f64(v),
                _ => unreachable!(),
            },
            Kind::Bool => Expr::bool(self.chance(0.5)),
            Kind::Utf8 => Expr::utf8(self.text(12)),
            Kind::Bytes => unreachable!("no bytes literals"),
        }
    }

    fn fields_of(schema: &ItemSchema, kind: Kind) -> Vec<u16> {
        (0..schema.len())
            .filter(|i| schema.fields()[*i].ty.kind() == kind)
            .map(|i| i as u16)
            .collect()
    }

    fn pick(&mut self, from: &[u16]) -> u16 {
        from[self.below(from.len())]
    }

    fn cmp_op(&mut self) -> CmpOp {
        [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge][self.below(6)]
    }

    fn atom(&mut self, schema: &ItemSchema) -> Expr {
        let f = self.below(schema.len()) as u16;
        let kind = schema.fields()[f as usize].ty.kind();
        match self.below(10) {
            0 => Expr::bool(self.chance(0.8)),
            1 | 2 => {
                let other = self.pick(&Self::fields_of(schema, kind));
                Expr::cmp(self.cmp_op(), Expr::field(f), Expr::field(other))
            }
            3 if kind == Kind::Bool => Expr::field(f),
            _ if kind == Kind::Bytes => Expr::cmp(self.cmp_op(), Expr::field(f), Expr::field(f)),
            _ => {
                let lit = self.literal(kind);
                if self.chance(0.2) {
                    Expr::cmp(self.cmp_op(), lit, Expr::field(f))
                } else {
                    Expr::cmp(self.cmp_op(), Expr::field(f), lit)
                }
            }
        }
    }

    fn bool_expr(&mut self, schema: &ItemSchema, depth: usize) -> Expr {
        if depth == 0 || self.chance(0.4) {
            return self.atom(schema);
        }
        match self.below(5) {
            0 | 1 => Expr::and(self.bool_expr(schema, depth - 1), self.bool_expr(schema, depth - 1)),
            2 | 3 => Expr::or(self.bool_expr(schema, depth - 1), self.bool_expr(schema, depth - 1)),
            _ if self.chance(0.5) => Expr::not(self.bool_expr(schema, depth - 1)),
            _ => {
                let b = self.chance(0.5);
                Expr::cmp(self.cmp_op(), self.bool_expr(schema, depth - 1), Expr::bool(b))
            }
        }
    }

    pub fn predicate(&mut self, schema: &ItemSchema) -> Predicate {
        let p = Predicate(self.bool_expr(schema, 3));
        typecheck_predicate(schema, &p).expect("generated predicates typecheck");
        p
    }

    fn numeric(&mut self, schema: &ItemSchema, kind: Kind, depth: usize) -> Expr {
        if depth == 0 || self.chance(0.4) {
            let fields = Self::fields_of(schema, kind);
            return if !fields.is_empty() && self.chance(0.6) {
                Expr::field(self.pick(&fields))
            } else {
                self.literal(kind)
            };
        }
        let op = [ArithOp::Add, ArithOp::Sub, ArithOp::Mul, ArithOp::Div][self.below(4)];
        Expr::arith(op, self.numeric(schema, kind, depth - 1), self.numeric(schema, kind, depth - 1))
    }

    fn rhs(&mut self, schema: &ItemSchema, target: u16, safe: bool) -> Expr {
        let kind = schema.fields()[target as usize].ty.kind();
        match kind {
            Kind::U64 | Kind::I64 if safe => self.literal_small(kind),
            Kind::F64 if safe => {
                let step = self.rng.gen_range(-4..=4) as f64 * 0.5;
                Expr::arith(ArithOp::Add, Expr::field(target), Expr::f64(step))
            }
            Kind::U64 | Kind::I64 | Kind::F64 => self.numeric(schema, kind, 2),
            Kind::Bool => self.bool_expr(schema, 1),
            Kind::Utf8 => {
                let max = match schema.fields()[target as usize].ty {
                    FieldType::Utf8(m) => m as usize,
                    _ => unreachable!(),
                };
                let fields = Self::fields_of(schema, Kind::Utf8);
                if !safe && self.chance(0.4) {
                    Expr::field(self.pick(&fields))
                } else {
                    Expr::utf8(self.text(if safe { max } else { max + 2 }))
                }
            }
            Kind::Bytes if safe => Expr::field(target),
            Kind::Bytes => Expr::field(self.pick(&Self::fields_of(schema, Kind::Bytes))),
        }
    }

    fn literal_small(&mut self, kind: Kind) -> Expr {
        match kind {
            Kind::U64 => Expr::u64(self.rng.gen_range(0..50)),
            _ => Expr::i64(self.rng.gen_range(-50..50)),
        }
    }

    /// A random mutation; `safe` ones can never fail to evaluate.
    pub fn mutation(&mut self, schema: &ItemSchema, safe: bool) -> Mutation {
        let mut targets: Vec<u16> = (0..schema.len() as u16).collect();
        targets.shuffle(&mut self.rng);
        let n = self.rng.gen_range(1..=targets.len().min(3));
        let assignments = targets[..n]
            .iter()
            .map(|&field| Assignment {
                field,
                expr: self.rhs(schema, field, safe),
            })
            .collect();
        let m = Mutation::new(assignments);
        typecheck_mutation(schema, &m).expect("generated mutations typecheck");
        m
    }

    /// A random program; `scalar_only` excludes SortBy, `safe` keeps Sum to F64.
    pub fn program(&mut self, schema: &ItemSchema, scalar_only: bool, safe: bool) -> Program {
        let numeric: Vec<u16> = (0..schema.len() as u16)
            .filter(|i| schema.fields()[*i as usize].ty.kind().is_numeric())
            .collect();
        let floats = Self::fields_of(schema, Kind::F64);
        let texts = Self::fields_of(schema, Kind::Utf8);
        let dir = if self.chance(0.5) { SortDir::Asc } else { SortDir::Desc };
        match self.below(5) {
            1 if safe && !floats.is_empty() => Program::Sum(self.pick(&floats)),
            1 if !safe && !numeric.is_empty() => Program::Sum(self.pick(&numeric)),
            2 if !numeric.is_empty() => Program::Min(self.pick(&numeric)),
            3 if !numeric.is_empty() => Program::Max(self.pick(&numeric)),
            4 if !scalar_only && !(numeric.is_empty() && texts.is_empty()) => {
                let mut sortable = numeric.clone();
                sortable.extend(&texts);
                Program::SortBy(self.pick(&sortable), dir)
            }
            _ => Program::Count,
        }
    }
}

/// Live rows of a model container where `None` marks a deleted item.
pub fn live_rows(model: &[Option<Item>]) -> Vec<(u64, Item)> {
    model
        .iter()
        .enumerate()
        .filter_map(|(i, it)| it.clone().map(|it| (i as u64, it)))
        .collect()
}
