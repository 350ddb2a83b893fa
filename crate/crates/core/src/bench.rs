//! Classic versus data-centric traffic benchmark.
//!
//! N synthetic items carry a shuffled key `0..N` plus padding; the predicate
//! `key < ceil(s*N)` therefore matches exactly `ceil(s*N)` items. The classic
//! arm ships every item to the host and filters there; the data-centric arm
//! runs GET on the device and READs only the matches. Both arms are measured
//! with the connection's traffic ledger.

use std::fmt;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::device::{ErrorCode, Notify};
use crate::expr::{CmpOp, Expr, Predicate};
use crate::host::{GetTarget, HostError, HostFs, Mode, READ_CHUNK};
use crate::item::{FieldType, Field, Item, ItemSchema, Value};
use crate::wire::OpenFlags;

/// Key (8 bytes) plus the 4-byte length prefix of the padding field.
const ITEM_FIXED_BYTES: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchParams {
    pub n: u64,
    pub selectivity: f64,
    /// Encoded size of one item.
    pub item_bytes: u32,
    pub seed: u64,
}

impl Default for BenchParams {
    fn default() -> Self {
        Self {
            n: 100_000,
            selectivity: 0.01,
            item_bytes: 32,
            seed: 42,
        }
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Host(#[from] HostError),
    #[error("the two arms returned different items: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub params: BenchParams,
    pub matched: u64,
    pub classic_bytes: u64,
    pub dc_bytes: u64,
    pub classic_wall: Duration,
    pub dc_wall: Duration,
}

impl BenchReport {
    pub fn ratio(&self) -> f64 {
        self.classic_bytes as f64 / self.dc_bytes as f64
    }

    /// `key=value` lines. Wall times are left out so equal inputs give
    /// byte-identical files.
    pub fn report_file(&self) -> String {
        let p = &self.params;
        format!(
            "n={}\nselectivity={}\nitem_bytes={}\nseed={}\nmatched={}\nclassic_bytes={}\ndc_bytes={}\nratio={:.6}\n",
            p.n,
            p.selectivity,
            p.item_bytes,
            p.seed,
            self.matched,
            self.classic_bytes,
            self.dc_bytes,
            self.ratio()
        )
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.params;
        writeln!(
            f,
            "N={} selectivity={} item_bytes={} seed={} matched={}",
            p.n, p.selectivity, p.item_bytes, p.seed, self.matched
        )?;
        writeln!(f, "{:<14} {:>14} {:>12}", "path", "bytes", "wall")?;
        writeln!(f, "{:<14} {:>14} {:>12.3?}", "classic", self.classic_bytes, self.classic_wall)?;
        writeln!(f, "{:<14} {:>14} {:>12.3?}", "data-centric", self.dc_bytes, self.dc_wall)?;
        write!(f, "ratio classic/data-centric = {:.3}", self.ratio())
    }
}

impl BenchParams {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.n == 0 {
            return Err(BenchError::InvalidParams("N must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.selectivity) {
            return Err(BenchError::InvalidParams("selectivity must lie in [0, 1]".into()));
        }
        if self.item_bytes < ITEM_FIXED_BYTES {
            return Err(BenchError::InvalidParams(format!(
                "items need at least {ITEM_FIXED_BYTES} bytes"
            )));
        }
        Ok(())
    }

    /// Number of keys below the predicate threshold: `ceil(s*N)`, where a
    /// product within rounding noise of an integer counts as that integer.
    pub fn threshold(&self) -> u64 {
        let x = self.selectivity * self.n as f64;
        let nearest = x.round();
        let t = if (x - nearest).abs() < 1e-9 * x.max(1.0) { nearest } else { x.ceil() };
        (t as u64).min(self.n)
    }

    pub fn schema(&self) -> ItemSchema {
        ItemSchema::new(vec![
            Field::new("key", FieldType::U64),
            Field::new("pad", FieldType::Bytes(self.item_bytes - ITEM_FIXED_BYTES)),
        ])
        .expect("two distinct fields")
    }

    pub fn predicate(&self) -> Predicate {
        Predicate(Expr::cmp(CmpOp::Lt, Expr::field(0), Expr::u64(self.threshold())))
    }

    /// Deterministic items for this seed; every item encodes to `item_bytes`.
    pub fn items(&self) -> Vec<Item> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut keys: Vec<u64> = (0..self.n).collect();
        keys.shuffle(&mut rng);
        let pad_len = (self.item_bytes - ITEM_FIXED_BYTES) as usize;
        keys.into_iter()
            .map(|k| {
                let mut pad = vec![0u8; pad_len];
                rng.fill_bytes(&mut pad);
                Item::new(vec![Value::U64(k), Value::Bytes(pad)])
            })
            .collect()
    }
}

/// Loads the synthetic items into a fresh container and runs both arms.
pub fn run_bench(host: &HostFs, params: BenchParams) -> Result<BenchReport, BenchError> {
    params.validate()?;
    let schema = params.schema();
    let mut k = 0;
    let file = loop {
        let name = format!("bench-{k}");
        match host.client().create_container(&name, &schema) {
            Ok(_) => break host.open_dc(&name, OpenFlags::default(), None)?,
            Err(e) if e.code() == Some(ErrorCode::NameInUse) => k += 1,
            Err(e) => return Err(HostError::from(e).into()),
        }
    };
    let items = params.items();
    for chunk in items.chunks(READ_CHUNK as usize) {
        host.dc_append(&file, chunk.to_vec(), Mode::Sync(Notify::Interrupt))?;
    }
    drop(items);
    let pred = params.predicate();

    let before = host.ledger();
    let start = Instant::now();
    let classic = host.classic_process(&file, &pred)?;
    let classic_wall = start.elapsed();
    let classic_bytes = host.ledger().since(&before).total();

    let before = host.ledger();
    let start = Instant::now();
    let handle = host
        .dc_get(GetTarget::File(&file), &pred, Mode::Sync(Notify::Interrupt))?
        .done()
        .expect("sync mode yields a result");
    let dc = host.dc_read_all(&handle)?;
    let dc_wall = start.elapsed();
    let dc_bytes = host.ledger().since(&before).total();

    if classic != dc {
        return Err(BenchError::Mismatch(format!(
            "classic found {} items, data-centric {}",
            classic.len(),
            dc.len()
        )));
    }
    Ok(BenchReport {
        params,
        matched: dc.len() as u64,
        classic_bytes,
        dc_bytes,
        classic_wall,
        dc_wall,
    })
}
