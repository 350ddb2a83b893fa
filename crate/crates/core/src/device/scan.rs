//! Data-parallel kernels behind GET, SET and SortBy.
//!
//! With the `parallel` feature (default) large inputs are split across the
//! rayon pool; otherwise, and below [`PAR_THRESHOLD`] items, the sequential
//! kernels run. Both produce identical output: filters keep ascending index
//! order, mutation errors are reported for the lowest failing index, and the
//! sort is stable.

use std::cmp::Ordering;

use crate::expr::{eval_mutation, eval_predicate, EvalError, Mutation, Predicate, SortDir};
use crate::item::{Item, ItemSchema, Value};
use crate::volume::ContainerView;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const PAR_THRESHOLD: usize = 4096;

/// Live indices in `[lo, hi)` whose item satisfies `pred`, ascending.
pub fn filter_seq(view: &ContainerView<'_>, lo: u64, hi: u64, pred: &Predicate) -> Vec<u64> {
    view.live_in(lo, hi)
        .filter(|(_, item)| eval_predicate(item, pred))
        .map(|(i, _)| i)
        .collect()
}

#[cfg(feature = "parallel")]
pub fn filter_par(view: &ContainerView<'_>, lo: u64, hi: u64, pred: &Predicate) -> Vec<u64> {
    let items = view.items();
    let dead = view.dead();
    (lo..hi)
        .into_par_iter()
        .filter(|i| !dead[*i as usize] && eval_predicate(&items[*i as usize], pred))
        .collect()
}

pub fn filter(view: &ContainerView<'_>, lo: u64, hi: u64, pred: &Predicate) -> Vec<u64> {
    #[cfg(feature = "parallel")]
    if (hi - lo) as usize >= PAR_THRESHOLD {
        return filter_par(view, lo, hi, pred);
    }
    filter_seq(view, lo, hi, pred)
}

/// Applies `mutation` to each listed item, all or nothing.
pub fn mutate(
    view: &ContainerView<'_>,
    schema: &ItemSchema,
    indices: &[u64],
    mutation: &Mutation,
) -> Result<Vec<(u64, Item)>, EvalError> {
    let apply = |i: &u64| eval_mutation(schema, view.item(*i), mutation).map(|item| (*i, item));
    #[cfg(feature = "parallel")]
    if indices.len() >= PAR_THRESHOLD {
        // collect every outcome first so the reported error does not depend on scheduling
        let results: Vec<_> = indices.par_iter().map(apply).collect();
        return results.into_iter().collect();
    }
    indices.iter().map(apply).collect()
}

/// Total order used by SortBy: numeric order, `total_cmp` for F64, bytes for text.
pub fn sort_key_cmp(a: &Value, b: &Value) -> Ordering {
    match (a, b) {
        (Value::U64(x), Value::U64(y)) => x.cmp(y),
        (Value::I64(x), Value::I64(y)) => x.cmp(y),
        (Value::F64(x), Value::F64(y)) => x.total_cmp(y),
        (Value::Utf8(x), Value::Utf8(y)) => x.as_bytes().cmp(y.as_bytes()),
        (Value::Bool(x), Value::Bool(y)) => x.cmp(y),
        (Value::Bytes(x), Value::Bytes(y)) => x.cmp(y),
        _ => Ordering::Equal,
    }
}

/// Stable sort of `(index, item)` rows by one field; ties keep input order
/// in both directions.
pub fn sort_by_field(rows: &mut [(u64, Item)], field: usize, dir: SortDir) {
    let cmp = |a: &(u64, Item), b: &(u64, Item)| {
        let ord = sort_key_cmp(&a.1.values()[field], &b.1.values()[field]);
        match dir {
            SortDir::Asc => ord,
            SortDir::Desc => ord.reverse(),
        }
    };
    #[cfg(feature = "parallel")]
    if rows.len() >= PAR_THRESHOLD {
        rows.par_sort_by(cmp);
        return;
    }
    rows.sort_by(cmp);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{CmpOp, Expr};
    use crate::item::Value;
    use crate::volume::{Volume, VolumeOptions};

    #[test]
    fn parallel_and_sequential_agree() {
        let dir = tempfile::tempdir().unwrap();
        let mut vol = Volume::create(dir.path().join("v"), VolumeOptions::default()).unwrap();
        let schema = ItemSchema::parse_spec("k:u64,x:f64").unwrap();
        let id = vol.create_container("c", schema.clone()).unwrap();
        let n = 3 * PAR_THRESHOLD as u64;
        let items = (0..n)
            .map(|i| Item::new(vec![Value::U64(i * 7 % 101), Value::F64((i % 13) as f64)]))
            .collect();
        vol.append_items(id, items).unwrap();
        let dead: Vec<u64> = (0..n).step_by(5).collect();
        vol.delete_items(id, &dead).unwrap();
        let view = vol.view(id).unwrap();
        let pred = Predicate(Expr::cmp(CmpOp::Lt, Expr::field(0), Expr::u64(50)));
        let seq = filter_seq(&view, 0, n, &pred);
        assert_eq!(filter(&view, 0, n, &pred), seq);
        assert!(seq.windows(2).all(|w| w[0] < w[1]));
        assert!(seq.iter().all(|i| i % 5 != 0));

        let mutation = Mutation::assign(
            0,
            Expr::arith(crate::expr::ArithOp::Div, Expr::u64(100), Expr::field(0)),
        );
        // k == 0 first occurs at index 0 (deleted) then at index 101
        let err = mutate(&view, &schema, &seq, &mutation).unwrap_err();
        assert_eq!(err, EvalError::DivByZero);

        let mut rows: Vec<(u64, Item)> = view.live_in(0, n).map(|(i, it)| (i, it.clone())).collect();
        let mut reference = rows.clone();
        sort_by_field(&mut rows, 1, SortDir::Desc);
        reference.sort_by(|a, b| sort_key_cmp(&b.1.values()[1], &a.1.values()[1]));
        assert_eq!(rows, reference);
    }
}
