use super::*;
use crate::item::{Field, FieldType, Value};

fn weather_schema() -> ItemSchema {
    ItemSchema::parse_spec("city:utf8(16),temp:f64,alert:bool").unwrap()
}

fn row(city: &str, temp: f64) -> Item {
    Item::new(vec![
        Value::Utf8(city.into()),
        Value::F64(temp),
        Value::Bool(false),
    ])
}

fn fixture_rows() -> Vec<Item> {
    [("SF", 12.0), ("LA", 22.5), ("NY", -3.0), ("SF", 30.5), ("LA", 18.0), ("NY", 5.5)]
        .into_iter()
        .map(|(c, t)| row(c, t))
        .collect()
}

fn fresh() -> (tempfile::TempDir, Volume) {
    let dir = tempfile::tempdir().unwrap();
    let vol = Volume::create(dir.path().join("vol"), VolumeOptions::default()).unwrap();
    (dir, vol)
}

#[test]
fn create_then_open_is_empty() {
    let (dir, vol) = fresh();
    assert!(vol.containers().is_empty());
    drop(vol);
    let vol = Volume::open(dir.path().join("vol"), VolumeOptions::default()).unwrap();
    assert!(vol.containers().is_empty());
}

#[test]
fn open_rejects_non_volumes() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        Volume::open(dir.path(), VolumeOptions::default()),
        Err(VolumeError::NotAVolume)
    ));
    let path = dir.path().join("vol");
    drop(Volume::create(&path, VolumeOptions::default()).unwrap());
    assert!(matches!(
        Volume::create(&path, VolumeOptions::default()),
        Err(VolumeError::AlreadyExists)
    ));
    let sb = path.join(SUPERBLOCK);
    let mut bytes = fs::read(&sb).unwrap();
    bytes[0] ^= 0x01;
    fs::write(&sb, bytes).unwrap();
    assert!(matches!(
        Volume::open(&path, VolumeOptions::default()),
        Err(VolumeError::NotAVolume)
    ));
}

#[test]
fn container_ids_and_names() {
    let (_dir, mut vol) = fresh();
    assert_eq!(vol.create_container("weather", weather_schema()).unwrap(), 1);
    assert!(matches!(
        vol.create_container("weather", weather_schema()),
        Err(VolumeError::NameInUse(_))
    ));
    assert!(matches!(
        ItemSchema::new(vec![]).map_err(VolumeError::from),
        Err(VolumeError::InvalidSchema(_))
    ));
    assert_eq!(vol.create_container("other", weather_schema()).unwrap(), 2);
}

#[test]
fn append_generations_and_indices() {
    let (_dir, mut vol) = fresh();
    let id = vol.create_container("w", weather_schema()).unwrap();
    assert_eq!(vol.append_items(id, vec![]).unwrap(), (0, 0));
    let rows = fixture_rows();
    assert_eq!(vol.append_items(id, rows[..3].to_vec()).unwrap(), (0, 1));
    assert_eq!(vol.append_items(id, rows[3..].to_vec()).unwrap(), (3, 2));
    let all = vol.read_items(id, 0, 6).unwrap();
    assert_eq!(all.iter().map(|(_, i)| i.clone()).collect::<Vec<_>>(), rows);
    assert!(vol.read_items(id, 0, 0).unwrap().is_empty());
    assert!(matches!(
        vol.read_items(id, 0, 7),
        Err(VolumeError::RangeOutOfBounds { .. })
    ));
    let bad = Item::new(vec![Value::Utf8("x".into())]);
    assert!(matches!(vol.append_items(id, vec![bad]), Err(VolumeError::Validation(_))));
    assert_eq!(vol.generation(id).unwrap(), 2);
}

#[test]
fn set_delete_and_tombstones() {
    let (_dir, mut vol) = fresh();
    let id = vol.create_container("w", weather_schema()).unwrap();
    vol.append_items(id, fixture_rows()).unwrap();
    assert_eq!(vol.set_item(id, 0, row("SF", 12.0)).unwrap(), 2);
    assert_eq!(vol.set_item(id, 1, row("LA", 99.0)).unwrap(), 3);
    assert_eq!(vol.read_items(id, 1, 2).unwrap()[0].1, row("LA", 99.0));

    assert_eq!(vol.delete_items(id, &[]).unwrap(), (0, 3));
    assert_eq!(vol.delete_items(id, &[2]).unwrap(), (1, 4));
    let meta = vol.container_meta(id).unwrap();
    assert_eq!(meta.live_count(), 5);
    assert_eq!(meta.tombstones, vec![2]);
    let indices: Vec<u64> = vol.read_items(id, 0, 6).unwrap().iter().map(|(i, _)| *i).collect();
    assert_eq!(indices, [0, 1, 3, 4, 5]);
    assert!(matches!(vol.delete_items(id, &[2]), Err(VolumeError::Tombstoned(2))));
    assert!(matches!(vol.set_item(id, 2, row("x", 0.0)), Err(VolumeError::Tombstoned(2))));
    assert!(matches!(
        vol.set_item(id, 6, row("x", 0.0)),
        Err(VolumeError::IndexOutOfBounds { .. })
    ));
}

#[test]
fn freeze_rejects_mutation_in_range_only() {
    let (_dir, mut vol) = fresh();
    let id = vol.create_container("w", weather_schema()).unwrap();
    vol.append_items(id, fixture_rows()).unwrap();
    let all = vol.freeze(id, 0, 6).unwrap();
    assert!(matches!(vol.set_item(id, 3, row("x", 0.0)), Err(VolumeError::Frozen(3))));
    vol.unfreeze(all.token_id).unwrap();
    assert!(matches!(vol.unfreeze(all.token_id), Err(VolumeError::NoSuchToken(_))));
    vol.set_item(id, 3, row("SF", 30.5)).unwrap();

    let part = vol.freeze(id, 0, 2).unwrap();
    vol.set_item(id, 4, row("LA", 18.5)).unwrap();
    assert!(matches!(vol.delete_items(id, &[5, 1]), Err(VolumeError::Frozen(1))));
    assert_eq!(vol.container_meta(id).unwrap().live_count(), 6);

    let before = vol.read_through_token(part.token_id).unwrap();
    vol.append_items(id, vec![row("SF", 99.0)]).unwrap();
    assert_eq!(vol.read_through_token(part.token_id).unwrap(), before);
    assert!(matches!(vol.freeze(id, 3, 3), Err(VolumeError::RangeOutOfBounds { .. })));
}

#[test]
fn overlapping_freezes() {
    let (_dir, mut vol) = fresh();
    let id = vol.create_container("w", weather_schema()).unwrap();
    vol.append_items(id, fixture_rows()).unwrap();
    let a = vol.freeze(id, 0, 4).unwrap();
    let b = vol.freeze(id, 2, 6).unwrap();
    vol.unfreeze(a.token_id).unwrap();
    assert!(matches!(vol.set_item(id, 3, row("x", 1.0)), Err(VolumeError::Frozen(3))));
    vol.set_item(id, 1, row("x", 1.0)).unwrap();
    vol.unfreeze(b.token_id).unwrap();
    vol.set_item(id, 3, row("x", 1.0)).unwrap();
}

#[test]
fn reopen_preserves_contents_and_repairs_derived_files() {
    let (dir, mut vol) = fresh();
    let schema = ItemSchema::new(vec![
        Field::new("k", FieldType::U64),
        Field::new("s", FieldType::Utf8(32)),
    ])
    .unwrap();
    let id = vol.create_container("v", schema).unwrap();
    let items: Vec<Item> = (0..50u64)
        .map(|i| Item::new(vec![Value::U64(i), Value::Utf8("x".repeat(i as usize % 7))]))
        .collect();
    vol.append_items(id, items).unwrap();
    vol.set_item(id, 7, Item::new(vec![Value::U64(700), Value::Utf8("long value".into())]))
        .unwrap();
    vol.delete_items(id, &[3, 40]).unwrap();
    let before = vol.read_items(id, 0, 50).unwrap();
    let meta = vol.container_meta(id).unwrap();
    let [_, idx, del] = vol.container_files(id);
    drop(vol);

    fs::write(&idx, b"garbage").unwrap();
    fs::write(&del, b"").unwrap();
    let vol = Volume::open(dir.path().join("vol"), VolumeOptions::default()).unwrap();
    assert_eq!(vol.read_items(id, 0, 50).unwrap(), before);
    assert_eq!(vol.container_meta(id).unwrap(), meta);
    assert_eq!(fs::read(&idx).unwrap().len(), 50 * 8);
    let bitmap = fs::read(&del).unwrap();
    assert_eq!(bitmap.len(), 7);
    assert_eq!(bitmap[0], 1 << 3);
    assert_eq!(bitmap[5], 1 << 0);
}

#[test]
fn idx_offsets_point_at_item_bytes() {
    let (_dir, mut vol) = fresh();
    let id = vol.create_container("w", weather_schema()).unwrap();
    vol.append_items(id, fixture_rows()).unwrap();
    vol.set_item(id, 2, row("Boston", 1.0)).unwrap();
    let [dat, idx, _] = vol.container_files(id);
    let dat = fs::read(dat).unwrap();
    let idx = fs::read(idx).unwrap();
    let schema = weather_schema();
    for (i, chunk) in idx.chunks(8).enumerate() {
        let off = u64::from_le_bytes(chunk.try_into().unwrap()) as usize;
        let len = u32::from_le_bytes(dat[off - 4..off].try_into().unwrap()) as usize;
        let item = decode_item(&schema, &dat[off..off + len]).unwrap();
        assert_eq!(item, vol.read_items(id, i as u64, i as u64 + 1).unwrap()[0].1);
    }
}

#[test]
fn crash_before_catalog_loses_the_batch_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vol");
    let fault = Arc::new(FaultInjector::new());
    let mut vol = Volume::create(&path, VolumeOptions::default().with_fault(fault.clone())).unwrap();
    let id = vol.create_container("w", weather_schema()).unwrap();
    vol.append_items(id, fixture_rows()[..2].to_vec()).unwrap();
    fault.arm(1);
    assert!(matches!(
        vol.append_items(id, fixture_rows()[2..].to_vec()),
        Err(VolumeError::SimulatedCrash("commit.data"))
    ));
    assert!(vol.append_items(id, vec![]).is_err());
    drop(vol);
    let mut vol = Volume::open(&path, VolumeOptions::default()).unwrap();
    assert_eq!(vol.container_meta(id).unwrap().item_count, 2);
    assert_eq!(vol.generation(id).unwrap(), 1);
    vol.append_items(id, fixture_rows()[2..].to_vec()).unwrap();
    let items: Vec<Item> = vol.read_items(id, 0, 6).unwrap().into_iter().map(|x| x.1).collect();
    assert_eq!(items, fixture_rows());
}

#[test]
fn crash_after_catalog_keeps_the_batch() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vol");
    let fault = Arc::new(FaultInjector::new());
    let mut vol = Volume::create(&path, VolumeOptions::default().with_fault(fault.clone())).unwrap();
    let id = vol.create_container("w", weather_schema()).unwrap();
    fault.arm(2);
    assert!(vol.append_items(id, fixture_rows()).is_err());
    drop(vol);
    let vol = Volume::open(&path, VolumeOptions::default()).unwrap();
    assert_eq!(vol.container_meta(id).unwrap().item_count, 6);
}

#[test]
fn seq_allocation_survives_restart() {
    let (dir, mut vol) = fresh();
    let a = vol.allocate_seq().unwrap();
    let b = vol.allocate_seq().unwrap();
    assert!(b > a);
    drop(vol);
    let mut vol = Volume::open(dir.path().join("vol"), VolumeOptions::default()).unwrap();
    assert!(vol.allocate_seq().unwrap() > b);
}

#[test]
fn journal_and_watermark() {
    let (dir, mut vol) = fresh();
    for body in [b"a", b"b", b"c"] {
        let seq = vol.allocate_seq().unwrap();
        vol.journal_append(seq, body).unwrap();
    }
    let seqs: Vec<u64> = vol.journal_pending().iter().map(|r| r.seq).collect();
    assert_eq!(seqs.len(), 3);
    vol.advance_watermark(seqs[0]).unwrap();
    drop(vol);
    let vol = Volume::open(dir.path().join("vol"), VolumeOptions::default()).unwrap();
    assert_eq!(vol.watermark(), seqs[0]);
    assert_eq!(
        vol.journal_pending().iter().map(|r| r.seq).collect::<Vec<_>>(),
        &seqs[1..]
    );
}

#[test]
fn journal_stamp_advances_effective_watermark() {
    let (_dir, mut vol) = fresh();
    let id = vol.create_container("w", weather_schema()).unwrap();
    let seq = vol.allocate_seq().unwrap();
    vol.journal_append(seq, b"x").unwrap();
    vol.append_items_tagged(id, fixture_rows(), Some(seq)).unwrap();
    assert_eq!(vol.watermark(), 0);
    assert_eq!(vol.effective_watermark(), seq);
    assert!(vol.journal_pending().is_empty());
}

#[test]
fn trigger_files() {
    let (dir, mut vol) = fresh();
    assert!(vol.read_triggers().unwrap().is_empty());
    vol.write_triggers(b"reg").unwrap();
    vol.append_trigger_log(b"one").unwrap();
    vol.append_trigger_log(b"two").unwrap();
    drop(vol);
    let vol = Volume::open(dir.path().join("vol"), VolumeOptions::default()).unwrap();
    assert_eq!(vol.read_triggers().unwrap(), b"reg");
    assert_eq!(vol.trigger_log_bytes().unwrap(), b"onetwo");
}

mod props {
    use super::*;
    use proptest::prelude::*;

    #[derive(Debug, Clone)]
    enum Op {
        Append(Vec<u64>),
        Set(usize, u64),
        Delete(usize),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            proptest::collection::vec(any::<u64>(), 0..5).prop_map(Op::Append),
            (any::<usize>(), any::<u64>()).prop_map(|(i, v)| Op::Set(i, v)),
            any::<usize>().prop_map(Op::Delete),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// Reopening after any op sequence reproduces a plain in-memory model,
        /// and generations rise by one per non-empty batch.
        #[test]
        fn model_and_durability(ops in proptest::collection::vec(op(), 1..25)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("vol");
            let mut vol = Volume::create(&path, VolumeOptions::default()).unwrap();
            let schema = ItemSchema::new(vec![
                Field::new("v", FieldType::U64),
                Field::new("s", FieldType::Bytes(8)),
            ]).unwrap();
            let id = vol.create_container("m", schema).unwrap();
            let mut model: Vec<Option<u64>> = Vec::new();
            let mut generation = 0;
            let item = |v: u64| Item::new(vec![Value::U64(v), Value::Bytes(vec![0; (v % 9) as usize])]);
            for op in ops {
                match op {
                    Op::Append(vs) => {
                        let empty = vs.is_empty();
                        vol.append_items(id, vs.iter().map(|v| item(*v)).collect()).unwrap();
                        model.extend(vs.into_iter().map(Some));
                        if !empty { generation += 1; }
                    }
                    Op::Set(i, v) if !model.is_empty() => {
                        let i = i % model.len();
                        let r = vol.set_item(id, i as u64, item(v));
                        if model[i].is_some() {
                            r.unwrap();
                            model[i] = Some(v);
                            generation += 1;
                        } else {
                            prop_assert!(r.is_err());
                        }
                    }
                    Op::Delete(i) if !model.is_empty() => {
                        let i = i % model.len();
                        let r = vol.delete_items(id, &[i as u64]);
                        if model[i].is_some() {
                            r.unwrap();
                            model[i] = None;
                            generation += 1;
                        } else {
                            prop_assert!(r.is_err());
                        }
                    }
                    _ => {}
                }
                prop_assert_eq!(vol.generation(id).unwrap(), generation);
            }
            drop(vol);
            let vol = Volume::open(&path, VolumeOptions::default()).unwrap();
            let expected: Vec<(u64, Item)> = model
                .iter()
                .enumerate()
                .filter_map(|(i, v)| v.map(|v| (i as u64, item(v))))
                .collect();
            prop_assert_eq!(vol.read_items(id, 0, model.len() as u64).unwrap(), expected);
            prop_assert_eq!(vol.generation(id).unwrap(), generation);
        }
    }
}
