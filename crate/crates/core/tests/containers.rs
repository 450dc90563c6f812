use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use pc_core::containers::*;
use pc_core::object::*;
use proptest::prelude::*;

fn heap() -> Heap {
    let mut heap = Heap::new(Arc::new(TypeRegistry::new()));
    heap.make_block(1 << 22, AllocPolicy::LightweightReuse)
        .unwrap();
    heap
}

#[test]
fn push_into_empty_vector() {
    let mut heap = heap();
    let (obj, v) = PVector::<i64>::create(&mut heap).unwrap();
    v.push(&mut heap, 42).unwrap();
    let view = heap.view(obj.block).unwrap();
    assert_eq!(v.len(&view), 1);
    assert_eq!(v.get(&view, 0), 42);
}

#[test]
fn growth_matches_growable_array_oracle() {
    let mut heap = heap();
    let (obj, v) = PVector::<f64>::create(&mut heap).unwrap();
    let mut oracle = Vec::new();
    let mut caps = Vec::new();
    for i in 0..300 {
        let x = (i as f64) * 0.5 - 7.0;
        v.push(&mut heap, x).unwrap();
        oracle.push(x);
        let view = heap.view(obj.block).unwrap();
        assert_eq!(v.to_vec(&view), oracle);
        caps.push(v.capacity(&view));
    }
    caps.dedup();
    assert_eq!(caps, vec![4, 8, 16, 32, 64, 128, 256, 512]);
    let reg = heap.registry().clone();
    check_relocation_closure(heap.view(obj.block).unwrap(), &reg).unwrap();
}

#[test]
fn handle_vector_growth_keeps_targets() {
    let mut heap = heap();
    let (obj, v) = PVector::<HandleElem>::create(&mut heap).unwrap();
    let mut targets = Vec::new();
    for i in 0..50i64 {
        let s = make_string(&mut heap, &format!("s{i}")).unwrap();
        v.push_moved(&mut heap, s).unwrap();
        targets.push(s);
    }
    let view = heap.view(obj.block).unwrap();
    let got: Vec<_> = v.handles(&view).into_iter().map(|h| h.unwrap()).collect();
    assert_eq!(got, targets);
    for (i, h) in got.iter().enumerate() {
        assert_eq!(read_string(&view, h.off), format!("s{i}"));
        assert_eq!(view.header(h.off).ref_count, 1);
    }
    let reg = heap.registry().clone();
    check_relocation_closure(view, &reg).unwrap();
}

#[test]
fn upsert_adds_values() {
    let mut heap = heap();
    let m = PMap::create(&mut heap, KeyKind::Str, ValueKind::Int).unwrap();
    m.upsert_int(&mut heap, KeyRef::Str("a"), 1, Combine::Sum)
        .unwrap();
    m.upsert_int(&mut heap, KeyRef::Str("a"), 2, Combine::Sum)
        .unwrap();
    let view = heap.view(m.obj.block).unwrap();
    assert_eq!(m.get(&view, KeyRef::Str("a")), Some(MapValue::Int(3)));
    assert_eq!(m.len(&view), 1);
}

#[test]
fn thousand_keys_are_retrievable() {
    let mut heap = heap();
    let m = PMap::create(&mut heap, KeyKind::Int, ValueKind::Double).unwrap();
    let mut oracle = HashMap::new();
    for k in 0..1000i64 {
        let v = (k * 31 % 97) as f64;
        m.upsert_double(&mut heap, KeyRef::Int(k * 7919), v, Combine::Sum)
            .unwrap();
        oracle.insert(k * 7919, v);
    }
    let view = heap.view(m.obj.block).unwrap();
    assert_eq!(m.len(&view), 1000);
    for (k, v) in &oracle {
        assert_eq!(m.get(&view, KeyRef::Int(*k)), Some(MapValue::Double(*v)));
    }
    assert_eq!(m.get(&view, KeyRef::Int(-1)), None);
    assert_eq!(m.entries(&view).len(), 1000);
}

fn int_map(heap: &mut Heap, pairs: &[(&str, i64)]) -> PMap {
    let m = PMap::create(heap, KeyKind::Str, ValueKind::Int).unwrap();
    for (k, v) in pairs {
        m.upsert_int(heap, KeyRef::Str(k), *v, Combine::Sum)
            .unwrap();
    }
    m
}

fn as_btree(heap: &Heap, m: PMap) -> BTreeMap<OwnedKey, MapValue> {
    m.entries(&heap.view(m.obj.block).unwrap())
        .into_iter()
        .collect()
}

#[test]
fn merge_examples() {
    let mut heap = heap();
    let src = int_map(&mut heap, &[("a", 1), ("b", 2)]);
    let dst = int_map(&mut heap, &[("b", 3), ("c", 4)]);
    let src_before = as_btree(&heap, src);
    dst.merge_from(&mut heap, src, Combine::Sum).unwrap();
    let expect: BTreeMap<_, _> = [("a", 1), ("b", 5), ("c", 4)]
        .into_iter()
        .map(|(k, v)| (OwnedKey::Str(k.into()), MapValue::Int(v)))
        .collect();
    assert_eq!(as_btree(&heap, dst), expect);
    assert_eq!(as_btree(&heap, src), src_before);

    let empty = int_map(&mut heap, &[]);
    dst.merge_from(&mut heap, empty, Combine::Sum).unwrap();
    assert_eq!(as_btree(&heap, dst), expect);

    let x = int_map(&mut heap, &[("k", 10)]);
    let y = int_map(&mut heap, &[("k", 5)]);
    x.merge_from(&mut heap, y, Combine::Sum).unwrap();
    assert_eq!(
        as_btree(&heap, x).into_iter().collect::<Vec<_>>(),
        vec![(OwnedKey::Str("k".into()), MapValue::Int(15))]
    );
}

#[test]
fn dvec_values_combine_elementwise() {
    let mut heap = heap();
    let m = PMap::create(&mut heap, KeyKind::Int, ValueKind::DoubleVec).unwrap();
    m.upsert_dvec(&mut heap, KeyRef::Int(1), &[1.0, 2.0, 3.0], Combine::Sum)
        .unwrap();
    m.upsert_dvec(&mut heap, KeyRef::Int(1), &[0.5, 0.5, 0.5], Combine::Sum)
        .unwrap();
    let view = heap.view(m.obj.block).unwrap();
    assert_eq!(
        m.get(&view, KeyRef::Int(1)),
        Some(MapValue::DoubleVec(vec![1.5, 2.5, 3.5]))
    );
    assert!(matches!(
        m.upsert_dvec(&mut heap, KeyRef::Int(1), &[1.0], Combine::Sum),
        Err(ObjectError::TypeMismatch(_))
    ));
}

#[test]
fn handle_lists_copy_foreign_targets() {
    let mut heap = heap();
    let s = make_string(&mut heap, "payload").unwrap();
    heap.make_block(1 << 16, AllocPolicy::LightweightReuse)
        .unwrap();
    let m = PMap::create(&mut heap, KeyKind::Int, ValueKind::HandleList).unwrap();
    m.append_handle(&mut heap, KeyRef::Int(9), Some(s)).unwrap();
    m.append_handle(&mut heap, KeyRef::Int(9), Some(s)).unwrap();
    assert_eq!(heap.stats().deep_copies, 2);
    let view = heap.view(m.obj.block).unwrap();
    let Some(MapValue::HandleList(hs)) = m.get(&view, KeyRef::Int(9)) else {
        panic!("list expected")
    };
    assert_eq!(hs.len(), 2);
    for h in hs {
        let h = h.unwrap();
        assert_eq!(h.block, m.obj.block);
        assert_eq!(read_string(&view, h.off), "payload");
    }
    let reg = heap.registry().clone();
    check_relocation_closure(view, &reg).unwrap();
}

#[test]
fn map_survives_export_import() {
    let mut heap = heap();
    let id = heap.active_id().unwrap();
    let m = PMap::create(&mut heap, KeyKind::Str, ValueKind::DoubleVec).unwrap();
    heap.assign_handle(Slot::root(id), Some(m.obj)).unwrap();
    for k in 0..1000 {
        let key = format!("key-{k}");
        m.upsert_dvec(
            &mut heap,
            KeyRef::Str(&key),
            &[k as f64, (k * k) as f64],
            Combine::Sum,
        )
        .unwrap();
    }
    let before = m.entries(&heap.view(id).unwrap());
    let bytes = export_block(heap.block(id).unwrap());
    let frozen = import_block_at(&bytes, 777).unwrap();
    let view = frozen.view();
    let (off, ty) = view.root().unwrap();
    let imported = PMap::of(ObjRef {
        block: frozen.id(),
        off,
        ty,
    });
    assert_eq!(imported.entries(&view), before);
    assert_eq!(
        imported.get(&view, KeyRef::Str("key-500")),
        Some(MapValue::DoubleVec(vec![500.0, 250000.0]))
    );
}

#[test]
fn iteration_order_is_deterministic() {
    let run = || {
        let mut heap = heap();
        let m = PMap::create(&mut heap, KeyKind::Int, ValueKind::Int).unwrap();
        for k in [5i64, -3, 99, 12, 7, 1 << 40, 0] {
            m.upsert_int(&mut heap, KeyRef::Int(k), k, Combine::Sum)
                .unwrap();
        }
        m.entries(&heap.view(m.obj.block).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn colliding_bucket_keys_stay_distinct() {
    let mut heap = heap();
    let m = PMap::create(&mut heap, KeyKind::Int, ValueKind::Int).unwrap();
    // With 8 buckets, keys sharing low hash bits chain together.
    let keys: Vec<i64> = (0..10_000)
        .filter(|k| hash_u64(*k as u64) & 7 == 3)
        .take(5)
        .collect();
    for &k in &keys {
        m.upsert_int(&mut heap, KeyRef::Int(k), k + 1, Combine::Sum)
            .unwrap();
    }
    let view = heap.view(m.obj.block).unwrap();
    for &k in &keys {
        assert_eq!(m.get(&view, KeyRef::Int(k)), Some(MapValue::Int(k + 1)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_merge_matches_oracle(
        a in prop::collection::vec((0i64..700, -1000i64..1000), 0..500),
        b in prop::collection::vec((0i64..700, -1000i64..1000), 0..500),
    ) {
        let mut heap = heap();
        let ma = PMap::create(&mut heap, KeyKind::Int, ValueKind::Int).unwrap();
        let mb = PMap::create(&mut heap, KeyKind::Int, ValueKind::Int).unwrap();
        let mut oracle: HashMap<i64, i64> = HashMap::new();
        for &(k, v) in &a {
            ma.upsert_int(&mut heap, KeyRef::Int(k), v, Combine::Sum).unwrap();
            *oracle.entry(k).or_default() += v;
        }
        for &(k, v) in &b {
            mb.upsert_int(&mut heap, KeyRef::Int(k), v, Combine::Sum).unwrap();
            *oracle.entry(k).or_default() += v;
        }
        ma.merge_from(&mut heap, mb, Combine::Sum).unwrap();
        let got: HashMap<i64, i64> = ma
            .entries(&heap.view(ma.obj.block).unwrap())
            .into_iter()
            .map(|(k, v)| match (k, v) {
                (OwnedKey::Int(k), MapValue::Int(v)) => (k, v),
                other => panic!("unexpected entry {other:?}"),
            })
            .collect();
        prop_assert_eq!(got, oracle);
    }

    #[test]
    fn vectors_round_trip_any_shift(xs in prop::collection::vec(any::<i64>(), 0..400), shift in 0usize..10_000) {
        let mut heap = heap();
        let id = heap.active_id().unwrap();
        let (obj, v) = PVector::<i64>::create(&mut heap).unwrap();
        heap.assign_handle(Slot::root(id), Some(obj)).unwrap();
        v.extend_from_slice(&mut heap, &xs).unwrap();
        let frozen = import_block_at(&export_block(heap.block(id).unwrap()), shift).unwrap();
        let view = frozen.view();
        let (off, ty) = view.root().unwrap();
        prop_assert_eq!(PVector::<i64>::of(ObjRef { block: frozen.id(), off, ty }).to_vec(&view), xs);
    }
}
