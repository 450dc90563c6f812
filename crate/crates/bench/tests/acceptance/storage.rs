use std::sync::Arc;

use pc_core::containers::{builtin, HandleElem, PVector};
use pc_core::object::*;
use rand::{Rng, SeedableRng};

use crate::{ensure, Outcome};

/// A vector holding one `DataPoint` whose `data` vector holds `i as f64`
/// for `i` in `0..100`, rooted in a fresh block.
fn build_listing(heap: &mut Heap, dp: TypeCode) -> Result<BlockId, ObjectError> {
    let id = heap.make_block(1 << 20, AllocPolicy::LightweightReuse)?;
    let (vec_obj, my_vec) = PVector::<HandleElem>::create(heap)?;
    let point = heap.make_object(dp, ObjectPolicy::FullRefCount)?;
    let (data_obj, data) = PVector::<f64>::create(heap)?;
    for i in 0..100 {
        data.push(heap, i as f64)?;
    }
    heap.move_handle(point.slot(0), data_obj)?;
    my_vec.push_moved(heap, point)?;
    heap.assign_handle(Slot::root(id), Some(vec_obj))?;
    heap.release(vec_obj)?;
    Ok(id)
}

fn traverse(view: &BlockView<'_>, id: BlockId) -> Vec<Vec<f64>> {
    let Some((off, ty)) = view.root() else {
        return Vec::new();
    };
    PVector::<HandleElem>::of(ObjRef { block: id, off, ty })
        .handles(view)
        .into_iter()
        .flatten()
        .filter_map(|p| view.handle_at(p.payload()))
        .map(|(doff, dty)| {
            PVector::<f64>::of(ObjRef {
                block: id,
                off: doff,
                ty: dty,
            })
            .to_vec(view)
        })
        .collect()
}

pub fn zero_copy_round_trip() -> Outcome {
    let reg = TypeRegistry::new();
    let dp = reg
        .register(BehaviorDescriptor::record(
            "DataPoint",
            &[("data", FieldKind::Handle)],
        ))
        .map_err(|e| e.to_string())?;
    let mut heap = Heap::new(Arc::new(reg));
    let id = build_listing(&mut heap, dp).map_err(|e| e.to_string())?;
    let before = traverse(&heap.view(id).map_err(|e| e.to_string())?, id);
    ensure!(
        before.len() == 1 && before[0].len() == 100 && before[0][5] == 5.0,
        "listing graph is wrong: {before:?}"
    );
    let bytes = export_block(heap.block(id).ok_or("block missing")?);

    let shift = rand_chacha::ChaCha8Rng::seed_from_u64(0xb10c).gen_range(1..1 << 24);
    let fixups = import_fixups();
    let frozen = import_block_at(&bytes, shift).map_err(|e| e.to_string())?;
    let done = import_fixups() - fixups;
    let after = traverse(&frozen.view(), frozen.id());
    ensure!(
        frozen.base_offset() == shift,
        "block placed at {} not {shift}",
        frozen.base_offset()
    );
    ensure!(after == before, "traversal differs after import");
    ensure!(done == 0, "{done} per-object fixups during import");
    Ok(format!(
        "{} bytes, base shift {shift}, fixups 0",
        bytes.len()
    ))
}

fn no_reuse() -> Result<(), String> {
    let mut heap = Heap::new(Arc::new(TypeRegistry::new()));
    heap.make_block(1 << 16, AllocPolicy::NoReuse)
        .map_err(|e| e.to_string())?;
    let mut last = None;
    for _ in 0..8 {
        let a = heap
            .make_array(builtin::ARRAY_I64, 8, ObjectPolicy::FullRefCount)
            .map_err(|e| e.to_string())?;
        ensure!(
            last.is_none_or(|l| a.off > l),
            "no-reuse offset {} did not increase",
            a.off
        );
        last = Some(a.off);
        heap.release(a).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn lightweight() -> Result<(), String> {
    let mut heap = Heap::new(Arc::new(TypeRegistry::new()));
    heap.make_block(1 << 16, AllocPolicy::LightweightReuse)
        .map_err(|e| e.to_string())?;
    let a = heap
        .make_array(builtin::ARRAY_I64, 8, ObjectPolicy::FullRefCount)
        .map_err(|e| e.to_string())?;
    let _keep = heap
        .make_array(builtin::ARRAY_I64, 8, ObjectPolicy::FullRefCount)
        .map_err(|e| e.to_string())?;
    heap.release(a).map_err(|e| e.to_string())?;
    let b = heap
        .make_array(builtin::ARRAY_I64, 8, ObjectPolicy::FullRefCount)
        .map_err(|e| e.to_string())?;
    ensure!(
        b.off == a.off,
        "lightweight reuse gave {} instead of {}",
        b.off,
        a.off
    );
    Ok(())
}

fn recycling() -> Result<(), String> {
    let mut heap = Heap::new(Arc::new(TypeRegistry::new()));
    let id = heap
        .make_block(1 << 16, AllocPolicy::Recycling)
        .map_err(|e| e.to_string())?;
    let a = heap
        .make_object(builtin::BOX_F64, ObjectPolicy::FullRefCount)
        .map_err(|e| e.to_string())?;
    let _keep = heap
        .make_object(builtin::BOX_F64, ObjectPolicy::FullRefCount)
        .map_err(|e| e.to_string())?;
    heap.release(a).map_err(|e| e.to_string())?;
    let recycled = heap.block(id).ok_or("block missing")?.stats().recycled;
    let b = heap
        .make_object(builtin::BOX_F64, ObjectPolicy::FullRefCount)
        .map_err(|e| e.to_string())?;
    ensure!(
        b.off == a.off,
        "recycling gave {} instead of {}",
        b.off,
        a.off
    );
    ensure!(
        heap.block(id).ok_or("block missing")?.stats().recycled == recycled + 1,
        "slot was not taken from the recycle list"
    );
    Ok(())
}

fn no_refcount() -> Result<(), String> {
    let mut heap = Heap::new(Arc::new(TypeRegistry::new()));
    let id = heap
        .make_block(4096, AllocPolicy::LightweightReuse)
        .map_err(|e| e.to_string())?;
    let obj = heap
        .make_object(builtin::BOX_I64, ObjectPolicy::NoRefCount)
        .map_err(|e| e.to_string())?;
    ensure!(
        heap.header(obj).map_err(|e| e.to_string())?.policy == ObjectPolicy::NoRefCount,
        "policy flag not stored"
    );
    heap.assign_handle(Slot::root(id), Some(obj))
        .map_err(|e| e.to_string())?;
    heap.assign_handle(Slot::root(id), None)
        .map_err(|e| e.to_string())?;
    heap.release(obj).map_err(|e| e.to_string())?;
    let h = heap.header(obj).map_err(|e| e.to_string())?;
    ensure!(
        h.live && h.ref_count == 0,
        "no-refcount object changed: live={} count={}",
        h.live,
        h.ref_count
    );
    ensure!(
        heap.block(id).ok_or("block missing")?.free_chunks().count() == 0,
        "no-refcount space was freed"
    );
    Ok(())
}

fn unique_ownership() -> Result<(), String> {
    let mut heap = Heap::new(Arc::new(TypeRegistry::new()));
    let id = heap
        .make_block(4096, AllocPolicy::LightweightReuse)
        .map_err(|e| e.to_string())?;
    let obj = heap
        .make_object(builtin::BOX_I64, ObjectPolicy::UniqueOwnership)
        .map_err(|e| e.to_string())?;
    let second = heap.assign_handle(Slot::root(id), Some(obj));
    ensure!(
        second == Err(ObjectError::UniqueOwnershipViolation),
        "second handle allowed: {second:?}"
    );
    heap.release(obj).map_err(|e| e.to_string())?;
    ensure!(
        !heap.header(obj).map_err(|e| e.to_string())?.live,
        "unique object survived its release"
    );
    ensure!(
        heap.block(id).ok_or("block missing")?.active_objects() == 0,
        "block still counts the object"
    );
    Ok(())
}

fn full_refcount() -> Result<(), String> {
    let reg = TypeRegistry::new();
    let dp = reg
        .register(BehaviorDescriptor::record(
            "DataPoint",
            &[("data", FieldKind::Handle)],
        ))
        .map_err(|e| e.to_string())?;
    let mut heap = Heap::new(Arc::new(reg));
    let id = build_listing(&mut heap, dp).map_err(|e| e.to_string())?;
    let live = heap.block(id).ok_or("block missing")?.active_objects();
    ensure!(live > 0, "listing holds no objects");
    heap.release_handle(Slot::root(id))
        .map_err(|e| e.to_string())?;
    let left = heap.block(id).ok_or("block missing")?.active_objects();
    ensure!(left == 0, "{left} objects left after dropping the root");
    Ok(())
}

pub fn allocation_policies() -> Outcome {
    type Case = fn() -> Result<(), String>;
    let cases: [(&str, Case); 6] = [
        ("no-reuse", no_reuse),
        ("lightweight", lightweight),
        ("recycling", recycling),
        ("no-refcount", no_refcount),
        ("unique-ownership", unique_ownership),
        ("full-refcount", full_refcount),
    ];
    for (name, case) in cases {
        case().map_err(|e| format!("{name}: {e}"))?;
    }
    Ok("3 allocator and 3 object policies".into())
}
