use super::{builtin, hash_bytes, hash_u64, make_string, read_string, HandleElem, PVector};
use crate::object::{
    BlockView, Heap, ObjRef, ObjectError, ObjectPolicy, TypeCode, OBJ_HEADER_SIZE,
};

const COUNT: u32 = 0;
const NBUCKETS: u32 = 4;
const BUCKETS: u32 = 8;
const KEY_KIND: u32 = 16;
const VALUE_KIND: u32 = 20;

const E_NEXT: u32 = 0;
const E_HASH: u32 = 8;
const E_KEY: u32 = 16;
const E_VALUE: u32 = 24;

const INITIAL_BUCKETS: u32 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeyKind {
    Int = 0,
    Str = 1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueKind {
    Int = 0,
    Double = 1,
    /// A `Vector<f64>` combined elementwise.
    DoubleVec = 2,
    /// A `Vector<Handle>` that only ever grows.
    HandleList = 3,
}

impl KeyKind {
    fn from_i32(v: i32) -> KeyKind {
        if v == 1 {
            KeyKind::Str
        } else {
            KeyKind::Int
        }
    }
}

impl ValueKind {
    fn from_i32(v: i32) -> ValueKind {
        match v {
            1 => ValueKind::Double,
            2 => ValueKind::DoubleVec,
            3 => ValueKind::HandleList,
            _ => ValueKind::Int,
        }
    }

    fn is_handle(self) -> bool {
        matches!(self, ValueKind::DoubleVec | ValueKind::HandleList)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeyRef<'a> {
    Int(i64),
    Str(&'a str),
}

impl KeyRef<'_> {
    pub fn hash(&self) -> u64 {
        match self {
            KeyRef::Int(v) => hash_u64(*v as u64),
            KeyRef::Str(s) => hash_bytes(s.as_bytes()),
        }
    }

    /// Which of `parts` partitions the key belongs to. Uses the high half of
    /// the hash so keys sharing a partition still spread over map buckets.
    pub fn partition(&self, parts: usize) -> usize {
        ((self.hash() >> 32) % parts.max(1) as u64) as usize
    }

    pub fn kind(&self) -> KeyKind {
        match self {
            KeyRef::Int(_) => KeyKind::Int,
            KeyRef::Str(_) => KeyKind::Str,
        }
    }

    pub fn to_owned(&self) -> OwnedKey {
        match self {
            KeyRef::Int(v) => OwnedKey::Int(*v),
            KeyRef::Str(s) => OwnedKey::Str((*s).to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OwnedKey {
    Int(i64),
    Str(String),
}

impl OwnedKey {
    pub fn as_ref(&self) -> KeyRef<'_> {
        match self {
            OwnedKey::Int(v) => KeyRef::Int(*v),
            OwnedKey::Str(s) => KeyRef::Str(s),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MapValue {
    Int(i64),
    Double(f64),
    DoubleVec(Vec<f64>),
    HandleList(Vec<Option<ObjRef>>),
}

impl MapValue {
    pub fn kind(&self) -> ValueKind {
        match self {
            MapValue::Int(_) => ValueKind::Int,
            MapValue::Double(_) => ValueKind::Double,
            MapValue::DoubleVec(_) => ValueKind::DoubleVec,
            MapValue::HandleList(_) => ValueKind::HandleList,
        }
    }
}

/// How an upsert folds a new value into an existing one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Combine {
    Sum,
    Min,
    Max,
    Replace,
}

impl Combine {
    pub fn i64(self, old: i64, new: i64) -> i64 {
        match self {
            Combine::Sum => old.wrapping_add(new),
            Combine::Min => old.min(new),
            Combine::Max => old.max(new),
            Combine::Replace => new,
        }
    }

    pub fn f64(self, old: f64, new: f64) -> f64 {
        match self {
            Combine::Sum => old + new,
            Combine::Min => old.min(new),
            Combine::Max => old.max(new),
            Combine::Replace => new,
        }
    }
}

/// A hash map stored in a block: separate chaining over a power-of-two
/// bucket array, doubled when the load factor passes 3/4.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PMap {
    pub obj: ObjRef,
}

impl PMap {
    /// Allocates an empty map in the active block.
    pub fn create(heap: &mut Heap, key: KeyKind, value: ValueKind) -> Result<PMap, ObjectError> {
        let obj = heap.make_object(builtin::MAP, ObjectPolicy::FullRefCount)?;
        heap.set_i32(obj, KEY_KIND, key as i32)?;
        heap.set_i32(obj, VALUE_KIND, value as i32)?;
        heap.set_i32(obj, NBUCKETS, INITIAL_BUCKETS as i32)?;
        let buckets = heap.make_array(
            builtin::ARRAY_HANDLE,
            INITIAL_BUCKETS,
            ObjectPolicy::FullRefCount,
        )?;
        heap.write_handle_raw(obj.block, obj.payload() + BUCKETS, Some(buckets))?;
        Ok(PMap { obj })
    }

    pub fn of(obj: ObjRef) -> PMap {
        PMap { obj }
    }

    fn at(&self, rel: u32) -> u32 {
        self.obj.payload() + rel
    }

    pub fn len(&self, view: &BlockView<'_>) -> usize {
        view.read_i32(self.at(COUNT)) as usize
    }

    pub fn is_empty(&self, view: &BlockView<'_>) -> bool {
        self.len(view) == 0
    }

    pub fn bucket_count(&self, view: &BlockView<'_>) -> usize {
        view.read_i32(self.at(NBUCKETS)) as usize
    }

    pub fn key_kind(&self, view: &BlockView<'_>) -> KeyKind {
        KeyKind::from_i32(view.read_i32(self.at(KEY_KIND)))
    }

    pub fn value_kind(&self, view: &BlockView<'_>) -> ValueKind {
        ValueKind::from_i32(view.read_i32(self.at(VALUE_KIND)))
    }

    fn entry_type(&self, view: &BlockView<'_>) -> TypeCode {
        let k = (self.key_kind(view) == KeyKind::Str) as usize;
        let v = self.value_kind(view).is_handle() as usize;
        builtin::MAP_ENTRY[k * 2 + v]
    }

    fn bucket_slot(&self, view: &BlockView<'_>, hash: u64) -> u32 {
        let (buckets, _) = view
            .handle_at(self.at(BUCKETS))
            .expect("map has a bucket array");
        let nb = self.bucket_count(view) as u64;
        buckets + OBJ_HEADER_SIZE as u32 + ((hash & (nb - 1)) * 8) as u32
    }

    fn entry_key<'a>(view: &BlockView<'a>, entry: u32, kind: KeyKind) -> KeyRef<'a> {
        let pos = entry + OBJ_HEADER_SIZE as u32 + E_KEY;
        match kind {
            KeyKind::Int => KeyRef::Int(view.read_i64(pos)),
            KeyKind::Str => {
                let (s, _) = view.handle_at(pos).expect("string key present");
                KeyRef::Str(read_string(view, s))
            }
        }
    }

    fn find(&self, view: &BlockView<'_>, key: KeyRef<'_>, hash: u64) -> Option<u32> {
        let kind = self.key_kind(view);
        let mut cur = view.handle_at(self.bucket_slot(view, hash));
        while let Some((e, _)) = cur {
            let p = e + OBJ_HEADER_SIZE as u32;
            if view.read_u64(p + E_HASH) == hash && Self::entry_key(view, e, kind) == key {
                return Some(e);
            }
            cur = view.handle_at(p + E_NEXT);
        }
        None
    }

    fn check_kinds(
        &self,
        view: &BlockView<'_>,
        key: KeyRef<'_>,
        value: ValueKind,
    ) -> Result<(), ObjectError> {
        if key.kind() != self.key_kind(view) || value != self.value_kind(view) {
            return Err(ObjectError::TypeMismatch(format!(
                "map holds {:?} -> {:?}, got {:?} -> {:?}",
                self.key_kind(view),
                self.value_kind(view),
                key.kind(),
                value
            )));
        }
        Ok(())
    }

    fn require_active(&self, heap: &Heap) -> Result<(), ObjectError> {
        if heap.active_id() != Some(self.obj.block) {
            return Err(ObjectError::TypeMismatch(
                "map insertion requires its block to be active".into(),
            ));
        }
        Ok(())
    }

    fn entry_ref(&self, off: u32, view: &BlockView<'_>) -> ObjRef {
        ObjRef {
            block: self.obj.block,
            off,
            ty: self.entry_type(view),
        }
    }

    /// Relinks every entry into a bucket array twice as large.
    fn grow(&self, heap: &mut Heap) -> Result<(), ObjectError> {
        let view = heap.view(self.obj.block)?;
        let nb = self.bucket_count(&view) as u32;
        let (old_off, old_ty) = view
            .handle_at(self.at(BUCKETS))
            .expect("map has a bucket array");
        let mut entries = Vec::with_capacity(self.len(&view));
        for b in 0..nb {
            let mut cur = view.handle_at(old_off + OBJ_HEADER_SIZE as u32 + b * 8);
            while let Some((e, ty)) = cur {
                let p = e + OBJ_HEADER_SIZE as u32;
                entries.push((
                    ObjRef {
                        block: self.obj.block,
                        off: e,
                        ty,
                    },
                    view.read_u64(p + E_HASH),
                ));
                cur = view.handle_at(p + E_NEXT);
            }
        }
        let new_nb = nb * 2;
        let arr = heap.make_array(builtin::ARRAY_HANDLE, new_nb, ObjectPolicy::FullRefCount)?;
        heap.write_handle_raw(self.obj.block, self.at(BUCKETS), Some(arr))?;
        heap.set_i32(self.obj, NBUCKETS, new_nb as i32)?;
        for (e, hash) in entries {
            let slot = arr.payload() + ((hash & (new_nb as u64 - 1)) * 8) as u32;
            let view = heap.view(self.obj.block)?;
            let head = view.handle_at(slot).map(|(off, ty)| ObjRef {
                block: self.obj.block,
                off,
                ty,
            });
            heap.write_handle_raw(self.obj.block, e.payload() + E_NEXT, head)?;
            heap.write_handle_raw(self.obj.block, slot, Some(e))?;
        }
        heap.free_moved(ObjRef {
            block: self.obj.block,
            off: old_off,
            ty: old_ty,
        })
    }

    /// Links a fresh entry for `key` at the head of its chain.
    fn insert_entry(
        &self,
        heap: &mut Heap,
        key: KeyRef<'_>,
        hash: u64,
    ) -> Result<ObjRef, ObjectError> {
        let view = heap.view(self.obj.block)?;
        let (count, nb) = (self.len(&view), self.bucket_count(&view));
        let ty = self.entry_type(&view);
        if (count + 1) * 4 > nb * 3 {
            self.grow(heap)?;
        }
        let e = heap.make_object(ty, ObjectPolicy::FullRefCount)?;
        heap.set_u64(e, E_HASH, hash)?;
        match key {
            KeyRef::Int(v) => heap.set_i64(e, E_KEY, v)?,
            KeyRef::Str(s) => {
                let s = make_string(heap, s)?;
                heap.move_handle(e.slot(E_KEY), s)?;
            }
        }
        let view = heap.view(self.obj.block)?;
        let slot = self.bucket_slot(&view, hash);
        let head = view.handle_at(slot).map(|(off, ty)| ObjRef {
            block: self.obj.block,
            off,
            ty,
        });
        heap.write_handle_raw(self.obj.block, e.payload() + E_NEXT, head)?;
        heap.write_handle_raw(self.obj.block, slot, Some(e))?;
        heap.set_i32(self.obj, COUNT, (count + 1) as i32)?;
        Ok(e)
    }

    fn lookup_or_insert(
        &self,
        heap: &mut Heap,
        key: KeyRef<'_>,
        value: ValueKind,
    ) -> Result<(ObjRef, bool), ObjectError> {
        let view = heap.view(self.obj.block)?;
        self.check_kinds(&view, key, value)?;
        let hash = key.hash();
        if let Some(e) = self.find(&view, key, hash) {
            let e = self.entry_ref(e, &view);
            self.require_active(heap)?;
            return Ok((e, false));
        }
        self.require_active(heap)?;
        Ok((self.insert_entry(heap, key, hash)?, true))
    }

    pub fn upsert_int(
        &self,
        heap: &mut Heap,
        key: KeyRef<'_>,
        v: i64,
        combine: Combine,
    ) -> Result<(), ObjectError> {
        let (e, fresh) = self.lookup_or_insert(heap, key, ValueKind::Int)?;
        let v = if fresh {
            v
        } else {
            combine.i64(heap.view(e.block)?.read_i64(e.payload() + E_VALUE), v)
        };
        heap.set_i64(e, E_VALUE, v)
    }

    pub fn upsert_double(
        &self,
        heap: &mut Heap,
        key: KeyRef<'_>,
        v: f64,
        combine: Combine,
    ) -> Result<(), ObjectError> {
        let (e, fresh) = self.lookup_or_insert(heap, key, ValueKind::Double)?;
        let v = if fresh {
            v
        } else {
            combine.f64(heap.view(e.block)?.read_f64(e.payload() + E_VALUE), v)
        };
        heap.set_f64(e, E_VALUE, v)
    }

    /// Combines `v` elementwise into the vector stored under `key`.
    pub fn upsert_dvec(
        &self,
        heap: &mut Heap,
        key: KeyRef<'_>,
        v: &[f64],
        combine: Combine,
    ) -> Result<(), ObjectError> {
        let e = match self.lookup(heap, key, ValueKind::DoubleVec)? {
            Some(e) => e,
            None => {
                let (vec_obj, vec) = PVector::<f64>::create(heap)?;
                vec.extend_from_slice(heap, v)?;
                return self.insert_linked(heap, key, vec_obj);
            }
        };
        let view = heap.view(e.block)?;
        let (off, ty) = view
            .handle_at(e.payload() + E_VALUE)
            .expect("vector value present");
        let vec = PVector::<f64>::of(ObjRef {
            block: e.block,
            off,
            ty,
        });
        let old = vec.to_vec(&view);
        if old.len() != v.len() {
            return Err(ObjectError::TypeMismatch(format!(
                "vector length {} vs {}",
                old.len(),
                v.len()
            )));
        }
        for (i, (a, b)) in old.into_iter().zip(v).enumerate() {
            vec.set(heap, i, combine.f64(a, *b))?;
        }
        Ok(())
    }

    fn lookup(
        &self,
        heap: &Heap,
        key: KeyRef<'_>,
        value: ValueKind,
    ) -> Result<Option<ObjRef>, ObjectError> {
        let view = heap.view(self.obj.block)?;
        self.check_kinds(&view, key, value)?;
        self.require_active(heap)?;
        Ok(self
            .find(&view, key, key.hash())
            .map(|e| self.entry_ref(e, &view)))
    }

    /// Inserts an entry whose value is the already-built `value` object, so
    /// a failed allocation never leaves a half-initialised entry behind.
    fn insert_linked(
        &self,
        heap: &mut Heap,
        key: KeyRef<'_>,
        value: ObjRef,
    ) -> Result<(), ObjectError> {
        let e = self.insert_entry(heap, key, key.hash())?;
        heap.move_handle(e.slot(E_VALUE), value)
    }

    /// Appends `target` to the handle list under `key`; targets in other
    /// blocks are deep-copied into the map's block.
    pub fn append_handle(
        &self,
        heap: &mut Heap,
        key: KeyRef<'_>,
        target: Option<ObjRef>,
    ) -> Result<(), ObjectError> {
        let list = self.list_for(heap, key)?;
        list.push_handle(heap, target)
    }

    /// Like `append_handle`, consuming the caller's reference to `target`.
    pub fn append_moved(
        &self,
        heap: &mut Heap,
        key: KeyRef<'_>,
        target: ObjRef,
    ) -> Result<(), ObjectError> {
        let list = self.list_for(heap, key)?;
        list.push_moved(heap, target)
    }

    fn list_for(
        &self,
        heap: &mut Heap,
        key: KeyRef<'_>,
    ) -> Result<PVector<HandleElem>, ObjectError> {
        if let Some(e) = self.lookup(heap, key, ValueKind::HandleList)? {
            let view = heap.view(e.block)?;
            let (off, ty) = view
                .handle_at(e.payload() + E_VALUE)
                .expect("list value present");
            return Ok(PVector::of(ObjRef {
                block: e.block,
                off,
                ty,
            }));
        }
        let (vec_obj, vec) = PVector::<HandleElem>::create(heap)?;
        self.insert_linked(heap, key, vec_obj)?;
        Ok(vec)
    }

    fn read_value(&self, view: &BlockView<'_>, entry: u32, kind: ValueKind) -> MapValue {
        let pos = entry + OBJ_HEADER_SIZE as u32 + E_VALUE;
        let inner = || {
            let (off, ty) = view.handle_at(pos).expect("handle value present");
            ObjRef {
                block: self.obj.block,
                off,
                ty,
            }
        };
        match kind {
            ValueKind::Int => MapValue::Int(view.read_i64(pos)),
            ValueKind::Double => MapValue::Double(view.read_f64(pos)),
            ValueKind::DoubleVec => MapValue::DoubleVec(PVector::<f64>::of(inner()).to_vec(view)),
            ValueKind::HandleList => {
                MapValue::HandleList(PVector::<HandleElem>::of(inner()).handles(view))
            }
        }
    }

    pub fn get(&self, view: &BlockView<'_>, key: KeyRef<'_>) -> Option<MapValue> {
        if key.kind() != self.key_kind(view) {
            return None;
        }
        let e = self.find(view, key, key.hash())?;
        Some(self.read_value(view, e, self.value_kind(view)))
    }

    /// All entries, in bucket order then chain order.
    pub fn entries(&self, view: &BlockView<'_>) -> Vec<(OwnedKey, MapValue)> {
        let (kk, vk) = (self.key_kind(view), self.value_kind(view));
        let (buckets, _) = view
            .handle_at(self.at(BUCKETS))
            .expect("map has a bucket array");
        let mut out = Vec::with_capacity(self.len(view));
        for b in 0..self.bucket_count(view) as u32 {
            let mut cur = view.handle_at(buckets + OBJ_HEADER_SIZE as u32 + b * 8);
            while let Some((e, _)) = cur {
                out.push((
                    Self::entry_key(view, e, kk).to_owned(),
                    self.read_value(view, e, vk),
                ));
                cur = view.handle_at(e + OBJ_HEADER_SIZE as u32 + E_NEXT);
            }
        }
        out
    }

    /// Folds every entry of `src` into this map. `src` may live in any block
    /// readable through `heap` and is left unchanged.
    pub fn merge_from(
        &self,
        heap: &mut Heap,
        src: PMap,
        combine: Combine,
    ) -> Result<(), ObjectError> {
        let entries = src.entries(&heap.view(src.obj.block)?);
        for (k, v) in entries {
            let k = k.as_ref();
            match v {
                MapValue::Int(x) => self.upsert_int(heap, k, x, combine)?,
                MapValue::Double(x) => self.upsert_double(heap, k, x, combine)?,
                MapValue::DoubleVec(xs) => self.upsert_dvec(heap, k, &xs, combine)?,
                MapValue::HandleList(hs) => {
                    let list = self.list_for(heap, k)?;
                    for h in hs {
                        list.push_handle(heap, h)?;
                    }
                }
            }
        }
        Ok(())
    }
}
