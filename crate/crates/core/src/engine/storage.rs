use std::collections::BTreeMap;
use std::sync::Arc;

use super::{Column, EngineError, Value};
use crate::containers::{
    builtin, make_string, read_string, Combine, HandleElem, KeyRef, MapValue, OwnedKey, PMap,
    PVector,
};
use crate::object::{
    AllocPolicy, BlockView, FieldKind, FrozenBlock, Heap, ObjRef, ObjectError, ObjectPolicy, Slot,
    TypeCode, TypeRegistry,
};

/// How the pages of a set are organized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SetKind {
    /// Each page's root is a `Vector<Handle>` of rows. Single-column rows
    /// are the cell itself, wider rows an `Array<Handle>` of cells.
    Rows,
    /// Each page's root is a `Map` of partial aggregates; reading merges them.
    Aggregated(Combine),
}

/// A stored set: a schema and a sequence of frozen pages.
#[derive(Clone)]
pub struct PcSet {
    pub schema: Vec<String>,
    pub kind: SetKind,
    pub pages: Vec<Arc<FrozenBlock>>,
}

impl PcSet {
    pub fn new(schema: &[String], kind: SetKind) -> Self {
        PcSet {
            schema: schema.to_vec(),
            kind,
            pages: Vec::new(),
        }
    }

    pub fn bytes(&self) -> usize {
        self.pages.iter().map(|p| p.high_water()).sum()
    }
}

/// Named sets, addressed as `db.set`.
#[derive(Clone, Default)]
pub struct Storage {
    sets: BTreeMap<String, PcSet>,
}

pub fn set_key(db: &str, set: &str) -> String {
    format!("{db}.{set}")
}

impl Storage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, db: &str, set: &str, data: PcSet) {
        self.sets.insert(set_key(db, set), data);
    }

    pub fn get(&self, db: &str, set: &str) -> Option<&PcSet> {
        self.sets.get(&set_key(db, set))
    }

    pub fn get_key(&self, key: &str) -> Option<&PcSet> {
        self.sets.get(key)
    }

    pub fn put_key(&mut self, key: &str, data: PcSet) {
        self.sets.insert(key.to_string(), data);
    }

    pub fn remove(&mut self, db: &str, set: &str) -> Option<PcSet> {
        self.sets.remove(&set_key(db, set))
    }

    pub fn remove_key(&mut self, key: &str) -> Option<PcSet> {
        self.sets.remove(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.sets.keys().map(String::as_str)
    }
}

/// Creates the row vector and makes it the root of the active page.
pub fn new_row_root(heap: &mut Heap) -> Result<PVector<HandleElem>, ObjectError> {
    let (obj, v) = PVector::<HandleElem>::create(heap)?;
    heap.move_handle(Slot::root(obj.block), obj)?;
    Ok(v)
}

enum Cell {
    Fresh(ObjRef),
    Existing(ObjRef),
    Null,
}

fn write_cell(heap: &mut Heap, v: &Value) -> Result<Cell, ObjectError> {
    let p = ObjectPolicy::FullRefCount;
    Ok(match v {
        Value::Null => Cell::Null,
        Value::Obj(o) => Cell::Existing(*o),
        Value::Int(x) => {
            let o = heap.make_object(builtin::BOX_I64, p)?;
            heap.set_i64(o, 0, *x)?;
            Cell::Fresh(o)
        }
        Value::Double(x) => {
            let o = heap.make_object(builtin::BOX_F64, p)?;
            heap.set_f64(o, 0, *x)?;
            Cell::Fresh(o)
        }
        Value::Bool(x) => {
            let o = heap.make_object(builtin::BOX_BOOL, p)?;
            heap.set_bool(o, 0, *x)?;
            Cell::Fresh(o)
        }
        Value::Str(s) => Cell::Fresh(make_string(heap, s)?),
        Value::DVec(d) => {
            let (o, v) = PVector::<f64>::create(heap)?;
            v.extend_from_slice(heap, d)?;
            Cell::Fresh(o)
        }
    })
}

fn store(heap: &mut Heap, slot: Slot, cell: Cell) -> Result<(), ObjectError> {
    match cell {
        Cell::Fresh(o) => heap.move_handle(slot, o),
        Cell::Existing(o) => heap.assign_handle(slot, Some(o)),
        Cell::Null => Ok(()),
    }
}

/// Creates a vector of `parts` empty map slots as the root of the active page.
pub fn new_partition_root(
    heap: &mut Heap,
    parts: usize,
) -> Result<PVector<HandleElem>, ObjectError> {
    let v = new_row_root(heap)?;
    for _ in 0..parts {
        v.push_handle(heap, None)?;
    }
    Ok(v)
}

/// The maps on an aggregation page: its root map, or every non-empty slot
/// of a partitioned root, with the slot index.
pub fn page_maps(view: &BlockView<'_>) -> Vec<(usize, PMap)> {
    let Some((root, ty)) = view.root() else {
        return Vec::new();
    };
    let obj = ObjRef {
        block: view.id,
        off: root,
        ty,
    };
    if ty == builtin::MAP {
        return vec![(0, PMap::of(obj))];
    }
    PVector::<HandleElem>::of(obj)
        .handles(view)
        .into_iter()
        .enumerate()
        .filter_map(|(i, h)| h.map(|o| (i, PMap::of(o))))
        .collect()
}

pub fn upsert_value(
    heap: &mut Heap,
    map: PMap,
    key: KeyRef<'_>,
    v: &MapValue,
    c: Combine,
) -> Result<(), ObjectError> {
    match v {
        MapValue::Int(x) => map.upsert_int(heap, key, *x, c),
        MapValue::Double(x) => map.upsert_double(heap, key, *x, c),
        MapValue::DoubleVec(d) => map.upsert_dvec(heap, key, d, c),
        MapValue::HandleList(_) => Err(ObjectError::TypeMismatch(
            "handle lists are appended, not combined".into(),
        )),
    }
}

/// Appends one row to a row vector on the active page. Referenced objects
/// that live elsewhere are deep-copied onto the page.
pub fn write_row(
    heap: &mut Heap,
    root: PVector<HandleElem>,
    row: &[Value],
) -> Result<(), ObjectError> {
    if row.len() == 1 {
        return match write_cell(heap, &row[0])? {
            Cell::Fresh(o) => root.push_moved(heap, o),
            Cell::Existing(o) => root.push_handle(heap, Some(o)),
            Cell::Null => root.push_handle(heap, None),
        };
    }
    let tuple = heap.make_array(
        builtin::ARRAY_HANDLE,
        row.len() as u32,
        ObjectPolicy::FullRefCount,
    )?;
    for (i, v) in row.iter().enumerate() {
        let cell = write_cell(heap, v)?;
        store(heap, tuple.slot(i as u32 * 8), cell)?;
    }
    root.push_moved(heap, tuple)
}

/// Reads a stored cell back as a value. Boxed scalars are unboxed; every
/// other object is returned as a reference into its page.
pub fn read_cell(view: &BlockView<'_>, cell: Option<(u32, TypeCode)>) -> Value {
    let Some((off, ty)) = cell else {
        return Value::Null;
    };
    let payload = off + crate::object::OBJ_HEADER_SIZE as u32;
    match ty {
        t if t == builtin::BOX_I64 => Value::Int(view.read_i64(payload)),
        t if t == builtin::BOX_F64 => Value::Double(view.read_f64(payload)),
        t if t == builtin::BOX_BOOL => Value::Bool(view.read_u8(payload) != 0),
        _ => Value::Obj(ObjRef {
            block: view.id,
            off,
            ty,
        }),
    }
}

/// Rows `from..to` of a row page, as columns.
pub fn read_rows(
    view: &BlockView<'_>,
    width: usize,
    from: usize,
    to: usize,
) -> Result<Vec<Column>, String> {
    let Some((root, _)) = view.root() else {
        return Ok((0..width).map(|_| Column::Obj(Vec::new())).collect());
    };
    let vec = PVector::<HandleElem>::of(ObjRef {
        block: view.id,
        off: root,
        ty: builtin::VECTOR_HANDLE,
    });
    let mut cols: Vec<Vec<Value>> = vec![Vec::with_capacity(to - from); width];
    for i in from..to {
        let pos = vec.elem_pos(view, i);
        if width == 1 {
            cols[0].push(read_cell(view, view.handle_at(pos)));
            continue;
        }
        let (t, _) = view.handle_at(pos).ok_or("null row tuple")?;
        let base = t + crate::object::OBJ_HEADER_SIZE as u32;
        for (j, col) in cols.iter_mut().enumerate() {
            col.push(read_cell(view, view.handle_at(base + j as u32 * 8)));
        }
    }
    cols.into_iter().map(Column::from_values).collect()
}

pub fn row_count(view: &BlockView<'_>) -> usize {
    match view.root() {
        Some((root, _)) => PVector::<HandleElem>::of(ObjRef {
            block: view.id,
            off: root,
            ty: builtin::VECTOR_HANDLE,
        })
        .len(view),
        None => 0,
    }
}

/// Merged contents of an aggregated set, sorted by key.
pub fn merged_entries(set: &PcSet) -> Result<Vec<(OwnedKey, MapValue)>, EngineError> {
    let SetKind::Aggregated(combine) = set.kind else {
        return Err(EngineError::InvalidProgram("not an aggregated set".into()));
    };
    let mut merged: BTreeMap<OwnedKey, MapValue> = BTreeMap::new();
    for page in &set.pages {
        let view = page.view();
        for (k, v) in page_maps(&view)
            .into_iter()
            .flat_map(|(_, m)| m.entries(&view))
        {
            match merged.get_mut(&k) {
                None => {
                    merged.insert(k, v);
                }
                Some(old) => *old = combine_values(combine, old, &v)?,
            }
        }
    }
    Ok(merged.into_iter().collect())
}

pub fn combine_values(c: Combine, old: &MapValue, new: &MapValue) -> Result<MapValue, EngineError> {
    Ok(match (old, new) {
        (MapValue::Int(a), MapValue::Int(b)) => MapValue::Int(c.i64(*a, *b)),
        (MapValue::Double(a), MapValue::Double(b)) => MapValue::Double(c.f64(*a, *b)),
        (MapValue::DoubleVec(a), MapValue::DoubleVec(b)) if a.len() == b.len() => {
            MapValue::DoubleVec(a.iter().zip(b).map(|(x, y)| c.f64(*x, *y)).collect())
        }
        (a, b) => {
            return Err(EngineError::InvalidProgram(format!(
                "cannot combine {:?} with {:?}",
                a.kind(),
                b.kind()
            )));
        }
    })
}

pub fn key_value(k: &OwnedKey) -> Value {
    match k {
        OwnedKey::Int(v) => Value::Int(*v),
        OwnedKey::Str(s) => Value::Str(s.clone()),
    }
}

pub fn map_value(v: &MapValue) -> Value {
    match v {
        MapValue::Int(x) => Value::Int(*x),
        MapValue::Double(x) => Value::Double(*x),
        MapValue::DoubleVec(d) => Value::DVec(d.clone()),
        MapValue::HandleList(h) => Value::Int(h.len() as i64),
    }
}

/// Fills pages with rows, starting a new page whenever one fills up.
pub struct SetBuilder<'h> {
    heap: &'h mut Heap,
    page_size: usize,
    root: Option<PVector<HandleElem>>,
    rows_on_page: usize,
    set: PcSet,
}

impl<'h> SetBuilder<'h> {
    pub fn new(heap: &'h mut Heap, page_size: usize, schema: &[&str]) -> Self {
        let schema: Vec<String> = schema.iter().map(|s| s.to_string()).collect();
        SetBuilder {
            heap,
            page_size,
            root: None,
            rows_on_page: 0,
            set: PcSet::new(&schema, SetKind::Rows),
        }
    }

    fn seal(&mut self) {
        if let Some(page) = self.heap.freeze_active() {
            if self.rows_on_page > 0 {
                self.set.pages.push(Arc::new(page));
            }
        }
        self.root = None;
        self.rows_on_page = 0;
    }

    /// Adds the row built by `make`, which allocates on the current page.
    /// If the page fills up, `make` runs again on a fresh page.
    pub fn add(
        &mut self,
        mut make: impl FnMut(&mut Heap) -> Result<Vec<Value>, ObjectError>,
    ) -> Result<(), EngineError> {
        let mut fresh = false;
        loop {
            if self.root.is_none() {
                self.heap
                    .make_block(self.page_size, AllocPolicy::LightweightReuse)?;
                self.root = Some(new_row_root(self.heap)?);
                fresh = true;
            }
            let root = self.root.unwrap();
            match make(self.heap).and_then(|row| write_row(self.heap, root, &row)) {
                Ok(()) => {
                    self.rows_on_page += 1;
                    return Ok(());
                }
                Err(e) if e.is_out_of_memory() && !fresh => self.seal(),
                Err(e) if e.is_out_of_memory() => {
                    return Err(EngineError::PageTooSmall(self.page_size))
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn add_values(&mut self, row: &[Value]) -> Result<(), EngineError> {
        self.add(|_| Ok(row.to_vec()))
    }

    pub fn finish(mut self) -> PcSet {
        self.seal();
        self.set
    }
}

/// A fully owned, structural copy of stored data, for comparisons.
#[derive(Clone, Debug, PartialEq)]
pub enum Datum {
    Null,
    Int(i64),
    Double(f64),
    Bool(bool),
    Str(String),
    DVec(Vec<f64>),
    IVec(Vec<i64>),
    List(Vec<Datum>),
    Record(String, Vec<(String, Datum)>),
}

impl Datum {
    /// Decodes an object and everything it reaches.
    pub fn of_object(view: &BlockView<'_>, reg: &TypeRegistry, off: u32, ty: TypeCode) -> Datum {
        let obj = ObjRef {
            block: view.id,
            off,
            ty,
        };
        let handle = |pos: u32| match view.handle_at(pos) {
            Some((o, t)) => Datum::of_object(view, reg, o, t),
            None => Datum::Null,
        };
        match ty {
            t if t == builtin::BOX_I64 => Datum::Int(view.read_i64(obj.payload())),
            t if t == builtin::BOX_F64 => Datum::Double(view.read_f64(obj.payload())),
            t if t == builtin::BOX_BOOL => Datum::Bool(view.read_u8(obj.payload()) != 0),
            t if t == builtin::STRING => Datum::Str(read_string(view, off).to_string()),
            t if t == builtin::VECTOR_F64 => Datum::DVec(PVector::<f64>::of(obj).to_vec(view)),
            t if t == builtin::VECTOR_I64 => Datum::IVec(PVector::<i64>::of(obj).to_vec(view)),
            t if t == builtin::VECTOR_HANDLE => {
                let v = PVector::<HandleElem>::of(obj);
                Datum::List(
                    (0..v.len(view))
                        .map(|i| handle(v.elem_pos(view, i)))
                        .collect(),
                )
            }
            t if t == builtin::ARRAY_HANDLE => {
                let n = view.header(off).payload_size / 8;
                Datum::List((0..n).map(|i| handle(obj.payload() + i * 8)).collect())
            }
            _ => {
                let Some(desc) = reg.lookup(ty) else {
                    return Datum::Null;
                };
                let fields = desc
                    .fields
                    .iter()
                    .map(|f| {
                        let pos = obj.payload() + f.offset;
                        let d = match f.kind {
                            FieldKind::I32 => Datum::Int(view.read_i32(pos) as i64),
                            FieldKind::I64 => Datum::Int(view.read_i64(pos)),
                            FieldKind::U64 => Datum::Int(view.read_u64(pos) as i64),
                            FieldKind::F64 => Datum::Double(view.read_f64(pos)),
                            FieldKind::Bool => Datum::Bool(view.read_u8(pos) != 0),
                            FieldKind::Str | FieldKind::Handle => handle(pos),
                            FieldKind::VecF64 => {
                                Datum::DVec(PVector::<f64>::embedded(obj, f.offset).to_vec(view))
                            }
                            FieldKind::VecHandle => {
                                let v = PVector::<HandleElem>::embedded(obj, f.offset);
                                Datum::List(
                                    (0..v.len(view))
                                        .map(|i| handle(v.elem_pos(view, i)))
                                        .collect(),
                                )
                            }
                        };
                        (f.name.clone(), d)
                    })
                    .collect();
                Datum::Record(desc.name, fields)
            }
        }
    }

    pub fn of_value(heap: &Heap, v: &Value) -> Datum {
        match v {
            Value::Null => Datum::Null,
            Value::Int(x) => Datum::Int(*x),
            Value::Double(x) => Datum::Double(*x),
            Value::Bool(x) => Datum::Bool(*x),
            Value::Str(s) => Datum::Str(s.clone()),
            Value::DVec(d) => Datum::DVec(d.clone()),
            Value::Obj(o) => match heap.view(o.block) {
                Ok(view) => Datum::of_object(&view, heap.registry(), o.off, o.ty),
                Err(_) => Datum::Null,
            },
        }
    }
}

/// Every row of a set, fully decoded, in storage order (aggregated sets
/// come back merged and sorted by key).
pub fn set_rows(set: &PcSet, reg: &TypeRegistry) -> Result<Vec<Vec<Datum>>, EngineError> {
    if let SetKind::Aggregated(_) = set.kind {
        let to_datum = |v: Value| match v {
            Value::Int(x) => Datum::Int(x),
            Value::Double(x) => Datum::Double(x),
            Value::Str(s) => Datum::Str(s),
            Value::DVec(d) => Datum::DVec(d),
            _ => Datum::Null,
        };
        return Ok(merged_entries(set)?
            .iter()
            .map(|(k, v)| vec![to_datum(key_value(k)), to_datum(map_value(v))])
            .collect());
    }
    let width = set.schema.len();
    let mut out = Vec::new();
    for page in &set.pages {
        let view = page.view();
        let Some((root, _)) = view.root() else {
            continue;
        };
        let vec = PVector::<HandleElem>::of(ObjRef {
            block: view.id,
            off: root,
            ty: builtin::VECTOR_HANDLE,
        });
        for i in 0..vec.len(&view) {
            let pos = vec.elem_pos(&view, i);
            let row = match view.handle_at(pos) {
                None => vec![Datum::Null],
                Some((o, t)) if width == 1 => vec![Datum::of_object(&view, reg, o, t)],
                Some((o, _)) => {
                    let base = o + crate::object::OBJ_HEADER_SIZE as u32;
                    (0..width as u32)
                        .map(|j| match view.handle_at(base + j * 8) {
                            Some((c, t)) => Datum::of_object(&view, reg, c, t),
                            None => Datum::Null,
                        })
                        .collect()
                }
            };
            out.push(row);
        }
    }
    Ok(out)
}
