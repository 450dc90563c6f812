use std::sync::Arc;

use super::DistError;
use crate::containers::{HandleElem, KeyKind, PMap, PVector, ValueKind};
use crate::engine::{new_partition_root, EngineError};
use crate::object::{AllocPolicy, FrozenBlock, Heap, ObjectError, Slot, TypeRegistry};

/// Writes into pages whose root is a vector of `slots` maps. When a page
/// fills up it is frozen and handed back; the failed operation is retried on
/// a fresh page.
pub struct MapWriter {
    heap: Heap,
    page_size: usize,
    slots: usize,
    key: KeyKind,
    value: ValueKind,
    root: Option<PVector<HandleElem>>,
    maps: Vec<Option<PMap>>,
    dirty: bool,
    pages_out: usize,
}

impl MapWriter {
    pub fn new(
        registry: Arc<TypeRegistry>,
        page_size: usize,
        slots: usize,
        key: KeyKind,
        value: ValueKind,
    ) -> Self {
        MapWriter {
            heap: Heap::new(registry),
            page_size,
            slots,
            key,
            value,
            root: None,
            maps: vec![None; slots],
            dirty: false,
            pages_out: 0,
        }
    }

    /// The writer's heap, for attaching blocks that operations read from.
    pub fn heap_mut(&mut self) -> &mut Heap {
        &mut self.heap
    }

    pub fn pages_out(&self) -> usize {
        self.pages_out
    }

    fn map(&mut self, slot: usize) -> Result<PMap, ObjectError> {
        if self.root.is_none() {
            self.heap
                .make_block(self.page_size, AllocPolicy::LightweightReuse)?;
            self.root = Some(new_partition_root(&mut self.heap, self.slots)?);
        }
        if let Some(m) = self.maps[slot] {
            return Ok(m);
        }
        let root = self.root.expect("root created above");
        let m = PMap::create(&mut self.heap, self.key, self.value)?;
        let pos = root.elem_pos(&self.heap.view(m.obj.block)?, slot);
        self.heap.move_handle(
            Slot {
                block: m.obj.block,
                pos,
            },
            m.obj,
        )?;
        self.maps[slot] = Some(m);
        Ok(m)
    }

    fn seal(&mut self) -> Option<FrozenBlock> {
        self.root = None;
        self.maps.iter_mut().for_each(|m| *m = None);
        let frozen = self.heap.freeze_active();
        if std::mem::take(&mut self.dirty) {
            self.pages_out += 1;
            frozen
        } else {
            None
        }
    }

    /// Runs `op` against the map of `slot`. Returns the page that filled up,
    /// if the operation had to move to a new one.
    pub fn apply<F>(&mut self, slot: usize, mut op: F) -> Result<Option<FrozenBlock>, DistError>
    where
        F: FnMut(&mut Heap, PMap) -> Result<(), ObjectError>,
    {
        let mut sealed = None;
        loop {
            let attempt = self.map(slot).and_then(|m| op(&mut self.heap, m));
            match attempt {
                Ok(()) => {
                    self.dirty = true;
                    return Ok(sealed);
                }
                Err(e) if e.is_out_of_memory() && self.dirty => sealed = self.seal(),
                Err(e) if e.is_out_of_memory() => {
                    return Err(EngineError::PageTooSmall(self.page_size).into())
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Freezes the current page if anything was written to it.
    pub fn finish(&mut self) -> Option<FrozenBlock> {
        self.seal()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::containers::{Combine, KeyRef};
    use crate::engine::page_maps;

    #[test]
    fn rotates_pages_and_keeps_every_key() {
        let reg = Arc::new(TypeRegistry::new());
        let mut w = MapWriter::new(reg, 4096, 3, KeyKind::Int, ValueKind::Int);
        let mut pages = Vec::new();
        for k in 0..500i64 {
            let key = KeyRef::Int(k);
            if let Some(p) = w
                .apply(key.partition(3), |h, m| {
                    m.upsert_int(h, key, k, Combine::Sum)
                })
                .unwrap()
            {
                pages.push(p);
            }
        }
        pages.extend(w.finish());
        assert!(pages.len() > 1);
        let mut seen: Vec<i64> = Vec::new();
        for p in &pages {
            let view = p.view();
            for (slot, m) in page_maps(&view) {
                for (k, v) in m.entries(&view) {
                    let crate::containers::OwnedKey::Int(k) = k else {
                        panic!("int key")
                    };
                    assert_eq!(KeyRef::Int(k).partition(3), slot);
                    assert_eq!(v, crate::containers::MapValue::Int(k));
                    seen.push(k);
                }
            }
        }
        seen.sort();
        assert_eq!(seen, (0..500).collect::<Vec<_>>());
    }

    #[test]
    fn tiny_page_reports_page_too_small() {
        let reg = Arc::new(TypeRegistry::new());
        let mut w = MapWriter::new(reg, 64, 1, KeyKind::Int, ValueKind::Int);
        let err = w
            .apply(0, |h, m| m.upsert_int(h, KeyRef::Int(1), 1, Combine::Sum))
            .unwrap_err();
        assert!(matches!(
            err,
            DistError::Engine(EngineError::PageTooSmall(64))
        ));
    }
}
