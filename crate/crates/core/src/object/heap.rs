use std::collections::HashMap;
use std::sync::Arc;

use super::block::{
    payload_handle_slots, AllocPolicy, Block, BlockId, BlockState, BlockView, FreeChunk,
    FrozenBlock, ObjHeader, ObjectPolicy,
};
use super::types::{Layout, TypeCode, TypeRegistry};
use super::{ObjectError, OBJ_HEADER_SIZE};

/// A reference to an object held outside any block (a "stack" handle).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ObjRef {
    pub block: BlockId,
    /// Offset of the object header from the block base.
    pub off: u32,
    pub ty: TypeCode,
}

impl ObjRef {
    pub fn payload(&self) -> u32 {
        self.off + OBJ_HEADER_SIZE as u32
    }

    /// Location of a handle field at `rel` bytes into this object's payload.
    pub fn slot(&self, rel: u32) -> Slot {
        Slot {
            block: self.block,
            pos: self.payload() + rel,
        }
    }
}

/// Location of a handle stored inside a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Slot {
    pub block: BlockId,
    pub pos: u32,
}

impl Slot {
    pub fn root(block: BlockId) -> Slot {
        Slot { block, pos: 0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HeapStats {
    /// Cross-block assignments that triggered a deep copy.
    pub deep_copies: u64,
    /// Objects materialized by those copies.
    pub copied_objects: u64,
    pub destroyed: u64,
}

struct CopyNode {
    ty: TypeCode,
    policy: ObjectPolicy,
    payload: Vec<u8>,
    children: Vec<(u32, usize)>,
}

/// The allocation context of one thread: its single active block, the
/// inactive blocks it still manages, and read-only blocks it has attached.
pub struct Heap {
    registry: Arc<TypeRegistry>,
    active: Option<BlockId>,
    managed: HashMap<BlockId, Block>,
    attached: HashMap<BlockId, Arc<FrozenBlock>>,
    stats: HeapStats,
}

impl Heap {
    pub fn new(registry: Arc<TypeRegistry>) -> Self {
        Heap {
            registry,
            active: None,
            managed: HashMap::new(),
            attached: HashMap::new(),
            stats: HeapStats::default(),
        }
    }

    pub fn registry(&self) -> &Arc<TypeRegistry> {
        &self.registry
    }

    pub fn stats(&self) -> HeapStats {
        self.stats
    }

    pub fn active_id(&self) -> Option<BlockId> {
        self.active
    }

    pub fn active_block(&self) -> Option<&Block> {
        self.active.and_then(|id| self.managed.get(&id))
    }

    pub fn block(&self, id: BlockId) -> Option<&Block> {
        self.managed.get(&id)
    }

    pub fn is_managed(&self, id: BlockId) -> bool {
        self.managed.contains_key(&id)
    }

    pub fn managed_blocks(&self) -> impl Iterator<Item = &Block> {
        self.managed.values()
    }

    /// Creates a new active block. The previous active block stays managed if
    /// it still holds counted objects, otherwise it is reclaimed.
    pub fn make_block(
        &mut self,
        capacity: usize,
        policy: AllocPolicy,
    ) -> Result<BlockId, ObjectError> {
        let block = Block::new(capacity, policy)?;
        Ok(self.install_block(block))
    }

    /// Makes `block` the active block, retiring the current one.
    pub fn install_block(&mut self, mut block: Block) -> BlockId {
        self.retire_active();
        block.state = BlockState::Active;
        let id = block.id;
        self.managed.insert(id, block);
        self.active = Some(id);
        id
    }

    /// Detaches the active block without retiring it; the caller takes over
    /// its lifetime (the engine does this with full output pages).
    pub fn take_active(&mut self) -> Option<Block> {
        let id = self.active.take()?;
        self.managed.remove(&id)
    }

    /// Detaches any managed block.
    pub fn take_block(&mut self, id: BlockId) -> Option<Block> {
        if self.active == Some(id) {
            self.active = None;
        }
        self.managed.remove(&id)
    }

    fn retire_active(&mut self) {
        if let Some(id) = self.active.take() {
            let block = self.managed.get_mut(&id).expect("active block is managed");
            if block.active_objects > 0 {
                block.state = BlockState::InactiveManaged;
            } else {
                self.managed.remove(&id);
            }
        }
    }

    /// Makes a frozen block readable through this heap. Its objects are never
    /// counted from here.
    pub fn attach(&mut self, block: Arc<FrozenBlock>) -> BlockId {
        let id = block.id();
        self.attached.insert(id, block);
        id
    }

    pub fn detach(&mut self, id: BlockId) -> Option<Arc<FrozenBlock>> {
        self.attached.remove(&id)
    }

    pub fn view(&self, id: BlockId) -> Result<BlockView<'_>, ObjectError> {
        if let Some(b) = self.managed.get(&id) {
            return Ok(b.view());
        }
        self.attached
            .get(&id)
            .map(|b| b.view())
            .ok_or(ObjectError::UnknownBlock(id.raw()))
    }

    pub fn header(&self, obj: ObjRef) -> Result<ObjHeader, ObjectError> {
        Ok(self.view(obj.block)?.header(obj.off))
    }

    fn block_mut(&mut self, id: BlockId) -> Result<&mut Block, ObjectError> {
        if let Some(b) = self.managed.get_mut(&id) {
            return Ok(b);
        }
        if self.attached.contains_key(&id) {
            Err(ObjectError::UnmanagedMutation)
        } else {
            Err(ObjectError::UnknownBlock(id.raw()))
        }
    }

    fn payload_size_for(
        &self,
        ty: TypeCode,
        elems: Option<u32>,
    ) -> Result<(u32, bool), ObjectError> {
        match (self.registry.layout(ty)?, elems) {
            (Layout::Simple { size }, None) | (Layout::Fixed { size, .. }, None) => {
                Ok((size, true))
            }
            (Layout::Array { elem }, Some(n)) => Ok((elem.width() * n, false)),
            (Layout::Array { .. }, None) => Err(ObjectError::TypeMismatch(
                "array type needs an element count".into(),
            )),
            (_, Some(_)) => Err(ObjectError::TypeMismatch(
                "fixed-size type given an element count".into(),
            )),
        }
    }

    fn place(
        &mut self,
        ty: TypeCode,
        policy: ObjectPolicy,
        payload_size: u32,
        recycle_key: Option<TypeCode>,
        init: Option<&[u8]>,
    ) -> Result<ObjRef, ObjectError> {
        let id = self.active.ok_or(ObjectError::NoActiveBlock)?;
        let block = self.managed.get_mut(&id).expect("active block is managed");
        let chunk = block.alloc(OBJ_HEADER_SIZE + payload_size as usize, recycle_key)?;
        let header = ObjHeader {
            ref_count: if policy == ObjectPolicy::NoRefCount {
                0
            } else {
                1
            },
            policy,
            live: true,
            type_code: ty,
            payload_size,
            chunk_size: chunk.size,
        };
        block.write_header(chunk.offset, &header);
        let payload = chunk.offset + OBJ_HEADER_SIZE as u32;
        let end = chunk.offset + chunk.size;
        block.bytes[payload as usize..end as usize].fill(0);
        if let Some(init) = init {
            block.write_bytes(payload, init);
        }
        if policy.counted() {
            block.active_objects += 1;
        }
        Ok(ObjRef {
            block: id,
            off: chunk.offset,
            ty,
        })
    }

    /// Zero-argument construction of a fixed-size object in the active block.
    /// The returned reference holds one count. Recyclable slots are reused.
    pub fn make_object(
        &mut self,
        ty: TypeCode,
        policy: ObjectPolicy,
    ) -> Result<ObjRef, ObjectError> {
        let (size, _) = self.payload_size_for(ty, None)?;
        self.place(ty, policy, size, Some(ty), None)
    }

    /// Construction with initial payload bytes. Never served from recycle lists.
    pub fn make_object_with(
        &mut self,
        ty: TypeCode,
        policy: ObjectPolicy,
        init: &[u8],
    ) -> Result<ObjRef, ObjectError> {
        let (size, _) = self.payload_size_for(ty, None)?;
        if init.len() > size as usize {
            return Err(ObjectError::TypeMismatch(
                "initializer larger than payload".into(),
            ));
        }
        self.place(ty, policy, size, None, Some(init))
    }

    /// Allocates a variable-length array object of `len` elements.
    pub fn make_array(
        &mut self,
        ty: TypeCode,
        len: u32,
        policy: ObjectPolicy,
    ) -> Result<ObjRef, ObjectError> {
        let (size, _) = self.payload_size_for(ty, Some(len))?;
        self.place(ty, policy, size, None, None)
    }

    pub fn get_handle(&self, slot: Slot) -> Result<Option<ObjRef>, ObjectError> {
        let view = self.view(slot.block)?;
        Ok(view.handle_at(slot.pos).map(|(off, ty)| ObjRef {
            block: slot.block,
            off,
            ty,
        }))
    }

    /// Adds a stack reference to `obj`.
    pub fn retain(&mut self, obj: ObjRef) -> Result<(), ObjectError> {
        self.inc_ref(obj)
    }

    /// Drops a stack reference to `obj`, destroying it when unreferenced.
    pub fn release(&mut self, obj: ObjRef) -> Result<(), ObjectError> {
        self.dec_ref(obj.block, obj.off)
    }

    /// Nulls the handle at `slot`, releasing its target.
    pub fn release_handle(&mut self, slot: Slot) -> Result<(), ObjectError> {
        self.assign_handle(slot, None)
    }

    /// Stores `src` at `dst`. A cross-block source is deep-copied into the
    /// destination block so that no stored handle ever leaves its block.
    pub fn assign_handle(&mut self, dst: Slot, src: Option<ObjRef>) -> Result<(), ObjectError> {
        self.block_mut(dst.block)?;
        let old = self.get_handle(dst)?;
        let result = match src {
            None => Ok(None),
            Some(s) if s.block == dst.block => self.inc_ref(s).map(|_| Some(s)),
            Some(s) => self.deep_copy_into(s, dst.block).map(Some),
        };
        let block = self.managed.get_mut(&dst.block).expect("checked above");
        match &result {
            Ok(Some(t)) => block.write_handle(dst.pos, Some((t.off, t.ty))),
            _ => block.write_handle(dst.pos, None),
        }
        if let Some(o) = old {
            self.dec_ref(o.block, o.off)?;
        }
        result.map(|_| ())
    }

    /// Stores `src` at `dst`, transferring the caller's stack reference
    /// instead of adding a new one. Required for unique-ownership objects.
    pub fn move_handle(&mut self, dst: Slot, src: ObjRef) -> Result<(), ObjectError> {
        if src.block != dst.block {
            self.assign_handle(dst, Some(src))?;
            return self.release(src);
        }
        let old = self.get_handle(dst)?;
        self.block_mut(dst.block)?
            .write_handle(dst.pos, Some((src.off, src.ty)));
        if let Some(o) = old {
            self.dec_ref(o.block, o.off)?;
        }
        Ok(())
    }

    /// Copies a handle-bearing value between two slots of the same block
    /// without touching counts; used when containers relocate their storage.
    pub(crate) fn relocate_handle(
        &mut self,
        block: BlockId,
        from: u32,
        to: u32,
    ) -> Result<(), ObjectError> {
        let target = self.view(block)?.handle_at(from);
        self.block_mut(block)?.write_handle(to, target);
        Ok(())
    }

    pub(crate) fn write_handle_raw(
        &mut self,
        block: BlockId,
        pos: u32,
        target: Option<ObjRef>,
    ) -> Result<(), ObjectError> {
        self.block_mut(block)?
            .write_handle(pos, target.map(|t| (t.off, t.ty)));
        Ok(())
    }

    fn inc_ref(&mut self, obj: ObjRef) -> Result<(), ObjectError> {
        let Some(block) = self.managed.get_mut(&obj.block) else {
            return Ok(());
        };
        let h = block.view().header(obj.off);
        match h.policy {
            ObjectPolicy::NoRefCount => {}
            ObjectPolicy::FullRefCount => block.set_ref_count(obj.off, h.ref_count + 1),
            ObjectPolicy::UniqueOwnership => {
                if h.ref_count >= 1 {
                    return Err(ObjectError::UniqueOwnershipViolation);
                }
                block.set_ref_count(obj.off, 1);
            }
        }
        Ok(())
    }

    fn dec_ref(&mut self, block_id: BlockId, off: u32) -> Result<(), ObjectError> {
        let mut pending = vec![off];
        while let Some(off) = pending.pop() {
            let Some(block) = self.managed.get_mut(&block_id) else {
                return Ok(());
            };
            let h = block.view().header(off);
            if !h.live {
                continue;
            }
            match h.policy {
                ObjectPolicy::NoRefCount => continue,
                ObjectPolicy::FullRefCount if h.ref_count > 1 => {
                    block.set_ref_count(off, h.ref_count - 1);
                    continue;
                }
                _ => {}
            }
            // Destroy: release children, then return the chunk.
            let layout = self.registry.layout(h.type_code)?;
            let payload = off + OBJ_HEADER_SIZE as u32;
            let view = block.view();
            let children: Vec<u32> = payload_handle_slots(&layout, h.payload_size)
                .filter_map(|s| view.handle_at(payload + s).map(|(t, _)| t))
                .collect();
            block.set_ref_count(off, 0);
            block.write_u8(off + 5, 0);
            let recycle_key = layout.fixed_size().map(|_| h.type_code);
            block.free(
                FreeChunk {
                    offset: off,
                    size: h.chunk_size,
                },
                recycle_key,
            );
            block.active_objects -= 1;
            self.stats.destroyed += 1;
            pending.extend(children);
            if block.state == BlockState::InactiveManaged && block.active_objects == 0 {
                self.managed.remove(&block_id);
                return Ok(());
            }
        }
        Ok(())
    }

    fn collect_graph(
        &self,
        view: &BlockView<'_>,
        off: u32,
        nodes: &mut Vec<CopyNode>,
        index: &mut HashMap<u32, usize>,
        in_progress: &mut Vec<u32>,
    ) -> Result<usize, ObjectError> {
        if let Some(&i) = index.get(&off) {
            return Ok(i);
        }
        if in_progress.contains(&off) {
            return Err(ObjectError::CyclicGraph);
        }
        in_progress.push(off);
        let h = view.header(off);
        let layout = self.registry.layout(h.type_code)?;
        let payload = off + OBJ_HEADER_SIZE as u32;
        let mut children = Vec::new();
        for rel in payload_handle_slots(&layout, h.payload_size) {
            if let Some((t, _)) = view.handle_at(payload + rel) {
                let child = self.collect_graph(view, t, nodes, index, in_progress)?;
                children.push((rel, child));
            }
        }
        in_progress.pop();
        nodes.push(CopyNode {
            ty: h.type_code,
            policy: h.policy,
            payload: view.slice(payload, h.payload_size).to_vec(),
            children,
        });
        index.insert(off, nodes.len() - 1);
        Ok(nodes.len() - 1)
    }

    /// Recursively copies the graph rooted at `src` into block `dst`. The new
    /// root carries one count for the handle about to reference it.
    fn deep_copy_into(&mut self, src: ObjRef, dst: BlockId) -> Result<ObjRef, ObjectError> {
        let mut nodes = Vec::new();
        {
            let view = self.view(src.block)?;
            self.collect_graph(
                &view,
                src.off,
                &mut nodes,
                &mut HashMap::new(),
                &mut Vec::new(),
            )?;
        }
        let block = self.block_mut(dst)?;
        let snapshot = block.snapshot();
        let mut placed: Vec<u32> = Vec::with_capacity(nodes.len());
        for node in &nodes {
            let chunk = match block.alloc(OBJ_HEADER_SIZE + node.payload.len(), None) {
                Ok(c) => c,
                Err(e) => {
                    block.restore(snapshot);
                    return Err(e);
                }
            };
            let header = ObjHeader {
                ref_count: 0,
                policy: node.policy,
                live: true,
                type_code: node.ty,
                payload_size: node.payload.len() as u32,
                chunk_size: chunk.size,
            };
            block.write_header(chunk.offset, &header);
            let payload = chunk.offset + OBJ_HEADER_SIZE as u32;
            block.bytes[payload as usize..(chunk.offset + chunk.size) as usize].fill(0);
            block.write_bytes(payload, &node.payload);
            if node.policy.counted() {
                block.active_objects += 1;
            }
            placed.push(chunk.offset);
        }
        for (node, &off) in nodes.iter().zip(&placed) {
            let payload = off + OBJ_HEADER_SIZE as u32;
            for &(rel, child) in &node.children {
                let child_off = placed[child];
                block.write_handle(payload + rel, Some((child_off, nodes[child].ty)));
                if nodes[child].policy != ObjectPolicy::NoRefCount {
                    let rc = block.view().header(child_off).ref_count;
                    block.set_ref_count(child_off, rc + 1);
                }
            }
        }
        let root = *placed.last().expect("graph has a root");
        let root_node = nodes.last().unwrap();
        if root_node.policy != ObjectPolicy::NoRefCount {
            block.set_ref_count(root, 1);
        }
        self.stats.deep_copies += 1;
        self.stats.copied_objects += nodes.len() as u64;
        Ok(ObjRef {
            block: dst,
            off: root,
            ty: src.ty,
        })
    }

    /// Writes plain bytes into an object payload. Handle fields must go
    /// through [`Heap::assign_handle`].
    pub fn write_payload(
        &mut self,
        obj: ObjRef,
        rel: u32,
        bytes: &[u8],
    ) -> Result<(), ObjectError> {
        let size = self.header(obj)?.payload_size;
        if rel as usize + bytes.len() > size as usize {
            return Err(ObjectError::TypeMismatch(
                "write past end of payload".into(),
            ));
        }
        self.block_mut(obj.block)?
            .write_bytes(obj.payload() + rel, bytes);
        Ok(())
    }

    pub fn set_i64(&mut self, obj: ObjRef, rel: u32, v: i64) -> Result<(), ObjectError> {
        self.write_payload(obj, rel, &v.to_le_bytes())
    }

    pub fn set_u64(&mut self, obj: ObjRef, rel: u32, v: u64) -> Result<(), ObjectError> {
        self.write_payload(obj, rel, &v.to_le_bytes())
    }

    pub fn set_f64(&mut self, obj: ObjRef, rel: u32, v: f64) -> Result<(), ObjectError> {
        self.write_payload(obj, rel, &v.to_le_bytes())
    }

    pub fn set_i32(&mut self, obj: ObjRef, rel: u32, v: i32) -> Result<(), ObjectError> {
        self.write_payload(obj, rel, &v.to_le_bytes())
    }

    pub fn set_bool(&mut self, obj: ObjRef, rel: u32, v: bool) -> Result<(), ObjectError> {
        self.write_payload(obj, rel, &[v as u8])
    }

    pub(crate) fn write_raw(
        &mut self,
        block: BlockId,
        pos: u32,
        bytes: &[u8],
    ) -> Result<(), ObjectError> {
        self.block_mut(block)?.write_bytes(pos, bytes);
        Ok(())
    }

    /// Frees a chunk without running its destructor. Used when a container
    /// moved the contents elsewhere.
    pub(crate) fn free_moved(&mut self, obj: ObjRef) -> Result<(), ObjectError> {
        let block = self.block_mut(obj.block)?;
        let h = block.view().header(obj.off);
        if h.policy == ObjectPolicy::NoRefCount || !h.live {
            return Ok(());
        }
        block.write_u8(obj.off + 5, 0);
        block.set_ref_count(obj.off, 0);
        block.free(
            FreeChunk {
                offset: obj.off,
                size: h.chunk_size,
            },
            None,
        );
        block.active_objects -= 1;
        Ok(())
    }

    /// Moves the active block out of the heap and freezes it.
    pub fn freeze_active(&mut self) -> Option<FrozenBlock> {
        self.take_active().map(Block::freeze)
    }
}
