use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use super::types::{ElemKind, Layout, TypeCode, TypeRegistry};
use super::{ObjectError, BLOCK_HEADER_SIZE, HANDLE_SIZE, OBJ_HEADER_SIZE};

static NEXT_BLOCK_ID: AtomicU64 = AtomicU64::new(1);

/// Identity of a block within the running process. Not part of the wire format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(u64);

impl BlockId {
    pub(crate) fn fresh() -> BlockId {
        BlockId(NEXT_BLOCK_ID.fetch_add(1, Ordering::Relaxed))
    }

    pub fn raw(self) -> u64 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum AllocPolicy {
    LightweightReuse = 0,
    NoReuse = 1,
    Recycling = 2,
}

impl AllocPolicy {
    pub fn from_u8(v: u8) -> Option<AllocPolicy> {
        match v {
            0 => Some(AllocPolicy::LightweightReuse),
            1 => Some(AllocPolicy::NoReuse),
            2 => Some(AllocPolicy::Recycling),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ObjectPolicy {
    FullRefCount = 0,
    NoRefCount = 1,
    UniqueOwnership = 2,
}

impl ObjectPolicy {
    fn from_u8(v: u8) -> ObjectPolicy {
        match v {
            1 => ObjectPolicy::NoRefCount,
            2 => ObjectPolicy::UniqueOwnership,
            _ => ObjectPolicy::FullRefCount,
        }
    }

    /// Whether the object participates in the block's active-object count.
    pub fn counted(self) -> bool {
        self != ObjectPolicy::NoRefCount
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockState {
    Active,
    InactiveManaged,
    InactiveUnmanaged,
}

/// Decoded object header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObjHeader {
    pub ref_count: u32,
    pub policy: ObjectPolicy,
    pub live: bool,
    pub type_code: TypeCode,
    pub payload_size: u32,
    pub chunk_size: u32,
}

/// Floor of log2; the free-chunk bucket a chunk of `n` bytes belongs to.
pub fn bucket(n: usize) -> usize {
    debug_assert!(n > 0);
    (usize::BITS - 1 - n.leading_zeros()) as usize
}

fn align8(n: usize) -> usize {
    n.div_ceil(8) * 8
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FreeChunk {
    pub offset: u32,
    pub size: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AllocStats {
    pub allocations: u64,
    pub bumped: u64,
    pub bucket_reuse: u64,
    pub recycled: u64,
}

/// Read-only view of block bytes, positioned so that offset 0 is the block base.
#[derive(Clone, Copy)]
pub struct BlockView<'a> {
    pub id: BlockId,
    pub bytes: &'a [u8],
}

impl<'a> BlockView<'a> {
    pub fn read_u32(&self, pos: u32) -> u32 {
        let p = pos as usize;
        u32::from_le_bytes(self.bytes[p..p + 4].try_into().unwrap())
    }

    pub fn read_i32(&self, pos: u32) -> i32 {
        self.read_u32(pos) as i32
    }

    pub fn read_u64(&self, pos: u32) -> u64 {
        let p = pos as usize;
        u64::from_le_bytes(self.bytes[p..p + 8].try_into().unwrap())
    }

    pub fn read_i64(&self, pos: u32) -> i64 {
        self.read_u64(pos) as i64
    }

    pub fn read_f64(&self, pos: u32) -> f64 {
        f64::from_bits(self.read_u64(pos))
    }

    pub fn read_u8(&self, pos: u32) -> u8 {
        self.bytes[pos as usize]
    }

    pub fn slice(&self, pos: u32, len: u32) -> &'a [u8] {
        &self.bytes[pos as usize..(pos + len) as usize]
    }

    /// Decodes the handle stored at `slot`: target header offset and type.
    pub fn handle_at(&self, slot: u32) -> Option<(u32, TypeCode)> {
        let rel = self.read_i32(slot);
        if rel == 0 {
            return None;
        }
        let target = (slot as i64 + rel as i64) as u32;
        Some((target, TypeCode::from_raw(self.read_u32(slot + 4))))
    }

    pub fn header(&self, obj: u32) -> ObjHeader {
        ObjHeader {
            ref_count: self.read_u32(obj),
            policy: ObjectPolicy::from_u8(self.read_u8(obj + 4)),
            live: self.read_u8(obj + 5) == 1,
            type_code: TypeCode::from_raw(self.read_u32(obj + 8)),
            payload_size: self.read_u32(obj + 12),
            chunk_size: self.read_u32(obj + 16),
        }
    }

    /// The block root handle slot, conventionally the page's top container.
    pub fn root(&self) -> Option<(u32, TypeCode)> {
        self.handle_at(0)
    }

    /// Offsets of every chunk header between the block header and `end`.
    pub fn chunks(&self, end: u32) -> Vec<u32> {
        let mut out = Vec::new();
        let mut pos = BLOCK_HEADER_SIZE as u32;
        while pos < end {
            out.push(pos);
            let size = self.read_u32(pos + 16);
            if size == 0 {
                break;
            }
            pos += size;
        }
        out
    }

    /// Positions of all handle slots of live objects plus the root slot.
    pub fn handle_slots(&self, end: u32, registry: &TypeRegistry) -> Result<Vec<u32>, ObjectError> {
        let mut slots = vec![0u32];
        for obj in self.chunks(end) {
            let h = self.header(obj);
            if !h.live {
                continue;
            }
            let payload = obj + OBJ_HEADER_SIZE as u32;
            slots.extend(
                payload_handle_slots(&registry.layout(h.type_code)?, h.payload_size)
                    .map(|s| payload + s),
            );
        }
        Ok(slots)
    }
}

/// Payload-relative offsets of handle slots for an object of `layout`.
pub fn payload_handle_slots(
    layout: &Layout,
    payload_size: u32,
) -> Box<dyn Iterator<Item = u32> + '_> {
    match layout {
        Layout::Simple { .. }
        | Layout::Array {
            elem: ElemKind::Value(_),
        } => Box::new(std::iter::empty()),
        Layout::Fixed { handles, .. } => Box::new(handles.iter().copied()),
        Layout::Array {
            elem: ElemKind::Handle,
        } => Box::new((0..payload_size / HANDLE_SIZE as u32).map(|i| i * HANDLE_SIZE as u32)),
    }
}

/// A contiguous region that serves as heap, storage page and wire message.
pub struct Block {
    pub(crate) id: BlockId,
    pub(crate) bytes: Vec<u8>,
    pub(crate) high_water: usize,
    pub(crate) active_objects: u64,
    pub(crate) state: BlockState,
    pub(crate) policy: AllocPolicy,
    free_buckets: Vec<Vec<FreeChunk>>,
    recycle: HashMap<TypeCode, Vec<FreeChunk>>,
    pub(crate) stats: AllocStats,
}

/// Allocator state captured before a multi-object operation so it can be
/// rolled back if the block runs out of space midway.
pub(crate) struct AllocSnapshot {
    high_water: usize,
    active_objects: u64,
    free_buckets: Vec<Vec<FreeChunk>>,
    recycle: HashMap<TypeCode, Vec<FreeChunk>>,
    stats: AllocStats,
}

impl Block {
    pub fn new(capacity: usize, policy: AllocPolicy) -> Result<Block, ObjectError> {
        Block::from_buffer(Vec::new(), capacity, policy)
    }

    /// A fresh block that reuses the allocation behind `buf`.
    pub fn from_buffer(
        mut buf: Vec<u8>,
        capacity: usize,
        policy: AllocPolicy,
    ) -> Result<Block, ObjectError> {
        if capacity <= BLOCK_HEADER_SIZE || capacity > u32::MAX as usize {
            return Err(ObjectError::InvalidCapacity(capacity));
        }
        buf.clear();
        buf.resize(capacity, 0);
        Ok(Block {
            id: BlockId::fresh(),
            bytes: buf,
            high_water: BLOCK_HEADER_SIZE,
            active_objects: 0,
            state: BlockState::Active,
            policy,
            free_buckets: vec![Vec::new(); 33],
            recycle: HashMap::new(),
            stats: AllocStats::default(),
        })
    }

    pub fn id(&self) -> BlockId {
        self.id
    }

    pub fn capacity(&self) -> usize {
        self.bytes.len()
    }

    pub fn high_water(&self) -> usize {
        self.high_water
    }

    pub fn active_objects(&self) -> u64 {
        self.active_objects
    }

    pub fn state(&self) -> BlockState {
        self.state
    }

    pub fn policy(&self) -> AllocPolicy {
        self.policy
    }

    pub fn stats(&self) -> AllocStats {
        self.stats
    }

    pub fn free_space(&self) -> usize {
        self.bytes.len() - self.high_water
    }

    pub fn view(&self) -> BlockView<'_> {
        BlockView {
            id: self.id,
            bytes: &self.bytes[..self.high_water],
        }
    }

    pub fn free_chunks(&self) -> impl Iterator<Item = (usize, FreeChunk)> + '_ {
        self.free_buckets
            .iter()
            .enumerate()
            .flat_map(|(b, list)| list.iter().map(move |c| (b, *c)))
    }

    /// Places `n_bytes` (header included) according to the block's policy.
    /// `recycle_key` is set only for fixed-size zero-argument constructions.
    pub fn alloc(
        &mut self,
        n_bytes: usize,
        recycle_key: Option<TypeCode>,
    ) -> Result<FreeChunk, ObjectError> {
        let need = align8(n_bytes.max(OBJ_HEADER_SIZE));
        if self.policy == AllocPolicy::Recycling {
            if let Some(chunk) = recycle_key
                .and_then(|t| self.recycle.get_mut(&t))
                .and_then(|l| l.pop())
            {
                debug_assert!(chunk.size as usize >= need);
                self.stats.allocations += 1;
                self.stats.recycled += 1;
                return Ok(chunk);
            }
        }
        if self.policy != AllocPolicy::NoReuse {
            for b in bucket(need)..self.free_buckets.len() {
                let list = &mut self.free_buckets[b];
                if let Some(i) = list.iter().position(|c| c.size as usize >= need) {
                    let chunk = list.remove(i);
                    self.stats.allocations += 1;
                    self.stats.bucket_reuse += 1;
                    return Ok(chunk);
                }
            }
        }
        if self.free_space() < need {
            return Err(ObjectError::OutOfBlockMemory {
                requested: need,
                available: self.free_space(),
            });
        }
        let chunk = FreeChunk {
            offset: self.high_water as u32,
            size: need as u32,
        };
        self.high_water += need;
        self.stats.allocations += 1;
        self.stats.bumped += 1;
        Ok(chunk)
    }

    /// Returns a chunk to the allocator. `recycle_key` marks fixed-size objects.
    pub(crate) fn free(&mut self, chunk: FreeChunk, recycle_key: Option<TypeCode>) {
        match self.policy {
            AllocPolicy::NoReuse => {}
            AllocPolicy::Recycling if recycle_key.is_some() => {
                self.recycle
                    .entry(recycle_key.unwrap())
                    .or_default()
                    .push(chunk);
            }
            _ => self.free_buckets[bucket(chunk.size as usize)].push(chunk),
        }
    }

    pub(crate) fn snapshot(&self) -> AllocSnapshot {
        AllocSnapshot {
            high_water: self.high_water,
            active_objects: self.active_objects,
            free_buckets: self.free_buckets.clone(),
            recycle: self.recycle.clone(),
            stats: self.stats,
        }
    }

    pub(crate) fn restore(&mut self, s: AllocSnapshot) {
        self.bytes[s.high_water..self.high_water].fill(0);
        self.high_water = s.high_water;
        self.active_objects = s.active_objects;
        self.free_buckets = s.free_buckets;
        self.recycle = s.recycle;
        self.stats = s.stats;
    }

    pub(crate) fn write_u8(&mut self, pos: u32, v: u8) {
        self.bytes[pos as usize] = v;
    }

    pub(crate) fn write_u32(&mut self, pos: u32, v: u32) {
        let p = pos as usize;
        self.bytes[p..p + 4].copy_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn write_u64(&mut self, pos: u32, v: u64) {
        let p = pos as usize;
        self.bytes[p..p + 8].copy_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn write_bytes(&mut self, pos: u32, src: &[u8]) {
        let p = pos as usize;
        self.bytes[p..p + src.len()].copy_from_slice(src);
    }

    pub(crate) fn write_header(&mut self, obj: u32, h: &ObjHeader) {
        self.write_u32(obj, h.ref_count);
        self.write_u8(obj + 4, h.policy as u8);
        self.write_u8(obj + 5, h.live as u8);
        self.write_u32(obj + 8, h.type_code.raw());
        self.write_u32(obj + 12, h.payload_size);
        self.write_u32(obj + 16, h.chunk_size);
    }

    pub(crate) fn set_ref_count(&mut self, obj: u32, rc: u32) {
        self.write_u32(obj, rc);
    }

    /// Stores a handle at `slot` pointing to the object header at `target`.
    pub(crate) fn write_handle(&mut self, slot: u32, target: Option<(u32, TypeCode)>) {
        match target {
            None => self.write_u64(slot, 0),
            Some((t, ty)) => {
                assert_ne!(slot, t, "a handle cannot target its own location");
                let rel = (t as i64 - slot as i64) as i32;
                self.write_u32(slot, rel as u32);
                self.write_u32(slot + 4, ty.raw());
            }
        }
    }
}

/// A block that no thread manages: imported from bytes or frozen after its
/// producer finished with it. Read-only; handles are never counted.
pub struct FrozenBlock {
    pub(crate) id: BlockId,
    buf: Vec<u8>,
    base: usize,
    len: usize,
    policy: AllocPolicy,
    active_objects: u64,
}

impl std::fmt::Debug for FrozenBlock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrozenBlock")
            .field("id", &self.id)
            .field("high_water", &self.len)
            .finish()
    }
}

impl FrozenBlock {
    pub(crate) fn from_parts(
        buf: Vec<u8>,
        base: usize,
        len: usize,
        policy: AllocPolicy,
        active_objects: u64,
    ) -> Self {
        FrozenBlock {
            id: BlockId::fresh(),
            buf,
            base,
            len,
            policy,
            active_objects,
        }
    }

    pub fn id(&self) -> BlockId {
        self.id
    }

    pub fn view(&self) -> BlockView<'_> {
        BlockView {
            id: self.id,
            bytes: &self.buf[self.base..self.base + self.len],
        }
    }

    pub fn high_water(&self) -> usize {
        self.len
    }

    pub fn policy(&self) -> AllocPolicy {
        self.policy
    }

    pub fn active_objects(&self) -> u64 {
        self.active_objects
    }

    pub fn state(&self) -> BlockState {
        BlockState::InactiveUnmanaged
    }

    /// Gives back the backing buffer for reuse.
    pub fn into_buffer(self) -> Vec<u8> {
        self.buf
    }

    /// Address of the block base inside its backing buffer.
    pub fn base_offset(&self) -> usize {
        self.base
    }
}

impl Block {
    /// Gives up management of the block. The bytes are kept exactly in place.
    pub fn freeze(mut self) -> FrozenBlock {
        self.bytes.truncate(self.high_water);
        let len = self.high_water;
        FrozenBlock {
            id: self.id,
            buf: self.bytes,
            base: 0,
            len,
            policy: self.policy,
            active_objects: self.active_objects,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bucket_is_floor_log2() {
        assert_eq!(bucket(1), 0);
        assert_eq!(bucket(63), 5);
        assert_eq!(bucket(64), 6);
        assert_eq!(bucket(127), 6);
        assert_eq!(bucket(128), 7);
    }

    #[test]
    fn empty_block_starts_after_header() {
        let b = Block::new(1 << 20, AllocPolicy::LightweightReuse).unwrap();
        assert_eq!(b.high_water(), BLOCK_HEADER_SIZE);
        assert_eq!(b.active_objects(), 0);
        assert_eq!(b.state(), BlockState::Active);
    }

    #[test]
    fn tiny_capacity_is_rejected() {
        assert!(matches!(
            Block::new(BLOCK_HEADER_SIZE, AllocPolicy::NoReuse),
            Err(ObjectError::InvalidCapacity(_))
        ));
    }

    #[test]
    fn no_reuse_offsets_increase() {
        let mut b = Block::new(4096, AllocPolicy::NoReuse).unwrap();
        let c = b.alloc(64, None).unwrap();
        b.free(c, None);
        let d = b.alloc(64, None).unwrap();
        assert!(d.offset > c.offset);
    }

    #[test]
    fn lightweight_reuses_same_bucket() {
        let mut b = Block::new(4096, AllocPolicy::LightweightReuse).unwrap();
        let c = b.alloc(64, None).unwrap();
        b.alloc(64, None).unwrap();
        b.free(c, None);
        let d = b.alloc(64, None).unwrap();
        assert_eq!(d, c);
    }

    #[test]
    fn lightweight_skips_too_small_chunk_in_bucket() {
        let mut b = Block::new(4096, AllocPolicy::LightweightReuse).unwrap();
        let small = b.alloc(64, None).unwrap();
        b.free(small, None);
        // 72 bytes lands in bucket 6 too but does not fit a 64-byte chunk.
        let big = b.alloc(72, None).unwrap();
        assert_ne!(big.offset, small.offset);
    }

    #[test]
    fn exhaustion_leaves_block_unchanged() {
        let mut b = Block::new(BLOCK_HEADER_SIZE + 32, AllocPolicy::LightweightReuse).unwrap();
        b.alloc(24, None).unwrap();
        let hw = b.high_water();
        assert!(matches!(
            b.alloc(24, None),
            Err(ObjectError::OutOfBlockMemory { .. })
        ));
        assert_eq!(b.high_water(), hw);
    }
}
