//! Page-as-a-heap object model.
//!
//! Objects live inside [`Block`]s and refer to each other through handles
//! that store a signed offset from the handle's own position plus a
//! [`TypeCode`]. A block can therefore be byte-copied anywhere (to disk, to
//! another process, to a different address) and every handle inside it stays
//! valid without any fixup pass.
//!
//! Layouts inside a block:
//!
//! ```text
//! block:   root handle (8) | reserved (8) | chunks...
//! chunk:   refCount u32 | policy u8 | live u8 | pad 2 | typeCode u32 |
//!          payloadSize u32 | chunkSize u32 | pad 4 | payload...
//! handle:  offset i32 (target header - handle position, 0 = null) | typeCode u32
//! ```

mod block;
mod heap;
mod types;
mod wire;

pub use block::{
    bucket, payload_handle_slots, AllocPolicy, AllocStats, Block, BlockId, BlockState, BlockView,
    FreeChunk, FrozenBlock, ObjHeader, ObjectPolicy,
};
pub use heap::{Heap, HeapStats, ObjRef, Slot};
pub use types::{
    BehaviorDescriptor, ElemKind, FieldDesc, FieldKind, Layout, TypeCode, TypeRegistry,
};
pub use wire::{
    export_block, export_frozen, import_block, import_block_at, import_fixups, FORMAT_VERSION,
    MAGIC, WIRE_HEADER_SIZE,
};

pub const BLOCK_HEADER_SIZE: usize = 16;
pub const OBJ_HEADER_SIZE: usize = 24;
pub const HANDLE_SIZE: usize = 8;
/// size u32 | capacity u32 | storage handle
pub const VEC_HEADER_SIZE: usize = 16;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ObjectError {
    #[error("conflicting registration for type `{0}`")]
    RegistrationConflict(String),
    #[error("invalid type descriptor `{0}`")]
    InvalidDescriptor(String),
    #[error("unknown type code {0}")]
    UnknownType(u32),
    #[error("block capacity {0} is invalid")]
    InvalidCapacity(usize),
    #[error("out of block memory: requested {requested} bytes, {available} available")]
    OutOfBlockMemory { requested: usize, available: usize },
    #[error("no active allocation block on this thread")]
    NoActiveBlock,
    #[error("unknown block {0}")]
    UnknownBlock(u64),
    #[error("unmanaged blocks are read-only")]
    UnmanagedMutation,
    #[error("unique-ownership object already has a handle")]
    UniqueOwnershipViolation,
    #[error("object graph contains a cycle")]
    CyclicGraph,
    #[error("corrupt block: {0}")]
    CorruptBlock(String),
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("type `{0}` does not match the manifest")]
    ManifestMismatch(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
}

impl ObjectError {
    pub fn is_out_of_memory(&self) -> bool {
        matches!(self, ObjectError::OutOfBlockMemory { .. })
    }
}

/// Verifies that every non-null handle stored in the block targets a live
/// object header inside the block's used region.
pub fn check_relocation_closure(
    view: BlockView<'_>,
    registry: &TypeRegistry,
) -> Result<(), String> {
    let end = view.bytes.len() as u32;
    let chunks: std::collections::HashSet<u32> = view.chunks(end).into_iter().collect();
    let slots = view
        .handle_slots(end, registry)
        .map_err(|e| e.to_string())?;
    for slot in slots {
        if let Some((target, _)) = view.handle_at(slot) {
            if target < BLOCK_HEADER_SIZE as u32 || target >= end || !chunks.contains(&target) {
                return Err(format!(
                    "handle at {slot} targets {target}, outside the block"
                ));
            }
            if !view.header(target).live {
                return Err(format!("handle at {slot} targets freed object {target}"));
            }
        }
    }
    Ok(())
}
