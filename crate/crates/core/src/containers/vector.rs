use std::marker::PhantomData;

use super::builtin;
use crate::object::{
    BlockId, BlockView, Heap, ObjRef, ObjectError, ObjectPolicy, TypeCode, HANDLE_SIZE,
};

/// Element type of a persistent vector.
pub trait ElemType {
    const ARRAY: TypeCode;
    const VECTOR: TypeCode;
}

/// Plain 8-byte element copied by value.
pub trait VecElem: ElemType + Copy {
    fn read(view: &BlockView<'_>, pos: u32) -> Self;
    fn to_bytes(self) -> [u8; 8];
}

impl ElemType for f64 {
    const ARRAY: TypeCode = builtin::ARRAY_F64;
    const VECTOR: TypeCode = builtin::VECTOR_F64;
}

impl VecElem for f64 {
    fn read(view: &BlockView<'_>, pos: u32) -> Self {
        view.read_f64(pos)
    }
    fn to_bytes(self) -> [u8; 8] {
        self.to_le_bytes()
    }
}

impl ElemType for i64 {
    const ARRAY: TypeCode = builtin::ARRAY_I64;
    const VECTOR: TypeCode = builtin::VECTOR_I64;
}

impl VecElem for i64 {
    fn read(view: &BlockView<'_>, pos: u32) -> Self {
        view.read_i64(pos)
    }
    fn to_bytes(self) -> [u8; 8] {
        self.to_le_bytes()
    }
}

/// Marker for vectors of handles.
#[derive(Clone, Copy, Debug)]
pub struct HandleElem;

impl ElemType for HandleElem {
    const ARRAY: TypeCode = builtin::ARRAY_HANDLE;
    const VECTOR: TypeCode = builtin::VECTOR_HANDLE;
}

/// Location of a 16-byte vector header: either the payload of a standalone
/// vector object or a field embedded in a record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VecLoc {
    pub block: BlockId,
    pub pos: u32,
}

/// A growable array stored in a block. Storage is a separate array object the
/// header points to; growth doubles it inside the same block.
#[derive(Debug)]
pub struct PVector<T> {
    pub loc: VecLoc,
    _t: PhantomData<T>,
}

impl<T> Clone for PVector<T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for PVector<T> {}

const INITIAL_CAPACITY: u32 = 4;

impl<T: ElemType> PVector<T> {
    /// Allocates an empty standalone vector in the active block.
    pub fn create(heap: &mut Heap) -> Result<(ObjRef, Self), ObjectError> {
        let obj = heap.make_object(T::VECTOR, ObjectPolicy::FullRefCount)?;
        Ok((obj, Self::of(obj)))
    }

    /// The vector whose header is the payload of `obj`.
    pub fn of(obj: ObjRef) -> Self {
        PVector {
            loc: VecLoc {
                block: obj.block,
                pos: obj.payload(),
            },
            _t: PhantomData,
        }
    }

    /// A vector embedded at payload offset `rel` of `obj`.
    pub fn embedded(obj: ObjRef, rel: u32) -> Self {
        PVector {
            loc: VecLoc {
                block: obj.block,
                pos: obj.payload() + rel,
            },
            _t: PhantomData,
        }
    }

    pub fn len(&self, view: &BlockView<'_>) -> usize {
        view.read_u32(self.loc.pos) as usize
    }

    pub fn is_empty(&self, view: &BlockView<'_>) -> bool {
        self.len(view) == 0
    }

    pub fn capacity(&self, view: &BlockView<'_>) -> usize {
        view.read_u32(self.loc.pos + 4) as usize
    }

    fn storage(&self, view: &BlockView<'_>) -> Option<u32> {
        view.handle_at(self.loc.pos + 8).map(|(off, _)| off)
    }

    /// Position of element `i` within the block.
    pub fn elem_pos(&self, view: &BlockView<'_>, i: usize) -> u32 {
        let storage = self.storage(view).expect("non-empty vector has storage");
        storage + crate::object::OBJ_HEADER_SIZE as u32 + (i * HANDLE_SIZE) as u32
    }

    /// Makes room for one more element, doubling the storage when full.
    fn reserve_one(&self, heap: &mut Heap) -> Result<(), ObjectError> {
        let view = heap.view(self.loc.block)?;
        let (len, cap) = (self.len(&view) as u32, self.capacity(&view) as u32);
        if len < cap {
            return Ok(());
        }
        let old = view.handle_at(self.loc.pos + 8).map(|(off, ty)| ObjRef {
            block: self.loc.block,
            off,
            ty,
        });
        if heap.active_id() != Some(self.loc.block) {
            return Err(ObjectError::TypeMismatch(
                "vector growth requires its block to be active".into(),
            ));
        }
        let new_cap = (cap * 2).max(INITIAL_CAPACITY);
        let arr = heap.make_array(T::ARRAY, new_cap, ObjectPolicy::FullRefCount)?;
        if let Some(old) = old {
            for i in 0..len {
                let from = old.payload() + i * HANDLE_SIZE as u32;
                let to = arr.payload() + i * HANDLE_SIZE as u32;
                if T::ARRAY == builtin::ARRAY_HANDLE {
                    heap.relocate_handle(self.loc.block, from, to)?;
                } else {
                    let bytes = heap.view(self.loc.block)?.slice(from, 8).to_vec();
                    heap.write_raw(self.loc.block, to, &bytes)?;
                }
            }
        }
        heap.write_handle_raw(self.loc.block, self.loc.pos + 8, Some(arr))?;
        heap.write_raw(self.loc.block, self.loc.pos + 4, &new_cap.to_le_bytes())?;
        if let Some(old) = old {
            heap.free_moved(old)?;
        }
        Ok(())
    }

    fn bump_len(&self, heap: &mut Heap, len: usize) -> Result<(), ObjectError> {
        heap.write_raw(
            self.loc.block,
            self.loc.pos,
            &((len + 1) as u32).to_le_bytes(),
        )
    }
}

impl<T: VecElem> PVector<T> {
    pub fn push(&self, heap: &mut Heap, x: T) -> Result<(), ObjectError> {
        self.reserve_one(heap)?;
        let view = heap.view(self.loc.block)?;
        let len = self.len(&view);
        let pos = self.elem_pos(&view, len);
        heap.write_raw(self.loc.block, pos, &x.to_bytes())?;
        self.bump_len(heap, len)
    }

    pub fn get(&self, view: &BlockView<'_>, i: usize) -> T {
        assert!(i < self.len(view), "index {i} out of bounds");
        T::read(view, self.elem_pos(view, i))
    }

    pub fn set(&self, heap: &mut Heap, i: usize, x: T) -> Result<(), ObjectError> {
        let view = heap.view(self.loc.block)?;
        assert!(i < self.len(&view), "index {i} out of bounds");
        let pos = self.elem_pos(&view, i);
        heap.write_raw(self.loc.block, pos, &x.to_bytes())
    }

    pub fn to_vec(&self, view: &BlockView<'_>) -> Vec<T> {
        (0..self.len(view)).map(|i| self.get(view, i)).collect()
    }

    /// Appends all of `xs`, growing at most a logarithmic number of times.
    pub fn extend_from_slice(&self, heap: &mut Heap, xs: &[T]) -> Result<(), ObjectError> {
        for &x in xs {
            self.push(heap, x)?;
        }
        Ok(())
    }
}

impl PVector<HandleElem> {
    /// Appends a handle. Targets outside the vector's block are deep-copied in.
    pub fn push_handle(&self, heap: &mut Heap, target: Option<ObjRef>) -> Result<(), ObjectError> {
        self.reserve_one(heap)?;
        let view = heap.view(self.loc.block)?;
        let len = self.len(&view);
        let pos = self.elem_pos(&view, len);
        heap.assign_handle(
            crate::object::Slot {
                block: self.loc.block,
                pos,
            },
            target,
        )?;
        self.bump_len(heap, len)
    }

    /// Appends a handle, consuming the caller's reference to `target`.
    pub fn push_moved(&self, heap: &mut Heap, target: ObjRef) -> Result<(), ObjectError> {
        self.reserve_one(heap)?;
        let view = heap.view(self.loc.block)?;
        let len = self.len(&view);
        let pos = self.elem_pos(&view, len);
        heap.move_handle(
            crate::object::Slot {
                block: self.loc.block,
                pos,
            },
            target,
        )?;
        self.bump_len(heap, len)
    }

    pub fn get_handle(&self, view: &BlockView<'_>, i: usize) -> Option<ObjRef> {
        assert!(i < self.len(view), "index {i} out of bounds");
        view.handle_at(self.elem_pos(view, i))
            .map(|(off, ty)| ObjRef {
                block: self.loc.block,
                off,
                ty,
            })
    }

    pub fn handles(&self, view: &BlockView<'_>) -> Vec<Option<ObjRef>> {
        (0..self.len(view))
            .map(|i| self.get_handle(view, i))
            .collect()
    }
}
