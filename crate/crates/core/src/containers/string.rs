use super::builtin;
use crate::object::{BlockView, Heap, ObjRef, ObjectError, ObjectPolicy};

/// Allocates a string object holding `s` in the active block. Strings carry
/// no cached hash.
pub fn make_string(heap: &mut Heap, s: &str) -> Result<ObjRef, ObjectError> {
    let obj = heap.make_array(builtin::STRING, s.len() as u32, ObjectPolicy::FullRefCount)?;
    heap.write_payload(obj, 0, s.as_bytes())?;
    Ok(obj)
}

/// Reads the string object whose header is at `off`.
pub fn read_string<'a>(view: &BlockView<'a>, off: u32) -> &'a str {
    let h = view.header(off);
    let bytes = view.slice(off + crate::object::OBJ_HEADER_SIZE as u32, h.payload_size);
    std::str::from_utf8(bytes).expect("string objects hold utf-8")
}
