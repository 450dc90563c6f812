//! Persistent containers that live inside allocation blocks.
//!
//! Every container is an ordinary object: it can be the root of a page,
//! shipped as raw bytes, and read in place after import.

mod map;
mod string;
mod vector;

pub use map::{Combine, KeyKind, KeyRef, MapValue, OwnedKey, PMap, ValueKind};
pub use string::{make_string, read_string};
pub use vector::{ElemType, HandleElem, PVector, VecElem, VecLoc};

use crate::object::{BehaviorDescriptor, ElemKind, FieldKind, TypeCode};

/// Type codes reserved for the built-in container types. Every registry
/// starts with these registered in this order.
pub mod builtin {
    use crate::object::TypeCode;

    pub const STRING: TypeCode = TypeCode::from_raw(1);
    pub const ARRAY_F64: TypeCode = TypeCode::from_raw(2);
    pub const ARRAY_I64: TypeCode = TypeCode::from_raw(3);
    pub const ARRAY_HANDLE: TypeCode = TypeCode::from_raw(4);
    pub const VECTOR_F64: TypeCode = TypeCode::from_raw(5);
    pub const VECTOR_I64: TypeCode = TypeCode::from_raw(6);
    pub const VECTOR_HANDLE: TypeCode = TypeCode::from_raw(7);
    pub const BOX_I64: TypeCode = TypeCode::from_raw(8);
    pub const BOX_F64: TypeCode = TypeCode::from_raw(9);
    pub const BOX_BOOL: TypeCode = TypeCode::from_raw(10);
    pub const MAP: TypeCode = TypeCode::from_raw(11);
    /// Map entries, indexed by `key_is_handle * 2 + value_is_handle`.
    pub const MAP_ENTRY: [TypeCode; 4] = [
        TypeCode::from_raw(12),
        TypeCode::from_raw(13),
        TypeCode::from_raw(14),
        TypeCode::from_raw(15),
    ];
    pub const COUNT: u32 = 15;
}

fn vector_desc(name: &str) -> BehaviorDescriptor {
    BehaviorDescriptor::record(
        name,
        &[
            ("size", FieldKind::I32),
            ("capacity", FieldKind::I32),
            ("storage", FieldKind::Handle),
        ],
    )
}

fn entry_desc(name: &str, key_handle: bool, value_handle: bool) -> BehaviorDescriptor {
    BehaviorDescriptor::record(
        name,
        &[
            ("next", FieldKind::Handle),
            ("hash", FieldKind::U64),
            (
                "key",
                if key_handle {
                    FieldKind::Str
                } else {
                    FieldKind::I64
                },
            ),
            (
                "value",
                if value_handle {
                    FieldKind::Handle
                } else {
                    FieldKind::I64
                },
            ),
        ],
    )
}

pub(crate) fn builtin_descriptors() -> Vec<(TypeCode, BehaviorDescriptor)> {
    use builtin::*;
    vec![
        (
            STRING,
            BehaviorDescriptor::array("String", ElemKind::Value(1)),
        ),
        (
            ARRAY_F64,
            BehaviorDescriptor::array("Array<f64>", ElemKind::Value(8)),
        ),
        (
            ARRAY_I64,
            BehaviorDescriptor::array("Array<i64>", ElemKind::Value(8)),
        ),
        (
            ARRAY_HANDLE,
            BehaviorDescriptor::array("Array<Handle>", ElemKind::Handle),
        ),
        (VECTOR_F64, vector_desc("Vector<f64>")),
        (VECTOR_I64, vector_desc("Vector<i64>")),
        (VECTOR_HANDLE, vector_desc("Vector<Handle>")),
        (
            BOX_I64,
            BehaviorDescriptor::record("Box<i64>", &[("value", FieldKind::I64)]),
        ),
        (
            BOX_F64,
            BehaviorDescriptor::record("Box<f64>", &[("value", FieldKind::F64)]),
        ),
        (
            BOX_BOOL,
            BehaviorDescriptor::record("Box<bool>", &[("value", FieldKind::Bool)]),
        ),
        (
            MAP,
            BehaviorDescriptor::record(
                "Map",
                &[
                    ("count", FieldKind::I32),
                    ("nbuckets", FieldKind::I32),
                    ("buckets", FieldKind::Handle),
                    ("keyKind", FieldKind::I32),
                    ("valueKind", FieldKind::I32),
                ],
            ),
        ),
        (
            MAP_ENTRY[0],
            entry_desc("MapEntry<inline,inline>", false, false),
        ),
        (
            MAP_ENTRY[1],
            entry_desc("MapEntry<inline,handle>", false, true),
        ),
        (
            MAP_ENTRY[2],
            entry_desc("MapEntry<handle,inline>", true, false),
        ),
        (
            MAP_ENTRY[3],
            entry_desc("MapEntry<handle,handle>", true, true),
        ),
    ]
}

const HASH_SEED: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic 64-bit hash of an integer, stable across runs and processes.
pub fn hash_u64(v: u64) -> u64 {
    mix64(v ^ HASH_SEED)
}

/// Deterministic 64-bit hash of a byte string (seeded FNV-1a, then mixed).
pub fn hash_bytes(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ HASH_SEED;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    mix64(h)
}
