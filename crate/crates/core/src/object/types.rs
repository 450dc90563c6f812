use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::RwLock;

use super::ObjectError;

const SIMPLE_BIT: u32 = 1 << 31;

/// Identifies the type of an object a handle points to.
///
/// The top bit marks a simple type; for those the low 31 bits hold the payload
/// size in bytes and no registry entry is consulted. Otherwise the code is a
/// registry-assigned identifier.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypeCode(u32);

impl TypeCode {
    pub const NULL: TypeCode = TypeCode(0);

    pub fn simple(size: u32) -> TypeCode {
        assert!(
            size > 0 && size < SIMPLE_BIT,
            "simple type size out of range"
        );
        TypeCode(SIMPLE_BIT | size)
    }

    pub const fn from_raw(raw: u32) -> TypeCode {
        TypeCode(raw)
    }

    pub fn raw(self) -> u32 {
        self.0
    }

    pub fn is_simple(self) -> bool {
        self.0 & SIMPLE_BIT != 0
    }

    pub fn simple_size(self) -> Option<u32> {
        self.is_simple().then_some(self.0 & !SIMPLE_BIT)
    }
}

impl fmt::Debug for TypeCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.simple_size() {
            Some(n) => write!(f, "simple({n})"),
            None => write!(f, "type#{}", self.0),
        }
    }
}

/// Element stored in a variable-length array object.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElemKind {
    /// Plain bytes of the given width, copied with a memmove.
    Value(u32),
    /// An 8-byte relocatable handle.
    Handle,
}

impl ElemKind {
    pub fn width(self) -> u32 {
        match self {
            ElemKind::Value(w) => w,
            ElemKind::Handle => super::HANDLE_SIZE as u32,
        }
    }
}

/// How the payload of a type is laid out. Deep copy and destruction are
/// driven entirely by this description.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Layout {
    Simple {
        size: u32,
    },
    /// Fixed-size record; `handles` lists payload offsets of handle fields.
    Fixed {
        size: u32,
        handles: Vec<u32>,
    },
    /// Variable-length array; payload size is a multiple of the element width.
    Array {
        elem: ElemKind,
    },
}

impl Layout {
    pub fn fixed_size(&self) -> Option<u32> {
        match self {
            Layout::Simple { size } | Layout::Fixed { size, .. } => Some(*size),
            Layout::Array { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    I32,
    I64,
    U64,
    F64,
    Bool,
    /// Handle to a `String` object.
    Str,
    /// Handle to any object.
    Handle,
    /// A 16-byte vector header of `f64` elements stored inline.
    VecF64,
    /// A 16-byte vector header of handle elements stored inline.
    VecHandle,
}

impl FieldKind {
    pub fn width(self) -> u32 {
        match self {
            FieldKind::I32 => 4,
            FieldKind::Bool => 1,
            FieldKind::I64 | FieldKind::U64 | FieldKind::F64 => 8,
            FieldKind::Str | FieldKind::Handle => 8,
            FieldKind::VecF64 | FieldKind::VecHandle => super::VEC_HEADER_SIZE as u32,
        }
    }

    /// Payload offset of the handle slot this field owns, relative to the field.
    fn handle_slot(self) -> Option<u32> {
        match self {
            FieldKind::Str | FieldKind::Handle => Some(0),
            FieldKind::VecF64 | FieldKind::VecHandle => Some(8),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldDesc {
    pub name: String,
    pub offset: u32,
    pub kind: FieldKind,
}

/// Registry entry for a complex type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BehaviorDescriptor {
    pub name: String,
    pub layout: Layout,
    pub fields: Vec<FieldDesc>,
}

impl BehaviorDescriptor {
    pub fn simple(name: impl Into<String>, size: u32) -> Self {
        BehaviorDescriptor {
            name: name.into(),
            layout: Layout::Simple { size },
            fields: vec![],
        }
    }

    pub fn array(name: impl Into<String>, elem: ElemKind) -> Self {
        BehaviorDescriptor {
            name: name.into(),
            layout: Layout::Array { elem },
            fields: vec![],
        }
    }

    /// A record type assembled from named fields laid out in order, each
    /// aligned to its own width (max 8).
    pub fn record(name: impl Into<String>, fields: &[(&str, FieldKind)]) -> Self {
        let mut offset = 0u32;
        let mut descs = Vec::with_capacity(fields.len());
        for (fname, kind) in fields {
            let align = kind.width().min(8);
            offset = offset.div_ceil(align) * align;
            descs.push(FieldDesc {
                name: fname.to_string(),
                offset,
                kind: *kind,
            });
            offset += kind.width();
        }
        let size = offset.div_ceil(8).max(1) * 8;
        let handles = descs
            .iter()
            .filter_map(|f| f.kind.handle_slot().map(|s| f.offset + s))
            .collect();
        BehaviorDescriptor {
            name: name.into(),
            layout: Layout::Fixed { size, handles },
            fields: descs,
        }
    }

    pub fn field(&self, name: &str) -> Option<&FieldDesc> {
        self.fields.iter().find(|f| f.name == name)
    }
}

#[derive(Default)]
struct RegistryInner {
    by_code: HashMap<u32, BehaviorDescriptor>,
    by_name: HashMap<String, TypeCode>,
    next: u32,
}

/// Process-wide mapping from type codes to behavior descriptors. Stands in for
/// a catalog that ships code; every participant of a simulated cluster shares
/// one registry.
pub struct TypeRegistry {
    inner: RwLock<RegistryInner>,
}

impl Default for TypeRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl TypeRegistry {
    /// A registry with the built-in container types already registered.
    pub fn new() -> Self {
        let reg = TypeRegistry {
            inner: RwLock::new(RegistryInner {
                next: 1,
                ..Default::default()
            }),
        };
        for (code, desc) in crate::containers::builtin_descriptors() {
            let got = reg.register(desc).expect("builtin registration");
            debug_assert_eq!(got, code);
        }
        reg
    }

    /// Registers a descriptor. Simple layouts map straight to a simple type
    /// code; complex ones get a fresh code unless an identical descriptor is
    /// already registered under the same name.
    pub fn register(&self, desc: BehaviorDescriptor) -> Result<TypeCode, ObjectError> {
        if let Layout::Simple { size } = desc.layout {
            if size == 0 {
                return Err(ObjectError::InvalidDescriptor(desc.name));
            }
            return Ok(TypeCode::simple(size));
        }
        if let Layout::Array {
            elem: ElemKind::Value(0),
        } = desc.layout
        {
            return Err(ObjectError::InvalidDescriptor(desc.name));
        }
        let mut inner = self.inner.write().unwrap();
        if let Some(&code) = inner.by_name.get(&desc.name) {
            return if inner.by_code[&code.raw()] == desc {
                Ok(code)
            } else {
                Err(ObjectError::RegistrationConflict(desc.name))
            };
        }
        let code = TypeCode(inner.next);
        inner.next += 1;
        inner.by_name.insert(desc.name.clone(), code);
        inner.by_code.insert(code.raw(), desc);
        Ok(code)
    }

    pub fn lookup(&self, code: TypeCode) -> Option<BehaviorDescriptor> {
        self.inner.read().unwrap().by_code.get(&code.raw()).cloned()
    }

    pub fn code_of(&self, name: &str) -> Option<TypeCode> {
        self.inner.read().unwrap().by_name.get(name).copied()
    }

    pub fn name_of(&self, code: TypeCode) -> Option<String> {
        self.inner
            .read()
            .unwrap()
            .by_code
            .get(&code.raw())
            .map(|d| d.name.clone())
    }

    /// Payload layout for `code`, including simple types.
    pub fn layout(&self, code: TypeCode) -> Result<Layout, ObjectError> {
        if let Some(size) = code.simple_size() {
            return Ok(Layout::Simple { size });
        }
        self.inner
            .read()
            .unwrap()
            .by_code
            .get(&code.raw())
            .map(|d| d.layout.clone())
            .ok_or(ObjectError::UnknownType(code.raw()))
    }

    pub fn entries(&self) -> Vec<(TypeCode, String)> {
        let inner = self.inner.read().unwrap();
        let mut out: Vec<_> = inner.by_name.iter().map(|(n, c)| (*c, n.clone())).collect();
        out.sort();
        out
    }

    /// Writes the `code<TAB>name` manifest, one entry per line.
    pub fn write_manifest(&self, mut w: impl Write) -> std::io::Result<()> {
        for (code, name) in self.entries() {
            writeln!(w, "{}\t{}", code.raw(), name)?;
        }
        Ok(())
    }

    /// Parses a manifest into `(code, name)` pairs.
    pub fn read_manifest(r: impl BufRead) -> Result<Vec<(u32, String)>, ObjectError> {
        let mut out = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| ObjectError::CorruptManifest(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let (code, name) = line.split_once('\t').ok_or_else(|| {
                ObjectError::CorruptManifest(format!("line {}: missing tab", i + 1))
            })?;
            let code = code
                .parse()
                .map_err(|_| ObjectError::CorruptManifest(format!("line {}: bad code", i + 1)))?;
            out.push((code, name.to_string()));
        }
        Ok(out)
    }

    /// Checks that every manifest entry resolves to the same name here, so
    /// payloads written by the manifest's producer decode identically.
    pub fn check_manifest(&self, entries: &[(u32, String)]) -> Result<(), ObjectError> {
        for (code, name) in entries {
            match self.code_of(name) {
                Some(c) if c.raw() == *code => {}
                _ => return Err(ObjectError::ManifestMismatch(name.clone())),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_double_encodes_size() {
        let reg = TypeRegistry::new();
        let t = reg
            .register(BehaviorDescriptor::simple("double", 8))
            .unwrap();
        assert!(t.is_simple());
        assert_eq!(t.simple_size(), Some(8));
    }

    #[test]
    fn identical_registration_is_idempotent() {
        let reg = TypeRegistry::new();
        let d = BehaviorDescriptor::record("DataPoint", &[("data", FieldKind::Handle)]);
        let a = reg.register(d.clone()).unwrap();
        let b = reg.register(d).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_simple());
    }

    #[test]
    fn distinct_types_get_distinct_codes() {
        let reg = TypeRegistry::new();
        let a = reg
            .register(BehaviorDescriptor::record("A", &[("x", FieldKind::I64)]))
            .unwrap();
        let b = reg
            .register(BehaviorDescriptor::record("B", &[("y", FieldKind::F64)]))
            .unwrap();
        assert_ne!(a, b);
        let names: Vec<_> = reg.entries().into_iter().map(|(_, n)| n).collect();
        assert!(names.contains(&"A".to_string()) && names.contains(&"B".to_string()));
        assert_eq!(reg.lookup(a).unwrap().name, "A");
        assert_eq!(reg.lookup(b).unwrap().name, "B");
    }

    #[test]
    fn conflicting_registration_fails() {
        let reg = TypeRegistry::new();
        reg.register(BehaviorDescriptor::record("A", &[("x", FieldKind::I64)]))
            .unwrap();
        let err = reg.register(BehaviorDescriptor::record("A", &[("x", FieldKind::F64)]));
        assert!(matches!(err, Err(ObjectError::RegistrationConflict(n)) if n == "A"));
    }

    #[test]
    fn record_layout_aligns_fields() {
        let d = BehaviorDescriptor::record(
            "MatrixBlock",
            &[
                ("chunkRow", FieldKind::I32),
                ("chunkColumn", FieldKind::I32),
                ("chunkWidth", FieldKind::I32),
                ("chunkHeight", FieldKind::I32),
                ("values", FieldKind::VecF64),
            ],
        );
        assert_eq!(d.field("values").unwrap().offset, 16);
        assert_eq!(
            d.layout,
            Layout::Fixed {
                size: 32,
                handles: vec![24]
            }
        );
    }

    #[test]
    fn manifest_round_trip() {
        let reg = TypeRegistry::new();
        reg.register(BehaviorDescriptor::record("A", &[("x", FieldKind::I64)]))
            .unwrap();
        reg.register(BehaviorDescriptor::array("Bytes", ElemKind::Value(1)))
            .unwrap();
        let mut buf = Vec::new();
        reg.write_manifest(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let n = crate::containers::builtin::COUNT;
        assert!(text.starts_with("1\tString\n"));
        assert!(text.ends_with(&format!("{}\tA\n{}\tBytes\n", n + 1, n + 2)));
        let entries = TypeRegistry::read_manifest(&buf[..]).unwrap();
        reg.check_manifest(&entries).unwrap();
        let other = TypeRegistry::new();
        other
            .register(BehaviorDescriptor::array("Bytes", ElemKind::Value(1)))
            .unwrap();
        assert!(other.check_manifest(&entries).is_err());
    }
}
