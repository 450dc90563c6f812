use std::collections::HashMap;
use std::sync::Arc;

use super::Value;
use crate::containers::{read_string, PVector};
use crate::object::{BlockView, FieldDesc, FieldKind, Heap, ObjRef, ObjectError, TypeCode};

#[derive(Debug, thiserror::Error)]
pub enum UdfError {
    #[error(transparent)]
    Object(#[from] ObjectError),
    #[error("{0}")]
    Failed(String),
}

/// What user code sees while a stage runs: read access to every pinned page
/// and allocation on the live output page.
pub struct StageCtx<'a> {
    heap: &'a mut Heap,
    fields: HashMap<(TypeCode, String), Option<FieldDesc>>,
}

impl<'a> StageCtx<'a> {
    pub fn new(heap: &'a mut Heap) -> Self {
        StageCtx {
            heap,
            fields: HashMap::new(),
        }
    }

    pub fn heap(&mut self) -> &mut Heap {
        self.heap
    }

    pub fn heap_ref(&self) -> &Heap {
        self.heap
    }

    pub fn view(&self, obj: ObjRef) -> Result<BlockView<'_>, UdfError> {
        Ok(self.heap.view(obj.block)?)
    }

    fn field_desc(&mut self, ty: TypeCode, name: &str) -> Result<FieldDesc, UdfError> {
        let key = (ty, name.to_string());
        if !self.fields.contains_key(&key) {
            let desc = self
                .heap
                .registry()
                .lookup(ty)
                .and_then(|d| d.field(name).cloned());
            self.fields.insert(key.clone(), desc);
        }
        self.fields[&key].clone().ok_or_else(|| {
            let tname = self
                .heap
                .registry()
                .name_of(ty)
                .unwrap_or_else(|| format!("{ty:?}"));
            UdfError::Failed(format!("type `{tname}` has no field `{name}`"))
        })
    }

    /// Reads a named field. Handle and string fields come back as raw
    /// references into the object's page.
    pub fn field(&mut self, obj: ObjRef, name: &str) -> Result<Value, UdfError> {
        let f = self.field_desc(obj.ty, name)?;
        let view = self.heap.view(obj.block)?;
        Ok(read_field(&view, obj, &f))
    }

    pub fn string(&self, obj: ObjRef) -> Result<String, UdfError> {
        let view = self.heap.view(obj.block)?;
        Ok(read_string(&view, obj.off).to_string())
    }

    pub fn type_name(&self, obj: ObjRef) -> String {
        self.heap.registry().name_of(obj.ty).unwrap_or_default()
    }
}

pub fn read_field(view: &BlockView<'_>, obj: ObjRef, f: &FieldDesc) -> Value {
    let pos = obj.payload() + f.offset;
    match f.kind {
        FieldKind::I32 => Value::Int(view.read_i32(pos) as i64),
        FieldKind::I64 => Value::Int(view.read_i64(pos)),
        FieldKind::U64 => Value::Int(view.read_u64(pos) as i64),
        FieldKind::F64 => Value::Double(view.read_f64(pos)),
        FieldKind::Bool => Value::Bool(view.read_u8(pos) != 0),
        FieldKind::Str | FieldKind::Handle => {
            view.handle_at(pos).map_or(Value::Null, |(off, ty)| {
                Value::Obj(ObjRef {
                    block: obj.block,
                    off,
                    ty,
                })
            })
        }
        FieldKind::VecF64 => Value::DVec(PVector::<f64>::embedded(obj, f.offset).to_vec(view)),
        FieldKind::VecHandle => Value::Null,
    }
}

/// A method callable from TCAP `methodCall` stages.
pub type MethodFn = Arc<dyn Fn(&mut StageCtx<'_>, ObjRef) -> Result<Value, UdfError> + Send + Sync>;

/// An opaque native function callable from `nativeOpaque` stages.
pub type OpaqueFn =
    Arc<dyn Fn(&mut StageCtx<'_>, &[Value]) -> Result<Value, UdfError> + Send + Sync>;

/// Methods (by type name and method name) and opaque functions (by id).
#[derive(Clone, Default)]
pub struct Udfs {
    methods: HashMap<(String, String), MethodFn>,
    functions: HashMap<String, OpaqueFn>,
}

impl Udfs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_method(
        &mut self,
        type_name: &str,
        method: &str,
        f: impl Fn(&mut StageCtx<'_>, ObjRef) -> Result<Value, UdfError> + Send + Sync + 'static,
    ) -> &mut Self {
        self.methods
            .insert((type_name.to_string(), method.to_string()), Arc::new(f));
        self
    }

    pub fn add_function(
        &mut self,
        id: &str,
        f: impl Fn(&mut StageCtx<'_>, &[Value]) -> Result<Value, UdfError> + Send + Sync + 'static,
    ) -> &mut Self {
        self.functions.insert(id.to_string(), Arc::new(f));
        self
    }

    pub fn method(&self, type_name: &str, method: &str) -> Option<&MethodFn> {
        self.methods
            .get(&(type_name.to_string(), method.to_string()))
    }

    /// Any method registered under `method`, regardless of type.
    pub fn has_method(&self, method: &str) -> bool {
        self.methods.keys().any(|(_, m)| m == method)
    }

    pub fn function(&self, id: &str) -> Option<&OpaqueFn> {
        self.functions.get(id)
    }

    pub fn has_function(&self, id: &str) -> bool {
        self.functions.contains_key(id)
    }
}
