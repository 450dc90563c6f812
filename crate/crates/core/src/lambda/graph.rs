use super::{LambdaError, LambdaTerm};

/// Index of a computation within its graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CompId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub enum CompKind {
    /// Scans `db.set`; its records appear as one column named `column`.
    Reader {
        db: String,
        set: String,
        column: String,
    },
    Selection {
        input: CompId,
        predicate: Option<LambdaTerm>,
        projection: Option<LambdaTerm>,
    },
    /// Like a selection, but the projection yields a vector whose elements
    /// each become an output row.
    MultiSelect {
        input: CompId,
        predicate: Option<LambdaTerm>,
        projection: LambdaTerm,
    },
    Join {
        inputs: Vec<CompId>,
        predicate: LambdaTerm,
        projection: Option<LambdaTerm>,
    },
    Aggregate {
        input: CompId,
        key: LambdaTerm,
        value: LambdaTerm,
        combine: String,
    },
    Writer {
        input: CompId,
        db: String,
        set: String,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Computation {
    pub name: String,
    pub kind: CompKind,
}

impl Computation {
    pub fn inputs(&self) -> Vec<CompId> {
        match &self.kind {
            CompKind::Reader { .. } => Vec::new(),
            CompKind::Selection { input, .. }
            | CompKind::MultiSelect { input, .. }
            | CompKind::Aggregate { input, .. }
            | CompKind::Writer { input, .. } => vec![*input],
            CompKind::Join { inputs, .. } => inputs.clone(),
        }
    }
}

/// A DAG of computations, built in dependency order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ComputationGraph {
    comps: Vec<Computation>,
}

impl ComputationGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn comps(&self) -> &[Computation] {
        &self.comps
    }

    pub fn get(&self, id: CompId) -> &Computation {
        &self.comps[id.0]
    }

    fn push(&mut self, name: &str, kind: CompKind) -> Result<CompId, LambdaError> {
        if self.comps.iter().any(|c| c.name == name) {
            return Err(LambdaError::DuplicateName(name.to_string()));
        }
        let c = Computation {
            name: name.to_string(),
            kind,
        };
        for i in c.inputs() {
            if i.0 >= self.comps.len() {
                return Err(LambdaError::InvalidGraph(format!(
                    "`{name}` reads unknown computation #{}",
                    i.0
                )));
            }
            if matches!(self.comps[i.0].kind, CompKind::Writer { .. }) {
                return Err(LambdaError::InvalidGraph(format!(
                    "`{name}` reads from a writer"
                )));
            }
        }
        self.comps.push(c);
        Ok(CompId(self.comps.len() - 1))
    }

    pub fn reader(
        &mut self,
        name: &str,
        db: &str,
        set: &str,
        column: &str,
    ) -> Result<CompId, LambdaError> {
        let kind = CompKind::Reader {
            db: db.into(),
            set: set.into(),
            column: column.into(),
        };
        self.push(name, kind)
    }

    pub fn selection(
        &mut self,
        name: &str,
        input: CompId,
        predicate: Option<LambdaTerm>,
        projection: Option<LambdaTerm>,
    ) -> Result<CompId, LambdaError> {
        self.push(
            name,
            CompKind::Selection {
                input,
                predicate,
                projection,
            },
        )
    }

    pub fn multi_select(
        &mut self,
        name: &str,
        input: CompId,
        predicate: Option<LambdaTerm>,
        projection: LambdaTerm,
    ) -> Result<CompId, LambdaError> {
        self.push(
            name,
            CompKind::MultiSelect {
                input,
                predicate,
                projection,
            },
        )
    }

    pub fn join(
        &mut self,
        name: &str,
        inputs: &[CompId],
        predicate: LambdaTerm,
        projection: Option<LambdaTerm>,
    ) -> Result<CompId, LambdaError> {
        if inputs.len() < 2 {
            return Err(LambdaError::InvalidGraph(format!(
                "join `{name}` needs at least two inputs"
            )));
        }
        self.push(
            name,
            CompKind::Join {
                inputs: inputs.to_vec(),
                predicate,
                projection,
            },
        )
    }

    /// `combine` is one of `sum`, `min`, `max`, `replace`.
    pub fn aggregate(
        &mut self,
        name: &str,
        input: CompId,
        key: LambdaTerm,
        value: LambdaTerm,
        combine: &str,
    ) -> Result<CompId, LambdaError> {
        if !matches!(combine, "sum" | "min" | "max" | "replace") {
            return Err(LambdaError::InvalidGraph(format!(
                "unknown combiner `{combine}`"
            )));
        }
        self.push(
            name,
            CompKind::Aggregate {
                input,
                key,
                value,
                combine: combine.into(),
            },
        )
    }

    pub fn writer(
        &mut self,
        name: &str,
        input: CompId,
        db: &str,
        set: &str,
    ) -> Result<CompId, LambdaError> {
        self.push(
            name,
            CompKind::Writer {
                input,
                db: db.into(),
                set: set.into(),
            },
        )
    }
}
