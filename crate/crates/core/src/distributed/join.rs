use std::collections::HashMap;
use std::sync::Arc;
use std::thread;

use super::{DistError, MapWriter, SimCluster};
use crate::containers::{HandleElem, KeyKind, KeyRef, MapValue, PVector, ValueKind};
use crate::engine::{
    hash_value, page_maps, set_key, value_str, values_eq, EngineError, PcSet, SetBuilder, SetKind,
    StageCtx, UdfError, Udfs, Value,
};
use crate::object::{import_fixups, AllocPolicy, FrozenBlock, Heap, ObjRef, TypeRegistry};

/// How a join input's key is read off each object.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KeyExpr {
    Field(String),
    Method(String),
}

/// A stored set of objects, one per row, and its join key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JoinInput {
    pub db: String,
    pub set: String,
    pub key: KeyExpr,
}

impl JoinInput {
    pub fn new(db: &str, set: &str, key: KeyExpr) -> Self {
        JoinInput {
            db: db.to_string(),
            set: set.to_string(),
            key,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JoinPlan {
    /// Every input is hash-partitioned over all nodes.
    Shuffle,
    /// Build inputs are copied to every node; the probe input stays put.
    Broadcast,
}

/// Builds an output row from one matching tuple, allocating on the output page.
pub type JoinProjection =
    dyn Fn(&mut StageCtx<'_>, &[ObjRef]) -> Result<Vec<Value>, UdfError> + Send + Sync;

/// Where a join writes and what each output row holds.
#[derive(Clone, Copy)]
pub struct JoinOutput<'a> {
    pub db: &'a str,
    pub set: &'a str,
    /// Column names and row builder; without one, rows are the matched objects.
    pub project: Option<(&'a [&'a str], &'a JoinProjection)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct JoinReport {
    pub plan: Option<JoinPlan>,
    pub stages: usize,
    /// Tuples whose key hashes agree.
    pub candidates: u64,
    /// Candidates whose keys are equal.
    pub matches: u64,
    pub shipped_pages: usize,
    pub output_pages: usize,
    pub import_fixups: u64,
}

/// Evaluates join keys with every page it reads from attached.
struct KeyEval<'a> {
    heap: Heap,
    udfs: &'a Udfs,
    key: &'a KeyExpr,
}

impl<'a> KeyEval<'a> {
    fn new(
        registry: Arc<TypeRegistry>,
        udfs: &'a Udfs,
        key: &'a KeyExpr,
        page_size: usize,
    ) -> Result<Self, DistError> {
        let mut heap = Heap::new(registry);
        heap.make_block(page_size, AllocPolicy::LightweightReuse)?;
        Ok(KeyEval { heap, udfs, key })
    }

    fn attach(&mut self, page: &Arc<FrozenBlock>) {
        self.heap.attach(page.clone());
    }

    /// The key of `obj`, with string objects read out so it can outlive the page.
    fn eval(&mut self, obj: ObjRef) -> Result<Value, DistError> {
        let failed = |message: String| EngineError::PipelineAborted {
            stage: "join key".into(),
            chunk: 0,
            message,
        };
        let mut ctx = StageCtx::new(&mut self.heap);
        let v = match self.key {
            KeyExpr::Field(f) => ctx.field(obj, f),
            KeyExpr::Method(m) => {
                let ty = ctx.type_name(obj);
                let f = self
                    .udfs
                    .method(&ty, m)
                    .ok_or_else(|| failed(format!("type `{ty}` has no method `{m}`")))?;
                f(&mut ctx, obj)
            }
        }
        .map_err(|e| failed(e.to_string()))?;
        Ok(match value_str(&self.heap, &v) {
            Some(s) if matches!(v, Value::Obj(_)) => Value::Str(s.into_owned()),
            _ => v,
        })
    }

    fn hash(&self, key: &Value) -> u64 {
        hash_value(&self.heap, key)
    }
}

fn partition_of(hash: u64, parts: usize) -> usize {
    ((hash >> 32) % parts as u64) as usize
}

/// The objects stored one per row on a page.
fn page_objects(page: &FrozenBlock) -> Vec<ObjRef> {
    let view = page.view();
    let Some((off, ty)) = view.root() else {
        return Vec::new();
    };
    PVector::<HandleElem>::of(ObjRef {
        block: view.id,
        off,
        ty,
    })
    .handles(&view)
    .into_iter()
    .flatten()
    .collect()
}

fn join_all<T>(handles: Vec<thread::ScopedJoinHandle<'_, T>>) -> Vec<T> {
    handles
        .into_iter()
        .map(|h| h.join().expect("worker thread panicked"))
        .collect()
}

fn stripes(pages: &[Arc<FrozenBlock>], n: usize) -> Vec<Vec<Arc<FrozenBlock>>> {
    let n = n.min(pages.len()).max(1);
    (0..n)
        .map(|t| pages.iter().skip(t).step_by(n).cloned().collect())
        .collect()
}

type Table = HashMap<u64, Vec<(ObjRef, Value)>>;

/// Hash-partitions one stripe of an input's local pages and ships each
/// partition to its home node.
fn repartition(
    c: &SimCluster,
    node: usize,
    input: &JoinInput,
    pages: &[Arc<FrozenBlock>],
    stage: usize,
) -> Result<usize, DistError> {
    let cfg = c.config;
    let reg = c.registry();
    let mut eval = KeyEval::new(reg.clone(), c.udfs(), &input.key, cfg.page_size)?;
    let mut writers: Vec<MapWriter> = (0..cfg.nodes)
        .map(|_| {
            MapWriter::new(
                reg.clone(),
                cfg.page_size,
                cfg.m_partitions,
                KeyKind::Int,
                ValueKind::HandleList,
            )
        })
        .collect();
    let mut shipped = 0;
    for page in pages {
        eval.attach(page);
        for w in &mut writers {
            w.heap_mut().attach(page.clone());
        }
        for obj in page_objects(page) {
            let key = eval.eval(obj)?;
            let h = eval.hash(&key);
            let (dest, slot) = cfg.home(partition_of(h, cfg.partitions()));
            if let Some(full) = writers[dest].apply(slot, |heap, m| {
                m.append_handle(heap, KeyRef::Int(h as i64), Some(obj))
            })? {
                c.net.send(node, dest, stage, &full)?;
                shipped += 1;
            }
        }
    }
    for (dest, w) in writers.iter_mut().enumerate() {
        if let Some(full) = w.finish() {
            c.net.send(node, dest, stage, &full)?;
            shipped += 1;
        }
    }
    Ok(shipped)
}

/// Objects filed under local partition `slot` of repartitioned pages.
fn slot_objects(pages: &[Arc<FrozenBlock>], slot: usize) -> Vec<ObjRef> {
    let mut out = Vec::new();
    for page in pages {
        let view = page.view();
        for (_, map) in page_maps(&view).into_iter().filter(|(s, _)| *s == slot) {
            for (_, v) in map.entries(&view) {
                if let MapValue::HandleList(hs) = v {
                    out.extend(hs.into_iter().flatten());
                }
            }
        }
    }
    out
}

fn build_table(
    c: &SimCluster,
    key: &KeyExpr,
    pages: &[Arc<FrozenBlock>],
    objs: &[ObjRef],
) -> Result<Table, DistError> {
    let mut eval = KeyEval::new(c.registry().clone(), c.udfs(), key, c.config.page_size)?;
    pages.iter().for_each(|p| eval.attach(p));
    let mut table = Table::new();
    for &o in objs {
        let k = eval.eval(o)?;
        table.entry(eval.hash(&k)).or_default().push((o, k));
    }
    Ok(table)
}

struct ProbeOut {
    set: PcSet,
    candidates: u64,
    matches: u64,
}

/// Probes every build table with `objs` and writes each matching tuple,
/// build sides first, as one output row.
fn probe(
    c: &SimCluster,
    inputs: &[JoinInput],
    tables: &[&Table],
    pages: &[Arc<FrozenBlock>],
    objs: &[ObjRef],
    out: JoinOutput<'_>,
) -> Result<ProbeOut, DistError> {
    let probe_key = &inputs.last().expect("at least two inputs").key;
    let mut eval = KeyEval::new(
        c.registry().clone(),
        c.udfs(),
        probe_key,
        c.config.page_size,
    )?;
    let mut out_heap = Heap::new(c.registry().clone());
    for p in pages {
        eval.attach(p);
        out_heap.attach(p.clone());
    }
    let schema = output_schema(inputs, out);
    let schema: Vec<&str> = schema.iter().map(String::as_str).collect();
    let mut builder = SetBuilder::new(&mut out_heap, c.config.page_size, &schema);
    let (mut candidates, mut matches) = (0u64, 0u64);
    let mut combo = vec![0usize; tables.len()];
    for &o in objs {
        let pk = eval.eval(o)?;
        let h = eval.hash(&pk);
        let Some(lists) = tables.iter().map(|t| t.get(&h)).collect::<Option<Vec<_>>>() else {
            continue;
        };
        candidates += lists.iter().map(|l| l.len() as u64).product::<u64>();
        combo.iter_mut().for_each(|x| *x = 0);
        'tuples: loop {
            let tuple: Vec<&(ObjRef, Value)> =
                lists.iter().zip(&combo).map(|(l, &i)| &l[i]).collect();
            if tuple.iter().all(|(_, k)| values_eq(&eval.heap, k, &pk)) {
                matches += 1;
                let mut objs: Vec<ObjRef> = tuple.iter().map(|(b, _)| *b).collect();
                objs.push(o);
                match out.project {
                    None => {
                        builder.add_values(&objs.into_iter().map(Value::Obj).collect::<Vec<_>>())?
                    }
                    Some((_, f)) => {
                        let mut failure = None;
                        let added = builder.add(|h| {
                            f(&mut StageCtx::new(h), &objs).map_err(|e| match e {
                                UdfError::Object(e) => e,
                                UdfError::Failed(m) => {
                                    failure = Some(m);
                                    crate::object::ObjectError::TypeMismatch(
                                        "join projection failed".into(),
                                    )
                                }
                            })
                        });
                        if let Some(message) = failure {
                            return Err(EngineError::PipelineAborted {
                                stage: "join projection".into(),
                                chunk: 0,
                                message,
                            }
                            .into());
                        }
                        added?;
                    }
                }
            }
            for d in (0..combo.len()).rev() {
                combo[d] += 1;
                if combo[d] < lists[d].len() {
                    continue 'tuples;
                }
                combo[d] = 0;
            }
            break;
        }
    }
    Ok(ProbeOut {
        set: builder.finish(),
        candidates,
        matches,
    })
}

fn output_schema(inputs: &[JoinInput], out: JoinOutput<'_>) -> Vec<String> {
    match out.project {
        Some((cols, _)) => cols.iter().map(|c| c.to_string()).collect(),
        None => inputs.iter().map(|i| i.set.clone()).collect(),
    }
}

fn stored_bytes(c: &SimCluster, input: &JoinInput) -> u64 {
    c.gather(&input.db, &input.set)
        .map_or(0, |s| s.bytes() as u64)
}

/// Broadcasts when the build inputs together are under the threshold.
pub fn choose_join_plan(c: &SimCluster, inputs: &[JoinInput]) -> JoinPlan {
    let build: u64 = inputs
        .iter()
        .take(inputs.len().saturating_sub(1))
        .map(|i| stored_bytes(c, i))
        .sum();
    if build < c.config.broadcast_threshold {
        JoinPlan::Broadcast
    } else {
        JoinPlan::Shuffle
    }
}

struct Stages {
    ship: Vec<usize>,
}

fn local_pages(
    c: &SimCluster,
    node: usize,
    input: &JoinInput,
) -> Result<Vec<Arc<FrozenBlock>>, DistError> {
    let key = set_key(&input.db, &input.set);
    let set = c
        .local(node, &key)
        .ok_or_else(|| EngineError::UnknownSet(key.clone()))?;
    if set.schema.len() != 1 || set.kind != SetKind::Rows {
        return Err(DistError::Unsupported(format!(
            "join input `{key}` must hold one object per row"
        )));
    }
    Ok(set.pages.clone())
}

fn ship(
    c: &SimCluster,
    inputs: &[JoinInput],
    plan: JoinPlan,
    st: &Stages,
) -> Result<usize, DistError> {
    let cfg = c.config;
    let mut shipped = 0;
    match plan {
        JoinPlan::Shuffle => {
            let mut work = Vec::new();
            for node in 0..cfg.nodes {
                for (i, input) in inputs.iter().enumerate() {
                    for stripe in stripes(&local_pages(c, node, input)?, cfg.n_threads) {
                        work.push((node, input, stripe, st.ship[i]));
                    }
                }
            }
            let results = thread::scope(|s| {
                join_all(
                    work.iter()
                        .map(|(n, input, pages, stage)| {
                            s.spawn(move || repartition(c, *n, input, pages, *stage))
                        })
                        .collect(),
                )
            });
            for r in results {
                shipped += r?;
            }
        }
        JoinPlan::Broadcast => {
            for node in 0..cfg.nodes {
                for (i, input) in inputs[..inputs.len() - 1].iter().enumerate() {
                    for page in local_pages(c, node, input)? {
                        for dest in 0..cfg.nodes {
                            c.net.send(node, dest, st.ship[i], &page)?;
                            shipped += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(shipped)
}

/// Builds the tables and probes them on one node.
fn node_join(
    c: &SimCluster,
    node: usize,
    inputs: &[JoinInput],
    plan: JoinPlan,
    st: &Stages,
    out: JoinOutput<'_>,
) -> Result<ProbeOut, DistError> {
    let n = inputs.len();
    let mut received = Vec::with_capacity(st.ship.len());
    for &stage in &st.ship {
        received.push(c.net.receive(node, stage)?);
    }
    let (slots, probe_pages) = match plan {
        JoinPlan::Shuffle => (c.config.m_partitions, received[n - 1].clone()),
        JoinPlan::Broadcast => (1, local_pages(c, node, &inputs[n - 1])?),
    };
    let objs_of = |pages: &[Arc<FrozenBlock>], slot: usize| match plan {
        JoinPlan::Shuffle => slot_objects(pages, slot),
        JoinPlan::Broadcast => pages.iter().flat_map(|p| page_objects(p)).collect(),
    };
    let received = &received;
    let tables: Vec<Vec<Table>> = thread::scope(|s| {
        let handles: Vec<Vec<_>> = (0..n - 1)
            .map(|i| {
                (0..slots)
                    .map(|m| {
                        let key = &inputs[i].key;
                        s.spawn(move || {
                            build_table(c, key, &received[i], &objs_of(&received[i], m))
                        })
                    })
                    .collect()
            })
            .collect();
        handles
            .into_iter()
            .map(|hs| join_all(hs).into_iter().collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut all_pages: Vec<Arc<FrozenBlock>> =
        received[..n - 1].iter().flatten().cloned().collect();
    all_pages.extend(probe_pages.iter().cloned());
    let work: Vec<(usize, Vec<ObjRef>)> = match plan {
        JoinPlan::Shuffle => (0..slots)
            .map(|m| (m, slot_objects(&probe_pages, m)))
            .collect(),
        JoinPlan::Broadcast => stripes(&probe_pages, c.config.n_threads)
            .iter()
            .map(|ps| (0, objs_of(ps, 0)))
            .collect(),
    };
    let (tables, all_pages) = (&tables, &all_pages);
    let outs = thread::scope(|s| {
        join_all(
            work.iter()
                .map(|(m, objs)| {
                    s.spawn(move || {
                        let ts: Vec<&Table> = tables.iter().map(|t| &t[*m]).collect();
                        probe(c, inputs, &ts, all_pages, objs, out)
                    })
                })
                .collect(),
        )
    });
    let mut total = ProbeOut {
        set: PcSet::new(&output_schema(inputs, out), SetKind::Rows),
        candidates: 0,
        matches: 0,
    };
    for o in outs {
        let o = o?;
        total.set.pages.extend(o.set.pages);
        total.candidates += o.candidates;
        total.matches += o.matches;
    }
    Ok(total)
}

/// Joins `inputs` on equal keys; the last input is probed against tables
/// built from the others. Each node stores its output rows, one column per
/// input in order, as `db.set`.
pub fn hash_join(
    cluster: &mut SimCluster,
    inputs: &[JoinInput],
    plan: JoinPlan,
    db: &str,
    set: &str,
) -> Result<JoinReport, DistError> {
    hash_join_into(
        cluster,
        inputs,
        plan,
        JoinOutput {
            db,
            set,
            project: None,
        },
    )
}

/// Like `hash_join`, with control over the output rows.
pub fn hash_join_into(
    cluster: &mut SimCluster,
    inputs: &[JoinInput],
    plan: JoinPlan,
    out: JoinOutput<'_>,
) -> Result<JoinReport, DistError> {
    let n = inputs.len();
    if n < 2 {
        return Err(DistError::Unsupported(
            "a join needs at least two inputs".into(),
        ));
    }
    let shipped_inputs = if plan == JoinPlan::Shuffle { n } else { n - 1 };
    let st = Stages {
        ship: (0..shipped_inputs).map(|_| cluster.stage_id()).collect(),
    };
    // one build stage per build input, then the probe
    for _ in 0..n {
        cluster.stage_id();
    }
    let mut report = JoinReport {
        plan: Some(plan),
        stages: shipped_inputs + n,
        ..Default::default()
    };
    let fixups = import_fixups();
    let c = &*cluster;
    report.shipped_pages = ship(c, inputs, plan, &st)?;
    let st = &st;
    let outs = thread::scope(|s| {
        join_all(
            (0..c.config.nodes)
                .map(|node| s.spawn(move || node_join(c, node, inputs, plan, st, out)))
                .collect(),
        )
    });
    report.import_fixups = import_fixups() - fixups;
    let outs = outs.into_iter().collect::<Result<Vec<_>, _>>()?;
    for (node, o) in cluster.nodes.iter_mut().zip(outs) {
        report.candidates += o.candidates;
        report.matches += o.matches;
        report.output_pages += o.set.pages.len();
        node.storage.put(out.db, out.set, o.set);
    }
    Ok(report)
}
