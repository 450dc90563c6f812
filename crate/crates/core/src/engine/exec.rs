use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt::Write as _;
use std::sync::Arc;

use super::pipeline::{JoinStep, Pipeline, Sink, Step};
use super::storage::{
    key_value, map_value, merged_entries, new_partition_root, new_row_root, read_rows, row_count,
    upsert_value, write_row,
};
use super::{
    decompose, BufferPool, Column, EngineError, PcSet, SetKind, StageCtx, StageResult, Storage,
    Udfs, Value, VectorList,
};
use crate::containers::{
    builtin, read_string, HandleElem, KeyKind, KeyRef, MapValue, PMap, PVector,
};
use crate::lambda::{source_bindings, ComputationGraph};
use crate::object::{AllocPolicy, BlockId, FrozenBlock, Heap, Slot, TypeRegistry};
use crate::tcap::Program;

#[derive(Clone, Copy, Debug)]
pub struct EngineConfig {
    pub chunk_size: usize,
    pub page_size: usize,
    pub policy: AllocPolicy,
    /// Check after every step that each referenced block is readable.
    pub audit: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            chunk_size: 1024,
            page_size: 1 << 20,
            policy: AllocPolicy::LightweightReuse,
            audit: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PipelineMetrics {
    pub name: String,
    pub sink: &'static str,
    pub rows_in: u64,
    pub rows_out: u64,
    pub pages_in: u64,
    pub pages_out: u64,
    pub chunks: u64,
    /// Most full output pages held at once for in-flight data.
    pub zombie_output_max: usize,
    /// Pages holding only intermediate data that were thrown away.
    pub zombies_discarded: u64,
    pub deep_copies: u64,
    pub alloc_faults: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunReport {
    pub pipelines: Vec<PipelineMetrics>,
}

impl RunReport {
    pub fn max_zombie_outputs(&self) -> usize {
        self.pipelines
            .iter()
            .map(|m| m.zombie_output_max)
            .max()
            .unwrap_or(0)
    }

    pub fn deep_copies(&self) -> u64 {
        self.pipelines.iter().map(|m| m.deep_copies).sum()
    }

    /// One `key=value` line per pipeline.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, m) in self.pipelines.iter().enumerate() {
            let _ = writeln!(
                out,
                "pipeline={i} name={} sink={} rows_in={} rows_out={} pages_in={} pages_out={} chunks={} \
                 zombie_output_max={} zombies_discarded={} deep_copies={} alloc_faults={}",
                m.name,
                m.sink,
                m.rows_in,
                m.rows_out,
                m.pages_in,
                m.pages_out,
                m.chunks,
                m.zombie_output_max,
                m.zombies_discarded,
                m.deep_copies,
                m.alloc_faults
            );
        }
        out
    }
}

enum LiveRoot {
    Rows(PVector<HandleElem>),
    Map(PMap),
    Parts(PVector<HandleElem>, Vec<Option<PMap>>),
    Empty,
}

/// The block output is currently being built on.
struct Live {
    id: BlockId,
    root: LiveRoot,
    sunk: usize,
    /// Nothing but the current piece has touched the page.
    fresh: bool,
}

/// A full page waiting to be flushed in creation order.
struct Retired {
    id: BlockId,
    has_rows: bool,
    pinned: bool,
}

struct Ctx<'e> {
    heap: Heap,
    pool: &'e mut BufferPool,
    policy: AllocPolicy,
    live: Option<Live>,
    queue: VecDeque<Retired>,
    out: Vec<Arc<FrozenBlock>>,
    metrics: PipelineMetrics,
}

impl Ctx<'_> {
    fn open_page(&mut self, rows: bool) -> Result<(), EngineError> {
        let block = self.pool.block(self.policy)?;
        let id = self.heap.install_block(block);
        let root = if rows {
            LiveRoot::Rows(
                new_row_root(&mut self.heap)
                    .map_err(|_| EngineError::PageTooSmall(self.pool.page_size()))?,
            )
        } else {
            LiveRoot::Empty
        };
        self.live = Some(Live {
            id,
            root,
            sunk: 0,
            fresh: true,
        });
        Ok(())
    }

    /// Freezes the live page. It stays readable until flushed.
    fn retire(&mut self, pinned: bool) {
        let Some(live) = self.live.take() else {
            return;
        };
        let frozen = self
            .heap
            .freeze_active()
            .expect("live page is the active block");
        debug_assert_eq!(frozen.id(), live.id);
        if pinned {
            self.pool.pin(live.id);
        }
        self.heap.attach(Arc::new(frozen));
        self.queue.push_back(Retired {
            id: live.id,
            has_rows: live.sunk > 0,
            pinned,
        });
        let zombies = self.queue.iter().filter(|r| r.pinned && r.has_rows).count();
        self.metrics.zombie_output_max = self.metrics.zombie_output_max.max(zombies);
    }

    fn release_all(&mut self) -> Result<(), EngineError> {
        for r in self.queue.iter_mut().filter(|r| r.pinned) {
            r.pinned = false;
            self.pool.unpin(r.id)?;
        }
        self.flush_ready()
    }

    /// Moves unpinned pages at the head of the queue to the output, or
    /// back to the pool if they hold nothing the sink wrote.
    fn flush_ready(&mut self) -> Result<(), EngineError> {
        while self.queue.front().is_some_and(|r| !r.pinned) {
            let r = self.queue.pop_front().expect("front exists");
            let page = self.heap.detach(r.id).expect("retired pages stay attached");
            if r.has_rows {
                self.metrics.pages_out += 1;
                self.out.push(page);
            } else {
                self.metrics.zombies_discarded += 1;
                if let Ok(block) = Arc::try_unwrap(page) {
                    self.pool.recycle(block)?;
                }
            }
        }
        Ok(())
    }

    fn finish(&mut self) -> Result<Vec<Arc<FrozenBlock>>, EngineError> {
        self.retire(false);
        self.release_all()?;
        Ok(std::mem::take(&mut self.out))
    }
}

/// Build side of a join, decoded and indexed by hash.
struct BuildTable {
    rows: VectorList,
    index: HashMap<u64, Vec<usize>>,
}

fn hashes(col: &Column) -> Option<Vec<u64>> {
    match col {
        Column::Hash(h) => Some(h.clone()),
        Column::Int(v) => Some(v.iter().map(|&x| x as u64).collect()),
        c if c.is_empty() => Some(Vec::new()),
        _ => None,
    }
}

fn probe(step: &JoinStep, table: &BuildTable, vl: &VectorList) -> Result<VectorList, EngineError> {
    let bad = |m: String| EngineError::StageTypeError {
        stage: step.name.clone(),
        message: m,
    };
    let col = vl
        .column(&step.probe_hash)
        .ok_or_else(|| bad(format!("no column `{}`", step.probe_hash)))?;
    let hs = hashes(col).ok_or_else(|| bad(format!("join key is a {} column", col.kind())))?;
    let (mut pi, mut bi) = (Vec::new(), Vec::new());
    for (r, h) in hs.iter().enumerate() {
        for &b in table.index.get(h).map(Vec::as_slice).unwrap_or(&[]) {
            pi.push(r);
            bi.push(b);
        }
    }
    let p = vl.project(&step.probe_copy).map_err(bad)?.gather(&pi);
    let b = table
        .rows
        .project(&step.build_copy)
        .map_err(bad)?
        .gather(&bi);
    Ok(if step.build_left {
        b.concat(p)
    } else {
        p.concat(b)
    })
}

fn decode_set(
    heap: &mut Heap,
    pool: &mut BufferPool,
    set: &PcSet,
    names: &[String],
) -> Result<VectorList, EngineError> {
    if set.schema.len() != names.len() {
        return Err(EngineError::InvalidProgram(format!(
            "set has {} columns but {} are read",
            set.schema.len(),
            names.len()
        )));
    }
    let mut cols: Vec<Option<Column>> = vec![None; names.len()];
    if let SetKind::Aggregated(_) = set.kind {
        let entries = merged_entries(set)?;
        let k = Column::from_values(entries.iter().map(|(k, _)| key_value(k)).collect());
        let v = Column::from_values(entries.iter().map(|(_, v)| map_value(v)).collect());
        cols = vec![
            Some(k.map_err(EngineError::InvalidProgram)?),
            Some(v.map_err(EngineError::InvalidProgram)?),
        ];
    } else {
        for page in &set.pages {
            pool.pin(page.id());
            heap.attach(page.clone());
            let view = page.view();
            let part = read_rows(&view, names.len(), 0, row_count(&view))
                .map_err(EngineError::InvalidProgram)?;
            for (slot, c) in cols.iter_mut().zip(part) {
                match slot {
                    None => *slot = Some(c),
                    Some(acc) => acc.append(&c).map_err(EngineError::InvalidProgram)?,
                }
            }
        }
    }
    let mut vl = VectorList::new(cols.first().and_then(|c| c.as_ref()).map_or(0, Column::len));
    for (name, c) in names.iter().zip(cols) {
        vl.push(name.clone(), c.unwrap_or(Column::Obj(Vec::new())));
    }
    Ok(vl)
}

fn key_of(heap: &Heap, v: &Value) -> Option<(KeyKind, Option<i64>, String)> {
    match v {
        Value::Int(x) => Some((KeyKind::Int, Some(*x), String::new())),
        Value::Str(s) => Some((KeyKind::Str, None, s.clone())),
        Value::Obj(o) if o.ty == builtin::STRING => Some((
            KeyKind::Str,
            None,
            read_string(&heap.view(o.block).ok()?, o.off).to_string(),
        )),
        _ => None,
    }
}

fn dvec_of(heap: &Heap, v: &Value) -> Option<Vec<f64>> {
    match v {
        Value::DVec(d) => Some(d.clone()),
        Value::Obj(o) if o.ty == builtin::VECTOR_F64 => {
            Some(PVector::<f64>::of(*o).to_vec(&heap.view(o.block).ok()?))
        }
        _ => None,
    }
}

fn aggregate_row(
    ctx: &mut Ctx<'_>,
    combine: crate::containers::Combine,
    parts: usize,
    k: &Value,
    v: &Value,
) -> Result<(), EngineError> {
    let bad = |m: String| EngineError::StageTypeError {
        stage: "aggregate".into(),
        message: m,
    };
    let (kk, ki, ks) =
        key_of(&ctx.heap, k).ok_or_else(|| bad(format!("cannot group by a {} value", k.kind())))?;
    let key = match ki {
        Some(i) => KeyRef::Int(i),
        None => KeyRef::Str(&ks),
    };
    let value = match (v, dvec_of(&ctx.heap, v)) {
        (Value::Int(x), _) => MapValue::Int(*x),
        (Value::Double(x), _) => MapValue::Double(*x),
        (_, Some(d)) => MapValue::DoubleVec(d),
        _ => return Err(bad(format!("cannot aggregate a {} value", v.kind()))),
    };
    let live = ctx.live.as_mut().expect("live page open");
    let heap = &mut ctx.heap;
    let map = if parts <= 1 {
        match live.root {
            LiveRoot::Map(m) => m,
            _ => {
                let m = PMap::create(heap, kk, value.kind())?;
                heap.move_handle(Slot::root(live.id), m.obj)?;
                live.root = LiveRoot::Map(m);
                m
            }
        }
    } else {
        if !matches!(live.root, LiveRoot::Parts(..)) {
            let v = new_partition_root(heap, parts)?;
            live.root = LiveRoot::Parts(v, vec![None; parts]);
        }
        let LiveRoot::Parts(vec, maps) = &mut live.root else {
            unreachable!("set above")
        };
        let p = key.partition(parts);
        match maps[p] {
            Some(m) => m,
            None => {
                let m = PMap::create(heap, kk, value.kind())?;
                let pos = vec.elem_pos(&heap.view(live.id)?, p);
                heap.move_handle(
                    Slot {
                        block: live.id,
                        pos,
                    },
                    m.obj,
                )?;
                maps[p] = Some(m);
                m
            }
        }
    };
    upsert_value(heap, map, key, &value, combine)?;
    Ok(())
}

fn is_oom(e: &EngineError) -> bool {
    matches!(e, EngineError::Object(o) if o.is_out_of_memory())
}

fn sink_piece(ctx: &mut Ctx<'_>, sink: &Sink, out: &VectorList) -> Result<(), EngineError> {
    let names: Vec<String> = match sink {
        Sink::Output { cols, .. } | Sink::JoinBuild { cols } | Sink::Materialize { cols } => {
            cols.clone()
        }
        Sink::Aggregate { key, value, .. } => vec![key.clone(), value.clone()],
    };
    let rows_sink = !matches!(sink, Sink::Aggregate { .. });
    let proj = out.project(&names).map_err(EngineError::InvalidProgram)?;
    let cols: Vec<Arc<Column>> = proj.columns().map(|(_, c)| c.clone()).collect();
    for i in 0..proj.len() {
        let mut retried = false;
        loop {
            if ctx.live.is_none() {
                ctx.open_page(rows_sink)?;
            }
            let res = match sink {
                Sink::Aggregate {
                    combine,
                    partitions,
                    ..
                } => aggregate_row(ctx, *combine, *partitions, &cols[0].get(i), &cols[1].get(i)),
                _ => {
                    let row: Vec<Value> = cols.iter().map(|c| c.get(i)).collect();
                    let live = ctx.live.as_ref().expect("live page open");
                    let LiveRoot::Rows(root) = live.root else {
                        return Err(EngineError::InvalidProgram(
                            "row sink without a row page".into(),
                        ));
                    };
                    write_row(&mut ctx.heap, root, &row).map_err(EngineError::from)
                }
            };
            match res {
                Ok(()) => {
                    ctx.live.as_mut().expect("live page open").sunk += 1;
                    break;
                }
                Err(e) if is_oom(&e) && !retried => {
                    ctx.metrics.alloc_faults += 1;
                    retried = true;
                    let id = ctx.live.as_ref().expect("live page open").id;
                    let pinned = out.slice(i, out.len()).references(id);
                    ctx.retire(pinned);
                    ctx.flush_ready()?;
                }
                Err(e) if is_oom(&e) => {
                    return Err(EngineError::PageTooSmall(ctx.pool.page_size()))
                }
                Err(e) => return Err(e),
            }
        }
    }
    ctx.metrics.rows_out += proj.len() as u64;
    Ok(())
}

fn audit(heap: &Heap, step: &str, vl: &VectorList) -> Result<(), EngineError> {
    for b in vl.blocks() {
        if heap.view(b).is_err() {
            return Err(EngineError::PinViolation(format!(
                "`{step}` references unreadable block {}",
                b.raw()
            )));
        }
    }
    Ok(())
}

/// Runs every step; `None` when user code ran out of page space.
fn run_steps(
    ctx: &mut Ctx<'_>,
    udfs: &Udfs,
    pl: &Pipeline,
    builds: &BTreeMap<String, BuildTable>,
    piece: &VectorList,
    chunk: usize,
    check: bool,
) -> Result<Option<VectorList>, EngineError> {
    let mut vl = piece.clone();
    for step in &pl.steps {
        vl = match step {
            Step::Join(j) => probe(j, &builds[&j.build_list], &vl)?,
            Step::Stage(s) => {
                let mut sc = StageCtx::new(&mut ctx.heap);
                match s.run(&mut sc, udfs, &vl) {
                    Ok(StageResult::Done(v)) => v,
                    Ok(StageResult::Split { .. }) => return Ok(None),
                    Err(EngineError::PipelineAborted { stage, message, .. }) => {
                        return Err(EngineError::PipelineAborted {
                            stage,
                            chunk,
                            message,
                        })
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        if check {
            audit(&ctx.heap, step.name(), &vl)?;
        }
    }
    Ok(Some(vl))
}

/// Runs TCAP programs over stored sets on a single node.
pub struct Engine {
    pub config: EngineConfig,
    pub udfs: Udfs,
    pub storage: Storage,
    registry: Arc<TypeRegistry>,
    pool: BufferPool,
    bindings: BTreeMap<String, String>,
}

impl Engine {
    pub fn new(registry: Arc<TypeRegistry>, udfs: Udfs, config: EngineConfig) -> Self {
        Engine {
            pool: BufferPool::new(config.page_size),
            config,
            udfs,
            storage: Storage::new(),
            registry,
            bindings: BTreeMap::new(),
        }
    }

    pub fn registry(&self) -> &Arc<TypeRegistry> {
        &self.registry
    }

    pub fn pool(&self) -> &BufferPool {
        &self.pool
    }

    /// Reads source list `list` from `db.set`.
    pub fn bind(&mut self, list: &str, db: &str, set: &str) {
        self.bindings
            .insert(list.to_string(), super::set_key(db, set));
    }

    pub fn bind_graph(&mut self, g: &ComputationGraph) {
        for (list, db, set) in source_bindings(g) {
            self.bind(&list, &db, &set);
        }
    }

    /// Changes page and chunk sizes for later runs.
    pub fn reconfigure(&mut self, config: EngineConfig) {
        if config.page_size != self.config.page_size {
            self.pool = BufferPool::new(config.page_size);
        }
        self.config = config;
    }

    pub fn run(&mut self, p: &Program) -> Result<RunReport, EngineError> {
        let pipes = decompose(p)?;
        let mut lists = self.bindings.clone();
        let mut temps = Vec::new();
        let mut report = RunReport::default();
        let result = (|| {
            for pl in &pipes {
                let key = lists
                    .get(&pl.source)
                    .ok_or_else(|| EngineError::UnboundSource(pl.source.clone()))?;
                let src = self
                    .storage
                    .get_key(key)
                    .cloned()
                    .ok_or_else(|| EngineError::UnknownSet(key.clone()))?;
                let mut builds = BTreeMap::new();
                for step in &pl.steps {
                    if let Step::Join(j) = step {
                        let key = lists
                            .get(&j.build_list)
                            .ok_or_else(|| EngineError::UnboundSource(j.build_list.clone()))?;
                        let set = self
                            .storage
                            .get_key(key)
                            .cloned()
                            .ok_or_else(|| EngineError::UnknownSet(key.clone()))?;
                        builds.insert(j.build_list.clone(), set);
                    }
                }
                let (set, metrics) = self.run_pipeline(pl, &src, &builds)?;
                let key = match &pl.sink {
                    Sink::Output { db, set, .. } => super::set_key(db, set),
                    _ => {
                        let k = format!("~tmp.{}", pl.target);
                        temps.push(k.clone());
                        k
                    }
                };
                self.storage.put_key(&key, set);
                lists.insert(pl.target.clone(), key);
                report.pipelines.push(metrics);
            }
            Ok(())
        })();
        for k in temps {
            self.storage.remove_key(&k);
        }
        result.map(|()| report)
    }

    /// Streams `src` through one pipeline and returns what its sink built.
    /// `builds` holds the stored build side of every join it probes.
    pub fn run_pipeline(
        &mut self,
        pl: &Pipeline,
        src: &PcSet,
        builds: &BTreeMap<String, PcSet>,
    ) -> Result<(PcSet, PipelineMetrics), EngineError> {
        let cfg = self.config;
        let chunk_size = cfg.chunk_size.max(1);
        let udfs = &self.udfs;
        let mut ctx = Ctx {
            heap: Heap::new(self.registry.clone()),
            pool: &mut self.pool,
            policy: cfg.policy,
            live: None,
            queue: VecDeque::new(),
            out: Vec::new(),
            metrics: PipelineMetrics {
                name: pl.to_string(),
                sink: pl.sink.kind(),
                ..Default::default()
            },
        };
        let mut tables = BTreeMap::new();
        let mut pinned: Vec<BlockId> = Vec::new();
        for (list, set) in builds {
            let names: Vec<String> = set.schema.clone();
            let rows = decode_set(&mut ctx.heap, ctx.pool, set, &names)?;
            pinned.extend(set.pages.iter().map(|p| p.id()));
            let step = pl.steps.iter().find_map(|s| match s {
                Step::Join(j) if &j.build_list == list => Some(j),
                _ => None,
            });
            let Some(step) = step else { continue };
            let col = rows.column(&step.build_hash).ok_or_else(|| {
                EngineError::InvalidProgram(format!(
                    "build side `{list}` has no column `{}`",
                    step.build_hash
                ))
            })?;
            let hs = hashes(col)
                .ok_or_else(|| EngineError::InvalidProgram("build key is not a hash".into()))?;
            let mut index: HashMap<u64, Vec<usize>> = HashMap::new();
            for (i, h) in hs.into_iter().enumerate() {
                index.entry(h).or_default().push(i);
            }
            tables.insert(list.clone(), BuildTable { rows, index });
        }

        let mut chunk = 0usize;
        let mut feed = |ctx: &mut Ctx<'_>, vl: VectorList| -> Result<(), EngineError> {
            ctx.metrics.rows_in += vl.len() as u64;
            ctx.metrics.chunks += 1;
            run_chunk(ctx, udfs, pl, &tables, vl, chunk, cfg.audit)?;
            chunk += 1;
            Ok(())
        };
        if let SetKind::Aggregated(_) = src.kind {
            let all = decode_set(&mut ctx.heap, ctx.pool, src, &pl.source_cols)?;
            ctx.metrics.pages_in += src.pages.len() as u64;
            let mut from = 0;
            while from < all.len() {
                let to = (from + chunk_size).min(all.len());
                feed(&mut ctx, all.slice(from, to))?;
                from = to;
            }
        } else {
            if src.schema.len() != pl.source_cols.len() {
                return Err(EngineError::InvalidProgram(format!(
                    "`{}` reads {} columns from a set with {}",
                    pl.source,
                    pl.source_cols.len(),
                    src.schema.len()
                )));
            }
            for page in &src.pages {
                ctx.pool.pin(page.id());
                ctx.heap.attach(page.clone());
                ctx.metrics.pages_in += 1;
                let n = row_count(&page.view());
                let mut from = 0;
                while from < n {
                    let to = (from + chunk_size).min(n);
                    let cols = read_rows(&page.view(), pl.source_cols.len(), from, to)
                        .map_err(EngineError::InvalidProgram)?;
                    let mut vl = VectorList::new(to - from);
                    for (name, c) in pl.source_cols.iter().zip(cols) {
                        vl.push(name.clone(), c);
                    }
                    feed(&mut ctx, vl)?;
                    from = to;
                }
                ctx.heap.detach(page.id());
                ctx.pool.unpin(page.id())?;
            }
        }
        let pages = ctx.finish()?;
        for id in pinned {
            ctx.pool.unpin(id)?;
        }
        ctx.metrics.deep_copies = ctx.heap.stats().deep_copies;
        let (schema, kind) = match &pl.sink {
            Sink::Output { cols, .. } | Sink::JoinBuild { cols } | Sink::Materialize { cols } => {
                (cols.clone(), SetKind::Rows)
            }
            Sink::Aggregate {
                combine,
                key,
                value,
                ..
            } => (
                vec![key.clone(), value.clone()],
                SetKind::Aggregated(*combine),
            ),
        };
        Ok((
            PcSet {
                schema,
                kind,
                pages,
            },
            ctx.metrics,
        ))
    }
}

fn run_chunk(
    ctx: &mut Ctx<'_>,
    udfs: &Udfs,
    pl: &Pipeline,
    tables: &BTreeMap<String, BuildTable>,
    vl: VectorList,
    chunk: usize,
    check: bool,
) -> Result<(), EngineError> {
    let rows_sink = !matches!(pl.sink, Sink::Aggregate { .. });
    let mut work = vec![vl];
    while let Some(piece) = work.pop() {
        if ctx.live.is_none() {
            ctx.open_page(rows_sink)?;
        }
        match run_steps(ctx, udfs, pl, tables, &piece, chunk, check)? {
            Some(out) => {
                sink_piece(ctx, &pl.sink, &out)?;
                ctx.release_all()?;
                if let Some(live) = ctx.live.as_mut() {
                    live.fresh = false;
                }
            }
            None => {
                ctx.metrics.alloc_faults += 1;
                let fresh = ctx.live.as_ref().is_some_and(|l| l.fresh);
                ctx.retire(false);
                ctx.flush_ready()?;
                if !fresh {
                    work.push(piece);
                } else if piece.len() > 1 {
                    let mid = piece.len() / 2;
                    work.push(piece.slice(mid, piece.len()));
                    work.push(piece.slice(0, mid));
                } else {
                    return Err(EngineError::PageTooSmall(ctx.pool.page_size()));
                }
            }
        }
    }
    Ok(())
}
