use std::collections::BTreeMap;
use std::sync::Arc;
use std::thread;

use super::{DistError, MapWriter, SimCluster};
use crate::containers::Combine;
use crate::engine::{
    page_maps, upsert_value, Engine, EngineError, PcSet, Pipeline, PipelineMetrics, SetKind, Sink,
    Step,
};
use crate::object::{import_fixups, FrozenBlock};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AggregateReport {
    pub stage: usize,
    pub pipelines: Vec<PipelineMetrics>,
    /// Partitioned pages produced by pipelining threads, over all nodes.
    pub sink_pages: usize,
    /// Combiner pages shipped between (or within) nodes.
    pub shipped_pages: usize,
    pub output_pages: usize,
    /// Per-object rewrites done while importing shipped pages.
    pub import_fixups: u64,
}

fn join_all<T>(handles: Vec<thread::ScopedJoinHandle<'_, T>>) -> Vec<T> {
    handles
        .into_iter()
        .map(|h| h.join().expect("worker thread panicked"))
        .collect()
}

struct NodeSide {
    metrics: Vec<PipelineMetrics>,
    schema: Vec<String>,
    sink_pages: usize,
    shipped: usize,
}

fn pipeline_share(
    c: &SimCluster,
    pl: &Pipeline,
    share: &PcSet,
) -> Result<(PcSet, PipelineMetrics), EngineError> {
    let mut engine = Engine::new(c.registry().clone(), c.udfs().clone(), c.engine_config());
    engine.run_pipeline(pl, share, &BTreeMap::new())
}

/// Routes the partitions `p` with `p % K == k` of every sink page to their
/// home nodes.
fn combine_share(
    c: &SimCluster,
    node: usize,
    k: usize,
    pages: &[Arc<FrozenBlock>],
    combine: Combine,
    stage: usize,
) -> Result<usize, DistError> {
    let cfg = c.config;
    let mut writers: Vec<Option<MapWriter>> = (0..cfg.nodes).map(|_| None).collect();
    let mut shipped = 0;
    for page in pages {
        let view = page.view();
        for (p, map) in page_maps(&view) {
            if p % cfg.k_combiners != k {
                continue;
            }
            let (dest, slot) = cfg.home(p);
            let (kk, vk) = (map.key_kind(&view), map.value_kind(&view));
            let w = writers[dest].get_or_insert_with(|| {
                MapWriter::new(
                    c.registry().clone(),
                    cfg.page_size,
                    cfg.m_partitions,
                    kk,
                    vk,
                )
            });
            for (key, v) in map.entries(&view) {
                if let Some(full) =
                    w.apply(slot, |h, m| upsert_value(h, m, key.as_ref(), &v, combine))?
                {
                    c.net.send(node, dest, stage, &full)?;
                    shipped += 1;
                }
            }
        }
    }
    for (dest, w) in writers.iter_mut().enumerate() {
        if let Some(full) = w.as_mut().and_then(MapWriter::finish) {
            c.net.send(node, dest, stage, &full)?;
            shipped += 1;
        }
    }
    Ok(shipped)
}

fn node_side(
    c: &SimCluster,
    node: usize,
    pl: &Pipeline,
    src_key: &str,
    stage: usize,
) -> Result<NodeSide, DistError> {
    let src = c
        .local(node, src_key)
        .ok_or_else(|| EngineError::UnknownSet(src_key.to_string()))?;
    let n = c.config.n_threads.min(src.pages.len()).max(1);
    let shares: Vec<PcSet> = (0..n)
        .map(|t| PcSet {
            pages: src.pages.iter().skip(t).step_by(n).cloned().collect(),
            ..src.clone()
        })
        .collect();
    let outs = thread::scope(|s| {
        join_all(
            shares
                .iter()
                .map(|sh| s.spawn(move || pipeline_share(c, pl, sh)))
                .collect(),
        )
    });
    let mut side = NodeSide {
        metrics: Vec::new(),
        schema: Vec::new(),
        sink_pages: 0,
        shipped: 0,
    };
    let mut pages = Vec::new();
    for out in outs {
        let (set, m) = out?;
        side.schema = set.schema;
        side.metrics.push(m);
        pages.extend(set.pages);
    }
    side.sink_pages = pages.len();
    let Sink::Aggregate { combine, .. } = pl.sink else {
        unreachable!("checked by caller")
    };
    let pages = &pages;
    let shipped = thread::scope(|s| {
        join_all(
            (0..c.config.k_combiners)
                .map(|k| s.spawn(move || combine_share(c, node, k, pages, combine, stage)))
                .collect(),
        )
    });
    for n in shipped {
        side.shipped += n?;
    }
    Ok(side)
}

/// Folds local partition `m` of every received page into new pages.
fn aggregate_slot(
    c: &SimCluster,
    m: usize,
    pages: &[Arc<FrozenBlock>],
    combine: Combine,
) -> Result<Vec<Arc<FrozenBlock>>, DistError> {
    let mut writer: Option<MapWriter> = None;
    let mut out = Vec::new();
    for page in pages {
        let view = page.view();
        for (_, map) in page_maps(&view).into_iter().filter(|(slot, _)| *slot == m) {
            let (kk, vk) = (map.key_kind(&view), map.value_kind(&view));
            let w = writer.get_or_insert_with(|| {
                MapWriter::new(c.registry().clone(), c.config.page_size, 1, kk, vk)
            });
            for (key, v) in map.entries(&view) {
                out.extend(
                    w.apply(0, |h, map| upsert_value(h, map, key.as_ref(), &v, combine))?
                        .map(Arc::new),
                );
            }
        }
    }
    out.extend(writer.as_mut().and_then(MapWriter::finish).map(Arc::new));
    Ok(out)
}

/// Runs an aggregation pipeline over every node and stores each node's
/// share of the final aggregate as `db.set`. Keys are owned by exactly one
/// node, so the union over nodes is the result.
pub fn run_aggregation(
    cluster: &mut SimCluster,
    pl: &Pipeline,
    db: &str,
    set: &str,
) -> Result<AggregateReport, DistError> {
    let Sink::Aggregate { combine, .. } = pl.sink else {
        return Err(DistError::Unsupported(format!(
            "`{}` does not end in an aggregation",
            pl.target
        )));
    };
    if pl.steps.iter().any(|s| matches!(s, Step::Join(_))) {
        return Err(DistError::Unsupported("joins run as a separate job".into()));
    }
    let src_key = cluster
        .binding(&pl.source)
        .ok_or_else(|| EngineError::UnboundSource(pl.source.clone()))?
        .to_string();
    let stage = cluster.stage_id();
    let mut pl = pl.clone();
    if let Sink::Aggregate { partitions, .. } = &mut pl.sink {
        *partitions = cluster.config.partitions();
    }
    let fixups = import_fixups();
    let c = &*cluster;
    let pl = &pl;
    let src_key = src_key.as_str();
    let sides = thread::scope(|s| {
        join_all(
            (0..c.config.nodes)
                .map(|n| s.spawn(move || node_side(c, n, pl, src_key, stage)))
                .collect(),
        )
    });
    let mut report = AggregateReport {
        stage,
        ..Default::default()
    };
    let mut schema = Vec::new();
    for side in sides {
        let side = side?;
        report.pipelines.extend(side.metrics);
        report.sink_pages += side.sink_pages;
        report.shipped_pages += side.shipped;
        schema = side.schema;
    }
    let outs = thread::scope(|s| {
        join_all(
            (0..c.config.nodes)
                .map(|n| {
                    s.spawn(move || -> Result<Vec<Arc<FrozenBlock>>, DistError> {
                        let received = c.net.receive(n, stage)?;
                        let received = &received;
                        let slots = thread::scope(|s2| {
                            join_all(
                                (0..c.config.m_partitions)
                                    .map(|m| {
                                        s2.spawn(move || aggregate_slot(c, m, received, combine))
                                    })
                                    .collect(),
                            )
                        });
                        let mut pages = Vec::new();
                        for p in slots {
                            pages.extend(p?);
                        }
                        Ok(pages)
                    })
                })
                .collect(),
        )
    });
    report.import_fixups = import_fixups() - fixups;
    for (node, pages) in cluster.nodes.iter_mut().zip(outs) {
        let pages = pages?;
        report.output_pages += pages.len();
        node.storage.put(
            db,
            set,
            PcSet {
                schema: schema.clone(),
                kind: SetKind::Aggregated(combine),
                pages,
            },
        );
    }
    Ok(report)
}
