use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{EngineError, Stage};
use crate::containers::Combine;
use crate::tcap::{validate, Op, Program};

/// A probe against a materialized build side.
#[derive(Clone, Debug, PartialEq)]
pub struct JoinStep {
    pub name: String,
    pub build_list: String,
    pub build_hash: String,
    pub build_copy: Vec<String>,
    pub probe_hash: String,
    pub probe_copy: Vec<String>,
    /// The build side is the left input, so its columns come first.
    pub build_left: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    Stage(Stage),
    Join(JoinStep),
}

impl Step {
    pub fn name(&self) -> &str {
        match self {
            Step::Stage(s) => &s.name,
            Step::Join(j) => &j.name,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Sink {
    Output {
        db: String,
        set: String,
        cols: Vec<String>,
    },
    /// With more than one partition each page's root is a vector of maps,
    /// one per partition.
    Aggregate {
        combine: Combine,
        key: String,
        value: String,
        partitions: usize,
    },
    /// Stores a list read as the build side of a join.
    JoinBuild { cols: Vec<String> },
    /// Stores a list with several consumers, or one nobody reads.
    Materialize { cols: Vec<String> },
}

impl Sink {
    pub fn kind(&self) -> &'static str {
        match self {
            Sink::Output { .. } => "output",
            Sink::Aggregate { .. } => "aggregate",
            Sink::JoinBuild { .. } => "joinBuild",
            Sink::Materialize { .. } => "materialize",
        }
    }
}

/// A source list streamed through steps into one sink.
#[derive(Clone, Debug, PartialEq)]
pub struct Pipeline {
    pub source: String,
    pub source_cols: Vec<String>,
    pub steps: Vec<Step>,
    pub sink: Sink,
    /// The list the sink produces.
    pub target: String,
    /// Pipelines that must finish first.
    pub deps: Vec<usize>,
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.source)?;
        for s in &self.steps {
            write!(f, " -> {}", s.name())?;
        }
        write!(f, " => {}[{}]", self.sink.kind(), self.target)
    }
}

fn probe_is_left(kv: &crate::tcap::Kv) -> bool {
    kv.get("probe") == Some("left")
}

/// Where each list's data comes from once materialized.
#[derive(Clone, Debug, PartialEq)]
enum Stored {
    Source,
    Aggregate,
    Output,
    Build,
    Shared,
}

/// Splits a program into pipelines, ordered so every pipeline runs after
/// the ones it reads from (build sides before their probes).
pub fn decompose(p: &Program) -> Result<Vec<Pipeline>, EngineError> {
    if let Some(d) = validate(p).first() {
        return Err(EngineError::InvalidProgram(d.to_string()));
    }
    let def: BTreeMap<&str, usize> = p
        .stmts
        .iter()
        .enumerate()
        .map(|(i, s)| (s.out.as_str(), i))
        .collect();
    // (consumer statement, side) pairs per list; a join counts each side.
    let mut readers: BTreeMap<&str, Vec<(usize, Option<bool>)>> = BTreeMap::new();
    for (i, s) in p.stmts.iter().enumerate() {
        match &s.op {
            Op::Join {
                left_hash,
                right_hash,
                ..
            } => {
                readers
                    .entry(&left_hash.list)
                    .or_default()
                    .push((i, Some(true)));
                readers
                    .entry(&right_hash.list)
                    .or_default()
                    .push((i, Some(false)));
            }
            op => {
                let lists: BTreeSet<&str> = op.inputs().iter().map(|r| r.list.as_str()).collect();
                for l in lists {
                    readers.entry(l).or_default().push((i, None));
                }
            }
        }
    }
    let is_build = |stmt: usize, left: bool| match &p.stmts[stmt].op {
        Op::Join { kv, .. } => left != probe_is_left(kv),
        _ => false,
    };

    let mut stored: BTreeMap<String, Stored> = BTreeMap::new();
    for src in p.sources() {
        stored.insert(src.list, Stored::Source);
    }
    for s in &p.stmts {
        let rd = readers
            .get(s.out.as_str())
            .map(Vec::as_slice)
            .unwrap_or(&[]);
        let kind = match s.op {
            Op::Aggregate { .. } => Some(Stored::Aggregate),
            Op::Output { .. } => Some(Stored::Output),
            _ if rd.len() != 1 => Some(Stored::Shared),
            _ if rd
                .iter()
                .any(|&(c, side)| side.is_some_and(|l| is_build(c, l))) =>
            {
                Some(Stored::Build)
            }
            _ => None,
        };
        if let Some(k) = kind {
            stored.insert(s.out.clone(), k);
        }
    }

    let cols_of = |list: &str| -> Vec<String> {
        match def.get(list) {
            Some(&i) => p.stmts[i].cols.clone(),
            None => p
                .sources()
                .into_iter()
                .find(|c| c.list == list)
                .map(|c| c.cols)
                .unwrap_or_default(),
        }
    };

    let mut pipes: Vec<Pipeline> = Vec::new();
    let mut producer: BTreeMap<String, usize> = BTreeMap::new();
    let mut needs: Vec<Vec<String>> = Vec::new();
    let mut starts: Vec<(String, usize, Option<bool>)> = Vec::new();
    for list in stored.keys() {
        for &(c, side) in readers.get(list.as_str()).map(Vec::as_slice).unwrap_or(&[]) {
            starts.push((list.clone(), c, side));
        }
    }
    starts.sort_by_key(|(l, c, _)| (*c, def.get(l.as_str()).copied()));
    for (list, first, side) in starts {
        if side.is_some_and(|l| is_build(first, l)) {
            continue;
        }
        let mut steps = Vec::new();
        let mut need = Vec::new();
        let mut cur = first;
        let (sink, target) = loop {
            let s = &p.stmts[cur];
            match &s.op {
                Op::Output { db, set, input, .. } => {
                    break (
                        Sink::Output {
                            db: db.clone(),
                            set: set.clone(),
                            cols: input.cols.clone(),
                        },
                        s.out.clone(),
                    );
                }
                Op::Aggregate { key, value, kv, .. } => {
                    let combine = match kv.get("combine").unwrap_or("sum") {
                        "sum" => Combine::Sum,
                        "min" => Combine::Min,
                        "max" => Combine::Max,
                        "replace" => Combine::Replace,
                        other => {
                            return Err(EngineError::InvalidProgram(format!(
                                "unknown combiner `{other}`"
                            )))
                        }
                    };
                    let sink = Sink::Aggregate {
                        combine,
                        key: key.cols[0].clone(),
                        value: value.cols[0].clone(),
                        partitions: 1,
                    };
                    break (sink, s.out.clone());
                }
                Op::Join {
                    left_hash,
                    left_copy,
                    right_hash,
                    right_copy,
                    kv,
                    ..
                } => {
                    let build_left = !probe_is_left(kv);
                    let (b_hash, b_copy, p_hash, p_copy) = if build_left {
                        (left_hash, left_copy, right_hash, right_copy)
                    } else {
                        (right_hash, right_copy, left_hash, left_copy)
                    };
                    need.push(b_hash.list.clone());
                    steps.push(Step::Join(JoinStep {
                        name: s.out.clone(),
                        build_list: b_hash.list.clone(),
                        build_hash: b_hash.cols[0].clone(),
                        build_copy: b_copy.cols.clone(),
                        probe_hash: p_hash.cols[0].clone(),
                        probe_copy: p_copy.cols.clone(),
                        build_left,
                    }));
                }
                _ => steps.push(Step::Stage(Stage::compile(s)?)),
            }
            match stored.get(s.out.as_str()) {
                Some(Stored::Build) => {
                    break (
                        Sink::JoinBuild {
                            cols: s.cols.clone(),
                        },
                        s.out.clone(),
                    )
                }
                Some(_) => {
                    break (
                        Sink::Materialize {
                            cols: s.cols.clone(),
                        },
                        s.out.clone(),
                    )
                }
                None => {}
            }
            cur = readers[s.out.as_str()][0].0;
        };
        if !stored.contains_key(&list) {
            return Err(EngineError::InvalidProgram(format!(
                "`{list}` is not materialized"
            )));
        }
        need.push(list.clone());
        producer.insert(target.clone(), pipes.len());
        needs.push(need);
        pipes.push(Pipeline {
            source_cols: cols_of(&list),
            source: list,
            steps,
            sink,
            target,
            deps: Vec::new(),
        });
    }
    for (i, need) in needs.iter().enumerate() {
        let mut deps: Vec<usize> = need
            .iter()
            .filter_map(|l| producer.get(l).copied())
            .filter(|&d| d != i)
            .collect();
        deps.sort_unstable();
        deps.dedup();
        pipes[i].deps = deps;
    }
    topo(pipes)
}

fn topo(pipes: Vec<Pipeline>) -> Result<Vec<Pipeline>, EngineError> {
    let n = pipes.len();
    let mut done = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let next = (0..n).find(|&i| !done[i] && pipes[i].deps.iter().all(|&d| done[d]));
        let Some(i) = next else {
            return Err(EngineError::InvalidProgram(
                "pipelines depend on each other".into(),
            ));
        };
        done[i] = true;
        order.push(i);
    }
    let pos: Vec<usize> = {
        let mut pos = vec![0; n];
        for (k, &i) in order.iter().enumerate() {
            pos[i] = k;
        }
        pos
    };
    let mut slots: Vec<Option<Pipeline>> = pipes.into_iter().map(Some).collect();
    Ok(order
        .iter()
        .map(|&i| {
            let mut pl = slots[i].take().expect("each pipeline placed once");
            pl.deps = pl.deps.iter().map(|&d| pos[d]).collect();
            pl
        })
        .collect())
}
