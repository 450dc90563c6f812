use std::collections::BTreeMap;
use std::sync::Arc;

use super::{ClusterConfig, DistError, Network};
use crate::containers::{MapValue, OwnedKey};
use crate::engine::{
    merged_entries, set_key, set_rows, Datum, EngineConfig, PcSet, SetKind, Storage, Udfs,
};
use crate::lambda::{source_bindings, ComputationGraph};
use crate::object::{export_frozen, import_block, TypeRegistry};

/// One simulated machine: its share of every stored set.
pub struct Node {
    pub id: usize,
    pub storage: Storage,
}

/// A cluster of simulated nodes sharing one process. Nodes only exchange
/// exported page bytes through `net`.
pub struct SimCluster {
    pub config: ClusterConfig,
    pub nodes: Vec<Node>,
    pub net: Network,
    registry: Arc<TypeRegistry>,
    udfs: Udfs,
    bindings: BTreeMap<String, String>,
    next_stage: usize,
}

impl SimCluster {
    pub fn new(
        config: ClusterConfig,
        registry: Arc<TypeRegistry>,
        udfs: Udfs,
    ) -> Result<Self, DistError> {
        config.check()?;
        Ok(SimCluster {
            nodes: (0..config.nodes)
                .map(|id| Node {
                    id,
                    storage: Storage::new(),
                })
                .collect(),
            net: Network::new(config.nodes, config.compression, config.via_file),
            config,
            registry,
            udfs,
            bindings: BTreeMap::new(),
            next_stage: 0,
        })
    }

    pub fn registry(&self) -> &Arc<TypeRegistry> {
        &self.registry
    }

    pub fn udfs(&self) -> &Udfs {
        &self.udfs
    }

    pub fn udfs_mut(&mut self) -> &mut Udfs {
        &mut self.udfs
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            chunk_size: self.config.chunk_size,
            page_size: self.config.page_size,
            ..EngineConfig::default()
        }
    }

    /// A fresh id for tagging the blocks of one job stage.
    pub fn stage_id(&mut self) -> usize {
        self.next_stage += 1;
        self.next_stage
    }

    /// Deals the pages of `set` round-robin over the nodes. Each node gets
    /// its own imported copy of the bytes.
    pub fn distribute(&mut self, db: &str, name: &str, set: &PcSet) -> Result<(), DistError> {
        let n = self.nodes.len();
        let mut parts: Vec<PcSet> = (0..n).map(|_| PcSet::new(&set.schema, set.kind)).collect();
        for (i, page) in set.pages.iter().enumerate() {
            parts[i % n]
                .pages
                .push(Arc::new(import_block(&export_frozen(page))?));
        }
        for (node, part) in self.nodes.iter_mut().zip(parts) {
            node.storage.put(db, name, part);
        }
        Ok(())
    }

    /// Reads source list `list` from `db.set`.
    pub fn bind(&mut self, list: &str, db: &str, set: &str) {
        self.bindings.insert(list.to_string(), set_key(db, set));
    }

    pub fn bind_graph(&mut self, g: &ComputationGraph) {
        for (list, db, set) in source_bindings(g) {
            self.bind(&list, &db, &set);
        }
    }

    pub fn binding(&self, list: &str) -> Option<&str> {
        self.bindings.get(list).map(String::as_str)
    }

    /// `db.set` on one node, or an empty set if the node holds none of it.
    pub fn local(&self, node: usize, key: &str) -> Option<&PcSet> {
        self.nodes[node].storage.get_key(key)
    }

    /// Every node's part of `db.set`, for checking results.
    pub fn gather(&self, db: &str, name: &str) -> Option<PcSet> {
        let key = set_key(db, name);
        let mut out: Option<PcSet> = None;
        for node in &self.nodes {
            if let Some(part) = node.storage.get_key(&key) {
                let acc = out.get_or_insert_with(|| PcSet::new(&part.schema, part.kind));
                acc.pages.extend(part.pages.iter().cloned());
            }
        }
        out
    }

    pub fn collect_rows(&self, db: &str, name: &str) -> Result<Vec<Vec<Datum>>, DistError> {
        match self.gather(db, name) {
            Some(set) => Ok(set_rows(&set, &self.registry)?),
            None => Ok(Vec::new()),
        }
    }

    /// The final aggregate of `db.set`, merged over all nodes and sorted by key.
    pub fn collect_aggregate(
        &self,
        db: &str,
        name: &str,
    ) -> Result<Vec<(OwnedKey, MapValue)>, DistError> {
        match self.gather(db, name) {
            Some(set) if matches!(set.kind, SetKind::Aggregated(_)) => Ok(merged_entries(&set)?),
            Some(_) => Err(DistError::Unsupported(format!(
                "`{db}.{name}` is not an aggregated set"
            ))),
            None => Ok(Vec::new()),
        }
    }
}
