use std::sync::Arc;

use super::Column;
use crate::object::BlockId;

/// Equal-length named columns flowing through a pipeline. Columns are
/// shared, so copying a column into the next list is free.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VectorList {
    cols: Vec<(String, Arc<Column>)>,
    len: usize,
}

impl VectorList {
    pub fn new(len: usize) -> Self {
        VectorList {
            cols: Vec::new(),
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn width(&self) -> usize {
        self.cols.len()
    }

    /// Appends a column; its length must match.
    pub fn push(&mut self, name: impl Into<String>, col: impl Into<Arc<Column>>) {
        let col = col.into();
        if self.cols.is_empty() && self.len == 0 {
            self.len = col.len();
        }
        assert_eq!(
            col.len(),
            self.len,
            "column length must match the vector list"
        );
        self.cols.push((name.into(), col));
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.cols.iter().map(|(n, _)| n.as_str())
    }

    pub fn column(&self, name: &str) -> Option<&Arc<Column>> {
        self.cols.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    pub fn columns(&self) -> impl Iterator<Item = (&str, &Arc<Column>)> {
        self.cols.iter().map(|(n, c)| (n.as_str(), c))
    }

    /// The named columns, in the order given.
    pub fn project(&self, names: &[String]) -> Result<VectorList, String> {
        let mut out = VectorList::new(self.len);
        for n in names {
            let c = self
                .column(n)
                .ok_or_else(|| format!("vector list has no column `{n}`"))?;
            out.cols.push((n.clone(), c.clone()));
        }
        Ok(out)
    }

    pub fn filter(&self, mask: &[bool]) -> VectorList {
        let len = mask.iter().filter(|&&m| m).count();
        let cols = self
            .cols
            .iter()
            .map(|(n, c)| (n.clone(), Arc::new(c.filter(mask))))
            .collect();
        VectorList { cols, len }
    }

    pub fn gather(&self, idx: &[usize]) -> VectorList {
        let cols = self
            .cols
            .iter()
            .map(|(n, c)| (n.clone(), Arc::new(c.gather(idx))))
            .collect();
        VectorList {
            cols,
            len: idx.len(),
        }
    }

    pub fn slice(&self, from: usize, to: usize) -> VectorList {
        let cols = self
            .cols
            .iter()
            .map(|(n, c)| (n.clone(), Arc::new(c.slice(from, to))))
            .collect();
        VectorList {
            cols,
            len: to - from,
        }
    }

    /// Columns of `other` appended after these.
    pub fn concat(mut self, other: VectorList) -> VectorList {
        assert_eq!(self.len, other.len);
        self.cols.extend(other.cols);
        self
    }

    /// Whether any handle column holds a reference into `block`.
    pub fn references(&self, block: BlockId) -> bool {
        self.cols
            .iter()
            .any(|(_, c)| c.objects().iter().flatten().any(|o| o.block == block))
    }

    /// Every block referenced from a handle column.
    pub fn blocks(&self) -> Vec<BlockId> {
        let mut out: Vec<BlockId> = Vec::new();
        for (_, c) in &self.cols {
            for o in c.objects().iter().flatten() {
                if !out.contains(&o.block) {
                    out.push(o.block);
                }
            }
        }
        out
    }
}
