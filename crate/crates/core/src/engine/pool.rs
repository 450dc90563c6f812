use std::collections::{HashMap, VecDeque};

use super::EngineError;
use crate::object::{AllocPolicy, Block, BlockId, FrozenBlock};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PoolStats {
    pub allocated: u64,
    pub reused: u64,
    pub recycled: u64,
}

/// Hands out page-sized blocks, recycles discarded pages and tracks pins.
pub struct BufferPool {
    page_size: usize,
    free: VecDeque<Vec<u8>>,
    max_free: usize,
    pins: HashMap<BlockId, usize>,
    stats: PoolStats,
}

impl BufferPool {
    pub fn new(page_size: usize) -> Self {
        BufferPool {
            page_size,
            free: VecDeque::new(),
            max_free: 16,
            pins: HashMap::new(),
            stats: PoolStats::default(),
        }
    }

    pub fn page_size(&self) -> usize {
        self.page_size
    }

    pub fn stats(&self) -> PoolStats {
        self.stats
    }

    /// A fresh block, reusing the least recently returned buffer if any.
    pub fn block(&mut self, policy: AllocPolicy) -> Result<Block, EngineError> {
        let buf = match self.free.pop_front() {
            Some(b) => {
                self.stats.reused += 1;
                b
            }
            None => {
                self.stats.allocated += 1;
                Vec::new()
            }
        };
        Ok(Block::from_buffer(buf, self.page_size, policy)?)
    }

    pub fn pin(&mut self, id: BlockId) {
        *self.pins.entry(id).or_insert(0) += 1;
    }

    pub fn unpin(&mut self, id: BlockId) -> Result<usize, EngineError> {
        let Some(n) = self.pins.get_mut(&id) else {
            return Err(EngineError::PinViolation(format!(
                "block {} is not pinned",
                id.raw()
            )));
        };
        *n -= 1;
        let left = *n;
        if left == 0 {
            self.pins.remove(&id);
        }
        Ok(left)
    }

    pub fn pin_count(&self, id: BlockId) -> usize {
        self.pins.get(&id).copied().unwrap_or(0)
    }

    /// Takes back a page nobody needs any more.
    pub fn recycle(&mut self, page: FrozenBlock) -> Result<(), EngineError> {
        if self.pin_count(page.id()) > 0 {
            return Err(EngineError::PinViolation(format!(
                "recycling pinned block {}",
                page.id().raw()
            )));
        }
        self.stats.recycled += 1;
        if self.free.len() < self.max_free {
            self.free.push_back(page.into_buffer());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recycled_buffers_come_back_in_order() {
        let mut pool = BufferPool::new(4096);
        let a = pool.block(AllocPolicy::NoReuse).unwrap().freeze();
        let b = pool.block(AllocPolicy::NoReuse).unwrap().freeze();
        pool.recycle(a).unwrap();
        pool.recycle(b).unwrap();
        let c = pool.block(AllocPolicy::NoReuse).unwrap();
        assert_eq!(c.capacity(), 4096);
        assert_eq!(
            pool.stats(),
            PoolStats {
                allocated: 2,
                reused: 1,
                recycled: 2
            }
        );
    }

    #[test]
    fn pinned_pages_are_not_recycled() {
        let mut pool = BufferPool::new(4096);
        let a = pool.block(AllocPolicy::NoReuse).unwrap().freeze();
        pool.pin(a.id());
        pool.pin(a.id());
        assert_eq!(pool.unpin(a.id()).unwrap(), 1);
        let id = a.id();
        assert!(matches!(pool.recycle(a), Err(EngineError::PinViolation(_))));
        assert_eq!(pool.unpin(id).unwrap(), 0);
        assert!(pool.unpin(id).is_err());
    }
}
