use std::collections::BTreeMap;
use std::io::{Read, Seek, SeekFrom, Write};
use std::sync::{Arc, Mutex};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;

use super::DistError;
use crate::object::{export_frozen, import_block, FrozenBlock};

/// A block in flight: exported bytes tagged with the job stage it feeds.
#[derive(Clone, Debug)]
pub struct Envelope {
    pub stage: usize,
    pub from: usize,
    pub seq: u64,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NetStats {
    pub sent: u64,
    pub received: u64,
    pub bytes: u64,
    pub wire_bytes: u64,
}

/// In-process transport between simulated nodes. Only exported bytes cross
/// it; receivers import them as read-only blocks.
pub struct Network {
    inboxes: Vec<Mutex<Vec<Envelope>>>,
    ledger: Mutex<BTreeMap<(usize, usize, u64), bool>>,
    stats: Mutex<NetStats>,
    next_seq: Mutex<u64>,
    compression: bool,
    via_file: bool,
}

impl Network {
    pub fn new(nodes: usize, compression: bool, via_file: bool) -> Self {
        Network {
            inboxes: (0..nodes).map(|_| Mutex::new(Vec::new())).collect(),
            ledger: Mutex::new(BTreeMap::new()),
            stats: Mutex::new(NetStats::default()),
            next_seq: Mutex::new(0),
            compression,
            via_file,
        }
    }

    pub fn stats(&self) -> NetStats {
        *self.stats.lock().expect("stats lock")
    }

    fn encode(&self, raw: Vec<u8>) -> Result<Vec<u8>, DistError> {
        let mut bytes = raw;
        if self.compression {
            let mut enc = DeflateEncoder::new(Vec::new(), Compression::fast());
            enc.write_all(&bytes)?;
            bytes = enc.finish()?;
        }
        if self.via_file {
            let mut f = tempfile::tempfile()?;
            f.write_all(&bytes)?;
            f.seek(SeekFrom::Start(0))?;
            bytes.clear();
            f.read_to_end(&mut bytes)?;
        }
        Ok(bytes)
    }

    fn decode(&self, bytes: Vec<u8>) -> Result<Vec<u8>, DistError> {
        if !self.compression {
            return Ok(bytes);
        }
        let mut out = Vec::new();
        DeflateDecoder::new(bytes.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    }

    /// Exports `block` and places the bytes in `to`'s inbox.
    pub fn send(
        &self,
        from: usize,
        to: usize,
        stage: usize,
        block: &FrozenBlock,
    ) -> Result<(), DistError> {
        let raw = export_frozen(block);
        let raw_len = raw.len() as u64;
        let bytes = self.encode(raw)?;
        let seq = {
            let mut s = self.next_seq.lock().expect("seq lock");
            *s += 1;
            *s
        };
        {
            let mut st = self.stats.lock().expect("stats lock");
            st.sent += 1;
            st.bytes += raw_len;
            st.wire_bytes += bytes.len() as u64;
        }
        self.ledger
            .lock()
            .expect("ledger lock")
            .insert((to, from, seq), false);
        let inbox = self
            .inboxes
            .get(to)
            .ok_or_else(|| DistError::Delivery(format!("no node {to}")))?;
        inbox.lock().expect("inbox lock").push(Envelope {
            stage,
            from,
            seq,
            bytes,
        });
        Ok(())
    }

    /// Takes every block addressed to `node` for `stage`, in send order.
    pub fn receive(&self, node: usize, stage: usize) -> Result<Vec<Arc<FrozenBlock>>, DistError> {
        let taken: Vec<Envelope> = {
            let mut inbox = self.inboxes[node].lock().expect("inbox lock");
            let (mine, rest): (Vec<_>, Vec<_>) = inbox.drain(..).partition(|e| e.stage == stage);
            *inbox = rest;
            mine
        };
        let mut out = Vec::with_capacity(taken.len());
        for mut e in taken {
            {
                let mut ledger = self.ledger.lock().expect("ledger lock");
                match ledger.get_mut(&(node, e.from, e.seq)) {
                    Some(seen) if !*seen => *seen = true,
                    _ => {
                        return Err(DistError::Delivery(format!(
                            "block {} delivered twice or never sent",
                            e.seq
                        )))
                    }
                }
            }
            self.stats.lock().expect("stats lock").received += 1;
            let bytes = self.decode(std::mem::take(&mut e.bytes))?;
            out.push(Arc::new(import_block(&bytes)?));
        }
        Ok(out)
    }

    /// Blocks sent but never received.
    pub fn undelivered(&self) -> usize {
        self.ledger
            .lock()
            .expect("ledger lock")
            .values()
            .filter(|seen| !**seen)
            .count()
    }
}
