use std::sync::atomic::{AtomicU64, Ordering};

use super::block::{AllocPolicy, Block, BlockView, FrozenBlock};
use super::ObjectError;

pub const MAGIC: &[u8; 4] = b"PCB1";
pub const FORMAT_VERSION: u32 = 1;
/// magic | version u32 | policy u8 | reserved 3 | highWater u64 | activeObjectCount u64
pub const WIRE_HEADER_SIZE: usize = 28;

static IMPORT_FIXUPS: AtomicU64 = AtomicU64::new(0);

/// Per-object rewrites performed by imports since process start. Imports copy
/// bytes and parse the wire header only, so this stays at zero.
pub fn import_fixups() -> u64 {
    IMPORT_FIXUPS.load(Ordering::Relaxed)
}

fn encode(view: BlockView<'_>, policy: AllocPolicy, active_objects: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(WIRE_HEADER_SIZE + view.bytes.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(policy as u8);
    out.extend_from_slice(&[0; 3]);
    out.extend_from_slice(&(view.bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&active_objects.to_le_bytes());
    out.extend_from_slice(view.bytes);
    out
}

/// Serializes exactly the used region `[base, base + highWater)` of a block.
pub fn export_block(block: &Block) -> Vec<u8> {
    encode(block.view(), block.policy(), block.active_objects())
}

pub fn export_frozen(block: &FrozenBlock) -> Vec<u8> {
    encode(block.view(), block.policy(), block.active_objects())
}

struct WireHeader {
    policy: AllocPolicy,
    high_water: usize,
    active_objects: u64,
}

fn parse_header(bytes: &[u8]) -> Result<WireHeader, ObjectError> {
    if bytes.len() < WIRE_HEADER_SIZE {
        return Err(ObjectError::CorruptBlock(format!(
            "{} bytes is shorter than the wire header",
            bytes.len()
        )));
    }
    if &bytes[0..4] != MAGIC {
        return Err(ObjectError::CorruptBlock("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(ObjectError::CorruptBlock(format!(
            "unsupported format version {version}"
        )));
    }
    let policy = AllocPolicy::from_u8(bytes[8])
        .ok_or_else(|| ObjectError::CorruptBlock("bad policy".into()))?;
    let high_water = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let active_objects = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
    if bytes.len() - WIRE_HEADER_SIZE != high_water {
        return Err(ObjectError::CorruptBlock(format!(
            "payload is {} bytes, header says {high_water}",
            bytes.len() - WIRE_HEADER_SIZE
        )));
    }
    if high_water < super::BLOCK_HEADER_SIZE {
        return Err(ObjectError::CorruptBlock(
            "payload shorter than block header".into(),
        ));
    }
    Ok(WireHeader {
        policy,
        high_water,
        active_objects,
    })
}

/// Reconstitutes an exported block as an unmanaged, read-only block.
pub fn import_block(bytes: &[u8]) -> Result<FrozenBlock, ObjectError> {
    import_block_at(bytes, 0)
}

/// Like [`import_block`] but places the block base `shift` bytes into a fresh
/// buffer, so the block lives at an address unrelated to where it was built.
pub fn import_block_at(bytes: &[u8], shift: usize) -> Result<FrozenBlock, ObjectError> {
    let h = parse_header(bytes)?;
    let mut buf = vec![0u8; shift + h.high_water];
    buf[shift..].copy_from_slice(&bytes[WIRE_HEADER_SIZE..]);
    Ok(FrozenBlock::from_parts(
        buf,
        shift,
        h.high_water,
        h.policy,
        h.active_objects,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::object::BLOCK_HEADER_SIZE;

    #[test]
    fn empty_block_is_header_only() {
        let b = Block::new(4096, AllocPolicy::LightweightReuse).unwrap();
        let bytes = export_block(&b);
        assert_eq!(bytes.len(), WIRE_HEADER_SIZE + BLOCK_HEADER_SIZE);
        assert_eq!(&bytes[..4], b"PCB1");
        let f = import_block(&bytes).unwrap();
        assert_eq!(f.high_water(), BLOCK_HEADER_SIZE);
        assert_eq!(f.active_objects(), 0);
        assert!(f.view().root().is_none());
    }

    #[test]
    fn wire_header_is_bit_exact() {
        let mut b = Block::new(4096, AllocPolicy::Recycling).unwrap();
        b.alloc(40, None).unwrap();
        b.active_objects = 3;
        let bytes = export_block(&b);
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(bytes[8], 2);
        assert_eq!(&bytes[9..12], &[0, 0, 0]);
        assert_eq!(
            &bytes[12..20],
            &((BLOCK_HEADER_SIZE + 40) as u64).to_le_bytes()
        );
        assert_eq!(&bytes[20..28], &3u64.to_le_bytes());
    }

    #[test]
    fn truncated_bytes_are_corrupt() {
        let b = Block::new(4096, AllocPolicy::LightweightReuse).unwrap();
        let bytes = export_block(&b);
        for cut in [0, 10, bytes.len() - 1] {
            assert!(matches!(
                import_block(&bytes[..cut]),
                Err(ObjectError::CorruptBlock(_))
            ));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            import_block(&bad),
            Err(ObjectError::CorruptBlock(_))
        ));
    }
}
