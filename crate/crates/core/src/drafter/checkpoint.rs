//! Binary checkpoints holding only the drafter's trainable state.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "TSDRAFT\0"
//! format       u16      FORMAT_VERSION
//! byte order   u16      0x0102, reads back as 0x0201 under the wrong order
//! version      u64      training iterations
//! order        u32
//! vocab        u32
//! alpha        f64      IEEE-754 bits
//! cap flag     u8       0 = no cap, 1 = cap follows
//! cap          u64
//! rows         u64      number of rows
//! row*         u64 key, then `vocab` u64 counts
//! crc32        u32      over every preceding byte
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::adaptive::{AdaptiveDrafter, CountRow, DrafterConfig};

const MAGIC: &[u8; 8] = b"TSDRAFT\0";
pub const FORMAT_VERSION: u16 = 1;
const BYTE_ORDER_MARK: u16 = 0x0102;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

fn corrupt(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::Corrupt(msg.into())
}

/// Trainable drafter state. No target-model data is ever stored.
#[derive(Debug, Clone, PartialEq)]
pub struct DrafterCheckpoint {
    pub version: u64,
    pub config: DrafterConfig,
    pub counts: BTreeMap<u64, Vec<u64>>,
}

impl DrafterCheckpoint {
    pub fn encode(&self) -> Vec<u8> {
        let v = self.config.vocab;
        let mut out = Vec::with_capacity(64 + self.counts.len() * (8 + 8 * v));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&BYTE_ORDER_MARK.to_le_bytes());
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.config.order as u32).to_le_bytes());
        out.extend_from_slice(&(v as u32).to_le_bytes());
        out.extend_from_slice(&self.config.smoothing_alpha.to_bits().to_le_bytes());
        match self.config.count_cap {
            Some(cap) => {
                out.push(1);
                out.extend_from_slice(&cap.to_le_bytes());
            }
            None => {
                out.push(0);
                out.extend_from_slice(&0u64.to_le_bytes());
            }
        }
        out.extend_from_slice(&(self.counts.len() as u64).to_le_bytes());
        for (key, counts) in &self.counts {
            out.extend_from_slice(&key.to_le_bytes());
            for c in counts {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < MAGIC.len() + 4 {
            return Err(corrupt("truncated header"));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 4);
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let format = r.u16()?;
        if format != FORMAT_VERSION {
            return Err(corrupt(format!(
                "format version {format}, expected {FORMAT_VERSION}"
            )));
        }
        if r.u16()? != BYTE_ORDER_MARK {
            return Err(corrupt("byte-order mark mismatch"));
        }
        let stored = u32::from_le_bytes(trailer.try_into().expect("4-byte trailer"));
        if crc32fast::hash(body) != stored {
            return Err(corrupt("checksum mismatch"));
        }
        let version = r.u64()?;
        let order = r.u32()? as usize;
        let vocab = r.u32()? as usize;
        let smoothing_alpha = f64::from_bits(r.u64()?);
        let cap_flag = r.take(1)?[0];
        let cap = r.u64()?;
        let count_cap = match cap_flag {
            0 => None,
            1 => Some(cap),
            f => return Err(corrupt(format!("bad cap flag {f}"))),
        };
        let rows = r.u64()?;
        let mut counts = BTreeMap::new();
        for _ in 0..rows {
            let key = r.u64()?;
            let row = (0..vocab).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
            counts.insert(key, row);
        }
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes before checksum"));
        }
        Ok(Self {
            version,
            config: DrafterConfig {
                vocab,
                order,
                smoothing_alpha,
                count_cap,
            },
            counts,
        })
    }

    pub fn write_to(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self, CheckpointError> {
        Self::decode(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| corrupt("unexpected end of data"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl AdaptiveDrafter {
    pub fn save_checkpoint(&self) -> DrafterCheckpoint {
        DrafterCheckpoint {
            version: self.version,
            config: self.config,
            counts: self
                .rows
                .iter()
                .map(|(&k, r)| (k, r.counts.clone()))
                .collect(),
        }
    }

    /// Rebuilds a drafter, rejecting checkpoints whose shape does not match
    /// `expected` or whose rows are inconsistent.
    pub fn restore_checkpoint(
        ckpt: DrafterCheckpoint,
        expected: &DrafterConfig,
    ) -> Result<Self, CheckpointError> {
        if ckpt.config.order != expected.order {
            return Err(corrupt(format!(
                "order {} does not match expected {}",
                ckpt.config.order, expected.order
            )));
        }
        if ckpt.config.vocab != expected.vocab {
            return Err(corrupt(format!(
                "vocab {} does not match expected {}",
                ckpt.config.vocab, expected.vocab
            )));
        }
        let mut drafter = AdaptiveDrafter::new(ckpt.config).map_err(|e| corrupt(e.to_string()))?;
        let key_space = (ckpt.config.vocab as u64 + 1).pow(ckpt.config.order as u32);
        for (key, counts) in ckpt.counts {
            if key >= key_space || counts.len() != ckpt.config.vocab {
                return Err(corrupt(format!("row {key} is malformed")));
            }
            let total = counts.iter().sum();
            drafter.rows.insert(key, CountRow { counts, total });
        }
        drafter.version = ckpt.version;
        Ok(drafter)
    }
}
