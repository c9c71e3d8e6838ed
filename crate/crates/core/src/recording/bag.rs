//! Bag file format.
//!
//! ```text
//! "RPBAG01\n"
//! repeated, little-endian:
//!   u64 stamp_ns, u16 type_id, u16 topic length, topic bytes,
//!   u32 payload length, payload bytes (bus wire encoding)
//! ```

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::bus::wire::{decode_payload, encode_payload, EncodeError};
use crate::bus::{valid_name, Envelope};

pub const MAGIC: &[u8; 8] = b"RPBAG01\n";

#[derive(Debug, Error)]
pub enum BagError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("not a bag file (bad magic)")]
    BadMagic,
    #[error("corrupt record at byte offset {offset}: {reason}")]
    Corrupt { offset: usize, reason: String },
    #[error("stamp {stamp} precedes the previous record ({last})")]
    OutOfOrder { stamp: u64, last: u64 },
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

impl BagError {
    pub(crate) fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        BagError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

/// Appends stamp-ordered records to any byte sink.
pub struct BagWriter<W: Write> {
    out: W,
    count: u64,
    last_stamp: Option<u64>,
}

impl BagWriter<BufWriter<File>> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, BagError> {
        let file = File::create(path.as_ref()).map_err(|e| BagError::io(&path, e))?;
        Self::new(BufWriter::new(file)).map_err(|e| BagError::io(&path, e))
    }
}

impl<W: Write> BagWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        out.write_all(MAGIC)?;
        Ok(Self {
            out,
            count: 0,
            last_stamp: None,
        })
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn last_stamp(&self) -> Option<u64> {
        self.last_stamp
    }

    pub fn write(&mut self, env: &Envelope) -> Result<(), BagError> {
        if let Some(last) = self.last_stamp {
            if env.stamp_ns < last {
                return Err(BagError::OutOfOrder {
                    stamp: env.stamp_ns,
                    last,
                });
            }
        }
        if !valid_name(&env.topic) {
            return Err(EncodeError::InvalidTopic(env.topic.clone()).into());
        }
        let payload = encode_payload(&env.payload)?;
        let topic_len = u16::try_from(env.topic.len()).map_err(|_| EncodeError::TooLong("topic"))?;
        let payload_len = u32::try_from(payload.len()).map_err(|_| EncodeError::TooLong("payload"))?;
        let mut rec = Vec::with_capacity(16 + env.topic.len() + payload.len());
        rec.extend_from_slice(&env.stamp_ns.to_le_bytes());
        rec.extend_from_slice(&env.type_id().to_le_bytes());
        rec.extend_from_slice(&topic_len.to_le_bytes());
        rec.extend_from_slice(env.topic.as_bytes());
        rec.extend_from_slice(&payload_len.to_le_bytes());
        rec.extend_from_slice(&payload);
        self.out.write_all(&rec).map_err(|e| BagError::io("bag", e))?;
        self.count += 1;
        self.last_stamp = Some(env.stamp_ns);
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), BagError> {
        self.out.flush().map_err(|e| BagError::io("bag", e))
    }

    pub fn into_inner(mut self) -> Result<W, BagError> {
        self.flush()?;
        Ok(self.out)
    }
}

/// Sequential record iterator over an in-memory bag. Stops after the first error.
pub struct BagReader<'a> {
    data: &'a [u8],
    pos: usize,
    failed: bool,
}

impl<'a> BagReader<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self, BagError> {
        if data.len() < MAGIC.len() || &data[..MAGIC.len()] != MAGIC {
            return Err(BagError::BadMagic);
        }
        Ok(Self {
            data,
            pos: MAGIC.len(),
            failed: false,
        })
    }

    /// Byte offset of the next record.
    pub fn offset(&self) -> usize {
        self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], BagError> {
        if self.data.len() - self.pos < n {
            return Err(BagError::Corrupt {
                offset: self.pos,
                reason: format!("truncated {what}: need {n} bytes, have {}", self.data.len() - self.pos),
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    // Corrupt offsets are rewritten to the record start by `next`.
    fn record(&mut self) -> Result<Envelope, BagError> {
        let corrupt = |reason: String| BagError::Corrupt { offset: 0, reason };
        let stamp = u64::from_le_bytes(self.take(8, "stamp")?.try_into().unwrap());
        let type_id = u16::from_le_bytes(self.take(2, "type id")?.try_into().unwrap());
        let tlen = u16::from_le_bytes(self.take(2, "topic length")?.try_into().unwrap()) as usize;
        let topic = std::str::from_utf8(self.take(tlen, "topic")?)
            .map_err(|_| corrupt("topic is not UTF-8".into()))?
            .to_string();
        let plen = u32::from_le_bytes(self.take(4, "payload length")?.try_into().unwrap()) as usize;
        let base = self.pos;
        let bytes = self.take(plen, "payload")?;
        let payload = decode_payload(type_id, bytes, base).map_err(|e| corrupt(e.to_string()))?;
        Ok(Envelope::new(topic, stamp, payload))
    }
}

impl Iterator for BagReader<'_> {
    type Item = Result<Envelope, BagError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed || self.pos == self.data.len() {
            return None;
        }
        let start = self.pos;
        let r = self.record().map_err(|e| match e {
            BagError::Corrupt { reason, .. } => BagError::Corrupt { offset: start, reason },
            other => other,
        });
        if r.is_err() {
            self.failed = true;
            self.pos = start;
        }
        Some(r)
    }
}

/// Every record of a bag, failing on the first corrupt one.
pub fn read_bag(data: &[u8]) -> Result<Vec<Envelope>, BagError> {
    BagReader::new(data)?.collect()
}

/// Records up to the first corrupt one, plus the error that stopped reading.
pub fn read_bag_prefix(data: &[u8]) -> Result<(Vec<Envelope>, Option<BagError>), BagError> {
    let mut out = Vec::new();
    for r in BagReader::new(data)? {
        match r {
            Ok(env) => out.push(env),
            Err(e) => return Ok((out, Some(e))),
        }
    }
    Ok((out, None))
}

pub fn read_bag_file(path: impl AsRef<Path>) -> Result<Vec<Envelope>, BagError> {
    let data = std::fs::read(path.as_ref()).map_err(|e| BagError::io(&path, e))?;
    read_bag(&data)
}
