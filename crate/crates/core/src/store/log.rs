//! Append-only event log.
//!
//! Each record is framed as a little-endian `u32` byte length followed by a
//! JSON object `{"seq":..,"op":..,"payload":..,"checksum":..}`. `payload` is
//! the event body as a JSON string, kept verbatim so the checksum covers the
//! exact bytes written. The checksum is CRC-32 (IEEE) over
//! `seq.to_le_bytes() || op || 0x00 || payload`.

use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("event log I/O: {0}")]
    Io(#[from] io::Error),
    #[error("record at byte {offset} is truncated")]
    Truncated { offset: u64 },
    #[error("record at byte {offset} is not valid JSON: {message}")]
    Malformed { offset: u64, message: String },
    #[error("checksum mismatch in record seq {seq}")]
    Corrupt { seq: u64 },
    #[error("expected seq {expected}, found {found}")]
    OutOfOrder { expected: u64, found: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub seq: u64,
    pub op: String,
    pub payload: String,
    pub checksum: u32,
}

impl Record {
    pub fn new(seq: u64, op: impl Into<String>, payload: String) -> Self {
        let op = op.into();
        let checksum = checksum(seq, &op, &payload);
        Self {
            seq,
            op,
            payload,
            checksum,
        }
    }

    pub fn verify(&self) -> bool {
        checksum(self.seq, &self.op, &self.payload) == self.checksum
    }

    pub fn encode(&self) -> Vec<u8> {
        let body = serde_json::to_vec(self).expect("record serializes");
        let mut out = Vec::with_capacity(4 + body.len());
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(&body);
        out
    }
}

pub fn checksum(seq: u64, op: &str, payload: &str) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(&seq.to_le_bytes());
    h.update(op.as_bytes());
    h.update(&[0]);
    h.update(payload.as_bytes());
    h.finalize()
}

/// Decodes every record, stopping at the first one that is truncated,
/// malformed, out of sequence or fails its checksum.
pub fn read_records(mut reader: impl Read) -> Result<Vec<Record>, LogError> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    let mut out = Vec::new();
    let mut at = 0usize;
    while at < buf.len() {
        let offset = at as u64;
        let Some(len_bytes) = buf.get(at..at + 4) else {
            return Err(LogError::Truncated { offset });
        };
        let len = u32::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
        let Some(body) = buf.get(at + 4..at + 4 + len) else {
            return Err(LogError::Truncated { offset });
        };
        let record: Record = serde_json::from_slice(body).map_err(|e| LogError::Malformed {
            offset,
            message: e.to_string(),
        })?;
        let expected = out.len() as u64 + 1;
        if !record.verify() {
            return Err(LogError::Corrupt { seq: record.seq });
        }
        if record.seq != expected {
            return Err(LogError::OutOfOrder {
                expected,
                found: record.seq,
            });
        }
        out.push(record);
        at += 4 + len;
    }
    Ok(out)
}

/// Where committed records go. In-memory stores keep no log.
#[derive(Debug)]
pub struct EventLog {
    sink: Option<BufWriter<File>>,
}

impl EventLog {
    pub fn memory() -> Self {
        Self { sink: None }
    }

    /// Creates a new log file; refuses to clobber an existing one.
    pub fn create(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().write(true).create_new(true).open(path)?;
        Ok(Self {
            sink: Some(BufWriter::new(file)),
        })
    }

    pub fn append_to(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Self {
            sink: Some(BufWriter::new(file)),
        })
    }

    pub fn is_persistent(&self) -> bool {
        self.sink.is_some()
    }

    pub fn append(&mut self, record: &Record) -> io::Result<()> {
        if let Some(sink) = &mut self.sink {
            sink.write_all(&record.encode())?;
            sink.flush()?;
        }
        Ok(())
    }
}
