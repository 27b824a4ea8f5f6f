//! Append-only record log, one file per channel.
//!
//! Each record is framed as
//!
//! ```text
//! +-----------+-----------+------------------+
//! | len: u32  | crc: u32  | payload (JSON)   |
//! +-----------+-----------+------------------+
//! ```
//!
//! with little-endian integers and a CRC-32 over the payload. On open, a
//! short or checksum-failing final record is a torn write and is cut off;
//! damage anywhere before the final record refuses to open.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ChannelMeta, FeedEntry};

const HEADER_LEN: usize = 8;
/// Upper bound on a payload; larger lengths can only come from corruption.
pub const MAX_RECORD_LEN: u32 = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Channel(ChannelMeta),
    Entry(FeedEntry),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Durability {
    /// `fsync` after every append.
    #[default]
    Sync,
    /// Hand the bytes to the OS only. For tests and throwaway runs.
    Buffered,
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("{path}: corrupt record at byte offset {offset}: {reason}")]
    Corrupt {
        path: PathBuf,
        offset: u64,
        reason: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Result of scanning raw log bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scan {
    pub records: Vec<Record>,
    /// Byte length of the intact prefix.
    pub valid_len: u64,
    pub torn_tail: bool,
}

/// Decodes every complete record in `bytes`. `Err` carries the offset and
/// reason of a corrupt non-final record.
pub fn scan(bytes: &[u8]) -> Result<Scan, (u64, String)> {
    let mut records = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let rest = &bytes[pos..];
        let torn = || Scan { records: Vec::new(), valid_len: pos as u64, torn_tail: true };
        if rest.len() < HEADER_LEN {
            return Ok(Scan { records, ..torn() });
        }
        let len = u32::from_le_bytes(rest[0..4].try_into().expect("4 bytes"));
        let crc = u32::from_le_bytes(rest[4..8].try_into().expect("4 bytes"));
        if len > MAX_RECORD_LEN {
            return Err((pos as u64, format!("length {len} exceeds {MAX_RECORD_LEN}")));
        }
        let end = HEADER_LEN + len as usize;
        if rest.len() < end {
            return Ok(Scan { records, ..torn() });
        }
        let payload = &rest[HEADER_LEN..end];
        if crc32fast::hash(payload) != crc {
            if pos + end == bytes.len() {
                return Ok(Scan { records, ..torn() });
            }
            return Err((pos as u64, "checksum mismatch".into()));
        }
        let record = serde_json::from_slice(payload).map_err(|e| (pos as u64, e.to_string()))?;
        records.push(record);
        pos += end;
    }
    Ok(Scan { records, valid_len: pos as u64, torn_tail: false })
}

pub fn encode(record: &Record) -> Vec<u8> {
    let payload = serde_json::to_vec(record).expect("records serialize");
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

#[derive(Debug)]
pub struct RecordLog {
    file: File,
    path: PathBuf,
    durability: Durability,
}

impl RecordLog {
    /// Creates a new, empty log. Fails if the file exists.
    pub fn create(path: &Path, durability: Durability) -> Result<Self, LogError> {
        let io_err = |source| LogError::Io { path: path.to_path_buf(), source };
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        if durability == Durability::Sync {
            if let Some(dir) = path.parent() {
                sync_dir(dir).map_err(io_err)?;
            }
        }
        Ok(RecordLog { file, path: path.to_path_buf(), durability })
    }

    /// Opens an existing log, cutting off a torn final record, and returns
    /// its records.
    pub fn open(path: &Path, durability: Durability) -> Result<(Self, Vec<Record>), LogError> {
        let io_err = |source| LogError::Io { path: path.to_path_buf(), source };
        let mut bytes = Vec::new();
        File::open(path).and_then(|mut f| f.read_to_end(&mut bytes)).map_err(io_err)?;
        let scanned = scan(&bytes).map_err(|(offset, reason)| LogError::Corrupt {
            path: path.to_path_buf(),
            offset,
            reason,
        })?;
        let file = OpenOptions::new().append(true).open(path).map_err(io_err)?;
        if scanned.torn_tail {
            file.set_len(scanned.valid_len).map_err(io_err)?;
            file.sync_all().map_err(io_err)?;
        }
        Ok((RecordLog { file, path: path.to_path_buf(), durability }, scanned.records))
    }

    /// Appends one record; with [`Durability::Sync`] it is on stable storage
    /// when this returns.
    pub fn append(&mut self, record: &Record) -> Result<(), LogError> {
        let frame = encode(record);
        let io_err = |source| LogError::Io { path: self.path.clone(), source };
        self.file.write_all(&frame).map_err(io_err)?;
        if self.durability == Durability::Sync {
            self.file.sync_data().map_err(io_err)?;
        }
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

fn sync_dir(dir: &Path) -> io::Result<()> {
    File::open(dir)?.sync_all()
}
