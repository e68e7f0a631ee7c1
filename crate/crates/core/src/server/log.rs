//! Append-only event log.
//!
//! File layout: the header line `smartclass-eventlog v1`, then one record per
//! line as `<record json>\t<sha256 hex of the json>`. A final line without a
//! newline is an interrupted append and is dropped on open.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::events::{Category, PlatformEvent};

pub const LOG_HEADER: &str = "smartclass-eventlog v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogError {
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("corrupt record at seq {seq}: {message}")]
    CorruptRecord { seq: u64, message: String },
    #[error("not an event log: bad header {0:?}")]
    BadHeader(String),
}

fn storage(e: std::io::Error) -> LogError {
    LogError::StorageFailure(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLogRecord {
    pub seq: u64,
    /// Wall-clock milliseconds at append time.
    pub timestamp: u64,
    pub category: Category,
    pub payload: PlatformEvent,
}

/// Serializes a record as one log line, newline included.
pub fn encode_record(record: &EventLogRecord) -> String {
    let json = serde_json::to_string(record).expect("records serialize");
    let sum = crate::sha256_hex(json.as_bytes());
    format!("{json}\t{sum}\n")
}

fn decode_record(line: &str, expected_seq: u64) -> Result<EventLogRecord, LogError> {
    let corrupt = |message: &str| LogError::CorruptRecord { seq: expected_seq, message: message.to_string() };
    let (json, sum) = line.rsplit_once('\t').ok_or_else(|| corrupt("missing checksum"))?;
    if crate::sha256_hex(json.as_bytes()) != sum {
        return Err(corrupt("checksum mismatch"));
    }
    let record: EventLogRecord = serde_json::from_str(json).map_err(|e| corrupt(&e.to_string()))?;
    if record.seq != expected_seq {
        return Err(corrupt(&format!("sequence gap: found {}", record.seq)));
    }
    if record.category != record.payload.category() {
        return Err(corrupt("category does not match payload"));
    }
    Ok(record)
}

/// Parses a whole log. With `allow_torn_tail`, an unterminated last line is
/// ignored and its byte offset returned so the caller can truncate it.
pub fn parse_log(bytes: &[u8], allow_torn_tail: bool) -> Result<(Vec<EventLogRecord>, Option<u64>), LogError> {
    if bytes.is_empty() {
        return Ok((Vec::new(), None));
    }
    let mut records = Vec::new();
    let mut offset = 0usize;
    let mut first = true;
    while offset < bytes.len() {
        let rest = &bytes[offset..];
        let Some(nl) = rest.iter().position(|b| *b == b'\n') else {
            if first && allow_torn_tail && LOG_HEADER.as_bytes().starts_with(rest) {
                return Ok((records, Some(0)));
            }
            if first || !allow_torn_tail {
                let seq = records.len() as u64 + 1;
                return Err(if first {
                    LogError::BadHeader(String::from_utf8_lossy(rest).into_owned())
                } else {
                    LogError::CorruptRecord { seq, message: "unterminated record".into() }
                });
            }
            return Ok((records, Some(offset as u64)));
        };
        let line = std::str::from_utf8(&rest[..nl]);
        if first {
            if line != Ok(LOG_HEADER) {
                return Err(LogError::BadHeader(String::from_utf8_lossy(&rest[..nl]).into_owned()));
            }
            first = false;
        } else {
            let seq = records.len() as u64 + 1;
            let line = line.map_err(|_| LogError::CorruptRecord { seq, message: "invalid UTF-8".into() })?;
            records.push(decode_record(line, seq)?);
        }
        offset += nl + 1;
    }
    Ok((records, None))
}

/// Reads a log file without modifying it. An unterminated tail is an error.
pub fn read_log(path: &Path) -> Result<Vec<EventLogRecord>, LogError> {
    let bytes = std::fs::read(path).map_err(storage)?;
    Ok(parse_log(&bytes, false)?.0)
}

/// The single writer for a log. Keeps every record in memory as well.
#[derive(Debug)]
pub struct EventLog {
    file: Option<(PathBuf, File)>,
    records: Vec<EventLogRecord>,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self { file: None, records: Vec::new() }
    }

    /// Opens or creates a log file. An interrupted final append is cut off;
    /// any other damage is an error.
    pub fn open(path: &Path) -> Result<Self, LogError> {
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path).map_err(storage)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(storage)?;
        let (records, torn) = parse_log(&bytes, true)?;
        if let Some(at) = torn {
            tracing::warn!(path = %path.display(), offset = at, "dropping interrupted append");
            file.set_len(at).map_err(storage)?;
            file.seek(SeekFrom::End(0)).map_err(storage)?;
        }
        if bytes.is_empty() || torn == Some(0) {
            file.write_all(format!("{LOG_HEADER}\n").as_bytes()).map_err(storage)?;
            file.sync_data().map_err(storage)?;
        }
        Ok(Self { file: Some((path.to_path_buf(), file)), records })
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn records(&self) -> &[EventLogRecord] {
        &self.records
    }

    pub fn last_seq(&self) -> u64 {
        self.records.len() as u64
    }

    /// Appends `event` with the next seq. The record is on disk before this
    /// returns.
    pub fn append(&mut self, timestamp: u64, event: PlatformEvent) -> Result<&EventLogRecord, LogError> {
        let record = EventLogRecord { seq: self.last_seq() + 1, timestamp, category: event.category(), payload: event };
        if let Some((_, file)) = &mut self.file {
            file.write_all(encode_record(&record).as_bytes()).map_err(storage)?;
            file.sync_data().map_err(storage)?;
        }
        self.records.push(record);
        Ok(self.records.last().expect("just pushed"))
    }
}
