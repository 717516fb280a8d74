//! Append-only JSON-lines journal, one checksummed event per line.
//!
//! A line is committed once its trailing newline is on disk. A final segment
//! without a newline is a torn write from a crash and is discarded on open.

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use alphawealth_core::qpd::{CostQuote, Decision, QpdConfig};
use alphawealth_core::TestRequest;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub instance_id: String,
    pub config: QpdConfig,
    pub created_at: DateTime<Utc>,
    pub journal_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventKind {
    Created(InstanceRecord),
    Quoted { request: TestRequest, quote: CostQuote },
    Executed { request: TestRequest, quote: CostQuote, p_value: f64, decision: Decision },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEvent {
    pub sequence_no: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub event: EventKind,
    pub checksum: String,
}

#[derive(Serialize)]
struct Body<'a> {
    sequence_no: u64,
    timestamp: &'a DateTime<Utc>,
    #[serde(flatten)]
    event: &'a EventKind,
}

fn checksum(sequence_no: u64, timestamp: &DateTime<Utc>, event: &EventKind) -> Result<String> {
    let body = serde_json::to_vec(&Body { sequence_no, timestamp, event })?;
    Ok(hex::encode(Sha256::digest(&body)))
}

impl JournalEvent {
    pub fn new(sequence_no: u64, event: EventKind) -> Result<Self> {
        let timestamp = Utc::now();
        let checksum = checksum(sequence_no, &timestamp, &event)?;
        Ok(Self { sequence_no, timestamp, event, checksum })
    }

    pub fn verify(&self) -> bool {
        checksum(self.sequence_no, &self.timestamp, &self.event).is_ok_and(|c| c == self.checksum)
    }
}

pub struct Journal {
    path: PathBuf,
    file: File,
    next_sequence: u64,
}

impl Journal {
    /// Creates a new journal; fails if the file already exists.
    pub fn create(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create_new(true).append(true).open(path)?;
        Ok(Self { path: path.to_owned(), file, next_sequence: 1 })
    }

    /// Opens an existing journal, drops a torn final line, and returns the
    /// committed events.
    pub fn open(path: &Path) -> Result<(Self, Vec<JournalEvent>)> {
        let mut file = OpenOptions::new().read(true).write(true).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let committed = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
        if committed < bytes.len() {
            tracing::warn!(path = %path.display(), bytes = bytes.len() - committed, "discarding torn journal tail");
            file.set_len(committed as u64)?;
            file.sync_all()?;
        }
        let events = parse_events(path, &bytes[..committed])?;
        file.seek(SeekFrom::End(0))?;
        let next_sequence = events.last().map_or(1, |e| e.sequence_no + 1);
        Ok((Self { path: path.to_owned(), file, next_sequence }, events))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn next_sequence(&self) -> u64 {
        self.next_sequence
    }

    /// Appends one event. With `durable` the data is flushed to disk before
    /// returning.
    pub fn append(&mut self, event: EventKind, durable: bool) -> Result<JournalEvent> {
        let event = JournalEvent::new(self.next_sequence, event)?;
        let mut line = serde_json::to_vec(&event)?;
        line.push(b'\n');
        let len = self.file.metadata()?.len();
        let written = self.file.write_all(&line).and_then(|_| if durable { self.file.sync_data() } else { Ok(()) });
        if let Err(e) = written {
            // Leave no partial line behind for the next append to extend.
            let _ = self.file.set_len(len);
            return Err(e.into());
        }
        self.next_sequence += 1;
        Ok(event)
    }
}

fn parse_events(path: &Path, bytes: &[u8]) -> Result<Vec<JournalEvent>> {
    let corrupt = |line: usize, reason: String| ServiceError::CorruptJournal {
        path: path.display().to_string(),
        line,
        reason,
    };
    let text = std::str::from_utf8(bytes).map_err(|e| corrupt(0, e.to_string()))?;
    let mut events: Vec<JournalEvent> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let event: JournalEvent = serde_json::from_str(line).map_err(|e| corrupt(line_no, e.to_string()))?;
        if !event.verify() {
            return Err(corrupt(line_no, "checksum mismatch".into()));
        }
        let expected = events.last().map_or(1, |e| e.sequence_no + 1);
        if event.sequence_no != expected {
            return Err(corrupt(line_no, format!("sequence {} where {expected} was expected", event.sequence_no)));
        }
        events.push(event);
    }
    Ok(events)
}

/// Reads all committed events without modifying the file.
pub fn read_events(path: &Path) -> Result<Vec<JournalEvent>> {
    let bytes = std::fs::read(path)?;
    let committed = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    parse_events(path, &bytes[..committed])
}
