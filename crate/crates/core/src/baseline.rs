//! Reference stores the sketch is compared against.
//!
//! [`ExactStore`] keeps one accumulated mask per key, the equivalent of
//! storing a boolean column per condition next to each row. It is also the
//! oracle for the sketch's true mask.
//!
//! [`LogStore`] keeps one entry per policy change and resolves a time to the
//! mask of the latest change at or before it.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::mask::{MaskError, PolicyMask};
use crate::time::{Timestamp, TimestampError};

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ExactStore {
    entries: HashMap<Vec<u8>, PolicyMask>,
}

impl ExactStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// ORs `mask` into `key`'s entry.
    pub fn add(&mut self, key: impl AsRef<[u8]>, mask: PolicyMask) {
        *self.entries.entry(key.as_ref().to_vec()).or_default() |= mask;
    }

    /// Accumulated mask, or 0 for an unknown key.
    pub fn get(&self, key: impl AsRef<[u8]>) -> PolicyMask {
        self.entries.get(key.as_ref()).copied().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &[u8]> {
        self.entries.keys().map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogError {
    #[error("log timestamps must strictly increase: {new} is not after {last}")]
    OutOfOrder { last: Timestamp, new: Timestamp },
    #[error("log line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogEntry {
    pub at: Timestamp,
    pub mask: PolicyMask,
}

/// Policy-change log, strictly increasing in time.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct LogStore {
    entries: Vec<LogEntry>,
}

impl LogStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, at: Timestamp, mask: PolicyMask) -> Result<(), LogError> {
        if let Some(last) = self.entries.last() {
            if at <= last.at {
                return Err(LogError::OutOfOrder { last: last.at, new: at });
            }
        }
        self.entries.push(LogEntry { at, mask });
        Ok(())
    }

    /// Mask of the latest entry with `entry.at <= t`. Before the first
    /// entry, or on an empty log, this is 0.
    pub fn lookup(&self, t: Timestamp) -> PolicyMask {
        let after = self.entries.partition_point(|e| e.at <= t);
        match after {
            0 => PolicyMask::EMPTY,
            n => self.entries[n - 1].mask,
        }
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `<ISO-8601 timestamp> <mask>` lines. Blank lines and `#`
    /// comments are skipped.
    pub fn parse(text: &str) -> Result<Self, LogError> {
        let mut log = LogStore::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at_line = |message: String| LogError::Parse { line: idx + 1, message };
            let mut parts = line.split_whitespace();
            let (Some(ts), Some(mask), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(at_line("expected `<timestamp> <mask>`".to_string()));
            };
            let at = ts
                .parse::<Timestamp>()
                .map_err(|e: TimestampError| at_line(e.to_string()))?;
            let mask = mask
                .parse::<PolicyMask>()
                .map_err(|e: MaskError| at_line(e.to_string()))?;
            log.append(at, mask).map_err(|e| at_line(e.to_string()))?;
        }
        Ok(log)
    }
}

impl FromStr for LogStore {
    type Err = LogError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LogStore::parse(s)
    }
}

/// One `<timestamp> <decimal mask>` line per entry.
impl fmt::Display for LogStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "{} {}", e.at, e.mask)?;
        }
        Ok(())
    }
}
