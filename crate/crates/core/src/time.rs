//! Timestamps used as record keys, log entry times and policy windows.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDateTime};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid ISO-8601 timestamp {0:?}")]
pub struct TimestampError(pub String);

/// A point in time without zone, rendered canonically as
/// `YYYY-MM-DDTHH:MM:SS[.fff]`. Inputs carrying a UTC offset are
/// normalized to UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(NaiveDateTime);

const CANONICAL: &str = "%Y-%m-%dT%H:%M:%S%.f";

impl Timestamp {
    pub fn new(inner: NaiveDateTime) -> Self {
        Timestamp(inner)
    }

    pub fn inner(&self) -> NaiveDateTime {
        self.0
    }

    pub fn plus_seconds(self, seconds: i64) -> Self {
        Timestamp(self.0 + Duration::seconds(seconds))
    }

    /// Canonical rendering; this is the byte key a timestamp hashes as.
    pub fn canonical(&self) -> String {
        self.0.format(CANONICAL).to_string()
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format(CANONICAL))
    }
}

impl FromStr for Timestamp {
    type Err = TimestampError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
            if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
                return Ok(Timestamp(t));
            }
        }
        DateTime::parse_from_rfc3339(s)
            .map(|t| Timestamp(t.naive_utc()))
            .map_err(|_| TimestampError(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_render() {
        let t: Timestamp = "2024-03-01T09:00:00".parse().unwrap();
        assert_eq!(t.to_string(), "2024-03-01T09:00:00");
        let spaced: Timestamp = "2024-03-01 09:00:00".parse().unwrap();
        assert_eq!(t, spaced);
        let zoned: Timestamp = "2024-03-01T10:00:00+01:00".parse().unwrap();
        assert_eq!(t, zoned);
        let frac: Timestamp = "2024-03-01T09:00:00.5".parse().unwrap();
        assert_eq!(frac.to_string(), "2024-03-01T09:00:00.500");
        assert_eq!(t.plus_seconds(3).to_string(), "2024-03-01T09:00:03");
    }

    #[test]
    fn rejects_garbage() {
        assert!("yesterday".parse::<Timestamp>().is_err());
        assert!("2024-13-01T00:00:00".parse::<Timestamp>().is_err());
    }
}
