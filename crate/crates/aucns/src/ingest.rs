//! Rating file readers for the MovieLens and Yahoo! R3 layouts.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use aucns_core::dataset::{RatingTable, RawRating};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// `user<TAB>item<TAB>rating<TAB>timestamp` (MovieLens 100K `u.data`).
    Ml100k,
    /// `user::item::rating::timestamp` (MovieLens 1M `ratings.dat`).
    Ml1m,
    /// `user<TAB>item<TAB>rating`.
    YahooR3,
}

impl DatasetFormat {
    fn delimiter(self) -> &'static str {
        match self {
            DatasetFormat::Ml100k | DatasetFormat::YahooR3 => "\t",
            DatasetFormat::Ml1m => "::",
        }
    }

    fn has_timestamp(self) -> bool {
        !matches!(self, DatasetFormat::YahooR3)
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetFormat::Ml100k => "ml100k",
            DatasetFormat::Ml1m => "ml1m",
            DatasetFormat::YahooR3 => "yahoo_r3",
        })
    }
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ml100k" => Ok(DatasetFormat::Ml100k),
            "ml1m" => Ok(DatasetFormat::Ml1m),
            "yahoo_r3" => Ok(DatasetFormat::YahooR3),
            _ => Err(format!("unknown dataset format `{s}` (expected ml100k, ml1m or yahoo_r3)")),
        }
    }
}

/// Parses one line. Returns `None` for blank lines.
pub fn parse_line(line: &str, format: DatasetFormat) -> std::result::Result<Option<RawRating>, String> {
    let line = line.trim_end_matches('\r');
    if line.trim().is_empty() {
        return Ok(None);
    }
    let fields: Vec<&str> = line.split(format.delimiter()).collect();
    let expected = if format.has_timestamp() { 4 } else { 3 };
    if fields.len() != expected {
        return Err(format!("expected {expected} fields, found {}", fields.len()));
    }
    let int = |name: &str, s: &str| s.trim().parse::<u64>().map_err(|e| format!("bad {name} `{s}`: {e}"));
    let user = int("user id", fields[0])?;
    let item = int("item id", fields[1])?;
    let rating: f64 = fields[2].trim().parse().map_err(|e| format!("bad rating `{}`: {e}", fields[2]))?;
    if !rating.is_finite() {
        return Err(format!("rating `{}` is not finite", fields[2]));
    }
    let timestamp = if format.has_timestamp() {
        Some(fields[3].trim().parse::<i64>().map_err(|e| format!("bad timestamp `{}`: {e}", fields[3]))?)
    } else {
        None
    };
    Ok(Some(RawRating { user, item, rating, timestamp }))
}

/// Parses a whole file body; `path` only labels errors.
pub fn parse_ratings(text: &str, format: DatasetFormat, path: &Path) -> Result<Vec<RawRating>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        match parse_line(line, format) {
            Ok(Some(r)) => out.push(r),
            Ok(None) => {}
            Err(reason) => return Err(Error::Parse { path: path.to_path_buf(), line: n + 1, reason }),
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyFile { path: path.to_path_buf() });
    }
    Ok(out)
}

/// Reads a rating file and re-indexes users and items densely.
pub fn load_ratings(path: &Path, format: DatasetFormat) -> Result<RatingTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw = parse_ratings(&text, format, path)?;
    Ok(RatingTable::from_raw(&raw)?)
}
