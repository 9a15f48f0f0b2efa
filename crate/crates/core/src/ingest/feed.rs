use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEED_COLUMNS: [&str; 4] = ["time_tx", "vehicle_id", "variable_id", "variable_value"];

/// One timestamped telemetry sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RawReading {
    pub time_tx: DateTime<Utc>,
    pub vehicle_id: String,
    pub variable_id: String,
    pub variable_value: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based line number in the source, header is line 1.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct FeedParse {
    pub readings: Vec<RawReading>,
    pub rejects: Vec<Reject>,
}

fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S%.f%:z") {
        return Some(t.with_timezone(&Utc));
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Some(t.with_timezone(&Utc));
    }
    // Naive timestamps are taken as UTC.
    NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S%.f")
        .ok()
        .map(|t| t.and_utc())
}

/// Parses a CSV telemetry feed with header `time_tx,vehicle_id,variable_id,variable_value`.
///
/// Malformed rows are skipped and reported; a missing or wrong header is fatal.
pub fn parse_feed<R: Read>(input: R) -> Result<FeedParse> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let header = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(Error::Format(format!("feed header: {e}"))),
    };
    let got: Vec<&str> = header.iter().collect();
    if got != FEED_COLUMNS {
        return Err(Error::Format(format!(
            "feed header must be {:?}, found {:?}",
            FEED_COLUMNS, got
        )));
    }

    let mut out = FeedParse::default();
    for (idx, row) in reader.records().enumerate() {
        let line = idx as u64 + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                out.rejects.push(Reject {
                    line,
                    reason: format!("unreadable row: {e}"),
                });
                continue;
            }
        };
        if row.len() != 4 {
            out.rejects.push(Reject {
                line,
                reason: format!("expected 4 fields, found {}", row.len()),
            });
            continue;
        }
        let Some(time_tx) = parse_timestamp(&row[0]) else {
            out.rejects.push(Reject {
                line,
                reason: format!("malformed timestamp {:?}", &row[0]),
            });
            continue;
        };
        let value = match row[3].parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => {
                out.rejects.push(Reject {
                    line,
                    reason: format!("non-numeric value {:?}", &row[3]),
                });
                continue;
            }
        };
        if row[1].is_empty() || row[2].is_empty() {
            out.rejects.push(Reject {
                line,
                reason: "empty vehicle_id or variable_id".into(),
            });
            continue;
        }
        out.readings.push(RawReading {
            time_tx,
            vehicle_id: row[1].to_string(),
            variable_id: row[2].to_string(),
            variable_value: value,
        });
    }
    Ok(out)
}

pub fn read_feed_file(path: &Path) -> Result<FeedParse> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_feed(std::io::BufReader::new(file))
}
