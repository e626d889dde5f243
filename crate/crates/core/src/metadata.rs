//! Campaign metadata: the CSV inventory of recordings to process.
//!
//! Only the `filename` and `start_date` columns are read; anything else in the
//! file is ignored. Sample rate, bit depth and sample counts come from the WAV
//! headers themselves.

use std::collections::HashSet;

use chrono::{DateTime, SecondsFormat, Utc};

use crate::error::{Error, Result};

pub const FILENAME_COLUMN: &str = "filename";
pub const START_DATE_COLUMN: &str = "start_date";

/// One row of the metadata CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioFileDescriptor {
    pub name: String,
    pub start_instant: DateTime<Utc>,
}

/// Parses the metadata CSV, preserving row order.
pub fn parse_metadata(csv_text: &str) -> Result<Vec<AudioFileDescriptor>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| Error::MetadataSchema(format!("unreadable header row: {e}")))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MetadataSchema(format!("missing required column `{name}`")))
    };
    let name_col = column(FILENAME_COLUMN)?;
    let date_col = column(START_DATE_COLUMN)?;

    let mut seen = HashSet::new();
    let mut descriptors = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // header is line 1
        let row = i + 2;
        let record = record
            .map_err(|e| Error::MetadataSchema(format!("row {row}: malformed record: {e}")))?;
        let name = record.get(name_col).unwrap_or_default();
        let date = record.get(date_col).unwrap_or_default();
        if name.is_empty() {
            return Err(Error::MetadataSchema(format!("row {row}: empty filename")));
        }
        if !seen.insert(name.to_owned()) {
            return Err(Error::MetadataSchema(format!(
                "row {row}: duplicate filename {name:?}"
            )));
        }
        let start_instant = parse_timestamp(date).map_err(|e| match e {
            Error::TimestampFormat { text, reason, .. } => Error::TimestampFormat {
                row: Some(row),
                text,
                reason,
            },
            other => other,
        })?;
        descriptors.push(AudioFileDescriptor {
            name: name.to_owned(),
            start_instant,
        });
    }
    Ok(descriptors)
}

/// Parses an ISO-8601 instant carrying `Z` or a numeric offset, normalized to UTC.
///
/// Naive local times are rejected.
pub fn parse_timestamp(text: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(text.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::TimestampFormat {
            row: None,
            text: text.to_owned(),
            reason: format!("expected ISO-8601 with UTC designator or offset ({e})"),
        })
}

/// Formats an instant as ISO-8601 UTC with a `Z` suffix; sub-second digits only when non-zero.
pub fn format_iso8601(instant: &DateTime<Utc>) -> String {
    instant.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}
