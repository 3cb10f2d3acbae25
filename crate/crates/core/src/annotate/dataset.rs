use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::AnnotateError;
use crate::geo::Region;
use crate::ingest::parse_timestamp;
use crate::label::{ClassSet, Label};

/// One row of the final labeled dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub id: String,
    pub text: String,
    pub region: Region,
    pub topic_id: Option<i32>,
    pub month: Option<u32>,
    pub label: Label,
    pub created_at: Option<DateTime<Utc>>,
}

pub const EXPORT_COLUMNS: [&str; 7] = ["id", "text", "region", "topic_id", "month", "label", "created_at"];

/// Write rows as CSV with the fixed export header. Timestamps use RFC 3339
/// with a `Z` suffix so the output is byte-stable.
pub fn write_dataset<W: Write>(out: W, rows: &[DatasetRow]) -> Result<(), AnnotateError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EXPORT_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.id.clone(),
            r.text.clone(),
            r.region.key().to_string(),
            r.topic_id.map(|t| t.to_string()).unwrap_or_default(),
            r.month.map(|m| m.to_string()).unwrap_or_default(),
            r.label.name().to_string(),
            r.created_at
                .map(|t| t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
                .unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn find(headers: &csv::StringRecord, names: &[&str]) -> Option<usize> {
    headers
        .iter()
        .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
}

/// Read a labeled dataset. Besides the export header, common alternative
/// column names are accepted (`tweet_id`, `tweet`, `class`, `timestamp`,
/// `topic`). `id`, `text` and `label` are required; a missing or
/// unrecognised region becomes `Other`.
pub fn read_dataset<R: Read>(input: R) -> Result<Vec<DatasetRow>, AnnotateError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    let required = |names: &[&str], field: &'static str| {
        find(&headers, names).ok_or(AnnotateError::MissingColumn(field))
    };
    let id_col = required(&["id", "tweet_id", "item_id"], "id")?;
    let text_col = required(&["text", "tweet", "masked_text"], "text")?;
    let label_col = required(&["label", "class", "final_label", "gold"], "label")?;
    let region_col = find(&headers, &["region"]);
    let topic_col = find(&headers, &["topic_id", "topic"]);
    let month_col = find(&headers, &["month"]);
    let time_col = find(&headers, &["created_at", "timestamp", "date"]);

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let get = |c: Option<usize>| c.and_then(|c| rec.get(c)).map(str::trim).filter(|s| !s.is_empty());
        let bad = |message: String| AnnotateError::BadRow { line, message };
        let id = get(Some(id_col)).ok_or_else(|| bad("empty id".into()))?;
        let label: Label = get(Some(label_col))
            .ok_or_else(|| bad("empty label".into()))?
            .parse()
            .map_err(|e: crate::label::UnknownLabel| bad(e.to_string()))?;
        let topic_id = get(topic_col)
            .map(|t| t.parse().map_err(|_| bad(format!("bad topic `{t}`"))))
            .transpose()?;
        let month = get(month_col)
            .map(|t| t.parse().map_err(|_| bad(format!("bad month `{t}`"))))
            .transpose()?;
        let created_at = get(time_col)
            .map(|t| parse_timestamp(t).ok_or_else(|| bad(format!("bad timestamp `{t}`"))))
            .transpose()?;
        rows.push(DatasetRow {
            id: id.to_string(),
            text: rec.get(text_col).unwrap_or("").to_string(),
            region: get(region_col).and_then(|r| r.parse().ok()).unwrap_or(Region::Other),
            topic_id,
            month,
            label,
            created_at,
        });
    }
    Ok(rows)
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetRow>, AnnotateError> {
    let f = std::fs::File::open(path).map_err(|source| AnnotateError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset(f)
}

pub fn class_counts(rows: &[DatasetRow]) -> BTreeMap<Label, usize> {
    let mut counts: BTreeMap<Label, usize> = Label::ALL.iter().map(|l| (*l, 0)).collect();
    for r in rows {
        *counts.entry(r.label).or_default() += 1;
    }
    counts
}

/// Label counts per region, every region and label present.
pub fn region_class_counts(rows: &[DatasetRow]) -> BTreeMap<Region, BTreeMap<Label, usize>> {
    let mut out: BTreeMap<Region, BTreeMap<Label, usize>> = Region::ALL
        .iter()
        .map(|r| (*r, Label::ALL.iter().map(|l| (*l, 0)).collect()))
        .collect();
    for r in rows {
        *out.entry(r.region).or_default().entry(r.label).or_default() += 1;
    }
    out
}
