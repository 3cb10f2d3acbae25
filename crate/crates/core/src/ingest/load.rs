use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde_json::Value;

use super::{IngestError, PostRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordFormat {
    #[default]
    Jsonl,
    Csv,
}

impl std::str::FromStr for RecordFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" => Ok(RecordFormat::Jsonl),
            "csv" => Ok(RecordFormat::Csv),
            other => Err(format!("unknown record format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Abort on the first record missing a required field instead of
    /// skipping it with a warning.
    pub fail_fast: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct LoadWarning {
    pub line: usize,
    pub field: &'static str,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOutcome {
    pub records: Vec<PostRecord>,
    pub warnings: Vec<LoadWarning>,
}

const REQUIRED: [&str; 3] = ["id", "text", "created_at"];

/// Parse a timestamp in RFC 3339, `YYYY-MM-DD HH:MM:SS` (UTC), or the
/// legacy Twitter `created_at` layout.
pub fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if let Ok(ts) = DateTime::parse_from_rfc3339(raw) {
        return Some(ts.with_timezone(&Utc));
    }
    if let Ok(ts) = DateTime::parse_from_str(raw, "%a %b %d %H:%M:%S %z %Y") {
        return Some(ts.with_timezone(&Utc));
    }
    for layout in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(raw, layout) {
            return Some(naive.and_utc());
        }
    }
    None
}

pub fn load_records(
    path: &Path,
    format: RecordFormat,
    opts: LoadOptions,
) -> Result<LoadOutcome, IngestError> {
    let io_err = |source| IngestError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut buf = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut buf))
        .map_err(io_err)?;
    match format {
        RecordFormat::Jsonl => parse_jsonl(&buf, opts),
        RecordFormat::Csv => parse_csv(buf.as_bytes(), opts),
    }
}

struct Collector {
    opts: LoadOptions,
    seen: HashSet<String>,
    out: LoadOutcome,
}

impl Collector {
    fn new(opts: LoadOptions) -> Self {
        Collector {
            opts,
            seen: HashSet::new(),
            out: LoadOutcome::default(),
        }
    }

    fn missing(&mut self, line: usize, field: &'static str) -> Result<(), IngestError> {
        if self.opts.fail_fast {
            return Err(IngestError::MissingField { line, field });
        }
        log::warn!("line {line}: skipping record without `{field}`");
        self.out.warnings.push(LoadWarning { line, field });
        Ok(())
    }

    fn push(&mut self, line: usize, record: PostRecord) -> Result<(), IngestError> {
        if !self.seen.insert(record.id.clone()) {
            return Err(IngestError::DuplicateId {
                line,
                id: record.id,
            });
        }
        self.out.records.push(record);
        Ok(())
    }
}

/// Parse newline-delimited JSON records. Blank lines are ignored.
pub fn parse_jsonl(input: &str, opts: LoadOptions) -> Result<LoadOutcome, IngestError> {
    let mut collector = Collector::new(opts);
    for (idx, raw_line) in input.lines().enumerate() {
        let line = idx + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw_line).map_err(|e| IngestError::Malformed {
            line,
            message: e.to_string(),
        })?;
        let Value::Object(mut obj) = value else {
            return Err(IngestError::Malformed {
                line,
                message: "expected a JSON object".into(),
            });
        };
        if let Some(field) = REQUIRED.iter().find(|f| missing_json(obj.get(**f), f)) {
            collector.missing(line, field)?;
            continue;
        }
        let ts_raw = obj
            .get("created_at")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        let ts = parse_timestamp(&ts_raw).ok_or_else(|| IngestError::Malformed {
            line,
            message: format!("unparseable created_at `{ts_raw}`"),
        })?;
        obj.insert("created_at".into(), Value::String(ts.to_rfc3339()));
        let record: PostRecord =
            serde_json::from_value(Value::Object(obj)).map_err(|e| IngestError::Malformed {
                line,
                message: e.to_string(),
            })?;
        collector.push(line, record)?;
    }
    Ok(collector.out)
}

fn missing_json(value: Option<&Value>, field: &str) -> bool {
    match value {
        None | Some(Value::Null) => true,
        Some(Value::String(s)) => field != "text" && s.trim().is_empty(),
        Some(_) => false,
    }
}

/// Parse CSV records with a header row naming the record fields.
pub fn parse_csv<R: Read>(reader: R, opts: LoadOptions) -> Result<LoadOutcome, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| IngestError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_col = col("id");
    let text_col = col("text");
    let ts_col = col("created_at");
    let place_col = col("place_country");
    let loc_col = col("user_location_raw").or_else(|| col("user_location"));
    let user_col = col("user_name");
    let screen_col = col("screen_name");
    let rt_col = col("is_retweet");

    let mut collector = Collector::new(opts);
    for row in rdr.records() {
        let row = row.map_err(|e| IngestError::Malformed {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let get = |c: Option<usize>| c.and_then(|i| row.get(i));
        let id = get(id_col).map(str::trim).filter(|s| !s.is_empty());
        let text = get(text_col);
        let ts_raw = get(ts_col).map(str::trim).filter(|s| !s.is_empty());
        let (Some(id), Some(text), Some(ts_raw)) = (id, text, ts_raw) else {
            let field = if id.is_none() {
                "id"
            } else if text.is_none() {
                "text"
            } else {
                "created_at"
            };
            collector.missing(line, field)?;
            continue;
        };
        let created_at = parse_timestamp(ts_raw).ok_or_else(|| IngestError::Malformed {
            line,
            message: format!("unparseable created_at `{ts_raw}`"),
        })?;
        let optional = |c: Option<usize>| {
            get(c)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
        };
        let is_retweet = match get(rt_col).map(|s| s.trim().to_ascii_lowercase()) {
            None => false,
            Some(v) => match v.as_str() {
                "" | "false" | "0" | "no" => false,
                "true" | "1" | "yes" => true,
                other => {
                    return Err(IngestError::Malformed {
                        line,
                        message: format!("is_retweet must be boolean, got `{other}`"),
                    })
                }
            },
        };
        let mut record = PostRecord::new(id, text, created_at);
        record.place_country = optional(place_col);
        record.user_location_raw = optional(loc_col);
        record.user_name = get(user_col).unwrap_or_default().to_string();
        record.screen_name = get(screen_col).unwrap_or_default().to_string();
        record.is_retweet = is_retweet;
        collector.push(line, record)?;
    }
    Ok(collector.out)
}

/// Write records as JSONL, one object per line, in slice order.
pub fn write_jsonl<W: Write>(mut out: W, records: &[PostRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
