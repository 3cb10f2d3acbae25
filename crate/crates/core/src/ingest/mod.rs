//! Post records: loading, rule-based filtering, query-term detection and
//! masking.

mod filter;
mod load;
mod mask;
mod terms;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::geo::Region;

pub use filter::{count_hashtags, filter_records, BotMatch, FilterConfig, FilterOutcome, RejectionLog};
pub use load::{
    load_records, parse_csv, parse_jsonl, parse_timestamp, write_jsonl, LoadOptions, LoadOutcome,
    LoadWarning, RecordFormat,
};
pub use mask::{mask_terms, DEFAULT_PLACEHOLDER};
pub use terms::{
    match_query_terms, match_query_terms_with, ClosedClassFollower, NounUsage, QueryTerm,
    QueryTermSet, TermMatch,
};

/// One social-media post, raw or processed.
///
/// `hashtag_count`, `matched_terms` and `masked_text` are derived by the
/// filter and masking steps. `region`, `topic_id` and `month` are tags added
/// by later pipeline stages and are omitted from JSON while unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub id: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub place_country: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_location_raw: Option<String>,
    #[serde(default)]
    pub user_name: String,
    #[serde(default)]
    pub screen_name: String,
    #[serde(default)]
    pub is_retweet: bool,
    #[serde(default)]
    pub hashtag_count: usize,
    #[serde(default)]
    pub matched_terms: Vec<String>,
    #[serde(default)]
    pub masked_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic_id: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub month: Option<u32>,
}

impl PostRecord {
    /// A record with only the required fields set.
    pub fn new(id: impl Into<String>, text: impl Into<String>, created_at: DateTime<Utc>) -> Self {
        PostRecord {
            id: id.into(),
            text: text.into(),
            created_at,
            place_country: None,
            user_location_raw: None,
            user_name: String::new(),
            screen_name: String::new(),
            is_retweet: false,
            hashtag_count: 0,
            matched_terms: Vec::new(),
            masked_text: String::new(),
            region: None,
            topic_id: None,
            month: None,
        }
    }

    /// The masked text if masking ran, otherwise the raw text.
    pub fn text_for_modeling(&self) -> &str {
        if self.masked_text.is_empty() {
            &self.text
        } else {
            &self.masked_text
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: duplicate record id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("invalid span {start}..{end} for text of {len} bytes")]
    InvalidSpan { start: usize, end: usize, len: usize },
    #[error("spans {first:?} and {second:?} overlap")]
    OverlappingSpans {
        first: (usize, usize),
        second: (usize, usize),
    },
}
