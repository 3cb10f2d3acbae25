use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::PostRecord;

/// How the `bot` account rule is applied to user and screen names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BotMatch {
    /// Case-insensitive substring: `NewsBot_Daily` and `abbott` both match.
    #[default]
    Substring,
    /// `bot` must be a whole word after splitting on non-alphanumerics and
    /// lower→upper case changes: `NewsBot_Daily` matches, `abbott` does not.
    Token,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default)]
    pub bot_match: BotMatch,
    #[serde(default = "default_max_hashtags")]
    pub max_hashtags: usize,
}

fn default_max_hashtags() -> usize {
    5
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            bot_match: BotMatch::Substring,
            max_hashtags: default_max_hashtags(),
        }
    }
}

/// Number of records removed by each rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionLog {
    pub retweet: usize,
    pub duplicate: usize,
    pub external_url: usize,
    pub too_many_hashtags: usize,
    pub bot_account: usize,
}

impl RejectionLog {
    pub fn total(&self) -> usize {
        self.retweet + self.duplicate + self.external_url + self.too_many_hashtags + self.bot_account
    }
}

#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    pub kept: Vec<PostRecord>,
    pub rejections: RejectionLog,
}

/// Count whitespace-delimited tokens that start with `#` and carry at least
/// one more character.
pub fn count_hashtags(text: &str) -> usize {
    text.split_whitespace()
        .filter(|tok| tok.len() > 1 && tok.starts_with('#'))
        .count()
}

fn dedup_key(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

fn has_external_url(text: &str) -> bool {
    let lower = text.to_ascii_lowercase();
    lower.contains("http://") || lower.contains("https://")
}

fn name_tokens(name: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut prev_lower = false;
    for ch in name.chars() {
        if !ch.is_alphanumeric() {
            if !cur.is_empty() {
                tokens.push(std::mem::take(&mut cur));
            }
            prev_lower = false;
            continue;
        }
        if ch.is_uppercase() && prev_lower && !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
        prev_lower = ch.is_lowercase() || ch.is_ascii_digit();
        cur.extend(ch.to_lowercase());
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

fn is_bot_name(name: &str, mode: BotMatch) -> bool {
    match mode {
        BotMatch::Substring => name.to_lowercase().contains("bot"),
        BotMatch::Token => name_tokens(name).iter().any(|t| t == "bot"),
    }
}

/// Apply the collection filters in a fixed order: retweets, duplicates
/// (case-folded, whitespace-collapsed, first occurrence kept), external
/// URLs, more than `max_hashtags` hashtags, `bot` in user or screen name.
///
/// Kept records get `hashtag_count` filled in.
pub fn filter_records(records: Vec<PostRecord>, cfg: &FilterConfig) -> FilterOutcome {
    let mut log = RejectionLog::default();
    let mut seen = HashSet::new();
    let mut kept = Vec::with_capacity(records.len());
    for mut record in records {
        if record.is_retweet {
            log.retweet += 1;
            continue;
        }
        if !seen.insert(dedup_key(&record.text)) {
            log.duplicate += 1;
            continue;
        }
        if has_external_url(&record.text) {
            log.external_url += 1;
            continue;
        }
        record.hashtag_count = count_hashtags(&record.text);
        if record.hashtag_count > cfg.max_hashtags {
            log.too_many_hashtags += 1;
            continue;
        }
        if is_bot_name(&record.user_name, cfg.bot_match)
            || is_bot_name(&record.screen_name, cfg.bot_match)
        {
            log.bot_account += 1;
            continue;
        }
        kept.push(record);
    }
    FilterOutcome {
        kept,
        rejections: log,
    }
}
