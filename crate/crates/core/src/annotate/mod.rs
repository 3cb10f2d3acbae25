//! Double annotation bookkeeping: assignment, an append-only label log,
//! agreement statistics, the disagreement queue, adjudication and export.

mod agreement;
mod dataset;
mod store;

use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::geo::Region;
use crate::hashing::keyed_hash;
use crate::label::Label;

pub use agreement::{agreement_stats, cohen_kappa, confusion_matrix, AgreementStats, Confusion};
pub use dataset::{
    class_counts, load_dataset, read_dataset, region_class_counts, write_dataset, DatasetRow,
    EXPORT_COLUMNS,
};
pub use store::{AnnotationStore, ItemStatus, LogEvent, PairAgreement, QueueEntry};

/// Annotator-facing guidelines, served as-is by the annotation server.
pub const GUIDELINES: &str = include_str!("../../data/guidelines.md");

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("annotator `{annotator}` is not assigned item `{item}`")]
    Unauthorized { item: String, annotator: String },
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("need at least {per_item} annotators, have {available}")]
    NotEnoughAnnotators { per_item: usize, available: usize },
    #[error("the two annotators share no labeled items")]
    EmptyOverlap,
    #[error("{} items are not adjudicated: {}", .0.len(), .0.join(", "))]
    Unadjudicated(Vec<String>),
    #[error("item `{0}` is still waiting for annotations")]
    NotReady(String),
    #[error("a label is required unless the item is flagged as lacking context")]
    MissingLabel,
    #[error("dataset has no `{0}` column")]
    MissingColumn(&'static str),
    #[error("dataset line {line}: {message}")]
    BadRow { line: usize, message: String },
    #[error("annotation log line {line}: {message}")]
    Log { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// An item put up for annotation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub text: String,
    pub region: Region,
    #[serde(default)]
    pub topic_id: Option<i32>,
    #[serde(default)]
    pub month: Option<u32>,
    #[serde(default)]
    pub created_at: Option<DateTime<Utc>>,
}

/// One annotator's decision on one item in one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub item_id: String,
    pub annotator_id: String,
    #[serde(default = "first_round")]
    pub round: u32,
    pub label: Option<Label>,
    #[serde(default)]
    pub insufficient_context: bool,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submission_id: Option<String>,
}

fn first_round() -> u32 {
    1
}

/// The resolved outcome for an item: a final label, or removal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjudicatedItem {
    pub item_id: String,
    pub final_label: Option<Label>,
    pub removed: bool,
    #[serde(default)]
    pub resolution_note: String,
    /// Set for unanimous items finalised without a human decision.
    #[serde(default)]
    pub automatic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", content = "label", rename_all = "lowercase")]
pub enum Decision {
    Label(Label),
    Remove,
}

/// Assign each item to `per_item` distinct annotators, always choosing the
/// least-loaded ones. Ties are broken by a keyed hash of (item, annotator),
/// so the result depends only on the inputs and `seed`, and loads never
/// differ by more than one.
pub fn assign_items(
    item_ids: &[String],
    annotators: &[String],
    per_item: usize,
    seed: u64,
) -> Result<BTreeMap<String, Vec<String>>, AnnotateError> {
    let mut unique: Vec<&str> = annotators.iter().map(String::as_str).collect();
    unique.sort_unstable();
    unique.dedup();
    if per_item == 0 || per_item > unique.len() {
        return Err(AnnotateError::NotEnoughAnnotators {
            per_item,
            available: unique.len(),
        });
    }
    let mut load: HashMap<&str, usize> = unique.iter().map(|a| (*a, 0)).collect();
    let mut out = BTreeMap::new();
    for item in item_ids {
        let mut ranked = unique.clone();
        ranked.sort_by_key(|a| (load[a], keyed_hash(seed, &[item, a]), *a));
        let chosen: Vec<String> = ranked.iter().take(per_item).map(|a| a.to_string()).collect();
        for a in &chosen {
            *load.get_mut(a.as_str()).expect("known annotator") += 1;
        }
        out.insert(item.clone(), chosen);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize, prefix: &str) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn loads(a: &BTreeMap<String, Vec<String>>) -> BTreeMap<String, usize> {
        let mut l = BTreeMap::new();
        for anns in a.values() {
            for x in anns {
                *l.entry(x.clone()).or_default() += 1;
            }
        }
        l
    }

    #[test]
    fn small_cases() {
        let a = assign_items(&ids(4, "i"), &ids(2, "a"), 2, 1).unwrap();
        assert!(a.values().all(|v| v.len() == 2));
        assert_eq!(loads(&a).values().copied().collect::<Vec<_>>(), [4, 4]);

        let a = assign_items(&ids(9, "i"), &ids(3, "a"), 2, 1).unwrap();
        assert_eq!(loads(&a).values().copied().collect::<Vec<_>>(), [6, 6, 6]);

        assert!(matches!(
            assign_items(&ids(1, "i"), &ids(2, "a"), 3, 1),
            Err(AnnotateError::NotEnoughAnnotators { .. })
        ));
    }

    proptest! {
        #[test]
        fn balanced_distinct_deterministic(n_items in 0usize..60, n_ann in 1usize..7, per in 1usize..4, seed in any::<u64>()) {
            prop_assume!(per <= n_ann);
            let items = ids(n_items, "i");
            let anns = ids(n_ann, "a");
            let a = assign_items(&items, &anns, per, seed).unwrap();
            prop_assert_eq!(&a, &assign_items(&items, &anns, per, seed).unwrap());
            for v in a.values() {
                let mut d = v.clone();
                d.sort();
                d.dedup();
                prop_assert_eq!(d.len(), per);
            }
            let mut l: Vec<usize> = anns.iter().map(|x| loads(&a).get(x).copied().unwrap_or(0)).collect();
            l.sort();
            prop_assert!(l.last().unwrap() - l[0] <= 1);
        }
    }
}
