use std::collections::BTreeMap;

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::annotate::DatasetRow;
use crate::geo::Region;
use crate::hashing::keyed_hash;
use crate::label::{ClassSet, Label};

/// Where to cut the timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cut {
    /// Two thirds of the way from the earliest to the latest timestamp.
    Auto,
    At(DateTime<Utc>),
}

/// Train rows are strictly before the cut, test rows at or after it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub cut_timestamp: DateTime<Utc>,
}

impl DatasetSplit {
    /// Check disjointness, coverage and temporal order against `rows`.
    pub fn check(&self, rows: &[DatasetRow]) -> Vec<String> {
        let mut problems = Vec::new();
        let by_id: BTreeMap<&str, &DatasetRow> = rows.iter().map(|r| (r.id.as_str(), r)).collect();
        let mut seen = BTreeMap::new();
        for (side, ids) in [("train", &self.train_ids), ("test", &self.test_ids)] {
            for id in ids {
                if seen.insert(id.as_str(), side).is_some() {
                    problems.push(format!("`{id}` appears twice"));
                }
                match by_id.get(id.as_str()).and_then(|r| r.created_at) {
                    None => problems.push(format!("`{id}` has no row or timestamp")),
                    Some(t) if side == "train" && t >= self.cut_timestamp => {
                        problems.push(format!("train `{id}` is not before the cut"))
                    }
                    Some(t) if side == "test" && t < self.cut_timestamp => {
                        problems.push(format!("test `{id}` is before the cut"))
                    }
                    Some(_) => {}
                }
            }
        }
        for id in by_id.keys() {
            if !seen.contains_key(id) {
                problems.push(format!("`{id}` is in neither side"));
            }
        }
        problems
    }
}

fn timestamps(rows: &[DatasetRow]) -> Result<Vec<DateTime<Utc>>, BenchError> {
    rows.iter()
        .map(|r| {
            r.created_at
                .ok_or_else(|| BenchError::Split(format!("row `{}` has no timestamp", r.id)))
        })
        .collect()
}

fn split_at(rows: &[DatasetRow], ts: &[DateTime<Utc>], cut: DateTime<Utc>) -> Result<DatasetSplit, BenchError> {
    let mut train_ids = Vec::new();
    let mut test_ids = Vec::new();
    for (r, t) in rows.iter().zip(ts) {
        if *t < cut {
            train_ids.push(r.id.clone());
        } else {
            test_ids.push(r.id.clone());
        }
    }
    if train_ids.is_empty() || test_ids.is_empty() {
        return Err(BenchError::Split(format!(
            "cut {cut} leaves {} train and {} test rows",
            train_ids.len(),
            test_ids.len()
        )));
    }
    Ok(DatasetSplit {
        train_ids,
        test_ids,
        cut_timestamp: cut,
    })
}

/// Split rows by time. Row order is preserved within each side.
pub fn chronological_split(rows: &[DatasetRow], cut: Cut) -> Result<DatasetSplit, BenchError> {
    let ts = timestamps(rows)?;
    let cut = match cut {
        Cut::At(t) => t,
        Cut::Auto => {
            let (Some(min), Some(max)) = (ts.iter().min(), ts.iter().max()) else {
                return Err(BenchError::Split("dataset is empty".into()));
            };
            let span = (*max - *min).num_milliseconds();
            *min + TimeDelta::milliseconds(span * 2 / 3)
        }
    };
    split_at(rows, &ts, cut)
}

/// Cut so that exactly `n_train` rows fall on the train side. Fails if
/// rows sharing a timestamp straddle that position.
pub fn split_by_train_size(rows: &[DatasetRow], n_train: usize) -> Result<DatasetSplit, BenchError> {
    let ts = timestamps(rows)?;
    if n_train == 0 || n_train >= rows.len() {
        return Err(BenchError::Split(format!(
            "train size {n_train} must be between 1 and {}",
            rows.len().saturating_sub(1)
        )));
    }
    let mut sorted = ts.clone();
    sorted.sort_unstable();
    if sorted[n_train - 1] == sorted[n_train] {
        return Err(BenchError::Split(format!(
            "rows {} and {} share timestamp {}; no cut gives {n_train} train rows",
            n_train,
            n_train + 1,
            sorted[n_train]
        )));
    }
    split_at(rows, &ts, sorted[n_train])
}

/// Label-stratified k folds. Within each class, ids are ordered by a keyed
/// hash and dealt round-robin; the fold pointer carries over between
/// classes so fold sizes differ by at most one.
pub fn kfold_split<C: ClassSet>(items: &[(String, C)], k: usize, seed: u64) -> Result<Vec<Vec<String>>, BenchError> {
    if k < 2 {
        return Err(BenchError::Split(format!("k must be at least 2, got {k}")));
    }
    if k > items.len() {
        return Err(BenchError::Split(format!("k = {k} exceeds {} items", items.len())));
    }
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in C::ALL {
        let mut ids: Vec<&str> = items.iter().filter(|(_, c)| c == class).map(|(id, _)| id.as_str()).collect();
        ids.sort_by_key(|id| (keyed_hash(seed, &[id]), *id));
        for id in ids {
            folds[next].push(id.to_string());
            next = (next + 1) % k;
        }
    }
    Ok(folds)
}

/// Hold out about `fraction` of `rows` for validation, stratified by
/// region and label. Returns (remaining ids, validation ids).
pub fn validation_split(rows: &[DatasetRow], fraction: f64, seed: u64) -> Result<(Vec<String>, Vec<String>), BenchError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(BenchError::Split(format!("validation fraction {fraction} not in [0, 1)")));
    }
    let mut groups: BTreeMap<(Region, Label), Vec<&str>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.region, r.label)).or_default().push(&r.id);
    }
    let mut held = std::collections::HashSet::new();
    for ids in groups.values_mut() {
        ids.sort_by_key(|id| (keyed_hash(seed, &["validation", id]), *id));
        let take = (ids.len() as f64 * fraction).round() as usize;
        held.extend(ids.iter().take(take).copied());
    }
    let (mut rest, mut val) = (Vec::new(), Vec::new());
    for r in rows {
        if held.contains(r.id.as_str()) {
            val.push(r.id.clone());
        } else {
            rest.push(r.id.clone());
        }
    }
    Ok((rest, val))
}
