use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{
    agreement_stats, AdjudicatedItem, AgreementStats, AnnotateError, AnnotationRecord, DatasetRow,
    Decision, Item,
};
use crate::label::Label;

/// One line of the append-only log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LogEvent {
    Label(AnnotationRecord),
    Adjudication(AdjudicatedItem),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "label", rename_all = "lowercase")]
pub enum ItemStatus {
    /// Some assigned annotators have not labeled the item yet.
    Pending,
    Unanimous(Label),
    Conflict,
    Resolved(Option<Label>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub item_id: String,
    pub text: String,
    pub labels: Vec<AnnotationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    pub annotator_a: String,
    pub annotator_b: String,
    pub stats: AgreementStats,
}

/// Items, their assignments and the label log, optionally mirrored to a
/// JSONL file. Not internally synchronised; callers that share a store
/// across threads wrap it in a lock, which also makes the
/// (item, annotator, round) uniqueness check atomic.
#[derive(Debug, Default)]
pub struct AnnotationStore {
    items: BTreeMap<String, Item>,
    assignments: BTreeMap<String, Vec<String>>,
    records: Vec<AnnotationRecord>,
    adjudications: BTreeMap<String, AdjudicatedItem>,
    submissions: HashMap<String, usize>,
    log: Option<(PathBuf, File)>,
}

impl AnnotationStore {
    /// In-memory store. Assignments for unknown items are ignored.
    pub fn new(items: Vec<Item>, assignments: BTreeMap<String, Vec<String>>) -> Self {
        let items: BTreeMap<String, Item> = items.into_iter().map(|i| (i.id.clone(), i)).collect();
        let assignments = assignments.into_iter().filter(|(id, _)| items.contains_key(id)).collect();
        AnnotationStore {
            items,
            assignments,
            ..Default::default()
        }
    }

    /// Store backed by `log_path`: existing events are replayed, new ones
    /// are appended.
    pub fn open(
        items: Vec<Item>,
        assignments: BTreeMap<String, Vec<String>>,
        log_path: &Path,
    ) -> Result<Self, AnnotateError> {
        let mut store = Self::new(items, assignments);
        let io_err = |source| AnnotateError::Io {
            path: log_path.display().to_string(),
            source,
        };
        if log_path.exists() {
            let reader = BufReader::new(File::open(log_path).map_err(io_err)?);
            for (idx, line) in reader.lines().enumerate() {
                let line = line.map_err(io_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let event: LogEvent = serde_json::from_str(&line).map_err(|e| AnnotateError::Log {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
                store.apply(event).map_err(|e| AnnotateError::Log {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(log_path).map_err(io_err)?;
        store.log = Some((log_path.to_path_buf(), file));
        Ok(store)
    }

    fn append(&mut self, event: &LogEvent) -> Result<(), AnnotateError> {
        if let Some((path, file)) = &mut self.log {
            let mut line = serde_json::to_string(event).expect("events serialise");
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|source| AnnotateError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
        }
        Ok(())
    }

    fn apply(&mut self, event: LogEvent) -> Result<(), AnnotateError> {
        match event {
            LogEvent::Label(r) => {
                self.check_label(&r)?;
                if let Some(s) = &r.submission_id {
                    self.submissions.insert(s.clone(), self.records.len());
                }
                self.records.push(r);
            }
            LogEvent::Adjudication(a) => {
                self.check_adjudication(&a.item_id)?;
                self.adjudications.insert(a.item_id.clone(), a);
            }
        }
        Ok(())
    }

    fn check_label(&self, r: &AnnotationRecord) -> Result<(), AnnotateError> {
        if !self.items.contains_key(&r.item_id) {
            return Err(AnnotateError::UnknownItem(r.item_id.clone()));
        }
        if !self.is_assigned(&r.item_id, &r.annotator_id) {
            return Err(AnnotateError::Unauthorized {
                item: r.item_id.clone(),
                annotator: r.annotator_id.clone(),
            });
        }
        if r.label.is_none() && !r.insufficient_context {
            return Err(AnnotateError::MissingLabel);
        }
        if self.records.iter().any(|x| {
            x.item_id == r.item_id && x.annotator_id == r.annotator_id && x.round == r.round
        }) {
            return Err(AnnotateError::Conflict(format!(
                "`{}` already labeled `{}` in round {}",
                r.annotator_id, r.item_id, r.round
            )));
        }
        Ok(())
    }

    fn check_adjudication(&self, item_id: &str) -> Result<(), AnnotateError> {
        if !self.items.contains_key(item_id) {
            return Err(AnnotateError::UnknownItem(item_id.to_string()));
        }
        if self.adjudications.contains_key(item_id) {
            return Err(AnnotateError::Conflict(format!("`{item_id}` is already adjudicated")));
        }
        if self.raw_status(item_id) == ItemStatus::Pending {
            return Err(AnnotateError::NotReady(item_id.to_string()));
        }
        Ok(())
    }

    pub fn items(&self) -> impl Iterator<Item = &Item> {
        self.items.values()
    }

    pub fn item(&self, id: &str) -> Option<&Item> {
        self.items.get(id)
    }

    pub fn assignments(&self) -> &BTreeMap<String, Vec<String>> {
        &self.assignments
    }

    pub fn records(&self) -> &[AnnotationRecord] {
        &self.records
    }

    pub fn is_assigned(&self, item_id: &str, annotator: &str) -> bool {
        self.assignments
            .get(item_id)
            .is_some_and(|a| a.iter().any(|x| x == annotator))
    }

    /// Record a label. Repeating a request with the same `submission_id`
    /// returns the stored record instead of failing, so client retries are
    /// safe.
    #[allow(clippy::too_many_arguments)]
    pub fn record_label(
        &mut self,
        item_id: &str,
        annotator_id: &str,
        label: Option<Label>,
        insufficient_context: bool,
        round: u32,
        submission_id: Option<&str>,
        now: DateTime<Utc>,
    ) -> Result<AnnotationRecord, AnnotateError> {
        if let Some(sid) = submission_id {
            if let Some(&idx) = self.submissions.get(sid) {
                let prev = &self.records[idx];
                if prev.item_id == item_id && prev.annotator_id == annotator_id {
                    return Ok(prev.clone());
                }
                return Err(AnnotateError::Conflict(format!(
                    "submission id `{sid}` was used for another label"
                )));
            }
        }
        let record = AnnotationRecord {
            item_id: item_id.to_string(),
            annotator_id: annotator_id.to_string(),
            round,
            label,
            insufficient_context,
            timestamp: now,
            submission_id: submission_id.map(String::from),
        };
        self.check_label(&record)?;
        let event = LogEvent::Label(record.clone());
        self.append(&event)?;
        self.apply(event)?;
        Ok(record)
    }

    /// Latest-round record of each assigned annotator for `item_id`.
    pub fn latest_labels(&self, item_id: &str) -> Vec<AnnotationRecord> {
        let mut latest: BTreeMap<&str, &AnnotationRecord> = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.item_id == item_id) {
            let slot = latest.entry(r.annotator_id.as_str()).or_insert(r);
            if r.round > slot.round {
                *slot = r;
            }
        }
        latest.into_values().cloned().collect()
    }

    fn raw_status(&self, item_id: &str) -> ItemStatus {
        let assigned = self.assignments.get(item_id).map_or(0, Vec::len);
        let labels = self.latest_labels(item_id);
        if assigned == 0 || labels.len() < assigned {
            return ItemStatus::Pending;
        }
        let first = labels[0].label;
        let unanimous = labels.iter().all(|r| !r.insufficient_context && r.label == first);
        match first {
            Some(l) if unanimous => ItemStatus::Unanimous(l),
            _ => ItemStatus::Conflict,
        }
    }

    pub fn status(&self, item_id: &str) -> ItemStatus {
        match self.adjudications.get(item_id) {
            Some(a) => ItemStatus::Resolved(a.final_label),
            None => self.raw_status(item_id),
        }
    }

    /// First assigned item (by id) the annotator has not labeled yet.
    pub fn next_item(&self, annotator: &str) -> Option<&Item> {
        self.assignments
            .iter()
            .filter(|(_, anns)| anns.iter().any(|a| a == annotator))
            .map(|(id, _)| id)
            .find(|id| !self.records.iter().any(|r| &r.item_id == *id && r.annotator_id == annotator))
            .and_then(|id| self.items.get(id))
    }

    /// Progress of one annotator: (labeled, assigned).
    pub fn progress(&self, annotator: &str) -> (usize, usize) {
        let assigned: Vec<&String> = self
            .assignments
            .iter()
            .filter(|(_, a)| a.iter().any(|x| x == annotator))
            .map(|(id, _)| id)
            .collect();
        let done = assigned
            .iter()
            .filter(|id| self.records.iter().any(|r| &&r.item_id == *id && r.annotator_id == annotator))
            .count();
        (done, assigned.len())
    }

    /// Fully annotated items whose labels differ or carry an
    /// insufficient-context flag, not yet adjudicated, ordered by id.
    pub fn disagreement_queue(&self) -> Vec<QueueEntry> {
        self.items
            .values()
            .filter(|i| self.status(&i.id) == ItemStatus::Conflict)
            .map(|i| QueueEntry {
                item_id: i.id.clone(),
                text: i.text.clone(),
                labels: self.latest_labels(&i.id),
            })
            .collect()
    }

    /// Settle an item. Conflicts need a decision; unanimous items may be
    /// overridden once. A second adjudication of the same item is a
    /// conflict.
    pub fn adjudicate(
        &mut self,
        item_id: &str,
        decision: Decision,
        note: &str,
    ) -> Result<AdjudicatedItem, AnnotateError> {
        self.check_adjudication(item_id)?;
        let adj = AdjudicatedItem {
            item_id: item_id.to_string(),
            final_label: match decision {
                Decision::Label(l) => Some(l),
                Decision::Remove => None,
            },
            removed: decision == Decision::Remove,
            resolution_note: note.to_string(),
            automatic: false,
        };
        let event = LogEvent::Adjudication(adj.clone());
        self.append(&event)?;
        self.apply(event)?;
        Ok(adj)
    }

    /// The outcome for an item: its explicit adjudication, or the shared
    /// label for unanimous items.
    pub fn resolution(&self, item_id: &str) -> Option<AdjudicatedItem> {
        if let Some(a) = self.adjudications.get(item_id) {
            return Some(a.clone());
        }
        match self.raw_status(item_id) {
            ItemStatus::Unanimous(l) => Some(AdjudicatedItem {
                item_id: item_id.to_string(),
                final_label: Some(l),
                removed: false,
                resolution_note: String::new(),
                automatic: true,
            }),
            _ => None,
        }
    }

    /// Final dataset rows, ordered by id. Fails listing every item without
    /// a resolution.
    pub fn export(&self) -> Result<Vec<DatasetRow>, AnnotateError> {
        let mut missing = Vec::new();
        let mut rows = Vec::new();
        for item in self.items.values() {
            match self.resolution(&item.id) {
                None => missing.push(item.id.clone()),
                Some(a) if a.removed => {}
                Some(a) => rows.push(DatasetRow {
                    id: item.id.clone(),
                    text: item.text.clone(),
                    region: item.region,
                    topic_id: item.topic_id,
                    month: item.month,
                    label: a.final_label.expect("non-removed items carry a label"),
                    created_at: item.created_at,
                }),
            }
        }
        if missing.is_empty() {
            Ok(rows)
        } else {
            Err(AnnotateError::Unadjudicated(missing))
        }
    }

    pub fn removed_count(&self) -> usize {
        self.adjudications.values().filter(|a| a.removed).count()
    }

    /// Agreement between two annotators over items both labeled (latest
    /// round) without an insufficient-context flag.
    pub fn agreement_between(&self, a: &str, b: &str) -> Result<AgreementStats, AnnotateError> {
        let mut pairs = Vec::new();
        for item in self.items.keys() {
            let labels = self.latest_labels(item);
            let la = labels.iter().find(|r| r.annotator_id == a);
            let lb = labels.iter().find(|r| r.annotator_id == b);
            if let (Some(x), Some(y)) = (la, lb) {
                if let (Some(p), Some(q), false, false) =
                    (x.label, y.label, x.insufficient_context, y.insufficient_context)
                {
                    pairs.push((p, q));
                }
            }
        }
        agreement_stats(&pairs)
    }

    /// Agreement for every annotator pair that shares labeled items.
    pub fn pairwise_agreement(&self) -> Vec<PairAgreement> {
        let mut annotators: Vec<&str> = self.assignments.values().flatten().map(String::as_str).collect();
        annotators.sort_unstable();
        annotators.dedup();
        let mut out = Vec::new();
        for (i, a) in annotators.iter().enumerate() {
            for b in &annotators[i + 1..] {
                if let Ok(stats) = self.agreement_between(a, b) {
                    out.push(PairAgreement {
                        annotator_a: a.to_string(),
                        annotator_b: b.to_string(),
                        stats,
                    });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::assign_items;
    use crate::label::ClassSet;
    use crate::geo::Region;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn now() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap()
    }

    fn store(n: usize) -> AnnotationStore {
        let items: Vec<Item> = (0..n)
            .map(|i| Item {
                id: format!("t{i:02}"),
                text: format!("text {i}"),
                region: Region::ALL[i % 6],
                topic_id: Some(5),
                month: Some((i % 3) as u32),
                created_at: None,
            })
            .collect();
        let ids: Vec<String> = items.iter().map(|i| i.id.clone()).collect();
        let assign = assign_items(&ids, &["ann1".into(), "ann2".into()], 2, 7).unwrap();
        AnnotationStore::new(items, assign)
    }

    fn label(s: &mut AnnotationStore, item: &str, ann: &str, l: Label) -> Result<AnnotationRecord, AnnotateError> {
        s.record_label(item, ann, Some(l), false, 1, None, now())
    }

    #[test]
    fn record_rules() {
        let mut s = store(2);
        label(&mut s, "t00", "ann1", Label::Direct).unwrap();
        assert!(matches!(label(&mut s, "t00", "ann1", Label::None), Err(AnnotateError::Conflict(_))));
        assert!(matches!(label(&mut s, "t00", "ann3", Label::None), Err(AnnotateError::Unauthorized { .. })));
        assert!(matches!(label(&mut s, "zz", "ann1", Label::None), Err(AnnotateError::UnknownItem(_))));
        assert!(matches!(
            s.record_label("t01", "ann1", None, false, 1, None, now()),
            Err(AnnotateError::MissingLabel)
        ));
        // a later round is a separate slot
        s.record_label("t00", "ann1", Some(Label::None), false, 2, None, now()).unwrap();
    }

    #[test]
    fn submission_ids_are_idempotent() {
        let mut s = store(2);
        let a = s.record_label("t00", "ann1", Some(Label::Direct), false, 1, Some("x1"), now()).unwrap();
        let b = s.record_label("t00", "ann1", Some(Label::Direct), false, 1, Some("x1"), now()).unwrap();
        assert_eq!(a, b);
        assert_eq!(s.records().len(), 1);
        assert!(s.record_label("t01", "ann1", Some(Label::Direct), false, 1, Some("x1"), now()).is_err());
    }

    #[test]
    fn queue_adjudication_export() {
        let mut s = store(3);
        assert!(matches!(s.export(), Err(AnnotateError::Unadjudicated(v)) if v.len() == 3));
        for (item, a, b) in [
            ("t00", Label::Direct, Label::Direct),
            ("t01", Label::Direct, Label::Reporting),
            ("t02", Label::None, Label::None),
        ] {
            label(&mut s, item, "ann1", a).unwrap();
            label(&mut s, item, "ann2", b).unwrap();
        }
        s.record_label("t02", "ann1", None, true, 2, None, now()).unwrap();
        let q: Vec<String> = s.disagreement_queue().into_iter().map(|e| e.item_id).collect();
        assert_eq!(q, ["t01", "t02"]);
        assert_eq!(s.resolution("t00").unwrap().final_label, Some(Label::Direct));

        let r = s.adjudicate("t01", Decision::Label(Label::Reporting), "speaker quotes others").unwrap();
        assert_eq!(r.final_label, Some(Label::Reporting));
        assert!(matches!(s.adjudicate("t01", Decision::Remove, ""), Err(AnnotateError::Conflict(_))));
        s.adjudicate("t02", Decision::Remove, "no context").unwrap();
        assert!(s.disagreement_queue().is_empty());

        let rows = s.export().unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows.len(), s.items().count() - s.removed_count());
        assert_eq!(rows[1].label, Label::Reporting);

        // unanimous items can be overridden once
        s.adjudicate("t00", Decision::Label(Label::Reporting), "").unwrap();
        assert_eq!(s.export().unwrap()[0].label, Label::Reporting);
    }

    #[test]
    fn not_ready_cannot_be_adjudicated() {
        let mut s = store(1);
        label(&mut s, "t00", "ann1", Label::Direct).unwrap();
        assert!(matches!(s.adjudicate("t00", Decision::Remove, ""), Err(AnnotateError::NotReady(_))));
    }

    #[test]
    fn next_item_and_progress() {
        let mut s = store(2);
        assert_eq!(s.next_item("ann1").unwrap().id, "t00");
        label(&mut s, "t00", "ann1", Label::None).unwrap();
        assert_eq!(s.next_item("ann1").unwrap().id, "t01");
        assert_eq!(s.progress("ann1"), (1, 2));
        label(&mut s, "t01", "ann1", Label::None).unwrap();
        assert!(s.next_item("ann1").is_none());
        assert!(s.next_item("nobody").is_none());
    }

    #[test]
    fn log_replay_restores_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.jsonl");
        let base = store(3);
        let items: Vec<Item> = base.items().cloned().collect();
        let assign = base.assignments().clone();
        {
            let mut s = AnnotationStore::open(items.clone(), assign.clone(), &path).unwrap();
            label(&mut s, "t00", "ann1", Label::Direct).unwrap();
            label(&mut s, "t00", "ann2", Label::None).unwrap();
            s.adjudicate("t00", Decision::Label(Label::None), "").unwrap();
        }
        let mut s = AnnotationStore::open(items, assign, &path).unwrap();
        assert_eq!(s.records().len(), 2);
        assert_eq!(s.status("t00"), ItemStatus::Resolved(Some(Label::None)));
        assert!(matches!(label(&mut s, "t00", "ann1", Label::Direct), Err(AnnotateError::Conflict(_))));
        let lines = std::fs::read_to_string(&path).unwrap().lines().count();
        assert_eq!(lines, 3);
    }

    proptest! {
        #[test]
        fn queue_matches_brute_force(labels in prop::collection::vec((0usize..3, 0usize..3, prop::bool::weighted(0.1)), 1..40)) {
            let mut s = store(labels.len());
            let mut expected = 0;
            for (i, (a, b, flag)) in labels.iter().enumerate() {
                let id = format!("t{i:02}");
                s.record_label(&id, "ann1", Some(Label::ALL[*a]), *flag, 1, None, now()).unwrap();
                label(&mut s, &id, "ann2", Label::ALL[*b]).unwrap();
                if a != b || *flag {
                    expected += 1;
                }
            }
            prop_assert_eq!(s.disagreement_queue().len(), expected);
            let stats = s.agreement_between("ann1", "ann2");
            let clean: Vec<_> = labels.iter().filter(|x| !x.2).collect();
            if clean.is_empty() {
                prop_assert!(stats.is_err());
            } else {
                let agree = clean.iter().filter(|x| x.0 == x.1).count() as f64 / clean.len() as f64;
                prop_assert!((stats.unwrap().percent_agreement - agree).abs() < 1e-12);
            }
        }
    }
}
