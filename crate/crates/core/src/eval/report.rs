use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{weighted_metrics, ClassMetrics, Metrics};
use super::EvalError;
use crate::hashing::sha256_hex;
use crate::label::ClassSet;

/// Weighted F1 within one slice of the test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRow {
    pub slice: String,
    pub support: usize,
    pub accuracy: f64,
    pub f1: f64,
    /// Per-class F1 inside the slice, in class order.
    pub class_f1: Vec<f64>,
    /// Fewer than the requested minimum support.
    pub low_support: bool,
}

/// Weighted F1 per slice tag. Slices come back sorted by name.
pub fn slice_report<C: ClassSet>(
    gold: &[C],
    pred: &[C],
    tags: &[Option<String>],
    min_support: usize,
) -> Result<Vec<SliceRow>, EvalError> {
    if gold.len() != pred.len() || gold.len() != tags.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len().min(tags.len()),
        });
    }
    let mut groups: BTreeMap<&str, (Vec<C>, Vec<C>)> = BTreeMap::new();
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_deref().ok_or(EvalError::Untagged(i))?;
        let e = groups.entry(tag).or_default();
        e.0.push(gold[i]);
        e.1.push(pred[i]);
    }
    groups
        .into_iter()
        .map(|(slice, (g, p))| {
            let m = weighted_metrics(&g, &p)?;
            Ok(SliceRow {
                slice: slice.to_string(),
                support: g.len(),
                accuracy: m.accuracy,
                f1: m.f1,
                class_f1: m.per_class.iter().map(|c| c.f1).collect(),
                low_support: g.len() < min_support,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSpread {
    pub f1_per_seed: Vec<f64>,
    pub f1_min: f64,
    pub f1_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub seeds: Vec<u64>,
    pub metrics: Metrics,
    pub per_region: Vec<SliceRow>,
    pub per_topic: Vec<SliceRow>,
    pub parse_failure_count: usize,
    /// Digest of the (id, gold) sequence; reports are only comparable when
    /// these match.
    pub gold_digest: String,
    #[serde(default)]
    pub spread: Option<SeedSpread>,
}

pub fn gold_digest<C: ClassSet>(ids: &[String], gold: &[C]) -> String {
    let mut buf = String::new();
    for (id, g) in ids.iter().zip(gold) {
        buf.push_str(id);
        buf.push('\t');
        buf.push_str(g.name());
        buf.push('\n');
    }
    sha256_hex(buf.as_bytes())
}

/// Everything needed to evaluate one run over a test set.
pub struct EvalInput<'a, C> {
    pub model_id: &'a str,
    pub seed: u64,
    pub ids: &'a [String],
    pub gold: &'a [C],
    pub pred: &'a [C],
    pub regions: &'a [Option<String>],
    pub topics: &'a [Option<String>],
    pub parse_failures: usize,
    pub min_support: usize,
}

pub fn evaluate<C: ClassSet>(input: &EvalInput<'_, C>) -> Result<EvalReport, EvalError> {
    if input.ids.len() != input.gold.len() {
        return Err(EvalError::LengthMismatch {
            gold: input.gold.len(),
            pred: input.ids.len(),
        });
    }
    Ok(EvalReport {
        model_id: input.model_id.to_string(),
        seeds: vec![input.seed],
        metrics: weighted_metrics(input.gold, input.pred)?,
        per_region: slice_report(input.gold, input.pred, input.regions, input.min_support)?,
        per_topic: slice_report(input.gold, input.pred, input.topics, input.min_support)?,
        parse_failure_count: input.parse_failures,
        gold_digest: gold_digest(input.ids, input.gold),
        spread: None,
    })
}

/// Mean of values summed in sorted order, so the result does not depend
/// on the order reports are given in.
fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

fn average_slices(reports: &[EvalReport], pick: fn(&EvalReport) -> &Vec<SliceRow>) -> Result<Vec<SliceRow>, EvalError> {
    let first = pick(&reports[0]);
    for r in reports {
        let rows = pick(r);
        if rows.len() != first.len() || rows.iter().zip(first).any(|(a, b)| a.slice != b.slice || a.support != b.support) {
            return Err(EvalError::MismatchedGold);
        }
    }
    Ok(first
        .iter()
        .enumerate()
        .map(|(i, row)| SliceRow {
            slice: row.slice.clone(),
            support: row.support,
            accuracy: mean(reports.iter().map(|r| pick(r)[i].accuracy)),
            f1: mean(reports.iter().map(|r| pick(r)[i].f1)),
            class_f1: (0..row.class_f1.len())
                .map(|c| mean(reports.iter().map(|r| pick(r)[i].class_f1[c])))
                .collect(),
            low_support: row.low_support,
        })
        .collect())
}

/// Average per-seed reports of one model over the same gold set.
pub fn seed_average(reports: &[EvalReport]) -> Result<EvalReport, EvalError> {
    let first = reports.first().ok_or(EvalError::Empty)?;
    for r in reports {
        if r.gold_digest != first.gold_digest {
            return Err(EvalError::MismatchedGold);
        }
        if r.model_id != first.model_id {
            return Err(EvalError::MixedModels(first.model_id.clone(), r.model_id.clone()));
        }
    }
    let m = |f: fn(&Metrics) -> f64| mean(reports.iter().map(|r| f(&r.metrics)));
    let per_class = first
        .metrics
        .per_class
        .iter()
        .enumerate()
        .map(|(i, c)| ClassMetrics {
            class: c.class.clone(),
            precision: mean(reports.iter().map(|r| r.metrics.per_class[i].precision)),
            recall: mean(reports.iter().map(|r| r.metrics.per_class[i].recall)),
            f1: mean(reports.iter().map(|r| r.metrics.per_class[i].f1)),
            support: c.support,
            zero_division: reports.iter().any(|r| r.metrics.per_class[i].zero_division),
        })
        .collect();
    let mut seeds: Vec<u64> = reports.iter().flat_map(|r| r.seeds.iter().copied()).collect();
    seeds.sort_unstable();
    let mut f1_per_seed: Vec<f64> = reports.iter().map(|r| r.metrics.f1).collect();
    f1_per_seed.sort_by(f64::total_cmp);
    Ok(EvalReport {
        model_id: first.model_id.clone(),
        seeds,
        metrics: Metrics {
            n: first.metrics.n,
            accuracy: m(|x| x.accuracy),
            precision: m(|x| x.precision),
            recall: m(|x| x.recall),
            f1: m(|x| x.f1),
            per_class,
        },
        per_region: average_slices(reports, |r| &r.per_region)?,
        per_topic: average_slices(reports, |r| &r.per_topic)?,
        parse_failure_count: reports.iter().map(|r| r.parse_failure_count).sum(),
        gold_digest: first.gold_digest.clone(),
        spread: Some(SeedSpread {
            f1_min: f1_per_seed[0],
            f1_max: *f1_per_seed.last().expect("non-empty"),
            f1_per_seed,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::Label;
    use proptest::prelude::*;

    fn tags(v: &[&str]) -> Vec<Option<String>> {
        v.iter().map(|s| Some(s.to_string())).collect()
    }

    fn report(seed: u64, gold: &[Label], pred: &[Label]) -> EvalReport {
        let ids: Vec<String> = (0..gold.len()).map(|i| i.to_string()).collect();
        let regions: Vec<Option<String>> = (0..gold.len()).map(|i| Some(["A", "B"][i % 2].to_string())).collect();
        let topics: Vec<Option<String>> = (0..gold.len()).map(|i| Some((i % 3).to_string())).collect();
        evaluate(&EvalInput {
            model_id: "m",
            seed,
            ids: &ids,
            gold,
            pred,
            regions: &regions,
            topics: &topics,
            parse_failures: 0,
            min_support: 2,
        })
        .unwrap()
    }

    #[test]
    fn single_region_equals_overall() {
        let gold = [Label::Direct, Label::None, Label::Reporting, Label::None];
        let pred = [Label::Direct, Label::Reporting, Label::Reporting, Label::None];
        let rows = slice_report(&gold, &pred, &tags(&["X"; 4]), 10).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].f1, weighted_metrics(&gold, &pred).unwrap().f1);
        assert!(rows[0].low_support);
    }

    #[test]
    fn perfect_region_and_untagged() {
        let gold = [Label::Direct, Label::None, Label::Direct, Label::None];
        let pred = [Label::Direct, Label::None, Label::None, Label::Direct];
        let rows = slice_report(&gold, &pred, &tags(&["good", "good", "bad", "bad"]), 1).unwrap();
        assert_eq!(rows.iter().find(|r| r.slice == "good").unwrap().f1, 1.0);
        let mut t = tags(&["a", "a", "a", "a"]);
        t[2] = None;
        assert!(matches!(slice_report(&gold, &pred, &t, 1), Err(EvalError::Untagged(2))));
    }

    #[test]
    fn seed_average_cases() {
        let gold = [Label::Direct, Label::None, Label::Reporting, Label::None, Label::Direct, Label::Reporting];
        let r = report(1, &gold, &gold);
        let avg = seed_average(&[r.clone(), r.clone(), r.clone()]).unwrap();
        assert_eq!(avg.metrics, r.metrics);
        assert_eq!(avg.per_region, r.per_region);
        assert!(matches!(seed_average(&[]), Err(EvalError::Empty)));
        let other = report(2, &gold[..5], &gold[..5]);
        assert!(matches!(seed_average(&[r, other]), Err(EvalError::MismatchedGold)));
    }

    proptest! {
        #[test]
        fn average_matches_brute_force_and_is_order_free(
            gold in prop::collection::vec(0usize..3, 6..30),
            preds in prop::collection::vec(prop::collection::vec(0usize..3, 30), 1..5),
            rot in 0usize..5,
        ) {
            let g: Vec<Label> = gold.iter().map(|i| Label::ALL[*i]).collect();
            let reports: Vec<EvalReport> = preds.iter().enumerate().map(|(s, p)| {
                let p: Vec<Label> = p[..g.len()].iter().map(|i| Label::ALL[*i]).collect();
                report(s as u64, &g, &p)
            }).collect();
            let avg = seed_average(&reports).unwrap();
            let brute = reports.iter().map(|r| r.metrics.f1).sum::<f64>() / reports.len() as f64;
            prop_assert!((avg.metrics.f1 - brute).abs() < 1e-12);
            let acc = reports.iter().map(|r| r.metrics.accuracy).sum::<f64>() / reports.len() as f64;
            prop_assert!((avg.metrics.accuracy - acc).abs() < 1e-12);
            let mut rotated = reports.clone();
            rotated.rotate_left(rot % reports.len());
            prop_assert_eq!(seed_average(&rotated).unwrap(), avg.clone());
            let total: usize = avg.per_region.iter().map(|s| s.support).sum();
            prop_assert_eq!(total, g.len());
        }

        #[test]
        fn dropping_a_slice_leaves_others(raw in prop::collection::vec((0usize..3, 0usize..3, 0usize..4), 1..60)) {
            let gold: Vec<Label> = raw.iter().map(|r| Label::ALL[r.0]).collect();
            let pred: Vec<Label> = raw.iter().map(|r| Label::ALL[r.1]).collect();
            let t: Vec<Option<String>> = raw.iter().map(|r| Some(r.2.to_string())).collect();
            let all = slice_report(&gold, &pred, &t, 1).unwrap();
            let keep: Vec<usize> = (0..raw.len()).filter(|i| raw[*i].2 != 0).collect();
            let sub = slice_report(
                &keep.iter().map(|i| gold[*i]).collect::<Vec<_>>(),
                &keep.iter().map(|i| pred[*i]).collect::<Vec<_>>(),
                &keep.iter().map(|i| t[*i].clone()).collect::<Vec<_>>(),
                1,
            ).unwrap();
            let expected: Vec<SliceRow> = all.into_iter().filter(|r| r.slice != "0").collect();
            prop_assert_eq!(sub, expected);
        }
    }
}
