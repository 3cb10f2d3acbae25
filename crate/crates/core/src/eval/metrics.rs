use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::label::ClassSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold instances of this class.
    pub support: usize,
    /// Set when precision or recall was undefined and taken as 0.
    pub zero_division: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    pub accuracy: f64,
    /// Support-weighted averages over classes.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

impl Metrics {
    pub fn class(&self, name: &str) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|c| c.class == name)
    }
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Accuracy and per-class / support-weighted precision, recall and F1.
/// Undefined ratios count as 0 and set the class's `zero_division` flag.
pub fn weighted_metrics<C: ClassSet>(gold: &[C], pred: &[C]) -> Result<Metrics, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    let k = C::ALL.len();
    let mut tp = vec![0usize; k];
    let mut gold_n = vec![0usize; k];
    let mut pred_n = vec![0usize; k];
    for (g, p) in gold.iter().zip(pred) {
        gold_n[g.index()] += 1;
        pred_n[p.index()] += 1;
        if g == p {
            tp[g.index()] += 1;
        }
    }
    let n = gold.len();
    let mut per_class = Vec::with_capacity(k);
    let (mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0);
    for class in C::ALL {
        let c = class.index();
        let (precision, p_undef) = ratio(tp[c], pred_n[c]);
        let (recall, r_undef) = ratio(tp[c], gold_n[c]);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let w = gold_n[c] as f64 / n as f64;
        wp += w * precision;
        wr += w * recall;
        wf += w * f1;
        per_class.push(ClassMetrics {
            class: class.name().to_string(),
            precision,
            recall,
            f1,
            support: gold_n[c],
            zero_division: p_undef || r_undef,
        });
    }
    Ok(Metrics {
        n,
        accuracy: tp.iter().sum::<usize>() as f64 / n as f64,
        precision: wp,
        recall: wr,
        f1: wf,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::{BinaryLabel, Label};
    use proptest::prelude::*;

    use Label::{Direct as D, None as N, Reporting as R};

    /// Textbook definitions evaluated one class at a time with counting
    /// loops over the raw vectors.
    fn oracle(gold: &[usize], pred: &[usize]) -> (f64, f64, f64, f64) {
        let n = gold.len() as f64;
        let acc = gold.iter().zip(pred).filter(|(g, p)| g == p).count() as f64 / n;
        let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
        for c in 0..3 {
            let tp = gold.iter().zip(pred).filter(|(g, p)| **g == c && **p == c).count() as f64;
            let fp = gold.iter().zip(pred).filter(|(g, p)| **g != c && **p == c).count() as f64;
            let fn_ = gold.iter().zip(pred).filter(|(g, p)| **g == c && **p != c).count() as f64;
            let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let rec = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            let f = if tp > 0.0 { 2.0 * tp / (2.0 * tp + fp + fn_) } else { 0.0 };
            let support = (tp + fn_) / n;
            p_sum += support * prec;
            r_sum += support * rec;
            f_sum += support * f;
        }
        (acc, p_sum, r_sum, f_sum)
    }

    #[test]
    fn hand_example() {
        let m = weighted_metrics(&[D, D, R, N], &[D, R, R, N]).unwrap();
        assert!((m.accuracy - 0.75).abs() < 1e-12);
        assert!((m.class("Direct").unwrap().f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.class("Reporting").unwrap().f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.class("None").unwrap().f1 - 1.0).abs() < 1e-12);
        assert!((m.f1 - 0.75).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_errors() {
        let g = [D, R, N, N];
        let m = weighted_metrics(&g, &g).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (1.0, 1.0, 1.0, 1.0));
        assert!(matches!(weighted_metrics::<Label>(&[], &[]), Err(EvalError::Empty)));
        assert!(matches!(weighted_metrics(&[D], &[D, R]), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn constant_predictor_on_skewed_supports() {
        let mut gold = vec![D; 173];
        gold.extend(vec![R; 229]);
        gold.extend(vec![N; 184]);
        let m = weighted_metrics(&gold, &vec![R; gold.len()]).unwrap();
        assert!((m.accuracy - 229.0 / 586.0).abs() < 1e-12);
        assert!(m.class("Direct").unwrap().zero_division);
        assert!(!m.class("Reporting").unwrap().zero_division);
    }

    #[test]
    fn binary_classes() {
        use BinaryLabel::{NonToxic, Toxic};
        let m = weighted_metrics(&[Toxic, NonToxic, NonToxic], &[Toxic, Toxic, NonToxic]).unwrap();
        assert_eq!(m.per_class.len(), 2);
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn matches_oracle(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..=50)) {
            let (g, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let gold: Vec<Label> = g.iter().map(|i| Label::ALL[*i]).collect();
            let pred: Vec<Label> = p.iter().map(|i| Label::ALL[*i]).collect();
            let m = weighted_metrics(&gold, &pred).unwrap();
            let (acc, wp, wr, wf) = oracle(&g, &p);
            prop_assert!((m.accuracy - acc).abs() < 1e-9);
            prop_assert!((m.precision - wp).abs() < 1e-9);
            prop_assert!((m.recall - wr).abs() < 1e-9);
            prop_assert!((m.f1 - wf).abs() < 1e-9);
            // accuracy equals support-weighted recall
            prop_assert!((m.accuracy - m.recall).abs() < 1e-9);
            for v in [m.accuracy, m.precision, m.recall, m.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
