use serde::{Deserialize, Serialize};

use super::AnnotateError;
use crate::label::{ClassSet, Label};

pub type Confusion = [[usize; 3]; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub n: usize,
    pub percent_agreement: f64,
    pub cohen_kappa: f64,
    /// Rows are the first annotator's labels, columns the second's, both in
    /// `Label::ALL` order.
    pub confusion: Confusion,
}

pub fn confusion_matrix(pairs: &[(Label, Label)]) -> Confusion {
    let mut m = [[0usize; 3]; 3];
    for (a, b) in pairs {
        m[a.index()][b.index()] += 1;
    }
    m
}

/// Cohen's kappa from a square confusion matrix. When chance agreement is
/// 1 the ratio is undefined; it is taken as 1 if observed agreement is also
/// 1 and 0 otherwise. An empty matrix gives 0.
pub fn cohen_kappa<const K: usize>(m: &[[usize; K]; K]) -> f64 {
    // (p_o - p_e) / (1 - p_e) scaled by n² to stay in exact integers until
    // the final division
    let n: u128 = m.iter().flatten().map(|c| *c as u128).sum();
    if n == 0 {
        return 0.0;
    }
    let diag: u128 = (0..K).map(|i| m[i][i] as u128).sum();
    let chance: u128 = (0..K)
        .map(|i| {
            let row: u128 = m[i].iter().map(|c| *c as u128).sum();
            let col: u128 = m.iter().map(|r| r[i] as u128).sum();
            row * col
        })
        .sum();
    let denom = n * n - chance;
    if denom == 0 {
        return if diag == n { 1.0 } else { 0.0 };
    }
    (n as f64 * diag as f64 - chance as f64) / denom as f64
}

/// Agreement between two annotators over paired labels.
pub fn agreement_stats(pairs: &[(Label, Label)]) -> Result<AgreementStats, AnnotateError> {
    if pairs.is_empty() {
        return Err(AnnotateError::EmptyOverlap);
    }
    let confusion = confusion_matrix(pairs);
    let diag: usize = (0..3).map(|i| confusion[i][i]).sum();
    Ok(AgreementStats {
        n: pairs.len(),
        percent_agreement: diag as f64 / pairs.len() as f64,
        cohen_kappa: cohen_kappa(&confusion),
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Kappa recomputed from raw label vectors with explicit loops.
    fn oracle_kappa(pairs: &[(usize, usize)]) -> f64 {
        let n = pairs.len() as f64;
        let agree = pairs.iter().filter(|(a, b)| a == b).count() as f64 / n;
        let mut chance = 0.0;
        for c in 0..3 {
            let a = pairs.iter().filter(|(x, _)| *x == c).count() as f64 / n;
            let b = pairs.iter().filter(|(_, y)| *y == c).count() as f64 / n;
            chance += a * b;
        }
        if chance == 1.0 {
            if agree == 1.0 { 1.0 } else { 0.0 }
        } else {
            (agree - chance) / (1.0 - chance)
        }
    }

    #[test]
    fn worked_example() {
        let m = [[30, 5, 5], [5, 30, 5], [5, 5, 10]];
        assert_eq!(cohen_kappa(&m), 0.53125);
        let mut pairs = Vec::new();
        for (i, row) in m.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                pairs.extend(std::iter::repeat_n((Label::ALL[i], Label::ALL[j]), *c));
            }
        }
        let s = agreement_stats(&pairs).unwrap();
        assert!((s.percent_agreement - 0.70).abs() < 1e-12);
        assert_eq!(s.confusion, m);
    }

    #[test]
    fn identical_and_degenerate() {
        let pairs = vec![(Label::Direct, Label::Direct), (Label::None, Label::None)];
        let s = agreement_stats(&pairs).unwrap();
        assert_eq!((s.percent_agreement, s.cohen_kappa), (1.0, 1.0));
        // a single class on both sides: p_e = 1
        assert_eq!(cohen_kappa(&[[4, 0, 0], [0, 0, 0], [0, 0, 0]]), 1.0);
        assert!(matches!(agreement_stats(&[]), Err(AnnotateError::EmptyOverlap)));
    }

    #[test]
    fn random_labelers_near_zero() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let pairs: Vec<(Label, Label)> = (0..10_000)
            .map(|_| (Label::ALL[rng.random_range(0..3)], Label::ALL[rng.random_range(0..3)]))
            .collect();
        let k = agreement_stats(&pairs).unwrap().cohen_kappa;
        assert!(k.abs() < 0.03, "{k}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn matches_oracle_and_symmetric(raw in prop::collection::vec((0usize..3, 0usize..3), 1..=50)) {
            let pairs: Vec<(Label, Label)> = raw.iter().map(|(a, b)| (Label::ALL[*a], Label::ALL[*b])).collect();
            let s = agreement_stats(&pairs).unwrap();
            prop_assert!((s.cohen_kappa - oracle_kappa(&raw)).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&s.cohen_kappa));
            prop_assert_eq!(s.cohen_kappa == 1.0, s.percent_agreement == 1.0);
            let swapped: Vec<(Label, Label)> = pairs.iter().map(|(a, b)| (*b, *a)).collect();
            let t = agreement_stats(&swapped).unwrap();
            prop_assert_eq!(t.percent_agreement, s.percent_agreement);
            prop_assert!((t.cohen_kappa - s.cohen_kappa).abs() < 1e-12);
        }
    }
}
