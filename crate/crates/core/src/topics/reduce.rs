use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// Dimensionality reduction applied before density clustering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Reduction {
    None,
    /// Project onto the leading principal components.
    Pca { components: usize },
}

impl Default for Reduction {
    fn default() -> Self {
        Reduction::Pca { components: 5 }
    }
}

impl Reduction {
    pub fn apply(&self, points: &[Vec<f64>]) -> Vec<Vec<f64>> {
        match *self {
            Reduction::None => points.to_vec(),
            Reduction::Pca { components } => pca(points, components),
        }
    }
}

/// Centre the points and project them onto the top `k` eigenvectors of the
/// sample covariance. Eigenvector signs are fixed so the largest-magnitude
/// loading is positive, which keeps output stable across platforms.
pub fn pca(points: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let d = points[0].len();
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered = DMatrix::from_fn(n, d, |i, j| points[i][j] - mean[j]);
    if k >= d || n < 2 {
        return (0..n).map(|i| centered.row(i).iter().copied().collect()).collect();
    }
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|a, b| {
        eig.eigenvalues[*b]
            .partial_cmp(&eig.eigenvalues[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    });
    let mut basis = DMatrix::zeros(d, k);
    for (col, &idx) in order.iter().take(k).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for r in 0..d {
            basis[(r, col)] = sign * v[r];
        }
    }
    let projected = centered * basis;
    (0..n).map(|i| projected.row(i).iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pca_recovers_dominant_axis() {
        // points spread along (1, 1, 0) with tiny noise on other axes
        let pts: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let t = i as f64 - 25.0;
                vec![t + 0.01 * (i % 3) as f64, t, 0.02 * (i % 5) as f64]
            })
            .collect();
        let out = pca(&pts, 1);
        assert_eq!(out.len(), 50);
        assert_eq!(out[0].len(), 1);
        // projection is monotone in t
        for w in out.windows(2) {
            assert!(w[1][0] > w[0][0]);
        }
    }

    #[test]
    fn none_is_identity() {
        let pts = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert_eq!(Reduction::None.apply(&pts), pts);
        assert!(pca(&[], 3).is_empty());
    }
}
