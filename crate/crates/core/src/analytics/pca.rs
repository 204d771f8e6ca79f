use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::AnalyticsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    /// Unit loading vectors, strongest component first (at most two).
    pub components: Vec<Vec<f64>>,
    /// Every eigenvalue of the covariance matrix, descending.
    pub eigenvalues: Vec<f64>,
    pub explained_ratio: Vec<f64>,
    /// Per-row scores on the retained components.
    pub projection: Vec<Vec<f64>>,
}

/// Principal components of already-centred (typically standardized) rows
/// from the eigendecomposition of their sample covariance. Each component's
/// sign is fixed so its largest-magnitude loading is positive.
pub fn pca(rows: &[Vec<f64>]) -> Result<Pca, AnalyticsError> {
    let n = rows.len();
    if n < 2 {
        return Err(AnalyticsError::TooFewRows { rows: n, needed: 2 });
    }
    let d = rows[0].len();
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let means: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
    let centred = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - means[j]);
    let cov = (centred.transpose() * &centred) / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();

    let keep = d.min(2);
    let mut components = Vec::with_capacity(keep);
    for &i in order.iter().take(keep) {
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
    }
    let projection = (0..n)
        .map(|i| components.iter().map(|c| c.iter().enumerate().map(|(j, w)| w * centred[(i, j)]).sum()).collect())
        .collect();
    let explained_ratio = eigenvalues.iter().take(keep).map(|e| if total > 0.0 { e / total } else { 0.0 }).collect();
    Ok(Pca { components, eigenvalues, explained_ratio, projection })
}
