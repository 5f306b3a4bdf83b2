//! Principal component projection of representations.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::matrix::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    /// N × components.
    pub coords: Matrix,
    /// components × k, unit rows (zero for padded components).
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
    pub explained_ratio: Vec<f64>,
    pub total_variance: f64,
}

/// Project mean-centered `x` onto the leading eigenvectors of its sample covariance.
///
/// Each component is signed so its largest-magnitude loading is positive.
/// Components beyond the numerical rank are returned as zeros.
pub fn pca_project(x: &Matrix, components: usize) -> Result<Pca> {
    let (n, k) = x.shape();
    if n < 2 || k == 0 || components == 0 {
        return Err(Error::InvalidArgument(format!("pca needs at least 2 rows and 1 column, got {n}x{k}")));
    }
    if !x.is_finite() {
        return Err(Error::InvalidArgument("pca input contains non-finite values".into()));
    }
    let means: Vec<f64> = x.column_sums().iter().map(|s| s / n as f64).collect();
    let centered = Matrix::from_fn(n, k, |r, c| x[(r, c)] - means[c]);
    let mut cov = centered.t_matmul(&centered)?;
    cov.scale(1.0 / (n - 1) as f64);
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(k, k, cov.as_slice()));
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let total: f64 = (0..k).map(|i| cov[(i, i)]).sum();
    let tol = total.abs().max(f64::MIN_POSITIVE) * 1e-12;

    let mut comp = Matrix::zeros(components, k);
    let mut variance = vec![0.0; components];
    for (c, &i) in order.iter().take(components).enumerate() {
        let lambda = eig.eigenvalues[i];
        if lambda <= tol {
            continue;
        }
        let v = eig.eigenvectors.column(i);
        let mut pivot = 0;
        for j in 0..k {
            if v[j].abs() > v[pivot].abs() {
                pivot = j;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..k {
            comp.row_mut(c)[j] = sign * v[j];
        }
        variance[c] = lambda;
    }
    let coords = centered.matmul_t(&comp)?;
    let explained_ratio = variance
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();
    Ok(Pca {
        coords,
        components: comp,
        explained_variance: variance,
        explained_ratio,
        total_variance: total,
    })
}

/// `pc1,pc2,bin_index` rows; `labels` annotates each row (e.g. a bin index of a chosen feature).
pub fn coords_csv(coords: &Matrix, labels: &[u32]) -> Result<String> {
    if coords.cols() < 2 || labels.len() != coords.rows() {
        return Err(Error::Shape("coordinates need two columns and one label per row".into()));
    }
    let mut out = String::from("pc1,pc2,bin_index\n");
    for (r, l) in labels.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", coords[(r, 0)], coords[(r, 1)], l);
    }
    Ok(out)
}
