use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{NeteError, Result};

/// Least-squares fit with intercept. Solved through the SVD pseudo-inverse,
/// so collinear designs (angles on the simplex next to an intercept) get the
/// minimum-norm solution instead of failing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    /// Intercept first.
    pub weights: Vec<f64>,
}

impl LinearModel {
    pub fn fit(features: &Array2<f64>, target: &[f64]) -> Result<Self> {
        let (n, p) = features.dim();
        if n != target.len() {
            return Err(NeteError::InvalidTable("features and target differ in length".into()));
        }
        if n == 0 {
            return Err(NeteError::InsufficientSample { needed: 1, got: 0 });
        }
        let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { features[[i, j - 1]] });
        let rhs = DVector::from_column_slice(target);
        let svd = design.svd(true, true);
        let largest = svd.singular_values.max();
        let eps = largest * 1e-12 * (n.max(p + 1) as f64);
        let solution = svd
            .solve(&rhs, eps)
            .map_err(|e| NeteError::DegenerateRegressor(e.to_string()))?;
        Ok(Self {
            weights: solution.iter().copied().collect(),
        })
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.weights[0]
            + self.weights[1..]
                .iter()
                .zip(row)
                .map(|(w, v)| w * v)
                .sum::<f64>()
    }
}

/// Scaling exponent from the regression `log|Y| ~ 1 + log||U||`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub alpha_hat: f64,
    pub intercept: f64,
    pub n_used: usize,
}

/// Fits `log|Y| = a + alpha * log||U||` by least squares, dropping rows with
/// `Y = 0`.
pub fn estimate_alpha(y: &[f64], norms: &[f64]) -> Result<AlphaEstimate> {
    if y.len() != norms.len() {
        return Err(NeteError::InvalidTable("Y and norms differ in length".into()));
    }
    if let Some(v) = norms.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(NeteError::Domain(format!("noise norms must be positive, found {v}")));
    }
    let pairs: Vec<(f64, f64)> = y
        .iter()
        .zip(norms)
        .filter(|(yi, _)| **yi != 0.0)
        .map(|(yi, ni)| (ni.ln(), yi.abs().ln()))
        .collect();
    let dropped = y.len() - pairs.len();
    if dropped * 2 > y.len() {
        log::warn!("scaling-exponent regression dropped {dropped} of {} rows with Y = 0", y.len());
    }
    let m = pairs.len();
    if m < 2 {
        return Err(NeteError::InsufficientSample { needed: 2, got: m });
    }
    let mean_x = pairs.iter().map(|p| p.0).sum::<f64>() / m as f64;
    let mean_y = pairs.iter().map(|p| p.1).sum::<f64>() / m as f64;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let first = pairs[0].0;
    if pairs.iter().all(|p| p.0 == first) || sxx <= 0.0 {
        return Err(NeteError::DegenerateRegressor(
            "all noise norms are identical".into(),
        ));
    }
    let alpha_hat = sxy / sxx;
    Ok(AlphaEstimate {
        alpha_hat,
        intercept: mean_y - alpha_hat * mean_x,
        n_used: m,
    })
}
