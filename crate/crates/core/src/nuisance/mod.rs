//! Nuisance fits: propensity score, outcome regressions and the outcome
//! scaling exponent.

mod forest;
mod linear;
mod logistic;

pub use forest::{ForestConfig, RandomForest, RegressionTree};
pub use linear::{estimate_alpha, AlphaEstimate, LinearModel};
pub use logistic::{
    fit_propensity, logistic_gradient, logistic_objective, sigmoid, Propensity, PropensityConfig,
    PropensityModel,
};

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{NeteError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Linear,
    #[default]
    RandomForest,
}

/// Outcome regressor over `(x, d, v)`, where `v` is the noise direction for
/// the pseudo-outcome model or the raw noise vector for the naive baseline.
pub trait OutcomePredictor {
    fn predict(&self, x: ArrayView1<'_, f64>, d: f64, v: ArrayView1<'_, f64>) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OutcomeModel {
    Linear(LinearModel),
    RandomForest(RandomForest),
}

/// Stacks `[x, d, v]` row by row.
pub fn outcome_features(x: &Array2<f64>, d: &Array1<f64>, v: &Array2<f64>) -> Array2<f64> {
    let (n, d_x) = x.dim();
    let d_v = v.ncols();
    Array2::from_shape_fn((n, d_x + 1 + d_v), |(i, j)| {
        if j < d_x {
            x[[i, j]]
        } else if j == d_x {
            d[i]
        } else {
            v[[i, j - d_x - 1]]
        }
    })
}

impl OutcomeModel {
    pub fn fit(
        features: &Array2<f64>,
        target: &[f64],
        kind: OutcomeKind,
        forest: &ForestConfig,
        seed: u64,
    ) -> Result<Self> {
        if let Some(v) = target.iter().find(|v| !v.is_finite()) {
            return Err(NeteError::Domain(format!("outcome target is not finite: {v}")));
        }
        Ok(match kind {
            OutcomeKind::Linear => OutcomeModel::Linear(LinearModel::fit(features, target)?),
            OutcomeKind::RandomForest => {
                OutcomeModel::RandomForest(RandomForest::fit(features, target, forest, seed)?)
            }
        })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self {
            OutcomeModel::Linear(m) => m.predict(row),
            OutcomeModel::RandomForest(m) => m.predict(row),
        }
    }
}

impl OutcomePredictor for OutcomeModel {
    fn predict(&self, x: ArrayView1<'_, f64>, d: f64, v: ArrayView1<'_, f64>) -> f64 {
        let mut row = Vec::with_capacity(x.len() + 1 + v.len());
        row.extend(x.iter());
        row.push(d);
        row.extend(v.iter());
        self.predict_row(&row)
    }
}

/// Regresses the scaled outcome `Y / ||U||^alpha` on `(x, d, s)` with `s` the
/// l1-normalized noise direction.
pub fn fit_pseudo_outcome(
    x: &Array2<f64>,
    d: &Array1<f64>,
    s: &Array2<f64>,
    y_scaled: &[f64],
    kind: OutcomeKind,
    forest: &ForestConfig,
    seed: u64,
) -> Result<OutcomeModel> {
    let n = x.nrows();
    if n < 10 {
        return Err(NeteError::InsufficientSample { needed: 10, got: n });
    }
    if let Some(i) = s
        .rows()
        .into_iter()
        .position(|r| r.iter().any(|v| *v < 0.0) || (r.sum() - 1.0).abs() > 1e-9)
    {
        return Err(NeteError::Domain(format!(
            "noise direction in row {i} is not on the unit l1 simplex"
        )));
    }
    OutcomeModel::fit(&outcome_features(x, d, s), y_scaled, kind, forest, seed)
}

/// Regresses the raw outcome on `(x, d, u)`.
pub fn fit_raw_outcome(
    x: &Array2<f64>,
    d: &Array1<f64>,
    u: &Array2<f64>,
    y: &[f64],
    kind: OutcomeKind,
    forest: &ForestConfig,
    seed: u64,
) -> Result<OutcomeModel> {
    OutcomeModel::fit(&outcome_features(x, d, u), y, kind, forest, seed)
}

pub fn predict_outcome<M: OutcomePredictor + ?Sized>(
    model: &M,
    x: ArrayView1<'_, f64>,
    d: f64,
    s: ArrayView1<'_, f64>,
) -> f64 {
    model.predict(x, d, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn simplex(n: usize, k: usize, rng: &mut impl Rng) -> Array2<f64> {
        let mut s = Array2::from_shape_simple_fn((n, k), || 0.05 + rng.random::<f64>());
        for mut row in s.rows_mut() {
            let total = row.sum();
            row.mapv_inplace(|v| v / total);
        }
        s
    }

    #[test]
    fn linear_kind_interpolates_exact_target() {
        let mut rng = seeded(2);
        let n = 300;
        let x = Array2::from_shape_simple_fn((n, 3), || rng.random::<f64>());
        let d = Array1::from_shape_fn(n, |i| (i % 2) as f64);
        let s = simplex(n, 4, &mut rng);
        let target: Vec<f64> = (0..n)
            .map(|i| 1.0 + x[[i, 0]] - 2.0 * x[[i, 2]] + 0.7 * d[i] + 3.0 * s[[i, 1]] - s[[i, 3]])
            .collect();
        let m = fit_pseudo_outcome(&x, &d, &s, &target, OutcomeKind::Linear, &ForestConfig::default(), 0).unwrap();
        for i in 0..n {
            let pred = predict_outcome(&m, x.row(i), d[i], s.row(i));
            assert!((pred - target[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_target_both_kinds() {
        let mut rng = seeded(3);
        let n = 50;
        let x = Array2::from_shape_simple_fn((n, 2), || rng.random::<f64>());
        let d = Array1::from_shape_fn(n, |i| (i % 2) as f64);
        let s = simplex(n, 3, &mut rng);
        let target = vec![2.25; n];
        for kind in [OutcomeKind::Linear, OutcomeKind::RandomForest] {
            let m = fit_pseudo_outcome(&x, &d, &s, &target, kind, &ForestConfig::default(), 1).unwrap();
            for i in 0..n {
                let pred = predict_outcome(&m, x.row(i), d[i], s.row(i));
                assert!((pred - 2.25).abs() < 1e-10, "{kind:?}: {pred}");
                // repeated calls are identical
                assert_eq!(pred, predict_outcome(&m, x.row(i), d[i], s.row(i)));
            }
        }
    }

    #[test]
    fn rejects_off_simplex_angles_and_tiny_samples() {
        let x = Array2::zeros((12, 1));
        let d = Array1::from_shape_fn(12, |i| (i % 2) as f64);
        let s = Array2::from_elem((12, 2), 0.7);
        let y = vec![1.0; 12];
        assert!(fit_pseudo_outcome(&x, &d, &s, &y, OutcomeKind::Linear, &ForestConfig::default(), 0).is_err());
        let s = Array2::from_elem((5, 2), 0.5);
        assert!(matches!(
            fit_pseudo_outcome(&x.slice(ndarray::s![..5, ..]).to_owned(), &d.slice(ndarray::s![..5]).to_owned(), &s, &y[..5], OutcomeKind::Linear, &ForestConfig::default(), 0),
            Err(NeteError::InsufficientSample { .. })
        ));
    }

    #[test]
    fn forest_picks_up_treatment_effect() {
        let mut rng = seeded(4);
        let n = 2_000;
        let x = Array2::from_shape_simple_fn((n, 2), || rng.random::<f64>());
        let d = Array1::from_shape_fn(n, |_| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
        let s = simplex(n, 3, &mut rng);
        let target: Vec<f64> = (0..n).map(|i| d[i] + 0.2 * rng.random::<f64>()).collect();
        let m = fit_pseudo_outcome(&x, &d, &s, &target, OutcomeKind::RandomForest, &ForestConfig::default(), 9).unwrap();
        let effect = predict_outcome(&m, x.row(0), 1.0, s.row(0)) - predict_outcome(&m, x.row(0), 0.0, s.row(0));
        assert!((effect - 1.0).abs() < 0.1, "{effect}");
    }
}
