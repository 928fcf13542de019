//! Propensity score by L2-penalized logistic regression, fitted with a
//! damped Newton method.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{NeteError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropensityConfig {
    /// Predictions are clipped to `[clip_c, 1 - clip_c]`.
    pub clip_c: f64,
    /// Ridge penalty on the slope coefficients.
    pub l2: f64,
    /// Convergence tolerance on the gradient norm of the mean objective.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PropensityConfig {
    fn default() -> Self {
        Self {
            clip_c: 1e-4,
            l2: 1e-6,
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

/// Anything that yields a treatment probability for a covariate row.
pub trait Propensity {
    fn propensity(&self, x: ArrayView1<'_, f64>) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    /// Intercept first, then one weight per covariate.
    pub weights: Vec<f64>,
    pub clip_c: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn linear_predictor(weights: &[f64], x: ArrayView1<'_, f64>) -> f64 {
    weights[0] + weights[1..].iter().zip(x.iter()).map(|(w, v)| w * v).sum::<f64>()
}

impl PropensityModel {
    pub fn from_weights(weights: Vec<f64>, clip_c: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(NeteError::Config("propensity needs an intercept weight".into()));
        }
        check_clip(clip_c)?;
        Ok(Self {
            weights,
            clip_c,
            iterations: 0,
            converged: true,
            gradient_norm: 0.0,
        })
    }

    pub fn d_x(&self) -> usize {
        self.weights.len() - 1
    }

    /// Unclipped logistic prediction.
    pub fn raw(&self, x: ArrayView1<'_, f64>) -> f64 {
        sigmoid(linear_predictor(&self.weights, x))
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.raw(x).clamp(self.clip_c, 1.0 - self.clip_c)
    }
}

impl Propensity for PropensityModel {
    fn propensity(&self, x: ArrayView1<'_, f64>) -> f64 {
        self.predict(x)
    }
}

fn check_clip(clip_c: f64) -> Result<()> {
    if !(clip_c > 0.0 && clip_c < 0.5) {
        return Err(NeteError::Config(format!(
            "propensity clip must lie in (0, 1/2), got {clip_c}"
        )));
    }
    Ok(())
}

/// Mean negative log-likelihood plus `l2/2 * |slopes|^2`.
pub fn logistic_objective(weights: &[f64], x: &Array2<f64>, d: &Array1<f64>, l2: f64) -> f64 {
    let n = x.nrows() as f64;
    let nll: f64 = x
        .rows()
        .into_iter()
        .zip(d.iter())
        .map(|(row, &di)| {
            let z = linear_predictor(weights, row);
            softplus(z) - di * z
        })
        .sum();
    let penalty: f64 = weights[1..].iter().map(|w| w * w).sum();
    nll / n + 0.5 * l2 * penalty
}

/// Gradient of [`logistic_objective`].
pub fn logistic_gradient(weights: &[f64], x: &Array2<f64>, d: &Array1<f64>, l2: f64) -> Vec<f64> {
    let n = x.nrows() as f64;
    let p = weights.len();
    let mut grad = vec![0.0; p];
    for (row, &di) in x.rows().into_iter().zip(d.iter()) {
        let r = sigmoid(linear_predictor(weights, row)) - di;
        grad[0] += r;
        for (g, v) in grad[1..].iter_mut().zip(row.iter()) {
            *g += r * v;
        }
    }
    for (j, g) in grad.iter_mut().enumerate() {
        *g /= n;
        if j > 0 {
            *g += l2 * weights[j];
        }
    }
    grad
}

fn hessian(weights: &[f64], x: &Array2<f64>, l2: f64) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    let p = weights.len();
    let mut h = DMatrix::<f64>::zeros(p, p);
    let mut z = vec![0.0; p];
    for row in x.rows() {
        let prob = sigmoid(linear_predictor(weights, row));
        let w = prob * (1.0 - prob);
        z[0] = 1.0;
        z[1..].iter_mut().zip(row.iter()).for_each(|(zj, v)| *zj = *v);
        for a in 0..p {
            let wa = w * z[a];
            for b in a..p {
                h[(a, b)] += wa * z[b];
            }
        }
    }
    for a in 0..p {
        for b in a..p {
            h[(a, b)] /= n;
            h[(b, a)] = h[(a, b)];
        }
        if a > 0 {
            h[(a, a)] += l2;
        }
    }
    h
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// Regresses treatment on covariates.
pub fn fit_propensity(x: &Array2<f64>, d: &Array1<f64>, cfg: &PropensityConfig) -> Result<PropensityModel> {
    check_clip(cfg.clip_c)?;
    let n = x.nrows();
    let p = x.ncols() + 1;
    if d.len() != n {
        return Err(NeteError::InvalidTable("X and D differ in length".into()));
    }
    if n < p {
        return Err(NeteError::InsufficientSample { needed: p, got: n });
    }
    let treated = d.iter().filter(|v| **v == 1.0).count();
    if treated == 0 || treated == n {
        return Err(NeteError::DegenerateTreatment);
    }

    let mut w = vec![0.0; p];
    let mut obj = logistic_objective(&w, x, d, cfg.l2);
    let mut grad = logistic_gradient(&w, x, d, cfg.l2);
    let mut iterations = 0;
    while norm(&grad) >= cfg.tol && iterations < cfg.max_iter {
        iterations += 1;
        // tiny diagonal jitter keeps the intercept block positive definite
        let mut h = hessian(&w, x, cfg.l2);
        for a in 0..p {
            h[(a, a)] += 1e-12;
        }
        let g = DVector::from_column_slice(&grad);
        let step = match h.cholesky() {
            Some(chol) => chol.solve(&g),
            None => g.clone(),
        };

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = w.iter().zip(step.iter()).map(|(wi, si)| wi - scale * si).collect();
            let trial_obj = logistic_objective(&trial, x, d, cfg.l2);
            if trial_obj <= obj {
                w = trial;
                obj = trial_obj;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        grad = logistic_gradient(&w, x, d, cfg.l2);
        if !accepted {
            break;
        }
    }
    let gradient_norm = norm(&grad);
    let converged = gradient_norm < cfg.tol;
    if !converged {
        log::warn!(
            "propensity fit stopped after {iterations} iterations with gradient norm {gradient_norm:e}"
        );
    }
    Ok(PropensityModel {
        weights: w,
        clip_c: cfg.clip_c,
        iterations,
        converged,
        gradient_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::array;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn simulate(n: usize, b: &[f64], seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = seeded(seed);
        let d_x = b.len() - 1;
        let x = Array2::from_shape_simple_fn((n, d_x), || rng.sample::<f64, _>(StandardNormal));
        let d = x
            .rows()
            .into_iter()
            .map(|row| {
                let p = sigmoid(linear_predictor(b, row));
                if rng.random_bool(p) { 1.0 } else { 0.0 }
            })
            .collect();
        (x, d)
    }

    #[test]
    fn recovers_known_weights() {
        let b = [0.3, 1.0, -0.5, 0.8, 0.0, -1.2];
        let (x, d) = simulate(50_000, &b, 4);
        let model = fit_propensity(&x, &d, &PropensityConfig::default()).unwrap();
        assert!(model.converged);
        for (est, truth) in model.weights.iter().zip(b.iter()) {
            assert!((est - truth).abs() < 0.1, "{:?}", model.weights);
        }
    }

    #[test]
    fn null_treatment_gives_half() {
        let (x, d) = simulate(20_000, &[0.0, 0.0, 0.0, 0.0], 5);
        let model = fit_propensity(&x, &d, &PropensityConfig::default()).unwrap();
        assert!(model.weights[0].abs() < 0.05);
        for row in x.rows().into_iter().take(100) {
            assert!((model.predict(row) - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn single_class_is_degenerate() {
        let x = array![[0.1], [0.2], [0.3]];
        let d = array![1.0, 1.0, 1.0];
        assert!(matches!(
            fit_propensity(&x, &d, &PropensityConfig::default()),
            Err(NeteError::DegenerateTreatment)
        ));
    }

    #[test]
    fn clipping() {
        let logit = (0.999999f64 / 0.000001).ln();
        let model = PropensityModel::from_weights(vec![logit], 1e-4).unwrap();
        let x = Array1::<f64>::zeros(0);
        assert!((model.raw(x.view()) - 0.999999).abs() < 1e-12);
        assert_eq!(model.predict(x.view()), 0.9999);

        let zero = PropensityModel::from_weights(vec![0.0, 0.0], 1e-4).unwrap();
        assert_eq!(zero.predict(array![3.0].view()), 0.5);

        let logit = (0.3f64 / 0.7).ln();
        let interior = PropensityModel::from_weights(vec![logit], 1e-4).unwrap();
        assert!((interior.predict(x.view()) - 0.3).abs() < 1e-15);

        assert!(PropensityModel::from_weights(vec![0.0], 0.5).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences_and_vanishes_at_fit() {
        let (x, d) = simulate(2_000, &[-0.2, 0.7, 0.4], 6);
        let cfg = PropensityConfig::default();
        let probe = vec![0.1, -0.3, 0.25];
        let analytic = logistic_gradient(&probe, &x, &d, cfg.l2);
        for j in 0..probe.len() {
            let h = 1e-6;
            let mut up = probe.clone();
            let mut dn = probe.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (logistic_objective(&up, &x, &d, cfg.l2) - logistic_objective(&dn, &x, &d, cfg.l2)) / (2.0 * h);
            assert!((fd - analytic[j]).abs() <= 1e-5 * analytic[j].abs().max(1e-3), "{j}: {fd} vs {}", analytic[j]);
        }

        let model = fit_propensity(&x, &d, &cfg).unwrap();
        assert!(model.converged);
        assert!(norm(&logistic_gradient(&model.weights, &x, &d, cfg.l2)) < cfg.tol);
    }

    #[test]
    fn separable_data_stays_finite_and_clipped() {
        let x = array![[-2.0], [-1.0], [1.0], [2.0]];
        let d = array![0.0, 0.0, 1.0, 1.0];
        let cfg = PropensityConfig::default();
        let model = fit_propensity(&x, &d, &cfg).unwrap();
        assert!(model.weights.iter().all(|w| w.is_finite()));
        for row in x.rows() {
            let p = model.predict(row);
            assert!((cfg.clip_c..=1.0 - cfg.clip_c).contains(&p));
        }
    }
}
