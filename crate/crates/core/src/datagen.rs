//! Synthetic and semi-synthetic data with known or surrogate ground truth.
//!
//! Synthetic rows follow
//! `Y = ||U||^alpha (D + angle_term + eps) + ||U||^(alpha/2)` with
//! `X ~ Unif[0,1]^d_x`, `D ~ Ber(logistic(x.b))`, `eps ~ Unif(-1, 1)`, so the
//! effect `Y(1) - Y(0) = ||U||^alpha` and the normalized tail effect is
//! `beta / (beta - alpha)`. Semi-synthetic rows reuse normalized wave and
//! surge heights as noise.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{NeteError, Result};
use crate::evt::{adaptive_hill, moment_factor, select_threshold, ThresholdRule, DEFAULT_MIN_ORDER};
use crate::nuisance::sigmoid;
use crate::samplers::{
    sample_linear_pareto, sample_matrix_a, sample_pareto_mixture, LinearParetoSpec, MixtureSpec,
};
use crate::table::{l1_norm, ObservationTable};

/// Row count of the canonical wave and surge dataset.
pub const WAVESURGE_ROWS: usize = 2894;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    LinearPareto,
    Mixture,
}

/// How the noise direction `U/||U||` enters the scalar outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AngleTerm {
    /// Sum of the components (always 1 under the l1 norm).
    #[default]
    Sum,
    First,
    Mean,
}

impl AngleTerm {
    fn eval(self, u: ArrayView1<'_, f64>, norm: f64) -> f64 {
        match self {
            AngleTerm::Sum => u.iter().map(|v| v / norm).sum(),
            AngleTerm::First => u[0] / norm,
            AngleTerm::Mean => u.iter().map(|v| v / norm).sum::<f64>() / u.len() as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub alpha: f64,
    pub beta: f64,
    pub d_z: usize,
    pub d_u: usize,
    pub noise_kind: NoiseKind,
    pub d_x: usize,
    pub n: usize,
    pub seed: u64,
    pub angle_term: AngleTerm,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 2.5,
            d_z: 30,
            d_u: 5,
            noise_kind: NoiseKind::LinearPareto,
            d_x: 5,
            n: 10_000,
            seed: 0,
            angle_term: AngleTerm::Sum,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(NeteError::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta.is_finite() && self.beta > self.alpha) {
            return Err(NeteError::Config(format!(
                "beta must exceed alpha, got alpha = {}, beta = {}",
                self.alpha, self.beta
            )));
        }
        if self.d_x == 0 || self.d_u == 0 {
            return Err(NeteError::Config("d_x and d_u must be at least 1".into()));
        }
        if self.noise_kind == NoiseKind::LinearPareto && self.d_z == 0 {
            return Err(NeteError::Config("d_z must be at least 1".into()));
        }
        Ok(())
    }
}

/// `beta / (beta - alpha)`, the normalized tail effect of the synthetic
/// outcome under Pareto(beta) tails.
pub fn ground_truth_nete(alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha.is_finite() && beta.is_finite() && alpha >= 0.0 && beta > 0.0) {
        return Err(NeteError::Domain(format!(
            "need alpha >= 0 and beta > 0, got ({alpha}, {beta})"
        )));
    }
    if alpha >= beta {
        return Err(NeteError::InfiniteMoment { product: alpha / beta });
    }
    Ok(beta / (beta - alpha))
}

/// Draws the noise matrix; the linear-Pareto mixing matrix is fresh per call.
pub fn sample_noise<R: Rng + ?Sized>(cfg: &SyntheticConfig, n: usize, rng: &mut R) -> Result<Array2<f64>> {
    match cfg.noise_kind {
        NoiseKind::LinearPareto => {
            let a = sample_matrix_a(cfg.d_u, cfg.d_z, rng);
            Ok(sample_linear_pareto(n, &LinearParetoSpec::new(cfg.beta, a)?, rng))
        }
        NoiseKind::Mixture => sample_pareto_mixture(n, &MixtureSpec::new(cfg.beta, cfg.d_u)?, rng),
    }
}

/// Potential outcome of the synthetic design.
pub fn synthetic_outcome(norm: f64, angle: f64, d: f64, eps: f64, alpha: f64) -> f64 {
    norm.powf(alpha) * (d + angle + eps) + norm.powf(0.5 * alpha)
}

/// Simulates `cfg.n` rows and returns them with the ground truth.
pub fn generate_synthetic<R: Rng + ?Sized>(
    cfg: &SyntheticConfig,
    rng: &mut R,
) -> Result<(ObservationTable, f64)> {
    cfg.validate()?;
    let truth = ground_truth_nete(cfg.alpha, cfg.beta)?;
    let n = cfg.n;
    let b: Vec<f64> = (0..cfg.d_x).map(|_| rng.sample(StandardNormal)).collect();
    let u = sample_noise(cfg, n, rng)?;
    let mut x = Array2::zeros((n, cfg.d_x));
    let mut d = Array1::zeros(n);
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let mut row = x.row_mut(i);
        row.mapv_inplace(|_: f64| rng.random::<f64>());
        let p = sigmoid(row.iter().zip(&b).map(|(xi, bi)| xi * bi).sum());
        let di = if rng.random_bool(p) { 1.0 } else { 0.0 };
        let eps = rng.random_range(-1.0..1.0);
        let ui = u.row(i);
        let norm = l1_norm(ui);
        d[i] = di;
        y[i] = synthetic_outcome(norm, cfg.angle_term.eval(ui, norm), di, eps, cfg.alpha);
    }
    Ok((ObservationTable::new(x, d, y, u)?, truth))
}

/// Brute-force check of the identification formula: simulates `n` noise
/// draws and both potential outcomes with shared `eps`, then averages
/// `(Y(1) - Y(0)) / t^alpha` over rows with `||U|| > t`, where `t` is the
/// empirical `quantile` of the norms.
pub fn counterfactual_nete<R: Rng + ?Sized>(
    cfg: &SyntheticConfig,
    n: usize,
    quantile: f64,
    rng: &mut R,
) -> Result<f64> {
    cfg.validate()?;
    if !(0.0..1.0).contains(&quantile) {
        return Err(NeteError::Domain(format!("quantile must lie in [0, 1), got {quantile}")));
    }
    let u = sample_noise(cfg, n, rng)?;
    let norms: Vec<f64> = u.rows().into_iter().map(l1_norm).collect();
    let mut sorted = norms.clone();
    sorted.sort_by(f64::total_cmp);
    let t = quantile_linear(&sorted, quantile);
    let scale = t.powf(cfg.alpha);
    let (mut total, mut count) = (0.0, 0usize);
    for (i, &norm) in norms.iter().enumerate() {
        let eps: f64 = rng.random_range(-1.0..1.0);
        if norm > t {
            let angle = cfg.angle_term.eval(u.row(i), norm);
            let effect = synthetic_outcome(norm, angle, 1.0, eps, cfg.alpha)
                - synthetic_outcome(norm, angle, 0.0, eps, cfg.alpha);
            total += effect / scale;
            count += 1;
        }
    }
    if count == 0 {
        return Err(NeteError::EmptyTail { threshold: t });
    }
    Ok(total / count as f64)
}

/// Empirical quantile of ascending `sorted` with linear interpolation
/// between order statistics at position `(n - 1) p`.
pub fn quantile_linear(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn is_numeric(field: &str) -> bool {
    field.trim().parse::<f64>().is_ok()
}

/// Parses a two-column (wave, surge) CSV; a non-numeric first row is taken
/// as a header.
pub fn read_wavesurge<R: Read>(reader: R, source: &Path) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut rows = 0;
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let line = idx as u64 + 1;
        if idx == 0 && !record.iter().all(is_numeric) {
            if record.len() != 2 {
                return Err(NeteError::Schema {
                    path: source.to_path_buf(),
                    expected: 2,
                    found: record.len(),
                });
            }
            continue;
        }
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 2 {
            return Err(NeteError::Schema {
                path: source.to_path_buf(),
                expected: 2,
                found: record.len(),
            });
        }
        for field in record.iter() {
            let v = field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                NeteError::Parse {
                    path: source.to_path_buf(),
                    line,
                    message: format!("cannot parse `{field}` as a number"),
                }
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows != WAVESURGE_ROWS {
        log::warn!(
            "{}: expected {WAVESURGE_ROWS} rows, found {rows}",
            source.display()
        );
    }
    Array2::from_shape_vec((rows, 2), values).map_err(|e| NeteError::InvalidTable(e.to_string()))
}

pub fn load_wavesurge(path: &Path) -> Result<Array2<f64>> {
    let file = File::open(path).map_err(|e| NeteError::io(path, e))?;
    read_wavesurge(file, path)
}

/// Per column: subtract the minimum, add 1, then divide by the 10% quantile
/// of the shifted column.
pub fn normalize_extremes(raw: &Array2<f64>) -> Result<Array2<f64>> {
    if raw.nrows() == 0 {
        return Err(NeteError::InsufficientSample { needed: 1, got: 0 });
    }
    let mut out = raw.clone();
    for (j, mut col) in out.columns_mut().into_iter().enumerate() {
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            return Err(NeteError::DegenerateColumn { column: j });
        }
        col.mapv_inplace(|v| v - min + 1.0);
        let mut sorted = col.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = quantile_linear(&sorted, 0.1);
        col.mapv_inplace(|v| v / q);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SemiSynConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    pub train_size: usize,
    pub seed: u64,
    pub wavesurge_path: Option<PathBuf>,
    /// Draw the training rows at random instead of taking the first ones.
    pub random_split: bool,
}

impl Default for SemiSynConfig {
    fn default() -> Self {
        Self {
            alpha1: 2.0,
            alpha2: 2.0,
            train_size: 1000,
            seed: 0,
            wavesurge_path: None,
            random_split: false,
        }
    }
}

/// `Y = (1 - X + D) W^alpha1 S^alpha2 + N(0, 1)` with `U = (W, S)`.
pub fn generate_semi_synthetic<R: Rng + ?Sized>(
    u_norm: &Array2<f64>,
    cfg: &SemiSynConfig,
    rng: &mut R,
) -> Result<ObservationTable> {
    if u_norm.ncols() != 2 {
        return Err(NeteError::InvalidTable(format!(
            "expected two noise columns, found {}",
            u_norm.ncols()
        )));
    }
    if !(cfg.alpha1 >= 0.0 && cfg.alpha2 >= 0.0) {
        return Err(NeteError::Config("exponents must be nonnegative".into()));
    }
    let n = u_norm.nrows();
    let b: f64 = rng.sample(StandardNormal);
    let mut x = Array2::zeros((n, 1));
    let mut d = Array1::zeros(n);
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let xi: f64 = rng.random();
        let di = if rng.random_bool(sigmoid(xi * b)) { 1.0 } else { 0.0 };
        let noise: f64 = rng.sample(StandardNormal);
        let (w, s) = (u_norm[[i, 0]], u_norm[[i, 1]]);
        x[[i, 0]] = xi;
        d[i] = di;
        y[i] = (1.0 - xi + di) * w.powf(cfg.alpha1) * s.powf(cfg.alpha2) + noise;
    }
    ObservationTable::new(x, d, y, u_norm.clone())
}

/// Splits rows into a training and a test table.
pub fn train_test_split<R: Rng + ?Sized>(
    data: &ObservationTable,
    train_size: usize,
    random: bool,
    rng: &mut R,
) -> Result<(ObservationTable, ObservationTable)> {
    let n = data.len();
    if train_size == 0 || train_size >= n {
        return Err(NeteError::Config(format!(
            "train_size must lie in 1..{n}, got {train_size}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    if random {
        use rand::seq::SliceRandom;
        idx.shuffle(rng);
    }
    let (train, test) = idx.split_at(train_size);
    Ok((data.select(train), data.select(test)))
}

/// Surrogate ground truth on held-out rows:
/// `mean(W^a1 S^a2 / ||U||^(a1+a2) | ||U|| > t) / (1 - (a1+a2) gamma)`, with
/// `gamma` the adaptive Hill index of all test norms and `t` from the default
/// threshold rule.
pub fn test_set_estimate(test: &ObservationTable, alpha1: f64, alpha2: f64) -> Result<f64> {
    if test.d_u() != 2 {
        return Err(NeteError::InvalidTable(format!(
            "expected two noise columns, found {}",
            test.d_u()
        )));
    }
    let norms = test.norms();
    let hill = adaptive_hill(&norms, DEFAULT_MIN_ORDER)?;
    let t = select_threshold(test.len(), hill.gamma_hat, &ThresholdRule::default())?;
    let alpha = alpha1 + alpha2;
    let u = test.u();
    let spectral: Vec<f64> = norms
        .iter()
        .enumerate()
        .filter(|(_, n)| **n > t)
        .map(|(i, n)| u[[i, 0]].powf(alpha1) * u[[i, 1]].powf(alpha2) / n.powf(alpha))
        .collect();
    if spectral.is_empty() {
        return Err(NeteError::EmptyTail { threshold: t });
    }
    let eta = spectral.iter().sum::<f64>() / spectral.len() as f64;
    Ok(eta * moment_factor(alpha, hill.gamma_hat)?)
}

/// Positive, dependent, right-skewed pairs shaped roughly like wave height
/// and surge, for runs without the real file.
pub fn synthetic_wavesurge<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Array2<f64> {
    let mut out = Array2::zeros((n, 2));
    for i in 0..n {
        let storm: f64 = -(rng.random::<f64>()).ln();
        let wave = 1.0 + 1.6 * storm + 0.6 * (-(rng.random::<f64>()).ln());
        let surge: f64 = 0.08 * storm + 0.12 * rng.sample::<f64, _>(StandardNormal);
        out[[i, 0]] = wave;
        out[[i, 1]] = surge;
    }
    out
}
