//! Treatment-effect estimators on tail exceedances.
//!
//! The EVT estimators return `theta = eta * mu`: `eta` averages IPW or
//! doubly robust scores of the scaled outcome `Y / ||U||^alpha` over the
//! exceedances of the estimation half, and `mu = 1 / (1 - alpha * gamma)`
//! comes from an adaptive Hill estimate on the exceedance norms. The naive
//! baselines instead scale the raw outcome by `t^alpha`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NeteError, Result};
use crate::evt::{adaptive_hill_with, moment_factor, select_threshold, HillConfig, ThresholdRule};
use crate::nuisance::{
    estimate_alpha, fit_propensity, fit_pseudo_outcome, fit_raw_outcome, ForestConfig,
    OutcomeKind, OutcomePredictor, Propensity, PropensityConfig,
};
use crate::setting::AutoOr;
use crate::table::ObservationTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    EvtIpw,
    EvtDr,
    NaiveIpw,
    NaiveDr,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::EvtDr, Method::EvtIpw, Method::NaiveDr, Method::NaiveIpw];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::EvtIpw => "evt_ipw",
            Method::EvtDr => "evt_dr",
            Method::NaiveIpw => "naive_ipw",
            Method::NaiveDr => "naive_dr",
        }
    }

    pub fn is_evt(self) -> bool {
        matches!(self, Method::EvtIpw | Method::EvtDr)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "evt_ipw" => Ok(Method::EvtIpw),
            "evt_dr" => Ok(Method::EvtDr),
            "naive_ipw" => Ok(Method::NaiveIpw),
            "naive_dr" => Ok(Method::NaiveDr),
            _ => Err(format!(
                "unknown method `{s}` (expected evt-ipw, evt-dr, naive-ipw or naive-dr)"
            )),
        }
    }
}

/// Which rows feed the scaling-exponent regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSource {
    /// The nuisance half only.
    #[default]
    FirstHalf,
    /// The full sample.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Outcome growth exponent, estimated by log-log regression when `auto`.
    pub alpha: AutoOr,
    pub alpha_source: AlphaSource,
    /// Restrict the log-log regression to exceedances of the threshold.
    pub alpha_tail_only: bool,
    pub threshold: ThresholdRule,
    pub hill: HillConfig,
    pub propensity: PropensityConfig,
    pub outcome: OutcomeKind,
    pub forest: ForestConfig,
    /// Fit outcome models on the nuisance half's exceedances only.
    pub tail_only_nuisance: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            alpha: AutoOr::Auto,
            alpha_source: AlphaSource::FirstHalf,
            alpha_tail_only: false,
            threshold: ThresholdRule::default(),
            hill: HillConfig::default(),
            propensity: PropensityConfig::default(),
            outcome: OutcomeKind::RandomForest,
            forest: ForestConfig::default(),
            tail_only_nuisance: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeteEstimate {
    pub method: Method,
    pub eta_hat: f64,
    /// Tail moment factor; exactly 1 for the naive baselines.
    pub mu_hat: f64,
    pub theta_hat: f64,
    pub threshold_t: f64,
    pub n_tail: usize,
    pub alpha_hat: f64,
    /// Index entering `mu_hat` (Hill on the exceedance norms); for the naive
    /// baselines, the index used by the threshold rule.
    pub gamma_hat: f64,
    /// Order statistics used by the Hill estimate behind `gamma_hat`.
    pub hill_k: usize,
    /// Index estimated on all norms of the estimation half, used to set `t`.
    pub gamma_threshold: f64,
    pub n: usize,
}

/// Random halves of `0..n` with sizes `floor(n/2)` and `ceil(n/2)`.
pub fn split_indices<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(NeteError::InsufficientSample { needed: 2, got: n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let second = perm.split_off(n / 2);
    Ok((perm, second))
}

pub fn split_sample<R: Rng + ?Sized>(
    data: &ObservationTable,
    rng: &mut R,
) -> Result<(ObservationTable, ObservationTable)> {
    let (a, b) = split_indices(data.len(), rng)?;
    Ok((data.select(&a), data.select(&b)))
}

fn ensure_tail(tail: &ObservationTable, threshold: f64) -> Result<()> {
    if tail.is_empty() {
        Err(NeteError::EmptyTail { threshold })
    } else {
        Ok(())
    }
}

fn ipw_weight(d: f64, p: f64) -> f64 {
    d / p - (1.0 - d) / (1.0 - p)
}

fn dr_weight(d: f64, p: f64) -> f64 {
    (d - p) / (p * (1.0 - p))
}

/// IPW spectral effect: mean of `Y/||U||^alpha * (D/p - (1-D)/(1-p))` over
/// the exceedance rows in `tail`.
pub fn eta_ipw<P: Propensity + ?Sized>(tail: &ObservationTable, prop: &P, alpha_hat: f64) -> Result<f64> {
    ensure_tail(tail, f64::NAN)?;
    let norms = tail.norms();
    let total: f64 = (0..tail.len())
        .map(|i| {
            let p = prop.propensity(tail.x().row(i));
            let d = tail.d()[i];
            tail.y()[i] / norms[i].powf(alpha_hat) * ipw_weight(d, p)
        })
        .sum();
    Ok(total / tail.len() as f64)
}

/// Doubly robust spectral effect over the exceedance rows in `tail`, with
/// the outcome model evaluated at the l1 noise directions.
pub fn eta_dr<P, O>(tail: &ObservationTable, prop: &P, outcome: &O, alpha_hat: f64) -> Result<f64>
where
    P: Propensity + ?Sized,
    O: OutcomePredictor + ?Sized,
{
    ensure_tail(tail, f64::NAN)?;
    let norms = tail.norms();
    let s = tail.angles();
    let total: f64 = (0..tail.len())
        .map(|i| {
            let x = tail.x().row(i);
            let si = s.row(i);
            let d = tail.d()[i];
            let p = prop.propensity(x);
            let g1 = outcome.predict(x, 1.0, si);
            let g0 = outcome.predict(x, 0.0, si);
            let gd = if d == 1.0 { g1 } else { g0 };
            let scaled = tail.y()[i] / norms[i].powf(alpha_hat);
            g1 - g0 + dr_weight(d, p) * (scaled - gd)
        })
        .sum();
    Ok(total / tail.len() as f64)
}

/// Naive IPW baseline on the rows of `second_half` with `||U|| > t`, scaling
/// the raw outcome by `t^alpha`.
pub fn naive_ipw<P: Propensity + ?Sized>(
    second_half: &ObservationTable,
    t: f64,
    alpha_hat: f64,
    prop: &P,
) -> Result<f64> {
    let tail = second_half.exceedances(t);
    ensure_tail(&tail, t)?;
    let total: f64 = (0..tail.len())
        .map(|i| {
            let p = prop.propensity(tail.x().row(i));
            tail.y()[i] * ipw_weight(tail.d()[i], p)
        })
        .sum();
    Ok(total / (t.powf(alpha_hat) * tail.len() as f64))
}

/// Naive DR baseline; `raw_outcome` regresses `Y` on `(X, D, U)`.
pub fn naive_dr<P, O>(
    second_half: &ObservationTable,
    t: f64,
    alpha_hat: f64,
    prop: &P,
    raw_outcome: &O,
) -> Result<f64>
where
    P: Propensity + ?Sized,
    O: OutcomePredictor + ?Sized,
{
    let tail = second_half.exceedances(t);
    ensure_tail(&tail, t)?;
    let total: f64 = (0..tail.len())
        .map(|i| {
            let x = tail.x().row(i);
            let u = tail.u().row(i);
            let d = tail.d()[i];
            let p = prop.propensity(x);
            let g1 = raw_outcome.predict(x, 1.0, u);
            let g0 = raw_outcome.predict(x, 0.0, u);
            let gd = if d == 1.0 { g1 } else { g0 };
            g1 - g0 + dr_weight(d, p) * (tail.y()[i] - gd)
        })
        .sum();
    Ok(total / (t.powf(alpha_hat) * tail.len() as f64))
}

/// Runs the full pipeline for one method.
pub fn estimate_nete<R: Rng + ?Sized>(
    data: &ObservationTable,
    method: Method,
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<NeteEstimate> {
    estimate_methods(data, &[method], cfg, rng)?
        .pop()
        .expect("one result per requested method")
}

/// Runs several methods on one split, one threshold and one set of nuisance
/// fits. The outer error covers the shared steps; each method can still fail
/// on its own (e.g. too few exceedances for the tail Hill estimate).
pub fn estimate_methods<R: Rng + ?Sized>(
    data: &ObservationTable,
    methods: &[Method],
    cfg: &EstimatorConfig,
    rng: &mut R,
) -> Result<Vec<Result<NeteEstimate>>> {
    let n = data.len();
    let (first, second) = split_sample(data, rng)?;
    let forest_seed: u64 = rng.random();

    let hill_all = adaptive_hill_with(&second.norms(), &cfg.hill)?;
    let t = select_threshold(n, hill_all.gamma_hat, &cfg.threshold)?;

    let alpha_hat = match cfg.alpha {
        AutoOr::Fixed(a) => a,
        AutoOr::Auto => {
            let source = match cfg.alpha_source {
                AlphaSource::FirstHalf => first.clone(),
                AlphaSource::All => data.clone(),
            };
            let source = if cfg.alpha_tail_only { source.exceedances(t) } else { source };
            estimate_alpha(source.y().as_slice().expect("contiguous"), &source.norms())?.alpha_hat
        }
    };
    if !alpha_hat.is_finite() {
        return Err(NeteError::Domain(format!("scaling exponent is not finite: {alpha_hat}")));
    }

    let tail = second.exceedances(t);
    ensure_tail(&tail, t)?;
    let prop = fit_propensity(first.x(), first.d(), &cfg.propensity)?;
    let nuisance = if cfg.tail_only_nuisance { first.exceedances(t) } else { first };

    let needs_evt = methods.iter().any(|m| m.is_evt());
    let tail_hill = needs_evt.then(|| adaptive_hill_with(&tail.norms(), &cfg.hill));

    let mut pseudo = None;
    let mut raw = None;
    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        let result = (|| -> Result<NeteEstimate> {
            let base = NeteEstimate {
                method,
                eta_hat: f64::NAN,
                mu_hat: 1.0,
                theta_hat: f64::NAN,
                threshold_t: t,
                n_tail: tail.len(),
                alpha_hat,
                gamma_hat: hill_all.gamma_hat,
                hill_k: hill_all.k,
                gamma_threshold: hill_all.gamma_hat,
                n,
            };
            match method {
                Method::EvtIpw | Method::EvtDr => {
                    let hill = match tail_hill.as_ref().expect("computed for EVT methods") {
                        Ok(h) => *h,
                        Err(e) => return Err(clone_numerical(e)),
                    };
                    let mu_hat = moment_factor(alpha_hat, hill.gamma_hat)?;
                    let eta_hat = if method == Method::EvtIpw {
                        eta_ipw(&tail, &prop, alpha_hat)?
                    } else {
                        if pseudo.is_none() {
                            pseudo = Some(fit_pseudo(&nuisance, alpha_hat, cfg, forest_seed)?);
                        }
                        eta_dr(&tail, &prop, pseudo.as_ref().unwrap(), alpha_hat)?
                    };
                    Ok(NeteEstimate {
                        eta_hat,
                        mu_hat,
                        theta_hat: eta_hat * mu_hat,
                        gamma_hat: hill.gamma_hat,
                        hill_k: hill.k,
                        ..base
                    })
                }
                Method::NaiveIpw => {
                    let theta = naive_ipw(&second, t, alpha_hat, &prop)?;
                    Ok(NeteEstimate { eta_hat: theta, theta_hat: theta, ..base })
                }
                Method::NaiveDr => {
                    if raw.is_none() {
                        let y = nuisance.y().to_vec();
                        raw = Some(fit_raw_outcome(
                            nuisance.x(),
                            nuisance.d(),
                            nuisance.u(),
                            &y,
                            cfg.outcome,
                            &cfg.forest,
                            forest_seed ^ 0x5A5A_5A5A,
                        )?);
                    }
                    let theta = naive_dr(&second, t, alpha_hat, &prop, raw.as_ref().unwrap())?;
                    Ok(NeteEstimate { eta_hat: theta, theta_hat: theta, ..base })
                }
            }
        })();
        out.push(result);
    }
    Ok(out)
}

fn fit_pseudo(
    nuisance: &ObservationTable,
    alpha_hat: f64,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<crate::nuisance::OutcomeModel> {
    let norms = nuisance.norms();
    let scaled: Vec<f64> = nuisance
        .y()
        .iter()
        .zip(&norms)
        .map(|(y, n)| y / n.powf(alpha_hat))
        .collect();
    fit_pseudo_outcome(
        nuisance.x(),
        nuisance.d(),
        &nuisance.angles(),
        &scaled,
        cfg.outcome,
        &cfg.forest,
        seed,
    )
}

// Hill errors are plain data; rebuild them so each method owns its error.
fn clone_numerical(e: &NeteError) -> NeteError {
    match e {
        NeteError::InsufficientSample { needed, got } => NeteError::InsufficientSample {
            needed: *needed,
            got: *got,
        },
        other => NeteError::Domain(other.to_string()),
    }
}

/// Mean over rows of a per-row score; used by tests and diagnostics.
pub fn tail_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
