//! Monte Carlo benchmark over synthetic designs and the semi-synthetic
//! wave/surge experiment.
//!
//! Each repetition draws its own stream from `(seed, config, n, rep)`, so
//! results do not depend on the number of worker threads.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{
    generate_semi_synthetic, generate_synthetic, normalize_extremes, test_set_estimate,
    train_test_split, AngleTerm, NoiseKind, SemiSynConfig, SyntheticConfig,
};
use crate::error::{NeteError, Result};
use crate::estimators::{estimate_methods, EstimatorConfig, Method, NeteEstimate};
use crate::rng::stream;

/// Fraction of failed repetitions above which a cell is flagged.
pub const FAILURE_FLAG_RATE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "default_d_z")]
    pub d_z: usize,
    #[serde(default = "default_d_u")]
    pub d_u: usize,
    #[serde(default)]
    pub noise_kind: NoiseKind,
    #[serde(default = "default_d_x")]
    pub d_x: usize,
    #[serde(default)]
    pub angle_term: AngleTerm,
}

fn default_d_z() -> usize {
    30
}

fn default_d_u() -> usize {
    5
}

fn default_d_x() -> usize {
    5
}

impl DesignSpec {
    pub fn linear(alpha: f64, beta: f64, d_z: usize, d_u: usize) -> Self {
        Self {
            alpha,
            beta,
            d_z,
            d_u,
            noise_kind: NoiseKind::LinearPareto,
            d_x: 5,
            angle_term: AngleTerm::Sum,
        }
    }

    pub fn mixture(alpha: f64, beta: f64, d_u: usize) -> Self {
        Self {
            noise_kind: NoiseKind::Mixture,
            ..Self::linear(alpha, beta, 0, d_u)
        }
    }

    pub fn synthetic(&self, n: usize, seed: u64) -> SyntheticConfig {
        SyntheticConfig {
            alpha: self.alpha,
            beta: self.beta,
            d_z: self.d_z,
            d_u: self.d_u,
            noise_kind: self.noise_kind,
            d_x: self.d_x,
            n,
            seed,
            angle_term: self.angle_term,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub configs: Vec<DesignSpec>,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub estimators: Vec<Method>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
}

fn default_repetitions() -> usize {
    50
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(NeteError::Config("repetitions must be at least 1".into()));
        }
        if self.configs.is_empty() || self.estimators.is_empty() {
            return Err(NeteError::Config("need at least one design and one estimator".into()));
        }
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(NeteError::Config("n_grid must be nonempty and strictly increasing".into()));
        }
        for spec in &self.configs {
            spec.synthetic(self.n_grid[0], 0).validate()?;
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| NeteError::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub config: usize,
    pub design: DesignSpec,
    pub n: usize,
    pub method: Method,
    pub ground_truth: f64,
    /// `None` when every repetition failed.
    pub mse: Option<f64>,
    pub bias: Option<f64>,
    /// Population variance over successful repetitions.
    pub variance: Option<f64>,
    pub mean_theta: Option<f64>,
    pub successes: usize,
    pub failure_count: usize,
    pub flagged: bool,
    /// Per-repetition estimates in repetition order, `None` for failures.
    pub estimates: Vec<Option<f64>>,
}

impl CellResult {
    fn from_estimates(
        config: usize,
        design: DesignSpec,
        n: usize,
        method: Method,
        ground_truth: f64,
        estimates: Vec<Option<f64>>,
    ) -> Self {
        let ok: Vec<f64> = estimates.iter().flatten().copied().collect();
        let successes = ok.len();
        let failure_count = estimates.len() - successes;
        let (mse, bias, variance, mean_theta) = if successes == 0 {
            (None, None, None, None)
        } else {
            let m = successes as f64;
            let mean = ok.iter().sum::<f64>() / m;
            let variance = ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
            let mse = ok.iter().map(|v| (v - ground_truth).powi(2)).sum::<f64>() / m;
            (Some(mse), Some(mean - ground_truth), Some(variance), Some(mean))
        };
        Self {
            config,
            design,
            n,
            method,
            ground_truth,
            mse,
            bias,
            variance,
            mean_theta,
            successes,
            failure_count,
            flagged: failure_count as f64 > FAILURE_FLAG_RATE * estimates.len() as f64,
            estimates,
        }
    }

    /// Standard error of `mean_theta`.
    pub fn standard_error(&self) -> Option<f64> {
        self.variance
            .filter(|_| self.successes > 1)
            .map(|v| (v * self.successes as f64 / (self.successes - 1) as f64 / self.successes as f64).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub seed: u64,
    pub repetitions: usize,
    pub cells: Vec<CellResult>,
}

impl BenchmarkResult {
    pub fn cell(&self, config: usize, n: usize, method: Method) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.config == config && c.n == n && c.method == method)
    }

    pub fn all_failed(&self) -> bool {
        self.cells.iter().all(|c| c.successes == 0)
    }

    /// One row per (config, n, method, metric).
    pub fn write_long_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "config", "alpha", "beta", "d_z", "d_u", "noise_kind", "n", "method", "metric", "value",
        ])?;
        for c in &self.cells {
            let kind = match c.design.noise_kind {
                NoiseKind::LinearPareto => "linear_pareto",
                NoiseKind::Mixture => "mixture",
            };
            let metrics: [(&str, Option<f64>); 7] = [
                ("ground_truth", Some(c.ground_truth)),
                ("mse", c.mse),
                ("bias", c.bias),
                ("variance", c.variance),
                ("mean_theta", c.mean_theta),
                ("failure_count", Some(c.failure_count as f64)),
                ("flagged", Some(c.flagged as u8 as f64)),
            ];
            for (name, value) in metrics {
                w.write_record([
                    c.config.to_string(),
                    c.design.alpha.to_string(),
                    c.design.beta.to_string(),
                    c.design.d_z.to_string(),
                    c.design.d_u.to_string(),
                    kind.to_string(),
                    c.n.to_string(),
                    c.method.to_string(),
                    name.to_string(),
                    value.map_or_else(|| "failed".to_string(), |v| v.to_string()),
                ])?;
            }
        }
        w.flush().map_err(|e| NeteError::io(Path::new("<csv>"), e))?;
        Ok(())
    }

    /// Writes `results.csv` and `summary.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| NeteError::io(dir, e))?;
        let csv_path = dir.join("results.csv");
        let file = std::fs::File::create(&csv_path).map_err(|e| NeteError::io(&csv_path, e))?;
        self.write_long_csv(std::io::BufWriter::new(file))?;
        let json_path = dir.join("summary.json");
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&json_path, text + "\n").map_err(|e| NeteError::io(&json_path, e))?;
        Ok(())
    }
}

/// One repetition of one design at one sample size.
fn run_repetition(
    cfg: &ExperimentConfig,
    config: usize,
    n_index: usize,
    rep: usize,
) -> Vec<Option<f64>> {
    let spec = &cfg.configs[config];
    let mut rng = stream(cfg.seed, &[config as u64, n_index as u64, rep as u64]);
    let n = cfg.n_grid[n_index];
    let outcome = generate_synthetic(&spec.synthetic(n, cfg.seed), &mut rng)
        .and_then(|(data, _)| estimate_methods(&data, &cfg.estimators, &cfg.estimator, &mut rng));
    match outcome {
        Ok(results) => results
            .into_iter()
            .map(|r| match r {
                Ok(est) if est.theta_hat.is_finite() => Some(est.theta_hat),
                Ok(_) => None,
                Err(e) => {
                    log::debug!("config {config}, n = {n}, rep {rep}: {e}");
                    None
                }
            })
            .collect(),
        Err(e) => {
            log::debug!("config {config}, n = {n}, rep {rep}: {e}");
            vec![None; cfg.estimators.len()]
        }
    }
}

/// Runs every (design, n, repetition) with up to `jobs` worker threads
/// (`None` uses the rayon default).
pub fn run_mse_benchmark(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<BenchmarkResult> {
    cfg.validate()?;
    let tasks: Vec<(usize, usize, usize)> = (0..cfg.configs.len())
        .flat_map(|c| (0..cfg.n_grid.len()).flat_map(move |j| (0..cfg.repetitions).map(move |r| (c, j, r))))
        .collect();
    let run = || -> Vec<Vec<Option<f64>>> {
        tasks
            .par_iter()
            .map(|&(c, j, r)| run_repetition(cfg, c, j, r))
            .collect()
    };
    let outputs = match jobs {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| NeteError::Config(e.to_string()))?
            .install(run),
        None => run(),
    };

    let mut cells = Vec::new();
    let mut chunks = outputs.chunks(cfg.repetitions);
    for (c, spec) in cfg.configs.iter().enumerate() {
        let truth = crate::datagen::ground_truth_nete(spec.alpha, spec.beta)?;
        for &n in &cfg.n_grid {
            let reps = chunks.next().expect("one chunk per cell");
            for (m, &method) in cfg.estimators.iter().enumerate() {
                let estimates = reps.iter().map(|r| r[m]).collect();
                cells.push(CellResult::from_estimates(c, *spec, n, method, truth, estimates));
            }
        }
    }
    Ok(BenchmarkResult {
        seed: cfg.seed,
        repetitions: cfg.repetitions,
        cells,
    })
}

/// The four exponent pairs of the semi-synthetic experiment.
pub const SEMISYN_EXPONENTS: [(f64, f64); 4] = [(2.0, 2.0), (1.0, 3.0), (2.5, 1.0), (1.5, 1.5)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiSynRow {
    pub alpha1: f64,
    pub alpha2: f64,
    pub evt_dr: Option<f64>,
    pub evt_ipw: Option<f64>,
    pub naive_dr: Option<f64>,
    pub naive_ipw: Option<f64>,
    pub test_set: Option<f64>,
    pub threshold_t: Option<f64>,
    pub n_tail: Option<usize>,
    pub alpha_hat: Option<f64>,
}

fn pick(estimates: &[Result<NeteEstimate>], method: Method) -> Option<&NeteEstimate> {
    estimates
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .find(|e| e.method == method)
}

/// One row per config: the four estimates on the training rows and the
/// surrogate truth on the held-out rows.
pub fn run_semi_synthetic(
    raw: &Array2<f64>,
    configs: &[SemiSynConfig],
    estimator: &EstimatorConfig,
) -> Result<Vec<SemiSynRow>> {
    let u = normalize_extremes(raw)?;
    configs
        .iter()
        .map(|cfg| {
            let mut rng = stream(cfg.seed, &[cfg.alpha1.to_bits(), cfg.alpha2.to_bits()]);
            let data = generate_semi_synthetic(&u, cfg, &mut rng)?;
            let (train, test) = train_test_split(&data, cfg.train_size, cfg.random_split, &mut rng)?;
            let methods = [Method::EvtDr, Method::EvtIpw, Method::NaiveDr, Method::NaiveIpw];
            let estimates = match estimate_methods(&train, &methods, estimator, &mut rng) {
                Ok(v) => v,
                Err(e) if e.is_numerical() => {
                    log::warn!("({}, {}): {e}", cfg.alpha1, cfg.alpha2);
                    Vec::new()
                }
                Err(e) => return Err(e),
            };
            for r in &estimates {
                if let Err(e) = r {
                    log::warn!("({}, {}): {e}", cfg.alpha1, cfg.alpha2);
                }
            }
            let theta = |m| pick(&estimates, m).map(|e| e.theta_hat);
            let any = estimates.iter().find_map(|r| r.as_ref().ok());
            let test_set = test_set_estimate(&test, cfg.alpha1, cfg.alpha2)
                .map_err(|e| log::warn!("test-set estimate ({}, {}): {e}", cfg.alpha1, cfg.alpha2))
                .ok();
            Ok(SemiSynRow {
                alpha1: cfg.alpha1,
                alpha2: cfg.alpha2,
                evt_dr: theta(Method::EvtDr),
                evt_ipw: theta(Method::EvtIpw),
                naive_dr: theta(Method::NaiveDr),
                naive_ipw: theta(Method::NaiveIpw),
                test_set,
                threshold_t: any.map(|e| e.threshold_t),
                n_tail: any.map(|e| e.n_tail),
                alpha_hat: any.map(|e| e.alpha_hat),
            })
        })
        .collect()
}

pub fn write_semisyn_csv<W: Write>(rows: &[SemiSynRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["alpha1", "alpha2", "evt_dr", "evt_ipw", "naive_dr", "naive_ipw", "test_set"])?;
    let fmt = |v: Option<f64>| v.map_or_else(|| "failed".to_string(), |v| v.to_string());
    for r in rows {
        w.write_record([
            r.alpha1.to_string(),
            r.alpha2.to_string(),
            fmt(r.evt_dr),
            fmt(r.evt_ipw),
            fmt(r.naive_dr),
            fmt(r.naive_ipw),
            fmt(r.test_set),
        ])?;
    }
    w.flush().map_err(|e| NeteError::io(Path::new("<csv>"), e))?;
    Ok(())
}
