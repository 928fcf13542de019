use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nete_core::bench::{run_mse_benchmark, run_semi_synthetic, write_semisyn_csv, ExperimentConfig, SEMISYN_EXPONENTS};
use nete_core::datagen::{generate_synthetic, load_wavesurge, SemiSynConfig, SyntheticConfig};
use nete_core::estimators::{estimate_nete, EstimatorConfig, Method};
use nete_core::evt::adaptive_hill_with;
use nete_core::rng::seeded;
use nete_core::{AutoOr, NeteError, ObservationTable};

const WAVESURGE_ENV: &str = "NETE_WAVESURGE";

#[derive(Parser)]
#[command(name = "nete", version, about = "Normalized extreme treatment effect estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a synthetic dataset and write it as CSV.
    Simulate {
        /// JSON file with synthetic design fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate the effect on a CSV dataset and print it as JSON.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "evt-dr")]
        method: Method,
        #[command(flatten)]
        est: EstimatorArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the Monte Carlo MSE benchmark.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for results.csv and summary.json.
        #[arg(long, default_value = "benchmark_out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        est: EstimatorArgs,
    },
    /// Run the semi-synthetic wave/surge experiment.
    Semisyn {
        /// Wave/surge CSV; defaults to $NETE_WAVESURGE.
        #[arg(long)]
        wavesurge: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        train_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output path; prints to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        est: EstimatorArgs,
    },
    /// Print the adaptive Hill estimate of the noise norms.
    Hill {
        #[arg(long)]
        data: PathBuf,
    },
}

#[derive(Args)]
struct EstimatorArgs {
    /// JSON file with estimator options.
    #[arg(long = "estimator-config")]
    estimator_config: Option<PathBuf>,
    /// Outcome exponent: `auto` or a number.
    #[arg(long)]
    alpha: Option<AutoOr>,
    /// Threshold: `auto` or a number.
    #[arg(long)]
    threshold: Option<AutoOr>,
}

impl EstimatorArgs {
    fn apply(&self, mut cfg: EstimatorConfig) -> Result<EstimatorConfig, NeteError> {
        if let Some(path) = &self.estimator_config {
            cfg = read_json(path)?;
        }
        if let Some(alpha) = self.alpha {
            cfg.alpha = alpha;
        }
        if let Some(threshold) = self.threshold {
            cfg.threshold.mode = threshold;
        }
        Ok(cfg)
    }

    fn is_set(&self) -> bool {
        self.estimator_config.is_some() || self.alpha.is_some() || self.threshold.is_some()
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, NeteError> {
    let text = std::fs::read_to_string(path).map_err(|e| NeteError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn exit_code(err: &NeteError) -> u8 {
    match err {
        NeteError::Io { .. }
        | NeteError::Parse { .. }
        | NeteError::Schema { .. }
        | NeteError::Csv(_)
        | NeteError::Json(_) => 3,
        NeteError::Config(_) | NeteError::InvalidTable(_) => 2,
        _ => 4,
    }
}

fn run(cli: Cli) -> Result<(), NeteError> {
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let mut cfg: SyntheticConfig = match config {
                Some(path) => read_json(&path)?,
                None => SyntheticConfig::default(),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let (table, truth) = generate_synthetic(&cfg, &mut seeded(cfg.seed))?;
            table.save_csv(&out)?;
            eprintln!("wrote {} rows to {} (ground truth {truth})", table.len(), out.display());
        }
        Command::Estimate { data, method, est, seed } => {
            let table = ObservationTable::load_csv(&data)?;
            let cfg = est.apply(EstimatorConfig::default())?;
            let estimate = estimate_nete(&table, method, &cfg, &mut seeded(seed))?;
            println!("{}", serde_json::to_string_pretty(&estimate)?);
        }
        Command::Benchmark { config, out, seed, jobs, est } => {
            let mut cfg = ExperimentConfig::from_json_file(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if est.is_set() {
                cfg.estimator = est.apply(cfg.estimator)?;
            }
            let result = run_mse_benchmark(&cfg, jobs)?;
            result.save(&out)?;
            for c in result.cells.iter().filter(|c| c.flagged) {
                eprintln!(
                    "flagged: config {} n = {} {}: {} of {} repetitions failed",
                    c.config, c.n, c.method, c.failure_count, cfg.repetitions
                );
            }
            if result.all_failed() {
                return Err(NeteError::Domain("every benchmark cell failed".into()));
            }
            eprintln!("wrote {}", out.display());
        }
        Command::Semisyn { wavesurge, train_size, seed, out, est } => {
            let path = match wavesurge.or_else(|| std::env::var_os(WAVESURGE_ENV).map(PathBuf::from)) {
                Some(p) => p,
                None => {
                    return Err(NeteError::Config(format!(
                        "no wave/surge file: pass --wavesurge or set {WAVESURGE_ENV}"
                    )))
                }
            };
            let raw = load_wavesurge(&path)?;
            let cfg = est.apply(EstimatorConfig::default())?;
            let configs: Vec<SemiSynConfig> = SEMISYN_EXPONENTS
                .iter()
                .map(|&(alpha1, alpha2)| SemiSynConfig {
                    alpha1,
                    alpha2,
                    train_size,
                    seed,
                    wavesurge_path: Some(path.clone()),
                    random_split: false,
                })
                .collect();
            let rows = run_semi_synthetic(&raw, &configs, &cfg)?;
            match out {
                Some(p) => {
                    let file = std::fs::File::create(&p).map_err(|e| NeteError::Io { path: p.clone(), source: e })?;
                    write_semisyn_csv(&rows, file)?;
                }
                None => write_semisyn_csv(&rows, std::io::stdout().lock())?,
            }
        }
        Command::Hill { data } => {
            let table = ObservationTable::load_csv(&data)?;
            let est = adaptive_hill_with(&table.norms(), &Default::default())?;
            println!("gamma_hat = {}\nk = {}\nn = {}", est.gamma_hat, est.k, est.n);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
