//! Estimation of treatment effects on extreme events.
//!
//! The normalized extreme treatment effect is the limit, as `t` grows, of
//! `E[(Y(1) - Y(0)) / t^alpha | ||U|| > t]`, where `U` is a regularly varying
//! noise vector and `alpha` the growth exponent of the outcome. Under
//! multivariate regular variation it factors into a spectral effect `eta`
//! (estimated by IPW or doubly robust scores on tail exceedances) and a tail
//! moment factor `mu = 1 / (1 - alpha * gamma)` (estimated with an adaptive
//! Hill estimator).
//!
//! Modules:
//! - [`evt`]: Pareto law, adaptive Hill, moment factor, threshold rule
//! - [`samplers`]: regularly varying noise generators
//! - [`nuisance`]: propensity, outcome regressions, scaling exponent
//! - [`estimators`]: EVT-IPW, EVT-DR and the naive baselines
//! - [`datagen`]: synthetic and semi-synthetic data, ground-truth oracles
//! - [`bench`]: Monte Carlo benchmark and semi-synthetic experiment drivers

pub mod bench;
pub mod datagen;
pub mod error;
pub mod estimators;
pub mod evt;
pub mod nuisance;
pub mod rng;
pub mod samplers;
pub mod setting;
pub mod table;

pub use error::{NeteError, Result};

pub use evt::{adaptive_hill, HillEstimate, ParetoParams, ThresholdRule};
pub use rng::NeteRng;
pub use setting::AutoOr;

pub use estimators::{estimate_nete, EstimatorConfig, Method, NeteEstimate};
pub use table::ObservationTable;
