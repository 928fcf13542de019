//! Tail primitives: the Pareto (type II) law, the Hill estimator with an
//! adaptive choice of the number of order statistics, the tail moment
//! factor and the data-driven exceedance threshold.

use serde::{Deserialize, Serialize};

use crate::error::{NeteError, Result};
use crate::setting::AutoOr;

/// Default lower bound on the number of order statistics scanned by
/// [`adaptive_k`].
pub const DEFAULT_MIN_ORDER: usize = 30;

/// Default scale constant of the threshold rule.
pub const DEFAULT_THRESHOLD_SCALE: f64 = 0.25;

/// Pareto (type II) law with density `beta * (1 + x)^(-beta - 1)` on `x > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoParams {
    beta: f64,
}

impl ParetoParams {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(NeteError::Domain(format!(
                "Pareto tail exponent must be positive, got {beta}"
            )));
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Extreme value index `1 / beta`.
    pub fn gamma(&self) -> f64 {
        1.0 / self.beta
    }
}

/// Inverse CDF, `(1 - p)^(-1/beta) - 1`.
pub fn pareto_quantile(p: f64, params: &ParetoParams) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(NeteError::Domain(format!(
            "probability must lie in [0, 1), got {p}"
        )));
    }
    Ok((-(-p).ln_1p() / params.beta).exp_m1())
}

/// CDF, `1 - (1 + x)^(-beta)`; zero for `x <= 0`.
pub fn pareto_cdf(x: f64, params: &ParetoParams) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    -(-params.beta * x.ln_1p()).exp_m1()
}

/// Survival function, `(1 + x)^(-beta)`.
pub fn pareto_sf(x: f64, params: &ParetoParams) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    (-params.beta * x.ln_1p()).exp()
}

/// Result of [`adaptive_hill`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HillEstimate {
    /// Estimated extreme value index.
    pub gamma_hat: f64,
    /// Number of upper order statistics used.
    pub k: usize,
    /// Sample size.
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HillConfig {
    /// Smallest number of order statistics considered.
    pub min_order: usize,
    /// Width multiplier of the stability band. `None` uses
    /// `sqrt(ln ln n)`.
    pub band: Option<f64>,
}

impl Default for HillConfig {
    fn default() -> Self {
        Self {
            min_order: DEFAULT_MIN_ORDER,
            band: None,
        }
    }
}

fn check_positive(values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        Some(v) => Err(NeteError::Domain(format!(
            "tail sample must be finite and positive, found {v}"
        ))),
        None => Ok(()),
    }
}

/// Hill statistic `(1/k) * sum_{j<k} ln(x_j / x_k)` on values sorted in
/// nonincreasing order (0-based, so `x_k` is the (k+1)-th largest).
pub fn hill_gamma(norms_desc: &[f64], k: usize) -> Result<f64> {
    let n = norms_desc.len();
    if k < 1 || k + 1 > n {
        return Err(NeteError::IndexOutOfRange {
            index: k,
            lo: 1,
            hi: n.saturating_sub(1),
        });
    }
    check_positive(norms_desc)?;
    let anchor = norms_desc[k];
    let sum: f64 = norms_desc[..k].iter().map(|x| (x / anchor).ln()).sum();
    Ok(sum / k as f64)
}

/// Default band multiplier `sqrt(ln ln n)`, floored at zero.
pub fn default_band(n: usize) -> f64 {
    (n as f64).ln().ln().max(0.0).sqrt()
}

/// Hill statistics for every order `1..=n-1`, indexed by order (entry 0 is
/// unused and set to zero). Runs in linear time from prefix sums of logs.
fn hill_path(norms_desc: &[f64]) -> Vec<f64> {
    let n = norms_desc.len();
    let mut path = vec![0.0; n];
    // logs relative to the maximum, so tied values give exact zeros
    let top = norms_desc[0].ln();
    let mut log_sum = 0.0;
    for k in 1..n {
        log_sum += norms_desc[k - 1].ln() - top;
        path[k] = log_sum / k as f64 - (norms_desc[k].ln() - top);
    }
    path
}

/// Lepski-type choice of the number of order statistics.
///
/// Scans `k = l_n, ..., n-1` and stops at the first `k` whose Hill
/// statistic leaves the band `|g(i) - g(k)| <= g(i) * band / sqrt(i)` of
/// some smaller order `i` in `l_n..=k`; returns that `k - 1`, or `n - 1` if
/// no order ever leaves a band.
pub fn adaptive_k(norms_desc: &[f64], min_order: usize, band: f64) -> Result<usize> {
    let n = norms_desc.len();
    if min_order < 1 || n < min_order + 1 {
        return Err(NeteError::InsufficientSample {
            needed: min_order.max(1) + 1,
            got: n,
        });
    }
    if !(band.is_finite() && band >= 0.0) {
        return Err(NeteError::Domain(format!(
            "band multiplier must be nonnegative, got {band}"
        )));
    }
    check_positive(norms_desc)?;

    let path = hill_path(norms_desc);
    let half_width = |i: usize| path[i] * band / (i as f64).sqrt();
    let violates = |i: usize, k: usize| (path[i] - path[k]).abs() > half_width(i);

    // Orders with the lowest upper band edge and the highest lower band edge
    // seen so far; only these can be violated first.
    let mut lowest_upper = min_order;
    let mut highest_lower = min_order;
    for k in min_order..n {
        if path[k] + half_width(k) < path[lowest_upper] + half_width(lowest_upper) {
            lowest_upper = k;
        }
        if path[k] - half_width(k) > path[highest_lower] - half_width(highest_lower) {
            highest_lower = k;
        }
        if violates(lowest_upper, k) || violates(highest_lower, k) {
            return Ok(k - 1);
        }
    }
    Ok(n - 1)
}

/// Sorts `values` in nonincreasing order (stable for ties).
pub fn sort_desc(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted
}

/// Adaptive Hill estimate of the extreme value index of `norms`.
pub fn adaptive_hill(norms: &[f64], min_order: usize) -> Result<HillEstimate> {
    adaptive_hill_with(
        norms,
        &HillConfig {
            min_order,
            band: None,
        },
    )
}

pub fn adaptive_hill_with(norms: &[f64], cfg: &HillConfig) -> Result<HillEstimate> {
    let n = norms.len();
    if n < cfg.min_order.max(1) + 1 {
        return Err(NeteError::InsufficientSample {
            needed: cfg.min_order.max(1) + 1,
            got: n,
        });
    }
    check_positive(norms)?;
    let sorted = sort_desc(norms);
    let band = cfg.band.unwrap_or_else(|| default_band(n));
    let k = adaptive_k(&sorted, cfg.min_order, band)?;
    let gamma_hat = hill_gamma(&sorted, k)?;
    Ok(HillEstimate { gamma_hat, k, n })
}

/// Tail moment factor `1 / (1 - alpha * gamma)`, the `alpha`-th moment of a
/// standard Pareto with index `1 / gamma`.
pub fn moment_factor(alpha_hat: f64, gamma_hat: f64) -> Result<f64> {
    if !(alpha_hat.is_finite() && gamma_hat.is_finite() && gamma_hat >= 0.0) {
        return Err(NeteError::Domain(format!(
            "moment factor needs finite alpha and nonnegative gamma, got ({alpha_hat}, {gamma_hat})"
        )));
    }
    let product = alpha_hat * gamma_hat;
    if product >= 1.0 {
        return Err(NeteError::InfiniteMoment { product });
    }
    Ok(1.0 / (1.0 - product))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdRule {
    pub c0: f64,
    pub mode: AutoOr,
}

impl Default for ThresholdRule {
    fn default() -> Self {
        Self {
            c0: DEFAULT_THRESHOLD_SCALE,
            mode: AutoOr::Auto,
        }
    }
}

impl ThresholdRule {
    pub fn fixed(t: f64) -> Self {
        Self {
            mode: AutoOr::Fixed(t),
            ..Self::default()
        }
    }
}

/// Exceedance threshold `c0 * n^(gamma / (1 + 2 min(1, gamma)))`, or the
/// pinned value in fixed mode.
pub fn select_threshold(n: usize, gamma_hat: f64, rule: &ThresholdRule) -> Result<f64> {
    match rule.mode {
        AutoOr::Fixed(t) => {
            if t.is_finite() && t > 0.0 {
                Ok(t)
            } else {
                Err(NeteError::Config(format!("fixed threshold must be positive, got {t}")))
            }
        }
        AutoOr::Auto => {
            if n < 1 {
                return Err(NeteError::InsufficientSample { needed: 1, got: 0 });
            }
            if !(rule.c0.is_finite() && rule.c0 > 0.0) {
                return Err(NeteError::Config(format!(
                    "threshold scale must be positive, got {}",
                    rule.c0
                )));
            }
            if !(gamma_hat.is_finite() && gamma_hat >= 0.0) {
                return Err(NeteError::Domain(format!(
                    "threshold rule needs a nonnegative index, got {gamma_hat}"
                )));
            }
            let exponent = gamma_hat / (1.0 + 2.0 * gamma_hat.min(1.0));
            Ok(rule.c0 * (n as f64).powf(exponent))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    const E: f64 = std::f64::consts::E;

    fn pareto(beta: f64) -> ParetoParams {
        ParetoParams::new(beta).unwrap()
    }

    /// Straight double loop over (k, i), computing every Hill statistic from
    /// scratch.
    fn adaptive_k_oracle(desc: &[f64], l: usize, band: f64) -> usize {
        let n = desc.len();
        let g: Vec<f64> = (0..n)
            .map(|i| {
                if i == 0 {
                    return 0.0;
                }
                let s: f64 = (0..i).map(|j| (desc[j] / desc[i]).ln()).sum();
                s / i as f64
            })
            .collect();
        for k in l..n {
            let gk = g[k];
            for i in l..=k {
                let gi = g[i];
                if (gi - gk).abs() > gi * band / (i as f64).sqrt() {
                    return k - 1;
                }
            }
        }
        n - 1
    }

    fn pareto_draws(n: usize, beta: f64, seed: u64) -> Vec<f64> {
        let params = pareto(beta);
        let mut rng = seeded(seed);
        (0..n)
            .map(|_| pareto_quantile(rng.random::<f64>(), &params).unwrap())
            .collect()
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(pareto_quantile(0.0, &pareto(2.0)).unwrap(), 0.0);
        assert!((pareto_quantile(0.5, &pareto(1.0)).unwrap() - 1.0).abs() < 1e-12);
        assert!((pareto_quantile(0.75, &pareto(2.0)).unwrap() - 1.0).abs() < 1e-12);
        assert!(pareto_quantile(1.0, &pareto(2.0)).is_err());
        assert!(pareto_quantile(-0.1, &pareto(2.0)).is_err());
        assert!(ParetoParams::new(0.0).is_err());
    }

    #[test]
    fn hill_examples() {
        for c in [1e-3, 1.0, 17.5] {
            assert!((hill_gamma(&[E * c, c], 1).unwrap() - 1.0).abs() < 1e-12);
        }
        assert_eq!(hill_gamma(&[3.0; 10], 5).unwrap(), 0.0);
        let g = hill_gamma(&[8.0, 4.0, 2.0, 1.0], 3).unwrap();
        assert!((g - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((g - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn hill_errors() {
        assert!(matches!(
            hill_gamma(&[2.0, 1.0], 2),
            Err(NeteError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            hill_gamma(&[2.0, 1.0], 0),
            Err(NeteError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            hill_gamma(&[2.0, 0.0], 1),
            Err(NeteError::Domain(_))
        ));
    }

    #[test]
    fn adaptive_k_examples() {
        let flat = vec![5.0; 100];
        assert_eq!(adaptive_k(&flat, 30, default_band(100)).unwrap(), 99);
        assert!(matches!(
            adaptive_k(&[1.0; 20], 30, 1.0),
            Err(NeteError::InsufficientSample { .. })
        ));

        let desc = sort_desc(&pareto_draws(5_000, 2.0, 11));
        let band = default_band(desc.len());
        let k = adaptive_k(&desc, 30, band).unwrap();
        assert_eq!(k, adaptive_k_oracle(&desc, 30, band));
        assert!((30..5_000).contains(&k));
    }

    #[test]
    fn adaptive_hill_flat_input() {
        let est = adaptive_hill(&[2.0; 64], 30).unwrap();
        assert_eq!(est.gamma_hat, 0.0);
        assert_eq!(est.k, 63);
        assert_eq!(est.n, 64);
    }

    #[test]
    fn adaptive_hill_centers_on_index() {
        for (beta, seed0) in [(2.0, 100u64), (1.5, 200u64)] {
            let truth = 1.0 / beta;
            let mut est: Vec<f64> = (0..20)
                .map(|s| adaptive_hill(&pareto_draws(50_000, beta, seed0 + s), 30).unwrap().gamma_hat)
                .collect();
            est.sort_by(f64::total_cmp);
            let median = 0.5 * (est[9] + est[10]);
            assert!((median - truth).abs() < 0.05, "beta = {beta}: median {median}");
            assert!(est.iter().all(|g| (g - truth).abs() < 0.4), "{est:?}");
        }
    }

    #[test]
    fn moment_factor_examples() {
        assert_eq!(moment_factor(0.0, 0.7).unwrap(), 1.0);
        assert!((moment_factor(1.0, 0.4).unwrap() - 5.0 / 3.0).abs() < 1e-12);
        assert!(matches!(
            moment_factor(2.0, 0.5),
            Err(NeteError::InfiniteMoment { .. })
        ));
    }

    #[test]
    fn threshold_examples() {
        let rule = ThresholdRule::default();
        let t = select_threshold(10_000, 1.0, &rule).unwrap();
        assert!((t - 0.25 * 10_000f64.powf(1.0 / 3.0)).abs() < 1e-12);
        assert!((t - 5.3861).abs() < 1e-4);
        assert!((select_threshold(10_000, 0.5, &rule).unwrap() - 2.5).abs() < 1e-12);
        assert_eq!(
            select_threshold(10_000, 0.5, &ThresholdRule::fixed(7.5)).unwrap(),
            7.5
        );
    }

    proptest! {
        #[test]
        fn hill_scale_invariant(
            mut xs in prop::collection::vec(1e-3f64..1e3, 2..60),
            c in 1e-4f64..1e4,
            k_frac in 0.0f64..1.0,
        ) {
            xs.sort_by(|a, b| b.total_cmp(a));
            let k = 1 + ((xs.len() - 2) as f64 * k_frac) as usize;
            let scaled: Vec<f64> = xs.iter().map(|x| x * c).collect();
            let a = hill_gamma(&xs, k).unwrap();
            let b = hill_gamma(&scaled, k).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn quantile_inverts_cdf(p in 0.0f64..0.999_999, beta in 0.2f64..6.0) {
            let params = pareto(beta);
            let x = pareto_quantile(p, &params).unwrap();
            prop_assert!((pareto_cdf(x, &params) - p).abs() < 1e-10);
        }

        #[test]
        fn quantile_increasing(p in 0.0f64..0.99, dp in 1e-6f64..0.009, beta in 0.2f64..6.0) {
            let params = pareto(beta);
            prop_assert!(pareto_quantile(p + dp, &params).unwrap() > pareto_quantile(p, &params).unwrap());
        }

        #[test]
        fn moment_factor_increasing_in_gamma(a in 0.01f64..3.0, g1 in 0.0f64..1.0, g2 in 0.0f64..1.0) {
            let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
            prop_assume!(hi - lo > 1e-9 && a * hi < 0.999);
            prop_assert!(moment_factor(a, hi).unwrap() > moment_factor(a, lo).unwrap());
        }

        #[test]
        fn threshold_monotone(n in 1usize..1_000_000, dn in 1usize..1000, g in 0.01f64..3.0, dg in 1e-6f64..0.5) {
            let rule = ThresholdRule::default();
            let t = select_threshold(n, g, &rule).unwrap();
            prop_assert!(select_threshold(n + dn, g, &rule).unwrap() >= t);
            if g + dg <= 1.0 {
                prop_assert!(select_threshold(n, g + dg, &rule).unwrap() >= t);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn adaptive_k_matches_oracle(
            n in 31usize..400,
            beta in 0.5f64..4.0,
            seed in any::<u64>(),
            band in prop_oneof![Just(None), (0.1f64..3.0).prop_map(Some)],
        ) {
            let desc = sort_desc(&pareto_draws(n, beta, seed));
            let band = band.unwrap_or_else(|| default_band(n));
            prop_assert_eq!(adaptive_k(&desc, 30, band).unwrap(), adaptive_k_oracle(&desc, 30, band));
        }
    }

    #[test]
    fn adaptive_k_matches_oracle_at_two_thousand() {
        for (seed, beta) in [(1u64, 1.0), (2, 2.5), (3, 0.7)] {
            let desc = sort_desc(&pareto_draws(2_000, beta, seed));
            let band = default_band(desc.len());
            assert_eq!(
                adaptive_k(&desc, 30, band).unwrap(),
                adaptive_k_oracle(&desc, 30, band)
            );
        }
    }
}
