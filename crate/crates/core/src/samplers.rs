//! Seeded generators of multivariate regularly varying noise.
//!
//! Two mechanisms: a nonnegative linear map of iid Pareto coordinates
//! (`U = A Z`), and independent coordinates drawn from an equal mixture of
//! Pareto(beta) and Pareto(beta + 1). Pareto draws use the inverse CDF on an
//! open-interval uniform, so every entry is strictly positive.

use ndarray::Array2;
use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NeteError, Result};
use crate::evt::{pareto_quantile, ParetoParams};

fn draw_pareto<R: Rng + ?Sized>(params: &ParetoParams, rng: &mut R) -> f64 {
    let p: f64 = rng.sample(Open01);
    pareto_quantile(p, params).expect("open-interval uniform is a valid probability")
}

/// Mixing matrix with iid `Unif[1, 2]` entries.
pub fn sample_matrix_a<R: Rng + ?Sized>(d_u: usize, d_z: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((d_u, d_z), || rng.random_range(1.0..=2.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearParetoSpec {
    params: ParetoParams,
    a: Array2<f64>,
}

impl LinearParetoSpec {
    /// `a` is `d_u x d_z` with nonnegative entries.
    pub fn new(beta: f64, a: Array2<f64>) -> Result<Self> {
        let params = ParetoParams::new(beta)?;
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(NeteError::Config("mixing matrix must be nonempty".into()));
        }
        if a.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(NeteError::Config(
                "mixing matrix entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { params, a })
    }

    pub fn beta(&self) -> f64 {
        self.params.beta()
    }

    pub fn d_u(&self) -> usize {
        self.a.nrows()
    }

    pub fn d_z(&self) -> usize {
        self.a.ncols()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.a
    }
}

/// `n x d_u` matrix whose rows are `A Z_i`, `Z_i` iid Pareto(beta) vectors.
pub fn sample_linear_pareto<R: Rng + ?Sized>(
    n: usize,
    spec: &LinearParetoSpec,
    rng: &mut R,
) -> Array2<f64> {
    let d_z = spec.d_z();
    let mut z = Array2::zeros((n, d_z));
    z.mapv_inplace(|_: f64| draw_pareto(&spec.params, rng));
    z.dot(&spec.a.t())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub beta: f64,
    pub d_u: usize,
}

impl MixtureSpec {
    pub fn new(beta: f64, d_u: usize) -> Result<Self> {
        ParetoParams::new(beta)?;
        if d_u == 0 {
            return Err(NeteError::Config("d_u must be at least 1".into()));
        }
        Ok(Self { beta, d_u })
    }
}

/// `n x d_u` matrix of independent entries from
/// `0.5 Pareto(beta) + 0.5 Pareto(beta + 1)`.
pub fn sample_pareto_mixture<R: Rng + ?Sized>(
    n: usize,
    spec: &MixtureSpec,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let heavy = ParetoParams::new(spec.beta)?;
    let light = ParetoParams::new(spec.beta + 1.0)?;
    let mut u = Array2::zeros((n, spec.d_u));
    u.mapv_inplace(|_: f64| {
        let params = if rng.random_bool(0.5) { &heavy } else { &light };
        draw_pareto(params, rng)
    });
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evt::adaptive_hill;
    use crate::rng::seeded;
    use crate::table::l1_norm;

    fn l1_norms(u: &Array2<f64>) -> Vec<f64> {
        u.rows().into_iter().map(l1_norm).collect()
    }

    #[test]
    fn matrix_a_range_and_determinism() {
        let one = sample_matrix_a(1, 1, &mut seeded(0));
        assert!((1.0..=2.0).contains(&one[[0, 0]]));

        for seed in 0..10 {
            let a = sample_matrix_a(10, 50, &mut seeded(seed));
            assert_eq!(a.len(), 500);
            assert!(a.iter().all(|v| (1.0..=2.0).contains(v)));
            let mean = a.mean().unwrap();
            assert!((1.45..=1.55).contains(&mean), "seed {seed}: mean {mean}");
        }
        assert_eq!(
            sample_matrix_a(4, 3, &mut seeded(9)),
            sample_matrix_a(4, 3, &mut seeded(9))
        );
    }

    #[test]
    fn linear_pareto_marginal_tail() {
        let spec = LinearParetoSpec::new(2.0, Array2::ones((1, 1))).unwrap();
        let u = sample_linear_pareto(100_000, &spec, &mut seeded(3));
        for x in [1.0f64, 3.0] {
            let emp = u.iter().filter(|v| **v > x).count() as f64 / u.len() as f64;
            let exact = (1.0 + x).powf(-2.0);
            assert!((emp - exact).abs() < 0.01, "x = {x}: {emp} vs {exact}");
        }
    }

    #[test]
    fn empty_draws() {
        let spec = LinearParetoSpec::new(2.0, Array2::ones((3, 2))).unwrap();
        assert_eq!(sample_linear_pareto(0, &spec, &mut seeded(0)).dim(), (0, 3));
        let mix = MixtureSpec::new(2.0, 4).unwrap();
        assert_eq!(sample_pareto_mixture(0, &mix, &mut seeded(0)).unwrap().dim(), (0, 4));
    }

    #[test]
    fn linear_pareto_strictly_positive() {
        let mut rng = seeded(5);
        let a = sample_matrix_a(5, 30, &mut rng);
        let spec = LinearParetoSpec::new(1.5, a).unwrap();
        let u = sample_linear_pareto(2_000, &spec, &mut rng);
        assert!(u.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn linear_pareto_tail_index() {
        let mut rng = seeded(21);
        let a = sample_matrix_a(5, 30, &mut rng);
        let spec = LinearParetoSpec::new(1.5, a).unwrap();
        let u = sample_linear_pareto(100_000, &spec, &mut rng);
        let est = adaptive_hill(&l1_norms(&u), 30).unwrap();
        assert!((est.gamma_hat - 1.0 / 1.5).abs() < 0.15, "{est:?}");
    }

    #[test]
    fn mixture_tail_index_and_determinism() {
        let spec = MixtureSpec::new(1.5, 5).unwrap();
        let u = sample_pareto_mixture(100_000, &spec, &mut seeded(8)).unwrap();
        assert!(u.iter().all(|v| *v > 0.0));
        let est = adaptive_hill(&l1_norms(&u), 30).unwrap();
        assert!((est.gamma_hat - 1.0 / 1.5).abs() < 0.15, "{est:?}");

        let again = sample_pareto_mixture(100_000, &spec, &mut seeded(8)).unwrap();
        assert_eq!(u, again);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(LinearParetoSpec::new(2.0, Array2::from_elem((2, 2), -1.0)).is_err());
        assert!(LinearParetoSpec::new(0.0, Array2::ones((2, 2))).is_err());
        assert!(MixtureSpec::new(-1.0, 2).is_err());
        assert!(MixtureSpec::new(1.0, 0).is_err());
    }
}
