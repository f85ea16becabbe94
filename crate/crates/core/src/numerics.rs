//! Dense linear algebra and seeded sampling.
//!
//! Matrices are `nalgebra` dynamic matrices. Every `(...)^-1 (...)` product in
//! the update is realized through [`spd_solve`], which factors once with
//! Cholesky and never forms an explicit inverse.
//!
//! Random streams use ChaCha8 (`rand_chacha`) seeded from a `u64`, and normal
//! draws use the ziggurat sampler of `rand_distr::StandardNormal`. Both are
//! platform independent, so a seed fully determines every sampled matrix.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative symmetry tolerance accepted by [`spd_solve`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Builds a matrix from row-major entries, rejecting NaN and infinities.
pub fn matrix_from_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Matrix> {
    if entries.len() != rows * cols {
        return Err(Error::dims("matrix_from_row_major", rows * cols, entries.len()));
    }
    if entries.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix entries"));
    }
    Ok(Matrix::from_row_slice(rows, cols, entries))
}

pub fn ensure_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn max_asymmetry(a: &Matrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

fn check_spd_inputs(a: &Matrix, b: &Matrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::dims(
            "spd_solve lhs",
            "square matrix",
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    if b.nrows() != a.nrows() {
        return Err(Error::dims("spd_solve rhs rows", a.nrows(), b.nrows()));
    }
    ensure_finite(a, "spd_solve lhs")?;
    ensure_finite(b, "spd_solve rhs")?;
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let asym = max_asymmetry(a);
    if asym > SYMMETRY_TOLERANCE * scale {
        return Err(Error::NotSymmetric { max_asymmetry: asym });
    }
    Ok(())
}

fn factor(a: &Matrix) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(a.clone()).ok_or(Error::NotPositiveDefinite)
}

/// Solves `A X = B` for symmetric positive definite `A`.
pub fn spd_solve(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    check_spd_inputs(a, b)?;
    Ok(factor(a)?.solve(b))
}

/// Default diagonal jitter: `1e-10 * trace(A) / n`.
pub fn default_jitter(a: &Matrix) -> f64 {
    let n = a.nrows().max(1) as f64;
    1e-10 * a.trace().abs() / n
}

/// [`spd_solve`] with one regularized retry.
///
/// On `NotPositiveDefinite` the diagonal is shifted by `jitter` (or
/// [`default_jitter`]) and the factorization attempted once more.
pub fn spd_solve_with_jitter(a: &Matrix, b: &Matrix, jitter: Option<f64>) -> Result<Matrix> {
    check_spd_inputs(a, b)?;
    match factor(a) {
        Ok(chol) => Ok(chol.solve(b)),
        Err(Error::NotPositiveDefinite) => {
            let eps = jitter.unwrap_or_else(|| default_jitter(a));
            let mut shifted = a.clone();
            for i in 0..shifted.nrows() {
                shifted[(i, i)] += eps;
            }
            Ok(factor(&shifted)?.solve(b))
        }
        Err(e) => Err(e),
    }
}

/// A seeded, reproducible random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform draw on the half-open interval `[low, high)`.
    pub fn uniform(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.rng.gen::<f64>()
    }

    /// Matrix of i.i.d. N(0, 1) draws, filled row by row.
    pub fn sample_standard_normal(&mut self, rows: usize, cols: usize) -> Matrix {
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                out[(i, j)] = self.standard_normal();
            }
        }
        out
    }

    /// Draws `mean_i + sqrt(cov_diag_i) * z_i` for each coordinate.
    pub fn sample_gaussian(&mut self, mean: &Vector, cov_diag: &Vector) -> Result<Vector> {
        if mean.len() != cov_diag.len() {
            return Err(Error::dims("sample_gaussian", mean.len(), cov_diag.len()));
        }
        if let Some((index, &value)) = cov_diag.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::NegativeVariance { index, value });
        }
        Ok(Vector::from_iterator(
            mean.len(),
            mean.iter()
                .zip(cov_diag.iter())
                .map(|(m, v)| m + v.sqrt() * self.standard_normal()),
        ))
    }

    pub(crate) fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_spd(rng: &mut RngStream, n: usize) -> Matrix {
        let l = rng.sample_standard_normal(n, n);
        &l * l.transpose() + Matrix::identity(n, n) * (n as f64) * 1e-3
    }

    fn random_sym_pd(rng: &mut RngStream, n: usize) -> Matrix {
        let a = random_spd(rng, n);
        (&a + a.transpose()) * 0.5
    }

    fn well_conditioned(rng: &mut RngStream, n: usize) -> Matrix {
        let l = rng.sample_standard_normal(n, n);
        let a = &l * l.transpose() / n as f64 + Matrix::identity(n, n);
        (&a + a.transpose()) * 0.5
    }

    fn inv(a: &Matrix) -> Matrix {
        a.clone().try_inverse().expect("invertible")
    }

    #[test]
    fn identity_solve_returns_rhs() {
        let mut rng = RngStream::new(1);
        let b = rng.sample_standard_normal(3, 2);
        let x = spd_solve(&Matrix::identity(3, 3), &b).unwrap();
        assert!((x - b).amax() < 1e-15);
    }

    #[test]
    fn diagonal_solve() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![4.0, 9.0]));
        let b = Matrix::from_column_slice(2, 1, &[8.0, 18.0]);
        let x = spd_solve(&a, &b).unwrap();
        assert!((x[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((x[(1, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn random_spd_residual_up_to_200() {
        let mut rng = RngStream::new(42);
        for &n in &[1usize, 2, 5, 20, 80, 200] {
            let a = random_sym_pd(&mut rng, n);
            let b = rng.sample_standard_normal(n, 3);
            let a_before = a.clone();
            let x = spd_solve(&a, &b).unwrap();
            let resid = (&a * &x - &b).amax();
            assert!(resid <= 1e-8 * (1.0 + b.amax()), "n={n} resid={resid}");
            assert_eq!(a, a_before);
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let b = Matrix::from_element(2, 1, 1.0);
        assert!(matches!(spd_solve(&a, &b), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn asymmetric_is_rejected() {
        let a = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.0, 2.0]);
        let b = Matrix::from_element(2, 1, 1.0);
        assert!(matches!(spd_solve(&a, &b), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn jitter_rescues_rank_deficient_covariance() {
        // rank-one PSD matrix
        let v = Matrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let a = &v * v.transpose();
        let b = Matrix::from_element(3, 1, 1.0);
        assert!(spd_solve(&a, &b).is_err());
        let x = spd_solve_with_jitter(&a, &b, Some(1e-6)).unwrap();
        assert!(x.iter().all(|v| v.is_finite()));
        // a zero matrix stays singular with the default jitter
        let z = Matrix::zeros(2, 2);
        assert!(spd_solve_with_jitter(&z, &Matrix::zeros(2, 1), None).is_err());
    }

    #[test]
    fn non_finite_construction_fails() {
        assert!(matrix_from_row_major(1, 2, &[1.0, f64::NAN]).is_err());
        assert!(matrix_from_row_major(1, 2, &[1.0]).is_err());
        let m = matrix_from_row_major(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m[(0, 1)], 2.0);
    }

    #[test]
    fn same_seed_same_matrix() {
        let a = RngStream::new(7).sample_standard_normal(16, 10);
        let b = RngStream::new(7).sample_standard_normal(16, 10);
        assert_eq!(a, b);
        let c = RngStream::new(8).sample_standard_normal(16, 10);
        assert_ne!(a, c);
        let s1 = RngStream::new(3).sample_standard_normal(1, 1);
        let s2 = RngStream::new(3).sample_standard_normal(1, 1);
        assert_eq!(s1, s2);
    }

    #[test]
    fn position_advances() {
        let mut rng = RngStream::new(5);
        let p0 = rng.position();
        rng.sample_standard_normal(4, 4);
        assert!(rng.position() > p0);
    }

    #[test]
    fn standard_normal_moments() {
        let mut rng = RngStream::new(2024);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| rng.standard_normal()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn gaussian_zero_variance_returns_mean() {
        let mut rng = RngStream::new(1);
        let mean = Vector::from_vec(vec![3.0, 5.0, 9.0]);
        let out = rng.sample_gaussian(&mean, &Vector::zeros(3)).unwrap();
        assert_eq!(out, mean);
    }

    #[test]
    fn gaussian_negative_variance() {
        let mut rng = RngStream::new(1);
        let r = rng.sample_gaussian(&Vector::zeros(2), &Vector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(r, Err(Error::NegativeVariance { index: 1, .. })));
    }

    #[test]
    fn gaussian_std_moment() {
        let mut rng = RngStream::new(99);
        let n = 100_000;
        let mean = Vector::zeros(2);
        let var = Vector::from_element(2, 9.0);
        let mut sums = [0.0f64; 2];
        let mut sq = [0.0f64; 2];
        for _ in 0..n {
            let s = rng.sample_gaussian(&mean, &var).unwrap();
            for k in 0..2 {
                sums[k] += s[k];
                sq[k] += s[k] * s[k];
            }
        }
        for k in 0..2 {
            let m = sums[k] / n as f64;
            let sd = ((sq[k] - n as f64 * m * m) / (n - 1) as f64).sqrt();
            assert!((sd - 3.0).abs() < 0.06, "sd {sd}");
        }
    }

    #[test]
    fn gaussian_small_noise_stays_within_five_sigma() {
        let mut rng = RngStream::new(11);
        let d_obs = Vector::from_vec(vec![3.0, 5.0, 9.0, 13.0, 17.0, 19.0]);
        let var = Vector::from_element(6, 0.002f64.powi(2));
        for _ in 0..1000 {
            let s = rng.sample_gaussian(&d_obs, &var).unwrap();
            assert!((s - &d_obs).amax() < 0.01);
        }
    }

    // Woodbury-type identities behind the N_d x N_d reformulation. Both sides
    // are evaluated with explicit inverses so they are independent of spd_solve.
    fn identity_instance(rng: &mut RngStream) -> (Matrix, Matrix, Matrix) {
        let n_m = 1 + (rng.uniform(0.0, 20.0) as usize);
        let n_d = 1 + (rng.uniform(0.0, 20.0) as usize);
        let c_m = well_conditioned(rng, n_m);
        let c_d = well_conditioned(rng, n_d);
        let g = rng.sample_standard_normal(n_d, n_m);
        (c_m, c_d, g)
    }

    #[test]
    fn gain_identity_on_random_instances() {
        let mut rng = RngStream::new(314);
        for _ in 0..100 {
            let (c_m, c_d, g) = identity_instance(&mut rng);
            let c_d_inv = inv(&c_d);
            let lhs = inv(&(inv(&c_m) + g.transpose() * &c_d_inv * &g)) * g.transpose() * &c_d_inv;
            let rhs = &c_m * g.transpose() * inv(&(&c_d + &g * &c_m * g.transpose()));
            assert!((lhs - rhs).amax() < 1e-8);
        }
    }

    #[test]
    fn covariance_split_identity_on_random_instances() {
        let mut rng = RngStream::new(2718);
        for _ in 0..100 {
            let (c_m, c_d, g) = identity_instance(&mut rng);
            let posterior = inv(&(inv(&c_m) + g.transpose() * inv(&c_d) * &g));
            let gain_part = &c_m * g.transpose() * inv(&(&c_d + &g * &c_m * g.transpose())) * &g * &c_m;
            assert!((&c_m - (posterior + gain_part)).amax() < 1e-8);
        }
    }
}
