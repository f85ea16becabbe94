//! Realization ensembles and the covariances that stand in for gradients.

use std::io::Write;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream, Vector};

/// `N_m x N_e` weights together with the prior realizations they started from.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightEnsemble {
    current: Matrix,
    prior: Matrix,
}

impl WeightEnsemble {
    /// Starts an ensemble whose current state equals its prior realizations.
    pub fn from_prior(prior: Matrix) -> Result<Self> {
        if prior.ncols() < 2 {
            return Err(Error::InvalidArgument(format!(
                "ensemble needs at least 2 realizations, got {}",
                prior.ncols()
            )));
        }
        crate::numerics::ensure_finite(&prior, "prior ensemble")?;
        Ok(Self {
            current: prior.clone(),
            prior,
        })
    }

    /// Draws `prior_mean + prior_std * z` for every weight and realization.
    pub fn sample_prior(
        rng: &mut RngStream,
        param_count: usize,
        realizations: usize,
        prior_mean: Option<&Vector>,
        prior_std: f64,
    ) -> Result<Self> {
        if !(prior_std > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "prior_std must be positive, got {prior_std}"
            )));
        }
        if let Some(mean) = prior_mean {
            if mean.len() != param_count {
                return Err(Error::dims("prior mean", param_count, mean.len()));
            }
        }
        let mut m = rng.sample_standard_normal(param_count, realizations) * prior_std;
        if let Some(mean) = prior_mean {
            for mut col in m.column_iter_mut() {
                col += mean;
            }
        }
        Self::from_prior(m)
    }

    pub fn current(&self) -> &Matrix {
        &self.current
    }

    pub fn prior(&self) -> &Matrix {
        &self.prior
    }

    pub fn realization_count(&self) -> usize {
        self.current.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.current.nrows()
    }

    /// Same prior, new current state.
    pub fn with_current(&self, current: Matrix) -> Result<Self> {
        if current.shape() != self.prior.shape() {
            return Err(Error::dims(
                "ensemble update",
                format!("{:?}", self.prior.shape()),
                format!("{:?}", current.shape()),
            ));
        }
        Ok(Self {
            current,
            prior: self.prior.clone(),
        })
    }
}

/// Row-wise mean over realizations.
pub fn ensemble_mean(m: &Matrix) -> Vector {
    m.column_mean()
}

/// Row-wise standard deviation with the `N_e - 1` divisor.
pub fn ensemble_std(m: &Matrix) -> Vector {
    let n = m.ncols();
    if n < 2 {
        return Vector::zeros(m.nrows());
    }
    let a = anomalies(m);
    Vector::from_iterator(
        m.nrows(),
        a.row_iter()
            .map(|r| (r.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64).sqrt()),
    )
}

/// Columns minus the ensemble mean.
pub fn anomalies(m: &Matrix) -> Matrix {
    let mean = ensemble_mean(m);
    let mut a = m.clone();
    for mut col in a.column_iter_mut() {
        col -= &mean;
    }
    a
}

/// The three ensemble covariances of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    /// Weight covariance, `N_m x N_m`.
    pub c_m: Matrix,
    /// Prediction covariance, `N_d x N_d`.
    pub c_d_pred: Matrix,
    /// Weight-prediction cross covariance, `N_m x N_d`.
    pub c_md: Matrix,
}

/// Scaled anomaly factors: `C_M = A_m A_mᵀ`, `C_MD = A_m A_dᵀ`, `C_D = A_d A_dᵀ`.
#[derive(Debug, Clone)]
pub struct AnomalyFactors {
    pub weights: Matrix,
    pub preds: Matrix,
}

impl AnomalyFactors {
    pub fn new(weights: &Matrix, preds: &Matrix) -> Result<Self> {
        check_pair(weights, preds)?;
        let scale = 1.0 / ((weights.ncols() - 1) as f64).sqrt();
        Ok(Self {
            weights: anomalies(weights) * scale,
            preds: anomalies(preds) * scale,
        })
    }

    pub fn c_d_pred(&self) -> Matrix {
        symmetric_product(&self.preds)
    }

    pub fn covariance_set(&self) -> CovarianceSet {
        CovarianceSet {
            c_m: symmetric_product(&self.weights),
            c_d_pred: self.c_d_pred(),
            c_md: &self.weights * self.preds.transpose(),
        }
    }
}

fn check_pair(weights: &Matrix, preds: &Matrix) -> Result<()> {
    if weights.ncols() != preds.ncols() {
        return Err(Error::dims("realization count", weights.ncols(), preds.ncols()));
    }
    if weights.ncols() < 2 {
        return Err(Error::InvalidArgument(
            "covariances need at least 2 realizations".into(),
        ));
    }
    Ok(())
}

// A Aᵀ with the lower triangle mirrored so the result is exactly symmetric.
fn symmetric_product(a: &Matrix) -> Matrix {
    let mut c = a * a.transpose();
    let n = c.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            c[(j, i)] = c[(i, j)];
        }
    }
    c
}

/// Unbiased (`N_e - 1`) ensemble covariances of weights and predictions.
pub fn covariances(weights: &Matrix, preds: &Matrix) -> Result<CovarianceSet> {
    Ok(AnomalyFactors::new(weights, preds)?.covariance_set())
}

/// Writes a matrix as CSV, one row per line, 17 significant digits.
pub fn write_matrix_csv<W: Write + ?Sized>(out: &mut W, m: &Matrix) -> std::io::Result<()> {
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Round-trippable float formatting used by every numeric output file.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}
