//! Ensemble-based predictive uncertainty.
//!
//! Bands are `mean ± k·std` over realization predictions and reflect weight
//! uncertainty only; observation noise is not added.

use std::io::Write;

use crate::data::Dataset;
use crate::ensemble::{ensemble_mean, ensemble_std, format_float};
use crate::error::{Error, Result};
use crate::network::NetworkArchitecture;
use crate::numerics::{Matrix, Vector};

pub const DEFAULT_K_SIGMA: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionBand {
    pub query_inputs: Matrix,
    pub mean: Matrix,
    pub std: Matrix,
    pub k_sigma: f64,
    pub band_low: Matrix,
    pub band_high: Matrix,
}

impl PredictionBand {
    pub fn from_moments(query_inputs: Matrix, mean: Matrix, std: Matrix, k_sigma: f64) -> Self {
        let band_low = &mean - &std * k_sigma;
        let band_high = &mean + &std * k_sigma;
        Self {
            query_inputs,
            mean,
            std,
            k_sigma,
            band_low,
            band_high,
        }
    }

    pub fn len(&self) -> usize {
        self.mean.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.nrows() == 0
    }

    pub fn width(&self) -> Matrix {
        &self.band_high - &self.band_low
    }

    /// Header `x0..,mean0..,std0..,low0..,high0..`, one row per query point.
    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> std::io::Result<()> {
        let d_in = self.query_inputs.ncols();
        let d_out = self.mean.ncols();
        let mut header: Vec<String> = (0..d_in).map(|i| format!("x{i}")).collect();
        for name in ["mean", "std", "low", "high"] {
            header.extend((0..d_out).map(|k| format!("{name}{k}")));
        }
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self
                .query_inputs
                .row(i)
                .iter()
                .map(|v| format_float(*v))
                .collect();
            for m in [&self.mean, &self.std, &self.band_low, &self.band_high] {
                row.extend(m.row(i).iter().map(|v| format_float(*v)));
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Mean and spread of the ensemble's predictions at `query_inputs`, given in
/// original units. When `training` is standardized, queries are transformed
/// in and predictions transformed back.
pub fn predict_band(
    arch: &NetworkArchitecture,
    weights: &Matrix,
    query_inputs: &Matrix,
    k_sigma: f64,
    training: Option<&Dataset>,
) -> Result<PredictionBand> {
    if !(k_sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "k_sigma must be >= 0, got {k_sigma}"
        )));
    }
    let model_inputs = match training {
        Some(ds) => ds.standardize_inputs(query_inputs),
        None => query_inputs.clone(),
    };
    let q = query_inputs.nrows();
    let d_out = arch.output_dim();
    let preds = arch.forward_ensemble(weights, &model_inputs)?;
    let reshape = |v: Vector| Matrix::from_row_slice(q, d_out, v.as_slice());
    let mut mean = reshape(ensemble_mean(&preds));
    let mut std = reshape(ensemble_std(&preds));
    if let Some(s) = training.and_then(|d| d.standardization()) {
        mean = s.targets.invert(&mean);
        std = s.targets.invert_spread(&std);
    }
    Ok(PredictionBand::from_moments(
        query_inputs.clone(),
        mean,
        std,
        k_sigma,
    ))
}

/// Fraction of entries where `truth` lies within the band.
pub fn coverage_check(band: &PredictionBand, truth: &Matrix) -> Result<f64> {
    if truth.shape() != band.mean.shape() {
        return Err(Error::dims(
            "coverage truth",
            format!("{:?}", band.mean.shape()),
            format!("{:?}", truth.shape()),
        ));
    }
    if truth.is_empty() {
        return Ok(1.0);
    }
    let inside = truth
        .iter()
        .zip(band.band_low.iter().zip(band.band_high.iter()))
        .filter(|(t, (lo, hi))| *lo <= *t && *t <= *hi)
        .count();
    Ok(inside as f64 / truth.len() as f64)
}

/// Per-weight ensemble mean and std over accepted iterations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightTrace {
    pub steps: Vec<(Vector, Vector)>,
}

impl WeightTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn push(&mut self, ensemble: &Matrix) {
        if let Some((first, _)) = self.steps.first() {
            assert_eq!(first.len(), ensemble.nrows(), "weight count changed mid-trace");
        }
        self.steps.push((ensemble_mean(ensemble), ensemble_std(ensemble)));
    }

    /// Header `step,mean0..,std0..`, one row per recorded step.
    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> std::io::Result<()> {
        let n = self.steps.first().map(|s| s.0.len()).unwrap_or(0);
        let mut header = vec!["step".to_string()];
        header.extend((0..n).map(|i| format!("mean{i}")));
        header.extend((0..n).map(|i| format!("std{i}")));
        writeln!(out, "{}", header.join(","))?;
        for (k, (mean, std)) in self.steps.iter().enumerate() {
            let mut row = vec![k.to_string()];
            row.extend(mean.iter().chain(std.iter()).map(|v| format_float(*v)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Appends one step to `trace`.
pub fn weight_trace_step(mut trace: WeightTrace, ensemble: &Matrix) -> WeightTrace {
    trace.push(ensemble);
    trace
}
