//! Browser bindings for the demo page in `www/`.
//!
//! Each export returns a JSON string; errors come back as a thrown string.
//! The plain `*_json` functions hold the logic so they can be tested natively.

use enn_core::data::TOY_NOISE_VARIANCE;
use enn_core::fixture::{self, WorkedExample};
use enn_core::{
    gen_toy_cubic, predict_band, train, Activation, Matrix, NetworkArchitecture, RngStream, TrainSettings,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_ENSEMBLE: usize = 500;
const MAX_ITERATIONS: usize = 500;

#[derive(Serialize)]
struct ToyBand {
    grid: Vec<f64>,
    mean: Vec<f64>,
    low: Vec<f64>,
    high: Vec<f64>,
    points_x: Vec<f64>,
    points_y: Vec<f64>,
    train_mae: Vec<f64>,
    accepted: usize,
    rejected: usize,
    stop: String,
}

/// Trains a ReLU ensemble on the noisy cubic and returns the ±3σ band on (-6, 6).
pub fn toy_band_json(
    n_points: usize,
    ensemble_size: usize,
    max_iterations: usize,
    seed: u64,
) -> Result<String, String> {
    if !(2..=MAX_ENSEMBLE).contains(&ensemble_size) {
        return Err(format!("ensemble size must be in 2..={MAX_ENSEMBLE}"));
    }
    if max_iterations > MAX_ITERATIONS {
        return Err(format!("at most {MAX_ITERATIONS} iterations"));
    }
    let arch = NetworkArchitecture::toy();
    let mut data_rng = RngStream::new(seed);
    let ds =
        gen_toy_cubic(&mut data_rng, n_points, -4.0, 4.0, TOY_NOISE_VARIANCE).map_err(|e| e.to_string())?;

    let mut settings = TrainSettings {
        ensemble_size,
        obs_std: TOY_NOISE_VARIANCE.sqrt(),
        ..TrainSettings::default()
    };
    settings.config.stopping.max_iterations = max_iterations;

    let mut ens_rng = RngStream::new(seed.wrapping_add(1));
    let mut pert_rng = RngStream::new(seed.wrapping_add(2));
    let (weights, history, stop) = if ds.is_empty() || max_iterations == 0 {
        let prior =
            enn_core::PriorModel::isotropic(arch.weight_count(), settings.prior_mean, settings.prior_std)
                .map_err(|e| e.to_string())?;
        let ens = prior
            .sample_ensemble(&mut ens_rng, ensemble_size)
            .map_err(|e| e.to_string())?;
        (ens.current().clone(), Vec::new(), "prior".to_string())
    } else {
        let out =
            train(&arch, &ds, None, &settings, &mut ens_rng, &mut pert_rng).map_err(|e| e.to_string())?;
        let stop = format!("{:?}", out.stop);
        (out.ensemble.current().clone(), out.state.history, stop)
    };

    let n = 241;
    let grid = Matrix::from_fn(n, 1, |i, _| -6.0 + 12.0 * i as f64 / (n - 1) as f64);
    let training = (!ds.is_empty()).then_some(&ds);
    let band = predict_band(&arch, &weights, &grid, 3.0, training).map_err(|e| e.to_string())?;

    let col = |m: &Matrix| m.column(0).iter().copied().collect::<Vec<_>>();
    let accepted: Vec<_> = history.iter().filter(|r| r.accepted).collect();
    let body = ToyBand {
        grid: col(&grid),
        mean: col(&band.mean),
        low: col(&band.band_low),
        high: col(&band.band_high),
        points_x: if ds.is_empty() {
            Vec::new()
        } else {
            col(&ds.original_inputs())
        },
        points_y: if ds.is_empty() {
            Vec::new()
        } else {
            col(&ds.original_targets())
        },
        train_mae: accepted.iter().map(|r| r.train_loss).collect(),
        accepted: accepted.len().saturating_sub(1),
        rejected: history.iter().filter(|r| !r.accepted).count(),
        stop,
    };
    serde_json::to_string(&body).map_err(|e| e.to_string())
}

/// Weight count of a regression network; `hidden` is a comma-separated list of widths.
pub fn weight_count_json(input_dim: usize, hidden: &str, output_dim: usize) -> Result<String, String> {
    let widths = hidden
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| format!("not a layer width: {s:?}"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut layers = widths;
    layers.push(output_dim);
    let arch =
        NetworkArchitecture::regression(input_dim, layers, Activation::Tanh).map_err(|e| e.to_string())?;
    Ok(serde_json::json!({ "weight_count": arch.weight_count() }).to_string())
}

/// Replays the bundled two-iteration worked example and lists every check.
pub fn fixture_replay_json() -> Result<String, String> {
    let ex = WorkedExample::bundled().map_err(|e| e.to_string())?;
    let report = fixture::replay(&ex).map_err(|e| e.to_string())?;
    let body = serde_json::json!({ "passed": report.passed(), "report": report });
    Ok(body.to_string())
}

#[wasm_bindgen]
pub fn toy_band(
    n_points: usize,
    ensemble_size: usize,
    max_iterations: usize,
    seed: u32,
) -> Result<String, JsValue> {
    toy_band_json(n_points, ensemble_size, max_iterations, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn weight_count(input_dim: usize, hidden: &str, output_dim: usize) -> Result<String, JsValue> {
    weight_count_json(input_dim, hidden, output_dim).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn fixture_replay() -> Result<String, JsValue> {
    fixture_replay_json().map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn weight_counts_match_known_shapes() {
        let v: Value = serde_json::from_str(&weight_count_json(2, "4, 4, 10", 1).unwrap()).unwrap();
        assert_eq!(v["weight_count"], 93);
        let v: Value = serde_json::from_str(&weight_count_json(1, "100", 1).unwrap()).unwrap();
        assert_eq!(v["weight_count"], 301);
        assert!(weight_count_json(2, "4,x", 1).is_err());
    }

    #[test]
    fn fixture_replay_passes() {
        let v: Value = serde_json::from_str(&fixture_replay_json().unwrap()).unwrap();
        assert_eq!(v["passed"], true);
        assert!(v["report"]["checks"].as_array().unwrap().len() > 20);
    }

    #[test]
    fn toy_band_is_wider_away_from_data() {
        let v: Value = serde_json::from_str(&toy_band_json(20, 50, 60, 4).unwrap()).unwrap();
        let grid: Vec<f64> = serde_json::from_value(v["grid"].clone()).unwrap();
        let low: Vec<f64> = serde_json::from_value(v["low"].clone()).unwrap();
        let high: Vec<f64> = serde_json::from_value(v["high"].clone()).unwrap();
        assert_eq!(grid.len(), 241);
        let width = |keep: &dyn Fn(f64) -> bool| {
            let w: Vec<f64> = (0..grid.len())
                .filter(|&i| keep(grid[i]))
                .map(|i| high[i] - low[i])
                .collect();
            w.iter().sum::<f64>() / w.len() as f64
        };
        assert!(width(&|x| x.abs() >= 4.0) > width(&|x| x.abs() < 4.0));
        assert_eq!(v["points_x"].as_array().unwrap().len(), 20);
    }

    #[test]
    fn toy_band_rejects_bad_sizes() {
        assert!(toy_band_json(20, 1, 10, 0).is_err());
        assert!(toy_band_json(20, 10, 10_000, 0).is_err());
        let v: Value = serde_json::from_str(&toy_band_json(0, 10, 10, 0).unwrap()).unwrap();
        assert_eq!(v["stop"], "prior");
    }
}
