//! Run configuration.
//!
//! The file is TOML. Every key is optional; missing keys take the defaults of
//! the chosen experiment. The fully resolved form is echoed to
//! `resolved_config.toml` in the output directory before training starts.

use std::path::{Path, PathBuf};

use enn_core::data::{Delimiter, IDEAL_INPUT_STD, TOY_NOISE_VARIANCE};
use enn_core::enrml::{EnrmlConfig, PerturbationMode, StoppingRule};
use enn_core::{Activation, NetworkArchitecture};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Toy,
    Sanity,
    TrainCsv,
    FixtureCheck,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: Option<PathBuf>,
    pub standardize: Option<bool>,
    pub k_sigma: Option<f64>,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub enrml: EnrmlSection,
    #[serde(default)]
    pub seeds: SeedSection,
    #[serde(default)]
    pub toy: ToySection,
    #[serde(default)]
    pub sanity: SanitySection,
    pub data: Option<DataSection>,
    #[serde(default)]
    pub fixture: FixtureSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    /// Hidden layer widths; the output layer is added from the data.
    pub hidden: Option<Vec<usize>>,
    pub activation: Option<Activation>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub size: Option<usize>,
    pub obs_std: Option<f64>,
    pub prior_mean: Option<f64>,
    pub prior_std: Option<f64>,
    pub trace_weights: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnrmlSection {
    pub gamma: Option<f64>,
    pub lambda_floor: Option<f64>,
    pub lambda_init: Option<f64>,
    pub perturbation: Option<PerturbationMode>,
    pub max_iterations: Option<usize>,
    pub window: Option<usize>,
    pub rel_tol: Option<f64>,
    pub max_consecutive_rejections: Option<usize>,
    pub factored_threshold: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSection {
    pub data: Option<u64>,
    pub ensemble: Option<u64>,
    pub perturb: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySection {
    pub n: Option<usize>,
    pub x_low: Option<f64>,
    pub x_high: Option<f64>,
    pub noise_variance: Option<f64>,
    pub grid_low: Option<f64>,
    pub grid_high: Option<f64>,
    pub grid_points: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SanitySection {
    pub input_dim: Option<usize>,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    pub input_std: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    pub input_cols: Vec<usize>,
    pub target_cols: Vec<usize>,
    #[serde(default)]
    pub header: bool,
    #[serde(default)]
    pub delimiter: Delimiter,
    pub train_count: Option<usize>,
    pub test_count: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureSection {
    /// Directory with the worked-example files; the bundled copy if absent.
    pub dir: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seed_data: Option<u64>,
    pub seed_ensemble: Option<u64>,
    pub seed_perturb: Option<u64>,
}

pub const DEFAULT_SEEDS: Seeds = Seeds {
    data: 1,
    ensemble: 2,
    perturb: 3,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Seeds {
    pub data: u64,
    pub ensemble: u64,
    pub perturb: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedNetwork {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl ResolvedNetwork {
    pub fn architecture(&self) -> Result<NetworkArchitecture> {
        let mut widths = self.hidden.clone();
        widths.push(self.output_dim);
        Ok(NetworkArchitecture::regression(
            self.input_dim,
            widths,
            self.activation,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedEnsemble {
    pub size: usize,
    pub obs_std: f64,
    pub prior_mean: f64,
    pub prior_std: f64,
    pub trace_weights: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedToy {
    pub n: usize,
    pub x_low: f64,
    pub x_high: f64,
    pub noise_variance: f64,
    pub grid_low: f64,
    pub grid_high: f64,
    pub grid_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedSanity {
    pub n_train: usize,
    pub n_test: usize,
    pub input_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedData {
    pub path: PathBuf,
    pub input_cols: Vec<usize>,
    pub target_cols: Vec<usize>,
    pub header: bool,
    pub delimiter: Delimiter,
    pub train_count: usize,
    pub test_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedFixture {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

/// A configuration with every default materialized.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub experiment: Experiment,
    pub output_dir: PathBuf,
    pub standardize: bool,
    pub k_sigma: f64,
    pub seeds: Seeds,
    pub network: ResolvedNetwork,
    pub ensemble: ResolvedEnsemble,
    pub enrml: EnrmlConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub toy: Option<ResolvedToy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sanity: Option<ResolvedSanity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<ResolvedData>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixture: Option<ResolvedFixture>,
}

impl ResolvedConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }
}

/// Parses config text. `origin` names the file in error messages.
pub fn parse(text: &str, origin: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))
}

pub fn load(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, &path.display().to_string())
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

fn at_least(name: &str, v: usize, min: usize) -> Result<usize> {
    if v >= min {
        Ok(v)
    } else {
        Err(CliError::Config(format!(
            "{name} must be at least {min}, got {v}"
        )))
    }
}

/// Fills defaults for `experiment`. Relative data and fixture paths are
/// taken relative to `base_dir` (the config file's directory).
pub fn resolve(
    cfg: &RunConfig,
    experiment: Experiment,
    overrides: &Overrides,
    base_dir: &Path,
) -> Result<ResolvedConfig> {
    let seeds = Seeds {
        data: overrides
            .seed_data
            .or(cfg.seeds.data)
            .unwrap_or(DEFAULT_SEEDS.data),
        ensemble: overrides
            .seed_ensemble
            .or(cfg.seeds.ensemble)
            .unwrap_or(DEFAULT_SEEDS.ensemble),
        perturb: overrides
            .seed_perturb
            .or(cfg.seeds.perturb)
            .unwrap_or(DEFAULT_SEEDS.perturb),
    };
    let output_dir = overrides
        .output_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(format!("enn-{}", experiment_name(experiment))));
    let rebase = |p: &Path| {
        if p.is_relative() {
            base_dir.join(p)
        } else {
            p.to_path_buf()
        }
    };

    let (default_hidden, default_activation, default_obs_std, default_size) = match experiment {
        Experiment::Toy => (vec![100], Activation::Relu, TOY_NOISE_VARIANCE.sqrt(), 100),
        Experiment::Sanity | Experiment::TrainCsv => (vec![4, 4, 10], Activation::Tanh, 0.002, 100),
        Experiment::FixtureCheck => (vec![5], Activation::Tanh, 0.002, 10),
    };

    let mut toy = None;
    let mut sanity = None;
    let mut data = None;
    let mut fixture = None;
    let (input_dim, output_dim) = match experiment {
        Experiment::Toy => {
            let t = &cfg.toy;
            let r = ResolvedToy {
                n: t.n.unwrap_or(20),
                x_low: t.x_low.unwrap_or(-4.0),
                x_high: t.x_high.unwrap_or(4.0),
                noise_variance: t.noise_variance.unwrap_or(TOY_NOISE_VARIANCE),
                grid_low: t.grid_low.unwrap_or(-6.0),
                grid_high: t.grid_high.unwrap_or(6.0),
                grid_points: at_least("toy.grid_points", t.grid_points.unwrap_or(200), 2)?,
            };
            if !(r.x_low < r.x_high) || !(r.grid_low < r.grid_high) {
                return Err(CliError::Config("toy intervals must satisfy low < high".into()));
            }
            if !(r.noise_variance >= 0.0) {
                return Err(CliError::Config("toy.noise_variance must be >= 0".into()));
            }
            toy = Some(r);
            (1, 1)
        }
        Experiment::Sanity => {
            let s = &cfg.sanity;
            let r = ResolvedSanity {
                n_train: at_least("sanity.n_train", s.n_train.unwrap_or(70), 1)?,
                n_test: s.n_test.unwrap_or(30),
                input_std: positive("sanity.input_std", s.input_std.unwrap_or(IDEAL_INPUT_STD))?,
            };
            sanity = Some(r);
            (at_least("sanity.input_dim", s.input_dim.unwrap_or(2), 1)?, 1)
        }
        Experiment::TrainCsv => {
            let d = cfg
                .data
                .as_ref()
                .ok_or_else(|| CliError::Config("the train experiment needs a [data] section".into()))?;
            if d.input_cols.is_empty() || d.target_cols.is_empty() {
                return Err(CliError::Config(
                    "data.input_cols and data.target_cols must be non-empty".into(),
                ));
            }
            data = Some(ResolvedData {
                path: rebase(&d.path),
                input_cols: d.input_cols.clone(),
                target_cols: d.target_cols.clone(),
                header: d.header,
                delimiter: d.delimiter,
                // resolved against the row count once the file is read
                train_count: d.train_count.unwrap_or(0),
                test_count: d.test_count.unwrap_or(0),
            });
            (d.input_cols.len(), d.target_cols.len())
        }
        Experiment::FixtureCheck => {
            fixture = Some(ResolvedFixture {
                dir: cfg.fixture.dir.as_deref().map(rebase),
            });
            (1, 1)
        }
    };

    let network = ResolvedNetwork {
        input_dim,
        hidden: cfg.network.hidden.clone().unwrap_or(default_hidden),
        output_dim,
        activation: cfg.network.activation.unwrap_or(default_activation),
    };
    network.architecture()?;

    let e = &cfg.ensemble;
    let ensemble = ResolvedEnsemble {
        size: at_least("ensemble.size", e.size.unwrap_or(default_size), 2)?,
        obs_std: positive("ensemble.obs_std", e.obs_std.unwrap_or(default_obs_std))?,
        prior_mean: e.prior_mean.unwrap_or(0.0),
        prior_std: positive("ensemble.prior_std", e.prior_std.unwrap_or(1.0))?,
        trace_weights: e.trace_weights.unwrap_or(true),
    };

    let x = &cfg.enrml;
    let defaults = EnrmlConfig::default();
    let stop = StoppingRule::default();
    let enrml = EnrmlConfig {
        gamma: x.gamma.unwrap_or(defaults.gamma),
        lambda_floor: positive(
            "enrml.lambda_floor",
            x.lambda_floor.unwrap_or(defaults.lambda_floor),
        )?,
        lambda_init: x
            .lambda_init
            .map(|v| positive("enrml.lambda_init", v))
            .transpose()?,
        stopping: StoppingRule {
            max_iterations: x.max_iterations.unwrap_or(stop.max_iterations),
            window: x.window.unwrap_or(stop.window),
            rel_tol: x.rel_tol.unwrap_or(stop.rel_tol),
            max_consecutive_rejections: at_least(
                "enrml.max_consecutive_rejections",
                x.max_consecutive_rejections
                    .unwrap_or(stop.max_consecutive_rejections),
                1,
            )?,
        },
        perturbation: x.perturbation.unwrap_or(defaults.perturbation),
        factored_threshold: x.factored_threshold.unwrap_or(defaults.factored_threshold),
        jitter: None,
    };
    if !(enrml.gamma > 1.0) {
        return Err(CliError::Config(format!(
            "enrml.gamma must exceed 1, got {}",
            enrml.gamma
        )));
    }

    let k_sigma = cfg.k_sigma.unwrap_or(enn_core::uq::DEFAULT_K_SIGMA);
    if !(k_sigma >= 0.0) {
        return Err(CliError::Config(format!("k_sigma must be >= 0, got {k_sigma}")));
    }

    Ok(ResolvedConfig {
        experiment,
        output_dir,
        standardize: cfg.standardize.unwrap_or(false),
        k_sigma,
        seeds,
        network,
        ensemble,
        enrml,
        toy,
        sanity,
        data,
        fixture,
    })
}

pub fn experiment_name(e: Experiment) -> &'static str {
    match e {
        Experiment::Toy => "toy",
        Experiment::Sanity => "sanity",
        Experiment::TrainCsv => "train",
        Experiment::FixtureCheck => "fixture-check",
    }
}
