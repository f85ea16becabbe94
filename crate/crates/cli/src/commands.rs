use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use enn_core::data::{gen_ideal_dataset, gen_toy_cubic, load_csv, split, CsvOptions, SplitSpec};
use enn_core::enrml::{IterationRecord, StopReason};
use enn_core::ensemble::format_float;
use enn_core::fixture::{self, Check, WorkedExample};
use enn_core::network::unflatten_sample_major;
use enn_core::{
    predict_band, train, Dataset, ForwardModel, Matrix, NetworkArchitecture, NetworkModel, PriorModel,
    RngStream, TrainOutcome, TrainSettings, WeightTrace,
};
use serde::Serialize;

use crate::config::{experiment_name, Experiment, ResolvedConfig};
use crate::error::{CliError, Result};

pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub experiment: &'static str,
    pub weight_count: usize,
    pub ensemble_size: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Observations per update, `n_train x outputs`.
    pub n_observations: usize,
    pub standardized: bool,
    pub seeds: crate::config::Seeds,
    pub iterations: usize,
    pub accepted: usize,
    pub rejected: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<StopReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_train_mae: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_test_mae: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fixture_checks: Vec<Check>,
    pub wall_clock_seconds: f64,
    pub files: Vec<String>,
}

impl RunReport {
    fn new(cfg: &ResolvedConfig, arch: &NetworkArchitecture) -> Self {
        Self {
            experiment: experiment_name(cfg.experiment),
            weight_count: arch.weight_count(),
            ensemble_size: cfg.ensemble.size,
            n_train: 0,
            n_test: 0,
            n_observations: 0,
            standardized: cfg.standardize,
            seeds: cfg.seeds,
            iterations: 0,
            accepted: 0,
            rejected: 0,
            stop_reason: None,
            final_lambda: None,
            final_train_mae: None,
            final_test_mae: None,
            fixture_checks: Vec::new(),
            wall_clock_seconds: 0.0,
            files: Vec::new(),
        }
    }

    fn record(&mut self, out: &TrainOutcome) {
        let last = out.state.history.last();
        self.iterations = out.state.iteration;
        self.accepted = out.state.accepted_count;
        self.rejected = out.state.rejected_count;
        self.stop_reason = Some(out.stop);
        self.final_lambda = Some(out.state.controller.lambda);
        self.final_train_mae = last.map(|r| r.train_loss);
        self.final_test_mae = last.and_then(|r| r.test_loss);
    }
}

/// Writes into the output directory and remembers what was written.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(CliError::output(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let file = fs::File::create(&path).map_err(CliError::output(&path))?;
        let mut w = BufWriter::new(file);
        body(&mut w)
            .and_then(|_| w.flush())
            .map_err(CliError::output(&path))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn finish(mut self, mut report: RunReport, started: Instant) -> Result<RunReport> {
        self.files.push("report.json".into());
        report.files = self.files.clone();
        report.wall_clock_seconds = started.elapsed().as_secs_f64();
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| CliError::Config(format!("cannot serialize report: {e}")))?;
        self.write("report.json", |w| writeln!(w, "{json}"))?;
        Ok(report)
    }
}

fn write_loss_history(w: &mut dyn Write, rows: &[IterationRecord]) -> std::io::Result<()> {
    writeln!(w, "iteration,accepted,lambda,sd_mean,sd_std,train_mae,test_mae")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.iteration,
            u8::from(r.accepted),
            format_float(r.lambda),
            format_float(r.sd_mean),
            format_float(r.sd_std),
            format_float(r.train_loss),
            r.test_loss.map(format_float).unwrap_or_default(),
        )?;
    }
    Ok(())
}

fn write_pairs(w: &mut dyn Write, ds: &Dataset) -> std::io::Result<()> {
    let x = ds.original_inputs();
    let y = ds.original_targets();
    let mut header: Vec<String> = (0..x.ncols()).map(|i| format!("x{i}")).collect();
    header.extend((0..y.ncols()).map(|k| format!("y{k}")));
    writeln!(w, "{}", header.join(","))?;
    for i in 0..x.nrows() {
        let row: Vec<String> = x
            .row(i)
            .iter()
            .chain(y.row(i).iter())
            .map(|v| format_float(*v))
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Observed versus ensemble-mean estimate, one row per sample and output.
fn write_scatter(w: &mut dyn Write, observed: &Matrix, estimated: &Matrix) -> std::io::Result<()> {
    writeln!(w, "sample,output,observed,estimated")?;
    for i in 0..observed.nrows() {
        for k in 0..observed.ncols() {
            writeln!(
                w,
                "{i},{k},{},{}",
                format_float(observed[(i, k)]),
                format_float(estimated[(i, k)])
            )?;
        }
    }
    Ok(())
}

fn settings(cfg: &ResolvedConfig) -> TrainSettings {
    TrainSettings {
        ensemble_size: cfg.ensemble.size,
        obs_std: cfg.ensemble.obs_std,
        prior_mean: cfg.ensemble.prior_mean,
        prior_std: cfg.ensemble.prior_std,
        config: cfg.enrml,
        trace_weights: cfg.ensemble.trace_weights,
    }
}

fn write_resolved(cfg: &ResolvedConfig, out: &mut Outputs) -> Result<()> {
    let text = cfg.to_toml()?;
    out.write(RESOLVED_CONFIG, |w| w.write_all(text.as_bytes()))
}

/// Standardizes `train` when configured and applies the same transform to `test`.
fn prepare(cfg: &ResolvedConfig, train_ds: Dataset, test_ds: Dataset) -> (Dataset, Dataset) {
    if !cfg.standardize {
        return (train_ds, test_ds);
    }
    let train_ds = train_ds.standardize();
    let s = train_ds.standardization().expect("just standardized").clone();
    let test_ds = test_ds.standardize_with(&s);
    (train_ds, test_ds)
}

/// Runs training and writes the shared artifacts.
fn train_and_record(
    cfg: &ResolvedConfig,
    arch: &NetworkArchitecture,
    train_ds: &Dataset,
    test_ds: Option<&Dataset>,
    out: &mut Outputs,
    report: &mut RunReport,
) -> Result<TrainOutcome> {
    let mut ens_rng = RngStream::new(cfg.seeds.ensemble);
    let mut pert_rng = RngStream::new(cfg.seeds.perturb);
    let outcome = train(
        arch,
        train_ds,
        test_ds,
        &settings(cfg),
        &mut ens_rng,
        &mut pert_rng,
    )?;
    report.record(&outcome);
    report.n_train = train_ds.len();
    report.n_test = test_ds.map_or(0, Dataset::len);
    report.n_observations = train_ds.len() * train_ds.output_dim();
    out.write("loss_history.csv", |w| {
        write_loss_history(w, &outcome.state.history)
    })?;
    if cfg.ensemble.trace_weights {
        out.write("weight_trace.csv", |w| outcome.weight_trace.write_csv(w))?;
    }
    Ok(outcome)
}

fn ensemble_mean_prediction(arch: &NetworkArchitecture, weights: &Matrix, ds: &Dataset) -> Result<Matrix> {
    let preds = NetworkModel::new(arch.clone(), ds.inputs().clone())?.evaluate_ensemble(weights)?;
    let mean = preds.column_mean();
    let m = unflatten_sample_major(mean.as_slice(), ds.len(), arch.output_dim())?;
    Ok(ds.destandardize_targets(&m))
}

pub fn cmd_toy(cfg: &ResolvedConfig) -> Result<RunReport> {
    let started = Instant::now();
    let toy = cfg.toy.as_ref().expect("toy section resolved");
    let arch = cfg.network.architecture()?;
    let mut out = Outputs::create(&cfg.output_dir)?;
    write_resolved(cfg, &mut out)?;
    let mut report = RunReport::new(cfg, &arch);

    let mut data_rng = RngStream::new(cfg.seeds.data);
    let raw = gen_toy_cubic(&mut data_rng, toy.n, toy.x_low, toy.x_high, toy.noise_variance)?;
    let ds = if cfg.standardize && !raw.is_empty() {
        raw.standardize()
    } else {
        raw
    };
    out.write("training_points.csv", |w| write_pairs(w, &ds))?;

    let weights = if ds.is_empty() {
        // nothing to fit: the band is the prior's
        let prior = PriorModel::isotropic(
            arch.weight_count(),
            cfg.ensemble.prior_mean,
            cfg.ensemble.prior_std,
        )?;
        let ens = prior.sample_ensemble(&mut RngStream::new(cfg.seeds.ensemble), cfg.ensemble.size)?;
        out.write("loss_history.csv", |w| write_loss_history(w, &[]))?;
        if cfg.ensemble.trace_weights {
            let mut trace = WeightTrace::default();
            trace.push(ens.current());
            out.write("weight_trace.csv", |w| trace.write_csv(w))?;
        }
        ens.current().clone()
    } else {
        train_and_record(cfg, &arch, &ds, None, &mut out, &mut report)?
            .ensemble
            .current()
            .clone()
    };

    let n = toy.grid_points;
    let step = (toy.grid_high - toy.grid_low) / (n - 1) as f64;
    let grid = Matrix::from_fn(n, 1, |i, _| toy.grid_low + step * i as f64);
    let training = (!ds.is_empty()).then_some(&ds);
    let band = predict_band(&arch, &weights, &grid, cfg.k_sigma, training)?;
    out.write("band.csv", |w| band.write_csv(w))?;
    report.n_train = ds.len();
    report.n_observations = ds.len();
    out.finish(report, started)
}

pub fn cmd_sanity(cfg: &ResolvedConfig) -> Result<RunReport> {
    let started = Instant::now();
    let sanity = cfg.sanity.as_ref().expect("sanity section resolved");
    let arch = cfg.network.architecture()?;
    let mut out = Outputs::create(&cfg.output_dir)?;
    write_resolved(cfg, &mut out)?;
    let mut report = RunReport::new(cfg, &arch);

    let mut data_rng = RngStream::new(cfg.seeds.data);
    let (tr, te, _) = gen_ideal_dataset(
        &mut data_rng,
        &arch,
        sanity.n_train,
        sanity.n_test,
        sanity.input_std,
    )?;
    let (tr, te) = prepare(cfg, tr, te);
    let test = (!te.is_empty()).then_some(&te);
    let outcome = train_and_record(cfg, &arch, &tr, test, &mut out, &mut report)?;
    let scored = test.unwrap_or(&tr);
    let estimated = ensemble_mean_prediction(&arch, outcome.ensemble.current(), scored)?;
    out.write("scatter.csv", |w| {
        write_scatter(w, &scored.original_targets(), &estimated)
    })?;
    out.finish(report, started)
}

pub fn cmd_train_csv(cfg: &ResolvedConfig) -> Result<RunReport> {
    let started = Instant::now();
    let data = cfg.data.as_ref().expect("data section resolved");
    let arch = cfg.network.architecture()?;
    let opts = CsvOptions {
        input_cols: data.input_cols.clone(),
        target_cols: data.target_cols.clone(),
        header: data.header,
        delimiter: data.delimiter,
    };
    let ds = load_csv(&data.path, &opts)?;
    let n = ds.len();
    let (train_count, test_count) = match (data.train_count, data.test_count) {
        (0, 0) => {
            let tr = (n * 7).div_ceil(10);
            (tr, n - tr)
        }
        (0, te) => (n.saturating_sub(te), te),
        (tr, te) => (tr, te),
    };
    if train_count == 0 || train_count + test_count > n {
        return Err(CliError::Config(format!(
            "data.train_count {train_count} + data.test_count {test_count} must be in 1..={n} (rows in {})",
            data.path.display()
        )));
    }
    let mut resolved = cfg.clone();
    if let Some(d) = resolved.data.as_mut() {
        d.train_count = train_count;
        d.test_count = test_count;
    }
    let mut out = Outputs::create(&cfg.output_dir)?;
    write_resolved(&resolved, &mut out)?;
    let mut report = RunReport::new(cfg, &arch);

    let spec = SplitSpec {
        train_count,
        test_count,
        shuffle_seed: cfg.seeds.data,
    };
    let (tr, te) = split(&ds, &spec)?;
    let (tr, te) = prepare(cfg, tr, te);
    let test = (!te.is_empty()).then_some(&te);
    let outcome = train_and_record(cfg, &arch, &tr, test, &mut out, &mut report)?;
    let scored = test.unwrap_or(&tr);
    let weights = outcome.ensemble.current();
    let band = predict_band(&arch, weights, &scored.original_inputs(), cfg.k_sigma, Some(&tr))?;
    out.write("band.csv", |w| band.write_csv(w))?;
    let estimated = ensemble_mean_prediction(&arch, weights, scored)?;
    out.write("scatter.csv", |w| {
        write_scatter(w, &scored.original_targets(), &estimated)
    })?;
    out.finish(report, started)
}

pub fn cmd_fixture_check(cfg: &ResolvedConfig) -> Result<RunReport> {
    let started = Instant::now();
    let dir = cfg.fixture.as_ref().and_then(|f| f.dir.clone());
    let mut out = Outputs::create(&cfg.output_dir)?;
    write_resolved(cfg, &mut out)?;
    let ex = match &dir {
        Some(d) => WorkedExample::load(d)?,
        None => WorkedExample::bundled()?,
    };
    let replayed = fixture::replay(&ex)?;
    let arch = ex.architecture();
    let mut report = RunReport::new(cfg, &arch);
    report.ensemble_size = ex.matrix("m1")?.ncols();
    report.n_train = 6;
    report.n_test = 3;
    report.n_observations = 6;
    report.fixture_checks = replayed.checks.clone();
    out.write("m2_replayed.csv", |w| {
        enn_core::ensemble::write_matrix_csv(w, &replayed.m2)
    })?;
    out.write("m3_replayed.csv", |w| {
        enn_core::ensemble::write_matrix_csv(w, &replayed.m3)
    })?;
    let report = out.finish(report, started)?;

    if replayed.resolved_activation.is_none() {
        return Err(enn_core::Error::LayoutUnresolved {
            best_deviation: replayed.layout_deviation,
        }
        .into());
    }
    let failed: Vec<String> = replayed
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} (deviation {:.3e} > {:.1e})", c.name, c.deviation, c.tolerance))
        .collect();
    if !failed.is_empty() {
        return Err(CliError::FixtureMismatch(failed.join(", ")));
    }
    Ok(report)
}

pub fn run(cfg: &ResolvedConfig) -> Result<RunReport> {
    match cfg.experiment {
        Experiment::Toy => cmd_toy(cfg),
        Experiment::Sanity => cmd_sanity(cfg),
        Experiment::TrainCsv => cmd_train_csv(cfg),
        Experiment::FixtureCheck => cmd_fixture_check(cfg),
    }
}
