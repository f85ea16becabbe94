//! Ensemble randomized maximum likelihood.
//!
//! Each realization `j` is moved by
//!
//! ```text
//! m_j <- m_j - 1/(1+λ) [C_Ml - C_MD S⁻¹ C_MDᵀ] C_M⁻¹ (m_j - m_pr,j)
//!            - C_MD S⁻¹ (g(m_j) - d_obs,j),          S = (1+λ) C_D + C_Dl
//! ```
//!
//! where `C_Ml`, `C_MD` and `C_Dl` are ensemble covariances of the current
//! iteration, `C_M`/`C_D` are the fixed (diagonal) prior and noise covariances,
//! and `m_pr,j` is realization `j` of the initial prior draw. The forward map is
//! only ever evaluated, never differentiated. The damping `λ` follows a
//! Levenberg-Marquardt style controller driven by the ensemble statistics of
//! the data mismatch.

use serde::{Deserialize, Serialize};

use crate::data::{loss_mae, Dataset};
use crate::ensemble::{AnomalyFactors, CovarianceSet, WeightEnsemble};
use crate::error::{Error, Result};
use crate::network::{ForwardModel, NetworkArchitecture, NetworkModel};
use crate::numerics::{spd_solve_with_jitter, Matrix, RngStream, Vector};
use crate::uq::WeightTrace;

/// Independent Gaussian observation errors (diagonal `C_D`).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    obs_std: Vector,
}

impl NoiseModel {
    pub fn new(obs_std: Vector) -> Result<Self> {
        if let Some((i, v)) = obs_std.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "observation std must be positive (index {i}: {v})"
            )));
        }
        Ok(Self { obs_std })
    }

    pub fn uniform(len: usize, std: f64) -> Result<Self> {
        Self::new(Vector::from_element(len, std))
    }

    pub fn len(&self) -> usize {
        self.obs_std.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs_std.is_empty()
    }

    pub fn obs_std(&self) -> &Vector {
        &self.obs_std
    }

    pub fn variances(&self) -> Vector {
        self.obs_std.map(|s| s * s)
    }
}

/// Gaussian prior on the weights with diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorModel {
    mean: Vector,
    cov_diag: Vector,
}

impl PriorModel {
    pub fn new(mean: Vector, cov_diag: Vector) -> Result<Self> {
        if mean.len() != cov_diag.len() {
            return Err(Error::dims("prior", mean.len(), cov_diag.len()));
        }
        if let Some((i, v)) = cov_diag.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "prior variance must be positive (index {i}: {v})"
            )));
        }
        Ok(Self { mean, cov_diag })
    }

    /// Zero mean, isotropic standard deviation `std`.
    pub fn isotropic(len: usize, mean: f64, std: f64) -> Result<Self> {
        Self::new(
            Vector::from_element(len, mean),
            Vector::from_element(len, std * std),
        )
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn cov_diag(&self) -> &Vector {
        &self.cov_diag
    }

    /// `C_M⁻¹ X`, row `i` divided by the `i`-th prior variance.
    pub fn precision_apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row /= self.cov_diag[i];
        }
        out
    }

    /// Draws an ensemble from this prior.
    pub fn sample_ensemble(&self, rng: &mut RngStream, realizations: usize) -> Result<WeightEnsemble> {
        let mut m = rng.sample_standard_normal(self.len(), realizations);
        for (i, mut row) in m.row_iter_mut().enumerate() {
            let sd = self.cov_diag[i].sqrt();
            for v in row.iter_mut() {
                *v = self.mean[i] + sd * *v;
            }
        }
        WeightEnsemble::from_prior(m)
    }
}

fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::dims(context, expected, found))
    }
}

/// `(g - d)ᵀ C_D⁻¹ (g - d)` for diagonal `C_D`.
pub fn data_mismatch(pred: &[f64], d_obs: &[f64], noise: &NoiseModel) -> Result<f64> {
    check_len("data_mismatch prediction", d_obs.len(), pred.len())?;
    check_len("data_mismatch noise", d_obs.len(), noise.len())?;
    Ok(pred
        .iter()
        .zip(d_obs)
        .zip(noise.obs_std.iter())
        .map(|((p, d), s)| ((p - d) / s).powi(2))
        .sum())
}

/// Negative log posterior up to a constant:
/// `½ (m - m_pr)ᵀ C_M⁻¹ (m - m_pr) + ½ S_d`.
pub fn objective(
    m: &[f64],
    m_pr: &[f64],
    pred: &[f64],
    d_obs: &[f64],
    prior: &PriorModel,
    noise: &NoiseModel,
) -> Result<f64> {
    check_len("objective prior mean", m.len(), m_pr.len())?;
    check_len("objective prior", m.len(), prior.len())?;
    let model: f64 = m
        .iter()
        .zip(m_pr)
        .zip(prior.cov_diag.iter())
        .map(|((a, b), v)| (a - b).powi(2) / v)
        .sum();
    Ok(0.5 * model + 0.5 * data_mismatch(pred, d_obs, noise)?)
}

/// Mean and (`N_e - 1`) standard deviation of `S_d` over the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MismatchStats {
    pub mean: f64,
    pub std: f64,
}

pub fn mismatch_stats(preds: &Matrix, d_obs: &Vector, noise: &NoiseModel) -> Result<MismatchStats> {
    let values = preds
        .column_iter()
        .map(|c| data_mismatch(c.as_slice(), d_obs.as_slice(), noise))
        .collect::<Result<Vec<_>>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(MismatchStats { mean, std })
}

/// Column `j` is an independent draw from `N(d_obs, C_D)`.
pub fn perturb_observations(
    d_obs: &Vector,
    noise: &NoiseModel,
    rng: &mut RngStream,
    realizations: usize,
) -> Result<Matrix> {
    check_len("perturb_observations", d_obs.len(), noise.len())?;
    let var = noise.variances();
    let mut out = Matrix::zeros(d_obs.len(), realizations);
    for j in 0..realizations {
        let col = rng.sample_gaussian(d_obs, &var)?;
        out.set_column(j, &col);
    }
    Ok(out)
}

struct StepInputs<'a> {
    ensemble: &'a WeightEnsemble,
    preds: &'a Matrix,
    d_obs_pert: &'a Matrix,
    prior: &'a PriorModel,
    noise: &'a NoiseModel,
    lambda: f64,
    jitter: Option<f64>,
}

impl StepInputs<'_> {
    fn validate(&self, c_d_pred: &Matrix) -> Result<()> {
        let (n_m, n_e) = self.ensemble.current().shape();
        let n_d = self.noise.len();
        check_len("step predictions rows", n_d, self.preds.nrows())?;
        check_len("step predictions cols", n_e, self.preds.ncols())?;
        check_len("step perturbed obs rows", n_d, self.d_obs_pert.nrows())?;
        check_len("step perturbed obs cols", n_e, self.d_obs_pert.ncols())?;
        check_len("step prior", n_m, self.prior.len())?;
        check_len("step prediction covariance", n_d, c_d_pred.nrows())?;
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive and finite, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    /// Shared update given the actions of `C_Ml`, `C_MD` and `C_MDᵀ`.
    fn apply(
        &self,
        c_d_pred: &Matrix,
        c_ml: impl Fn(&Matrix) -> Matrix,
        c_md: impl Fn(&Matrix) -> Matrix,
        c_md_t: impl Fn(&Matrix) -> Matrix,
    ) -> Result<Matrix> {
        self.validate(c_d_pred)?;
        let current = self.ensemble.current();
        let n_e = current.ncols();
        let damp = 1.0 + self.lambda;

        let model_resid = self.prior.precision_apply(&(current - self.ensemble.prior()));
        let data_resid = self.preds - self.d_obs_pert;

        let mut system = c_d_pred.clone();
        for (i, v) in self.noise.variances().iter().enumerate() {
            system[(i, i)] += damp * v;
        }
        // One factorization serves both right-hand sides and every realization.
        let projected = c_md_t(&model_resid);
        let mut rhs = Matrix::zeros(system.nrows(), 2 * n_e);
        rhs.columns_mut(0, n_e).copy_from(&projected);
        rhs.columns_mut(n_e, n_e).copy_from(&data_resid);
        let solved = spd_solve_with_jitter(&system, &rhs, self.jitter)?;
        let model_solved = solved.columns(0, n_e).into_owned();
        let data_solved = solved.columns(n_e, n_e).into_owned();

        let model_step = (c_ml(&model_resid) - c_md(&model_solved)) / damp;
        let data_step = c_md(&data_solved);
        Ok(current - model_step - data_step)
    }
}

/// Proposes the next ensemble from explicit covariances.
#[allow(clippy::too_many_arguments)]
pub fn enrml_step(
    ensemble: &WeightEnsemble,
    preds: &Matrix,
    d_obs_pert: &Matrix,
    cov: &CovarianceSet,
    prior: &PriorModel,
    noise: &NoiseModel,
    lambda: f64,
    jitter: Option<f64>,
) -> Result<Matrix> {
    let inputs = StepInputs {
        ensemble,
        preds,
        d_obs_pert,
        prior,
        noise,
        lambda,
        jitter,
    };
    check_len("step weight covariance", ensemble.param_count(), cov.c_m.nrows())?;
    check_len("step cross covariance", ensemble.param_count(), cov.c_md.nrows())?;
    inputs.apply(
        &cov.c_d_pred,
        |x| &cov.c_m * x,
        |x| &cov.c_md * x,
        |x| cov.c_md.transpose() * x,
    )
}

/// Same update as [`enrml_step`] but through anomaly factors, so no
/// `N_m x N_m` matrix is ever formed.
#[allow(clippy::too_many_arguments)]
pub fn enrml_step_factored(
    ensemble: &WeightEnsemble,
    preds: &Matrix,
    d_obs_pert: &Matrix,
    factors: &AnomalyFactors,
    prior: &PriorModel,
    noise: &NoiseModel,
    lambda: f64,
    jitter: Option<f64>,
) -> Result<Matrix> {
    let inputs = StepInputs {
        ensemble,
        preds,
        d_obs_pert,
        prior,
        noise,
        lambda,
        jitter,
    };
    check_len("step anomalies", ensemble.param_count(), factors.weights.nrows())?;
    let a_m = &factors.weights;
    let a_d = &factors.preds;
    inputs.apply(
        &factors.c_d_pred(),
        |x| a_m * (a_m.transpose() * x),
        |x| a_m * (a_d.transpose() * x),
        |x| a_d * (a_m.transpose() * x),
    )
}

pub const DEFAULT_GAMMA: f64 = 10.0;
pub const DEFAULT_LAMBDA_FLOOR: f64 = 0.005;

/// Starting damping: `S_d(m_0) / (2 N_d)`, floored.
pub fn lambda_init(sd_mean_initial: f64, n_d: usize, floor: f64) -> f64 {
    (sd_mean_initial / (2.0 * n_d.max(1) as f64)).max(floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaDecision {
    /// Mean and spread of `S_d` both fell: accept and divide λ by γ.
    AcceptShrink,
    /// Mean fell, spread did not: accept, keep λ.
    AcceptHold,
    /// Mean did not fall: discard the proposal and multiply λ by γ.
    RejectGrow,
}

impl LambdaDecision {
    pub fn accepted(self) -> bool {
        !matches!(self, LambdaDecision::RejectGrow)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaController {
    pub lambda: f64,
    pub gamma: f64,
    pub floor: f64,
}

impl LambdaController {
    pub fn new(lambda: f64, gamma: f64, floor: f64) -> Self {
        Self {
            lambda: lambda.max(floor),
            gamma,
            floor,
        }
    }

    pub fn update(&mut self, old: MismatchStats, new: MismatchStats) -> LambdaDecision {
        let (decision, lambda) = lambda_update(self, old.mean, old.std, new.mean, new.std);
        self.lambda = lambda;
        decision
    }
}

/// Pure form of [`LambdaController::update`].
pub fn lambda_update(
    ctrl: &LambdaController,
    old_mean: f64,
    old_std: f64,
    new_mean: f64,
    new_std: f64,
) -> (LambdaDecision, f64) {
    // NaN compares false, so a non-finite proposal is rejected.
    if new_mean < old_mean {
        if new_std < old_std {
            (
                LambdaDecision::AcceptShrink,
                (ctrl.lambda / ctrl.gamma).max(ctrl.floor),
            )
        } else {
            (LambdaDecision::AcceptHold, ctrl.lambda.max(ctrl.floor))
        }
    } else {
        (LambdaDecision::RejectGrow, ctrl.lambda * ctrl.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationMode {
    /// Fresh perturbed observations at every iteration.
    #[default]
    PerIteration,
    /// One draw at initialization, reused throughout.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub max_iterations: usize,
    /// Number of accepted iterations the relative change is measured over.
    pub window: usize,
    pub rel_tol: f64,
    pub max_consecutive_rejections: usize,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            window: 5,
            rel_tol: 1e-4,
            max_consecutive_rejections: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnrmlConfig {
    pub gamma: f64,
    pub lambda_floor: f64,
    /// Overrides the `S_d / (2 N_d)` starting value.
    pub lambda_init: Option<f64>,
    pub stopping: StoppingRule,
    pub perturbation: PerturbationMode,
    /// Above this many parameters the update runs on anomaly factors.
    pub factored_threshold: usize,
    pub jitter: Option<f64>,
}

impl Default for EnrmlConfig {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            lambda_floor: DEFAULT_LAMBDA_FLOOR,
            lambda_init: None,
            stopping: StoppingRule::default(),
            perturbation: PerturbationMode::default(),
            factored_threshold: 2000,
            jitter: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 0 is the initial ensemble; each later row is one update attempt.
    pub iteration: usize,
    /// Damping used for this attempt (for row 0, the starting value).
    pub lambda: f64,
    pub sd_mean: f64,
    pub sd_std: f64,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    RepeatedRejection,
}

#[derive(Debug, Clone)]
pub struct EnrmlState {
    pub iteration: usize,
    pub controller: LambdaController,
    pub last_accepted: WeightEnsemble,
    pub stats: MismatchStats,
    pub history: Vec<IterationRecord>,
    pub accepted_count: usize,
    pub rejected_count: usize,
}

impl EnrmlState {
    /// Rows of accepted states, including the initial ensemble.
    pub fn accepted_history(&self) -> impl Iterator<Item = &IterationRecord> {
        self.history.iter().filter(|r| r.accepted)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub ensemble: WeightEnsemble,
    pub state: EnrmlState,
    pub stop: StopReason,
    pub weight_trace: WeightTrace,
}

/// Observes the optimizer; called once per accepted state.
pub trait Monitor {
    /// Train loss (and optionally test loss) of an accepted state.
    fn losses(&mut self, weights: &Matrix, preds: &Matrix) -> Result<(f64, Option<f64>)>;
}

/// Mean absolute error of the ensemble-mean prediction against `d_obs`.
pub struct DataMaeMonitor<'a> {
    pub d_obs: &'a Vector,
}

impl Monitor for DataMaeMonitor<'_> {
    fn losses(&mut self, _weights: &Matrix, preds: &Matrix) -> Result<(f64, Option<f64>)> {
        let mean = preds.column_mean();
        let mae = (mean - self.d_obs).abs().sum() / self.d_obs.len() as f64;
        Ok((mae, None))
    }
}

/// The EnRML optimizer for a black-box forward map.
pub struct Enrml<'a, M: ForwardModel> {
    pub model: &'a M,
    pub d_obs: Vector,
    pub noise: NoiseModel,
    pub prior: PriorModel,
    pub config: EnrmlConfig,
}

impl<M: ForwardModel> Enrml<'_, M> {
    fn evaluate(&self, weights: &Matrix) -> Result<Matrix> {
        self.model.evaluate_ensemble(weights)
    }

    fn propose(
        &self,
        ensemble: &WeightEnsemble,
        preds: &Matrix,
        d_pert: &Matrix,
        lambda: f64,
    ) -> Result<Matrix> {
        let factors = AnomalyFactors::new(ensemble.current(), preds)?;
        if ensemble.param_count() > self.config.factored_threshold {
            enrml_step_factored(
                ensemble,
                preds,
                d_pert,
                &factors,
                &self.prior,
                &self.noise,
                lambda,
                self.config.jitter,
            )
        } else {
            enrml_step(
                ensemble,
                preds,
                d_pert,
                &factors.covariance_set(),
                &self.prior,
                &self.noise,
                lambda,
                self.config.jitter,
            )
        }
    }

    /// Runs the damped iteration until the stopping rule fires.
    ///
    /// Rejected proposals never replace the ensemble; the same perturbed
    /// observations are reused while retrying one iteration.
    pub fn run(
        &self,
        ensemble: WeightEnsemble,
        rng: &mut RngStream,
        monitor: &mut dyn Monitor,
        trace_weights: bool,
    ) -> Result<TrainOutcome> {
        check_len("d_obs vs noise", self.noise.len(), self.d_obs.len())?;
        check_len(
            "d_obs vs model outputs",
            self.model.output_count(),
            self.d_obs.len(),
        )?;
        check_len(
            "prior vs model parameters",
            self.model.param_count(),
            self.prior.len(),
        )?;
        check_len(
            "ensemble vs model parameters",
            self.model.param_count(),
            ensemble.param_count(),
        )?;
        let n_e = ensemble.realization_count();
        let cfg = &self.config;

        let mut preds = self.evaluate(ensemble.current())?;
        let mut stats = mismatch_stats(&preds, &self.d_obs, &self.noise)?;
        let start = cfg
            .lambda_init
            .unwrap_or_else(|| lambda_init(stats.mean, self.d_obs.len(), cfg.lambda_floor));
        let mut controller = LambdaController::new(start, cfg.gamma, cfg.lambda_floor);
        let (train_loss, test_loss) = monitor.losses(ensemble.current(), &preds)?;

        let mut trace = WeightTrace::default();
        if trace_weights {
            trace.push(ensemble.current());
        }
        let mut state = EnrmlState {
            iteration: 0,
            controller,
            last_accepted: ensemble,
            stats,
            history: vec![IterationRecord {
                iteration: 0,
                lambda: controller.lambda,
                sd_mean: stats.mean,
                sd_std: stats.std,
                train_loss,
                test_loss,
                accepted: true,
            }],
            accepted_count: 0,
            rejected_count: 0,
        };
        let mut accepted_means = vec![stats.mean];
        let mut losses = (train_loss, test_loss);

        let fixed = match cfg.perturbation {
            PerturbationMode::Fixed => Some(perturb_observations(&self.d_obs, &self.noise, rng, n_e)?),
            PerturbationMode::PerIteration => None,
        };
        let mut pending: Option<Matrix> = None;
        let mut consecutive_rejections = 0;

        let stop = loop {
            if stats.mean == 0.0 {
                break StopReason::Converged;
            }
            if state.iteration >= cfg.stopping.max_iterations {
                break StopReason::MaxIterations;
            }
            state.iteration += 1;

            let d_pert = match (&fixed, pending.take()) {
                (Some(f), _) => f.clone(),
                (None, Some(p)) => p,
                (None, None) => perturb_observations(&self.d_obs, &self.noise, rng, n_e)?,
            };
            let lambda = controller.lambda;
            let proposal = self.propose(&state.last_accepted, &preds, &d_pert, lambda)?;
            let candidate = if proposal.iter().all(|v| v.is_finite()) {
                let p = self.evaluate(&proposal)?;
                let s = mismatch_stats(&p, &self.d_obs, &self.noise)?;
                Some((p, s))
            } else {
                None
            };
            let new_stats = candidate.as_ref().map(|c| c.1).unwrap_or(MismatchStats {
                mean: f64::NAN,
                std: f64::NAN,
            });
            let decision = controller.update(stats, new_stats);

            if let (true, Some((p, s))) = (decision.accepted(), candidate) {
                let next = state.last_accepted.with_current(proposal)?;
                preds = p;
                stats = s;
                losses = monitor.losses(next.current(), &preds)?;
                if trace_weights {
                    trace.push(next.current());
                }
                state.last_accepted = next;
                state.accepted_count += 1;
                consecutive_rejections = 0;
                accepted_means.push(stats.mean);
            } else {
                state.rejected_count += 1;
                consecutive_rejections += 1;
                pending = Some(d_pert);
            }
            state.controller = controller;
            state.stats = stats;
            state.history.push(IterationRecord {
                iteration: state.iteration,
                lambda,
                sd_mean: if decision.accepted() {
                    stats.mean
                } else {
                    new_stats.mean
                },
                sd_std: if decision.accepted() {
                    stats.std
                } else {
                    new_stats.std
                },
                train_loss: losses.0,
                test_loss: losses.1,
                accepted: decision.accepted(),
            });

            if consecutive_rejections >= cfg.stopping.max_consecutive_rejections {
                break StopReason::RepeatedRejection;
            }
            if decision.accepted() && has_converged(&accepted_means, &cfg.stopping) {
                break StopReason::Converged;
            }
        };

        Ok(TrainOutcome {
            ensemble: state.last_accepted.clone(),
            state,
            stop,
            weight_trace: trace,
        })
    }
}

fn has_converged(means: &[f64], rule: &StoppingRule) -> bool {
    let n = means.len();
    if rule.window == 0 || n <= rule.window {
        return false;
    }
    let last = means[n - 1];
    let past = means[n - 1 - rule.window];
    (past - last).abs() <= rule.rel_tol * past.abs()
}

/// Everything [`train`] needs besides the data and seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub ensemble_size: usize,
    pub obs_std: f64,
    pub prior_mean: f64,
    pub prior_std: f64,
    pub config: EnrmlConfig,
    pub trace_weights: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            ensemble_size: 100,
            obs_std: 0.002,
            prior_mean: 0.0,
            prior_std: 1.0,
            config: EnrmlConfig::default(),
            trace_weights: false,
        }
    }
}

struct NetworkMonitor<'a> {
    arch: &'a NetworkArchitecture,
    train: &'a Dataset,
    test: Option<(&'a Dataset, NetworkModel)>,
}

impl NetworkMonitor<'_> {
    fn mae(&self, ds: &Dataset, flat_preds: &Matrix) -> Result<f64> {
        let mean = flat_preds.column_mean();
        let pred = crate::network::unflatten_sample_major(mean.as_slice(), ds.len(), self.arch.output_dim())?;
        let pred = ds.destandardize_targets(&pred);
        loss_mae(&pred, &ds.original_targets())
    }
}

impl Monitor for NetworkMonitor<'_> {
    fn losses(&mut self, weights: &Matrix, preds: &Matrix) -> Result<(f64, Option<f64>)> {
        let train = self.mae(self.train, preds)?;
        let test = match &self.test {
            Some((ds, model)) => Some(self.mae(ds, &model.evaluate_ensemble(weights)?)?),
            None => None,
        };
        Ok((train, test))
    }
}

/// Trains a network ensemble on `train`, tracking losses on `test`.
///
/// The prior ensemble is drawn from `ensemble_rng`; observation perturbations
/// come from `perturb_rng`. Losses are reported in original target units.
pub fn train(
    arch: &NetworkArchitecture,
    train: &Dataset,
    test: Option<&Dataset>,
    settings: &TrainSettings,
    ensemble_rng: &mut RngStream,
    perturb_rng: &mut RngStream,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let model = NetworkModel::new(arch.clone(), train.inputs().clone())?;
    let d_obs = train.observation_vector();
    let noise = NoiseModel::uniform(d_obs.len(), settings.obs_std)?;
    let prior = PriorModel::isotropic(arch.weight_count(), settings.prior_mean, settings.prior_std)?;
    let ensemble = prior.sample_ensemble(ensemble_rng, settings.ensemble_size)?;
    let test_model = match test {
        Some(ds) if !ds.is_empty() => Some((ds, NetworkModel::new(arch.clone(), ds.inputs().clone())?)),
        _ => None,
    };
    let mut monitor = NetworkMonitor {
        arch,
        train,
        test: test_model,
    };
    let engine = Enrml {
        model: &model,
        d_obs,
        noise,
        prior,
        config: settings.config,
    };
    engine.run(ensemble, perturb_rng, &mut monitor, settings.trace_weights)
}
