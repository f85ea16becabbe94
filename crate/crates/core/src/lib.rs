//! Ensembles of small feed-forward networks trained without gradients by the
//! ensemble randomized maximum likelihood (EnRML) update.
//!
//! Weights of `N_e` networks are stored as the columns of an `N_m x N_e`
//! matrix. Each iteration evaluates every realization on the training inputs,
//! estimates weight/prediction covariances from the ensemble and moves all
//! realizations at once with a damped Gauss-Newton-like step. The spread of
//! the final ensemble gives prediction bands.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod enrml;
pub mod ensemble;
pub mod error;
pub mod fixture;
pub mod network;
pub mod numerics;
pub mod uq;

pub use data::{gen_toy_cubic, loss_mae, Dataset, SplitSpec};
pub use enrml::{
    train, Enrml, EnrmlConfig, IterationRecord, LambdaController, LambdaDecision, NoiseModel,
    PerturbationMode, PriorModel, StopReason, StoppingRule, TrainOutcome, TrainSettings,
};
pub use ensemble::WeightEnsemble;
pub use error::{Error, Result};
pub use network::{Activation, ForwardModel, NetworkArchitecture, NetworkModel};
pub use numerics::{Matrix, RngStream, Vector};
pub use uq::{predict_band, PredictionBand, WeightTrace};
