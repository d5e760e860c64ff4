//! Losses, the Adam optimiser, the training loop over claim-article pairs
//! and the gradient-check harness.

mod adam;
mod config;
mod data;
mod fit;
mod gradcheck;
mod loss;

pub use adam::{adam_step, OptimizerState};
pub use config::{ConfigFile, Precision, Preset, Setup, TrainConfig};
pub use data::{encode_claims, evaluate, predict_claims, target_for, ClaimPrediction, EncodedArticle, EncodedClaim};
pub use fit::{derive_seed, fit, init_params, selection_metric, train, EpochLog, FitOutcome, FoldOutcome};
pub use gradcheck::{
    gradient_check, gradient_check_with, relative_error, tiny_instance, GradCheckReport, GroupError,
    TinyInstance, FD_STEP,
};
pub use loss::{instance_gradients, instance_loss, instance_loss_graph, l2_penalty, loss, Target};
