//! Alternating optimisation of the encoder (unsupervised loss, predictor
//! frozen) and the deviation predictor (probe cross-entropy through the
//! encoder's dependence on the predictor).

mod config;
mod dacl;
mod objective;
pub mod oracle;
mod probe;
mod state;
mod train;
mod views;

pub use config::{Alternation, BilevelConfig, DeviationTarget};
pub use dacl::dacl;
pub use objective::{simi_and_grad, unsup_objective, UnsupEvaluation};
pub use probe::{probe_ce, probe_ce_encoder_grad, LinearProbe, ProbeLoss};
pub use state::{
    hyper_coefficient, hypergradient, logistic_derivative, BilevelScalars, EncoderStepReport, EpochAnchor, HyperCache,
    TrainState,
};
pub use train::{dacl_probe_set, train, TrainData};
pub use views::{build_views, UnsupViews};
