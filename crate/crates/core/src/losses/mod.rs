//! Unsupervised contrastive and consistency objectives, plus the probe's cross-entropy.

mod consistency;
mod contrastive;
mod cross_entropy;
mod queue;

pub use consistency::{
    consistency_loss, consistency_loss_abs, consistency_loss_softplus, ConsistencyOutput, ConsistencyVariant,
    DeviationGroup,
};
pub use contrastive::{contrastive_loss, ContrastiveOutput};
pub use cross_entropy::{check_labels, cross_entropy, CrossEntropyOutput};
pub use queue::{queue_push, NegativeQueue, UNIT_NORM_TOL};

use crate::scalar::Scalar;

/// Scalar summary of one evaluation of the unsupervised objective.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown<T> {
    pub contrastive: T,
    pub consistency: T,
    /// `contrastive + consistency`.
    pub total: T,
    /// Per-length mean of Ω − g.
    pub k: Vec<T>,
    /// Batch-mean latent deviation.
    pub simi: T,
}

/// Unweighted sum of the two terms. Gradients add the same way.
pub fn total_unsup_loss<T: Scalar>(contrastive: &ContrastiveOutput<T>, consistency: &ConsistencyOutput<T>) -> LossBreakdown<T> {
    LossBreakdown {
        contrastive: contrastive.loss,
        consistency: consistency.loss,
        total: contrastive.loss + consistency.loss,
        k: consistency.k.clone(),
        simi: consistency.simi,
    }
}
