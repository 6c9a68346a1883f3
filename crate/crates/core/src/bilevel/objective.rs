use crate::bilevel::{BilevelConfig, UnsupViews};
use crate::encoder::{Encoder, EncoderPass};
use crate::error::{Error, Result};
use crate::losses::{
    consistency_loss, contrastive_loss, total_unsup_loss, DeviationGroup, LossBreakdown, NegativeQueue,
};
use crate::numcore::{dot, Matrix, ParamSet};

/// Stacks `[queries; raws; augmented]` so one forward pass covers all three.
fn stacked_input(views: &UnsupViews) -> Result<Matrix<f64>> {
    let cols = views.raws.cols();
    let mut data = Vec::with_capacity(3 * views.raws.len());
    data.extend_from_slice(views.queries.data());
    data.extend_from_slice(views.raws.data());
    data.extend_from_slice(views.augmented.data());
    Matrix::new(3 * views.batch_size(), cols, data)
}

/// Ω_i = f(x_i)·f(A(x_i)) from a stacked pass.
fn deviations(pass: &EncoderPass<f64>, batch: usize) -> Vec<f64> {
    (0..batch)
        .map(|i| dot(pass.embeddings.row(batch + i), pass.embeddings.row(2 * batch + i)))
        .collect()
}

fn deviation_groups(cfg: &BilevelConfig, views: &UnsupViews, omega: &[f64], predicted: &[f64]) -> Result<Vec<DeviationGroup<f64>>> {
    views
        .groups(&cfg.lengths)
        .into_iter()
        .map(|(l, idx)| {
            DeviationGroup::new(
                l,
                idx.iter().map(|&i| omega[i]).collect(),
                idx.iter().map(|&i| predicted[i]).collect(),
            )
        })
        .collect()
}

/// Embedding gradient of `Σ_i c_i·Ω_i` on the stacked pass.
fn omega_embedding_grad(pass: &EncoderPass<f64>, batch: usize, coeff: &[f64]) -> Matrix<f64> {
    let dim = pass.embeddings.cols();
    let mut g = Matrix::zeros(3 * batch, dim);
    for (i, &c) in coeff.iter().enumerate() {
        let zr = pass.embeddings.row(batch + i).to_vec();
        let za = pass.embeddings.row(2 * batch + i).to_vec();
        for (o, v) in g.row_mut(batch + i).iter_mut().zip(&za) {
            *o = c * v;
        }
        for (o, v) in g.row_mut(2 * batch + i).iter_mut().zip(&zr) {
            *o = c * v;
        }
    }
    g
}

/// Result of evaluating the unsupervised objective at one encoder.
#[derive(Clone, Debug)]
pub struct UnsupEvaluation {
    pub breakdown: LossBreakdown<f64>,
    /// Gradient of L_u with respect to the encoder parameters, when requested.
    pub grads: Option<ParamSet<f64>>,
    /// Rows whose projection was degenerate.
    pub degenerate: usize,
}

/// L_u = L_contrast + w·L_consist on fixed views, queue and predictions.
///
/// `key_embeddings` are the positives; they and the queue are constants.
pub fn unsup_objective(
    cfg: &BilevelConfig,
    encoder: &Encoder<f64>,
    views: &UnsupViews,
    key_embeddings: &Matrix<f64>,
    queue: &NegativeQueue<f64>,
    predicted: &[f64],
    need_grad: bool,
) -> Result<UnsupEvaluation> {
    let batch = views.batch_size();
    if predicted.len() != batch || key_embeddings.rows() != batch {
        return Err(Error::dim("predictions and keys must match the batch"));
    }
    let pass = encoder.forward(&stacked_input(views)?)?;
    let zq = Matrix::from_fn(batch, pass.embeddings.cols(), |r, c| pass.embeddings.get(r, c));
    let contrast = contrastive_loss(&zq, key_embeddings, queue, cfg.tau)?;
    let omega = deviations(&pass, batch);
    let groups = deviation_groups(cfg, views, &omega, predicted)?;
    let mut consist = consistency_loss(cfg.variant, &groups)?;
    let w = cfg.consistency_weight;
    consist.loss *= w;
    let breakdown = total_unsup_loss(&contrast, &consist);
    let grads = if need_grad {
        let mut coeff = vec![0.0; batch];
        for ((_, idx), g) in views.groups(&cfg.lengths).iter().zip(&consist.grad_omega) {
            for (&i, &gi) in idx.iter().zip(g) {
                coeff[i] = w * gi;
            }
        }
        let mut grad_z = omega_embedding_grad(&pass, batch, &coeff);
        for r in 0..batch {
            grad_z.row_mut(r).copy_from_slice(contrast.grad_query.row(r));
        }
        Some(encoder.backward(&pass, Some(&grad_z), None)?)
    } else {
        None
    };
    Ok(UnsupEvaluation {
        breakdown,
        grads,
        degenerate: pass.guarded_rows,
    })
}

/// Mean Ω over the samples `idx` (all samples when `None`) and its gradient
/// with respect to the encoder parameters.
pub fn simi_and_grad(encoder: &Encoder<f64>, views: &UnsupViews, idx: Option<&[usize]>) -> Result<(f64, ParamSet<f64>)> {
    let batch = views.batch_size();
    let all: Vec<usize> = (0..batch).collect();
    let idx = idx.unwrap_or(&all);
    if idx.is_empty() {
        return Err(Error::input("similarity over an empty set"));
    }
    let pass = encoder.forward(&stacked_input(views)?)?;
    let omega = deviations(&pass, batch);
    let n = idx.len() as f64;
    let mut coeff = vec![0.0; batch];
    let mut simi = 0.0;
    for &i in idx {
        coeff[i] = 1.0 / n;
        simi += omega[i] / n;
    }
    let grad_z = omega_embedding_grad(&pass, batch, &coeff);
    Ok((simi, encoder.backward(&pass, Some(&grad_z), None)?))
}
