//! Exact chain-rule derivative of the post-step probe loss with respect to
//! the predictor parameters, for validating the collapsed update.
//!
//! With θ_e′ = θ_e − η·∇L_u(θ_e, θ_d) and the softplus consistency term
//! `(w/L)·Σ_l softplus(simi_l − E_l[g])`,
//!
//! ```text
//! dCE(θ_e′)/dθ_d = (η·w/L)·Σ_l σ′(k_l)·(∇CE(θ_e′)·∇simi_l(θ_e))·∂E_l[g]/∂θ_d
//! ```
//!
//! For the absolute-value variant the mixed second derivative vanishes
//! almost everywhere, so the exact derivative is zero.

use crate::bilevel::probe::{probe_ce_encoder_grad, LinearProbe};
use crate::bilevel::state::{group_simi_grads, hyper_coefficient, HyperCache};
use crate::bilevel::BilevelConfig;
use crate::encoder::Encoder;
use crate::error::Result;
use crate::losses::ConsistencyVariant;
use crate::numcore::{Matrix, ParamSet};
use crate::pmnn::Pmnn;

#[allow(clippy::too_many_arguments)]
pub fn exact_hypergradient(
    config: &BilevelConfig,
    before: &Encoder<f64>,
    after: &Encoder<f64>,
    probe: &LinearProbe,
    pmnn: &Pmnn<f64>,
    cache: &HyperCache,
    inputs: &Matrix<f64>,
    labels: &[usize],
) -> Result<ParamSet<f64>> {
    let mut out = pmnn.params().zeros_like();
    if config.variant == ConsistencyVariant::Abs {
        return Ok(out);
    }
    let (_, grad_ce) = probe_ce_encoder_grad(after, probe, inputs, labels)?;
    let simi = group_simi_grads(before, config, &cache.views)?;
    let lengths = cache.groups.len() as f64;
    let scale = cache.lr * config.consistency_weight / lengths;
    for (((_, vs), k), (_, grad_simi)) in cache.groups.iter().zip(&cache.k).zip(&simi) {
        let inner = grad_ce.dot(grad_simi)?;
        let g = pmnn.grad_wrt_params(vs)?;
        out.add_scaled(&g, scale * hyper_coefficient(*k) * inner)?;
    }
    Ok(out)
}
