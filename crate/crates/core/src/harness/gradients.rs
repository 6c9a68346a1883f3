//! Finite-difference checks of every analytic gradient on small networks.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::augment::{CompositionVector, Raster, POOL_SIZE};
use crate::bilevel::{build_views, unsup_objective, BilevelConfig, LinearProbe};
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::Result;
use crate::losses::{consistency_loss, contrastive_loss, cross_entropy, ConsistencyVariant, DeviationGroup, NegativeQueue};
use crate::numcore::rng::{rng_from_seed, SeededRng};
use crate::numcore::{grad_check, Matrix, ParamSet};
use crate::pmnn::{Pmnn, PmnnConfig};

/// Largest relative error a check may report and still pass.
pub const GRAD_TOLERANCE: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientCheck {
    pub name: String,
    pub parameters: usize,
    pub max_rel_error: f64,
}

impl GradientCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRAD_TOLERANCE
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn unit_rows(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix<f64> {
    let mut m = gaussian(rows, cols, rng);
    for r in 0..rows {
        let n = m.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        m.row_mut(r).iter_mut().for_each(|v| *v /= n);
    }
    m
}

fn pair(a: Matrix<f64>, b: Matrix<f64>) -> Result<ParamSet<f64>> {
    let mut p = ParamSet::new();
    p.push("a", a)?;
    p.push("b", b)?;
    Ok(p)
}

fn check<F>(name: &str, params: &ParamSet<f64>, h: f64, f: F) -> Result<GradientCheck>
where
    F: FnMut(&ParamSet<f64>) -> Result<(f64, ParamSet<f64>)>,
{
    Ok(GradientCheck {
        name: name.to_string(),
        parameters: params.num_params(),
        max_rel_error: grad_check(f, params, h)?.max_rel_error,
    })
}

/// Runs the checks for the contrastive loss, both consistency variants,
/// cross-entropy, the probe, the predictor's mean output, and the full
/// unsupervised loss through the encoder.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradientCheck>> {
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::new();

    let mut queue = NegativeQueue::new(16, 8)?;
    queue.push(&unit_rows(16, 8, &mut rng))?;
    out.push(check("contrastive", &pair(unit_rows(4, 8, &mut rng), unit_rows(4, 8, &mut rng))?, 1e-6, |p| {
        let c = contrastive_loss(p.require("a")?, p.require("b")?, &queue, 0.2)?;
        Ok((c.loss, pair(c.grad_query, c.grad_positive)?))
    })?);

    for variant in [ConsistencyVariant::Abs, ConsistencyVariant::Softplus] {
        let omega: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Keep every gap away from zero, where |·| has a kink.
        let pred: Vec<f64> = omega
            .iter()
            .map(|o| o + rng.random_range(0.05..0.5) * if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let base = pair(Matrix::row_vector(omega), Matrix::row_vector(pred))?;
        out.push(check(&format!("consistency ({variant})"), &base, 1e-6, |p| {
            let (o, g) = (p.require("a")?.data(), p.require("b")?.data());
            let groups = [
                DeviationGroup::new(1, o[..2].to_vec(), g[..2].to_vec())?,
                DeviationGroup::new(2, o[2..].to_vec(), g[2..].to_vec())?,
            ];
            let c = consistency_loss(variant, &groups)?;
            Ok((
                c.loss,
                pair(Matrix::row_vector(c.grad_omega.concat()), Matrix::row_vector(c.grad_predicted.concat()))?,
            ))
        })?);
    }

    let labels = [0usize, 2, 1, 2, 0];
    let mut logits = ParamSet::new();
    logits.push("logits", gaussian(5, 3, &mut rng))?;
    out.push(check("cross-entropy", &logits, 1e-6, |p| {
        let c = cross_entropy(p.require("logits")?, &labels)?;
        let mut g = ParamSet::new();
        g.push("logits", c.grad_logits)?;
        Ok((c.loss, g))
    })?);

    let features = gaussian(5, 6, &mut rng);
    let mut probe = LinearProbe::new(6, 3)?;
    let flat: Vec<f64> = (0..probe.params().num_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
    probe.params_mut().assign_flat(&flat)?;
    out.push(check("probe", probe.params(), 1e-6, |p| {
        let l = LinearProbe::from_params(p.clone())?.loss(&features, &labels)?;
        Ok((l.ce.loss, l.grads))
    })?);

    let pmnn = Pmnn::<f64>::new(PmnnConfig::default(), &mut rng)?;
    let batch: Vec<CompositionVector> = (0..6)
        .map(|_| {
            let mut c = [0u32; POOL_SIZE];
            for _ in 0..rng.random_range(1..=3) {
                c[rng.random_range(0..POOL_SIZE)] += 1;
            }
            CompositionVector::from_counts(c)
        })
        .collect();
    out.push(check("predictor mean output", pmnn.params(), 1e-6, |p| {
        pmnn.with_params(p.clone())?.mean_and_grad(&batch)
    })?);

    out.push(unsup_check(&mut rng)?);
    Ok(out)
}

/// L_u on a two-image batch with four negatives and lengths {1, 2}.
fn unsup_check(rng: &mut SeededRng) -> Result<GradientCheck> {
    let side = 6;
    let cfg = BilevelConfig {
        encoder: EncoderConfig::new(side * side, vec![12, 8], 8, 4)?,
        pmnn: PmnnConfig { hidden: 4, init_range: 0.5 },
        queue_capacity: 4,
        batch_size: 2,
        lengths: vec![1, 2],
        ..BilevelConfig::desk_default()
    };
    let images: Vec<Raster> = (0..2)
        .map(|_| Raster::new(side, side, 1, (0..side * side).map(|_| rng.random_range(0.0..1.0)).collect()))
        .collect::<Result<_>>()?;
    let refs: Vec<&Raster> = images.iter().collect();
    let encoder = Encoder::<f64>::new(cfg.encoder.clone(), rng)?;
    let pmnn = Pmnn::<f64>::new(cfg.pmnn, rng)?;
    let views = build_views(&cfg, &refs, 0)?;
    let keys = encoder.forward(&views.keys)?.embeddings;
    let mut queue = NegativeQueue::new(4, cfg.encoder.embed_dim)?;
    queue.push(&unit_rows(4, cfg.encoder.embed_dim, rng))?;
    let predicted = pmnn.predict_batch(&views.compositions)?;
    check("unsupervised total", encoder.params(), 1e-5, |p| {
        let e = encoder.with_params(p.clone())?;
        let ev = unsup_objective(&cfg, &e, &views, &keys, &queue, &predicted, true)?;
        Ok((ev.breakdown.total, ev.grads.expect("requested")))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let suite = gradient_suite(0).unwrap();
        assert_eq!(suite.len(), 7);
        for c in &suite {
            assert!(c.parameters <= 2000, "{c:?}");
            assert!(c.passed(), "{c:?}");
        }
    }
}
