use crate::augment::{CompositionVector, Raster};
use crate::bilevel::objective::{simi_and_grad, unsup_objective, UnsupEvaluation};
use crate::bilevel::probe::{probe_ce, LinearProbe};
use crate::bilevel::views::{build_views, UnsupViews};
use crate::bilevel::{BilevelConfig, DeviationTarget};
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::losses::{CrossEntropyOutput, LossBreakdown, NegativeQueue};
use crate::numcore::rng::{derived_rng, stream};
use crate::numcore::{sigmoid, Matrix, ParamSet, SgdConfig, SgdState};
use crate::pmnn::Pmnn;

/// e^k/(1+e^k)², evaluated without overflow for large |k|.
pub fn hyper_coefficient(k: f64) -> f64 {
    let e = (-k.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

/// Scalars entering one predictor update.
#[derive(Clone, Debug, PartialEq)]
pub struct BilevelScalars {
    /// Per-length mean of Ω − g at the encoder before the step.
    pub k: Vec<f64>,
    pub simi_before: f64,
    pub simi_after: f64,
    pub ce_before: f64,
    pub ce_after: f64,
    pub lu_before: f64,
    pub lu_after: f64,
    /// e^k/(1+e^k)² per length.
    pub coefficient: Vec<f64>,
    /// ΔCE·Δsimi/ΔL_u, or zero when guarded.
    pub ratio: f64,
    /// Set when |ΔL_u| was below the guard and the update was skipped.
    pub guarded: bool,
}

/// State retained between an encoder step and the predictor step that follows it.
#[derive(Clone, Debug)]
pub struct HyperCache {
    /// Encoder parameters before the step.
    pub before: ParamSet<f64>,
    /// Learning rate of the step.
    pub lr: f64,
    pub views: UnsupViews,
    pub lu_before: f64,
    pub lu_after: f64,
    pub simi_before: f64,
    pub simi_after: f64,
    pub k: Vec<f64>,
    /// Composition vectors of each length group, in configuration order.
    pub groups: Vec<(usize, Vec<CompositionVector>)>,
}

#[derive(Clone, Debug)]
pub struct EncoderStepReport {
    pub warmup: bool,
    pub breakdown: Option<LossBreakdown<f64>>,
    pub lr: f64,
    pub degenerate: usize,
}

/// Encoder snapshot taken at the start of an epoch for per-epoch alternation.
#[derive(Clone, Debug)]
pub struct EpochAnchor {
    before: ParamSet<f64>,
    lr: f64,
    views: UnsupViews,
    keys: Matrix<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainState {
    config: BilevelConfig,
    encoder: Encoder<f64>,
    key_encoder: Encoder<f64>,
    pmnn: Pmnn<f64>,
    probe: LinearProbe,
    queue: NegativeQueue<f64>,
    encoder_opt: SgdState<f64>,
    pmnn_opt: SgdState<f64>,
    probe_opt: SgdState<f64>,
    step: usize,
    warmup_remaining: usize,
    cache: Option<HyperCache>,
    last_keys: Option<Matrix<f64>>,
    guard_count: usize,
    degenerate_count: usize,
}

impl TrainState {
    /// Fresh state; `encoder_steps` sets the length of the cosine schedule.
    pub fn new(config: BilevelConfig, classes: usize, encoder_steps: Option<usize>) -> Result<Self> {
        config.validate()?;
        let encoder = Encoder::new(
            config.encoder.clone(),
            &mut derived_rng(config.seed, stream::INIT_ENCODER, 0),
        )?;
        let pmnn = Pmnn::new(config.pmnn, &mut derived_rng(config.seed, stream::INIT_PMNN, 0))?;
        let probe = LinearProbe::new(config.encoder.feature_dim(), classes)?;
        let encoder_opt = SgdState::new(config.encoder_sgd(encoder_steps.map(|s| s.max(1))), encoder.params())?;
        let pmnn_opt = SgdState::new(SgdConfig::plain(config.pmnn_lr), pmnn.params())?;
        let probe_opt = SgdState::new(
            SgdConfig {
                momentum: 0.9,
                ..SgdConfig::plain(config.probe_lr)
            },
            probe.params(),
        )?;
        Ok(Self {
            queue: NegativeQueue::new(config.queue_capacity, config.encoder.embed_dim)?,
            warmup_remaining: config.warmup_iterations(),
            key_encoder: encoder.clone(),
            config,
            encoder,
            pmnn,
            probe,
            encoder_opt,
            pmnn_opt,
            probe_opt,
            step: 0,
            cache: None,
            last_keys: None,
            guard_count: 0,
            degenerate_count: 0,
        })
    }

    pub fn config(&self) -> &BilevelConfig {
        &self.config
    }

    pub fn encoder(&self) -> &Encoder<f64> {
        &self.encoder
    }

    pub fn key_encoder(&self) -> &Encoder<f64> {
        &self.key_encoder
    }

    pub fn pmnn(&self) -> &Pmnn<f64> {
        &self.pmnn
    }

    pub fn probe(&self) -> &LinearProbe {
        &self.probe
    }

    pub fn queue(&self) -> &NegativeQueue<f64> {
        &self.queue
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn warmup_remaining(&self) -> usize {
        self.warmup_remaining
    }

    pub fn guard_count(&self) -> usize {
        self.guard_count
    }

    pub fn degenerate_count(&self) -> usize {
        self.degenerate_count
    }

    pub fn hyper_cache(&self) -> Option<&HyperCache> {
        self.cache.as_ref()
    }

    pub fn encoder_lr(&self) -> f64 {
        self.encoder_opt.current_lr()
    }

    /// Replaces the query and key encoders, e.g. to start from a checkpoint.
    pub fn set_encoder(&mut self, encoder: Encoder<f64>) -> Result<()> {
        self.encoder.params().require_same_layout(encoder.params())?;
        self.key_encoder = encoder.clone();
        self.encoder = encoder;
        Ok(())
    }

    pub fn set_pmnn(&mut self, pmnn: Pmnn<f64>) -> Result<()> {
        self.pmnn.params().require_same_layout(pmnn.params())?;
        self.pmnn = pmnn;
        Ok(())
    }

    pub fn set_probe(&mut self, probe: LinearProbe) -> Result<()> {
        self.probe.params().require_same_layout(probe.params())?;
        self.probe = probe;
        Ok(())
    }

    /// Skips the queue warm-up, e.g. after filling the queue by hand.
    pub fn end_warmup(&mut self) {
        self.warmup_remaining = 0;
    }

    pub fn push_negatives(&mut self, embeddings: &Matrix<f64>) -> Result<()> {
        self.queue.push(embeddings)
    }

    /// All parameters, prefixed `encoder.`, `key.`, `pmnn.` and `probe.`.
    pub fn checkpoint_params(&self) -> Result<ParamSet<f64>> {
        let mut p = self.encoder.params().prefixed("encoder.");
        p.extend(self.key_encoder.params().prefixed("key."))?;
        p.extend(self.pmnn.params().prefixed("pmnn."))?;
        p.extend(self.probe.params().prefixed("probe."))?;
        Ok(p)
    }

    /// Target deviation g for each sample of `views`.
    pub fn predictions(&self, views: &UnsupViews) -> Result<Vec<f64>> {
        match self.config.target {
            DeviationTarget::Pmnn => self.pmnn.predict_batch(&views.compositions),
            DeviationTarget::Constant(c) => Ok(vec![c; views.batch_size()]),
        }
    }

    fn objective(&self, encoder: &Encoder<f64>, views: &UnsupViews, keys: &Matrix<f64>, need_grad: bool) -> Result<UnsupEvaluation> {
        let predicted = self.predictions(views)?;
        unsup_objective(&self.config, encoder, views, keys, &self.queue, &predicted, need_grad)
    }

    fn composition_groups(&self, views: &UnsupViews) -> Vec<(usize, Vec<CompositionVector>)> {
        views
            .groups(&self.config.lengths)
            .into_iter()
            .map(|(l, idx)| (l, idx.iter().map(|&i| views.compositions[i]).collect()))
            .collect()
    }

    /// One step on θ_e with the predictor frozen, then enqueue keys and
    /// update the key encoder. During queue warm-up only the keys are
    /// computed and enqueued.
    pub fn encoder_step(&mut self, images: &[&Raster]) -> Result<EncoderStepReport> {
        let step = self.step;
        self.step += 1;
        let views = build_views(&self.config, images, step)?;
        let key_pass = self.key_encoder.forward(&views.keys)?;
        let keys = key_pass.embeddings;
        let lr = self.encoder_opt.current_lr();
        if self.warmup_remaining > 0 {
            self.warmup_remaining -= 1;
            self.queue.push(&keys)?;
            return Ok(EncoderStepReport {
                warmup: true,
                breakdown: None,
                lr,
                degenerate: 0,
            });
        }
        let before = self.objective(&self.encoder, &views, &keys, true)?;
        let grads = before.grads.as_ref().expect("requested");
        let before_params = self.encoder.params().clone();
        self.encoder_opt.step(self.encoder.params_mut(), grads)?;
        let after = self.objective(&self.encoder, &views, &keys, false)?;
        self.degenerate_count += before.degenerate;
        self.cache = Some(HyperCache {
            before: before_params,
            lr,
            lu_before: before.breakdown.total,
            lu_after: after.breakdown.total,
            simi_before: before.breakdown.simi,
            simi_after: after.breakdown.simi,
            k: before.breakdown.k.clone(),
            groups: self.composition_groups(&views),
            views,
        });
        self.queue.push(&keys)?;
        self.last_keys = Some(keys);
        self.key_encoder.momentum_update(&self.encoder, self.config.key_momentum)?;
        Ok(EncoderStepReport {
            warmup: false,
            breakdown: Some(before.breakdown),
            lr,
            degenerate: before.degenerate,
        })
    }

    /// One step on the probe over stop-gradient backbone features.
    /// Returns the cross-entropy before the update.
    pub fn probe_step(&mut self, inputs: &Matrix<f64>, labels: &[usize]) -> Result<CrossEntropyOutput<f64>> {
        let features = self.encoder.features(inputs)?;
        let loss = self.probe.loss(&features, labels)?;
        self.probe_opt.step(self.probe.params_mut(), &loss.grads)?;
        Ok(loss.ce)
    }

    /// Predictor update from the cached before/after encoder pair.
    pub fn pmnn_step(&mut self, inputs: &Matrix<f64>, labels: &[usize]) -> Result<BilevelScalars> {
        if self.config.target != DeviationTarget::Pmnn {
            return Err(Error::State("predictor step requested with a constant deviation target".into()));
        }
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::Sequencing("predictor step needs a preceding encoder step".into()))?;
        let before = self.encoder.with_params(cache.before.clone())?;
        let ce_before = probe_ce(&before, &self.probe, inputs, labels)?.loss;
        let ce_after = probe_ce(&self.encoder, &self.probe, inputs, labels)?.loss;
        let (scalars, grad) = hypergradient(&self.config, &self.pmnn, &cache, ce_before, ce_after)?;
        match grad {
            Some(g) => self.pmnn_opt.step(self.pmnn.params_mut(), &g)?,
            None => self.guard_count += 1,
        }
        Ok(scalars)
    }

    /// Snapshot for per-epoch alternation, built from the most recent encoder step.
    pub fn epoch_anchor(&self) -> Option<EpochAnchor> {
        let cache = self.cache.as_ref()?;
        Some(EpochAnchor {
            before: cache.before.clone(),
            lr: cache.lr,
            views: cache.views.clone(),
            keys: self.last_keys.clone()?,
        })
    }

    /// Replaces the per-step cache with one spanning `anchor` to the current encoder.
    pub fn cache_from_anchor(&mut self, anchor: EpochAnchor) -> Result<()> {
        let start = self.encoder.with_params(anchor.before.clone())?;
        let before = self.objective(&start, &anchor.views, &anchor.keys, false)?;
        let after = self.objective(&self.encoder, &anchor.views, &anchor.keys, false)?;
        self.cache = Some(HyperCache {
            before: anchor.before,
            lr: anchor.lr,
            lu_before: before.breakdown.total,
            lu_after: after.breakdown.total,
            simi_before: before.breakdown.simi,
            simi_after: after.breakdown.simi,
            k: before.breakdown.k,
            groups: self.composition_groups(&anchor.views),
            views: anchor.views,
        });
        Ok(())
    }

    /// Exact derivative of CE(θ_e′) with respect to θ_d for the cached step,
    /// by two backward passes and a dot product per length group.
    pub fn exact_hypergradient(&self, inputs: &Matrix<f64>, labels: &[usize]) -> Result<ParamSet<f64>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::Sequencing("no cached encoder step".into()))?;
        let before = self.encoder.with_params(cache.before.clone())?;
        crate::bilevel::oracle::exact_hypergradient(
            &self.config,
            &before,
            &self.encoder,
            &self.probe,
            &self.pmnn,
            cache,
            inputs,
            labels,
        )
    }
}

/// The collapsed first-order predictor gradient
/// `Σ_l (1/L)·σ′(k_l)·ΔCE·Δsimi/ΔL_u·∂E_l[g]/∂θ_d`.
///
/// Returns `None` for the gradient when |ΔL_u| is below the guard.
pub fn hypergradient(
    config: &BilevelConfig,
    pmnn: &Pmnn<f64>,
    cache: &HyperCache,
    ce_before: f64,
    ce_after: f64,
) -> Result<(BilevelScalars, Option<ParamSet<f64>>)> {
    let d_lu = cache.lu_after - cache.lu_before;
    let coefficient: Vec<f64> = cache.k.iter().map(|&k| hyper_coefficient(k)).collect();
    let guarded = !(d_lu.abs() >= config.eps_den);
    let ratio = if guarded {
        0.0
    } else {
        (ce_after - ce_before) * (cache.simi_after - cache.simi_before) / d_lu
    };
    let scalars = BilevelScalars {
        k: cache.k.clone(),
        simi_before: cache.simi_before,
        simi_after: cache.simi_after,
        ce_before,
        ce_after,
        lu_before: cache.lu_before,
        lu_after: cache.lu_after,
        coefficient: coefficient.clone(),
        ratio,
        guarded,
    };
    if guarded {
        return Ok((scalars, None));
    }
    let mut grad = pmnn.params().zeros_like();
    let lengths = cache.groups.len() as f64;
    for ((_, vs), c) in cache.groups.iter().zip(&coefficient) {
        let g = pmnn.grad_wrt_params(vs)?;
        grad.add_scaled(&g, c * ratio / lengths)?;
    }
    Ok((scalars, Some(grad)))
}

/// σ′ computed from the logistic function, for cross-checking [`hyper_coefficient`].
pub fn logistic_derivative(k: f64) -> f64 {
    let s = sigmoid(k);
    s * (1.0 - s)
}

/// Mean Ω per length group and its encoder gradient.
pub(crate) fn group_simi_grads(
    encoder: &Encoder<f64>,
    config: &BilevelConfig,
    views: &UnsupViews,
) -> Result<Vec<(f64, ParamSet<f64>)>> {
    views
        .groups(&config.lengths)
        .iter()
        .map(|(_, idx)| simi_and_grad(encoder, views, Some(idx)))
        .collect()
}
