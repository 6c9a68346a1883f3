use std::time::Instant;

use rand::seq::SliceRandom;

use crate::augment::{sample_composite, CompositeAugmentation, Raster};
use crate::bilevel::{dacl, Alternation, BilevelConfig, DeviationTarget, TrainState};
use crate::encoder::rasters_to_matrix;
use crate::error::{Error, Result};
use crate::harness::{MetricsRecord, RecordKind};
use crate::losses::check_labels;
use crate::numcore::rng::{derive_seed, derived_rng, stream};
use crate::numcore::Matrix;

/// Training inputs: unlabeled images for the encoder, labeled images for the
/// probe and the predictor.
#[derive(Clone, Copy, Debug)]
pub struct TrainData<'a> {
    pub unlabeled: &'a [Raster],
    pub labeled: &'a [Raster],
    pub labels: &'a [usize],
    pub classes: usize,
}

impl TrainData<'_> {
    fn validate(&self, cfg: &BilevelConfig) -> Result<()> {
        if self.unlabeled.len() < cfg.batch_size {
            return Err(Error::input(format!(
                "{} unlabeled images cannot fill a batch of {}",
                self.unlabeled.len(),
                cfg.batch_size
            )));
        }
        if self.labeled.is_empty() || self.labeled.len() != self.labels.len() {
            return Err(Error::input("labeled images and labels must be non-empty and equally long"));
        }
        check_labels(self.labels, self.classes)?;
        let dim = cfg.encoder.input_dim;
        if let Some(r) = self.unlabeled.iter().chain(self.labeled).find(|r| r.len() != dim) {
            return Err(Error::dim(format!("image of {} values, encoder expects {dim}", r.len())));
        }
        Ok(())
    }
}

/// Cycles through the labeled set in a fresh seeded order each pass.
struct LabeledSampler {
    order: Vec<usize>,
    cursor: usize,
    round: u64,
    seed: u64,
}

impl LabeledSampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut s = Self {
            order: (0..n).collect(),
            cursor: 0,
            round: 0,
            seed,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order.sort_unstable();
        self.order
            .shuffle(&mut derived_rng(self.seed, stream::LABELED, self.round));
        self.round += 1;
        self.cursor = 0;
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        let size = size.min(self.order.len());
        if self.cursor + size > self.order.len() {
            self.reshuffle();
        }
        let out = self.order[self.cursor..self.cursor + size].to_vec();
        self.cursor += size;
        out
    }
}

/// Fixed (image, composite) pairs on which DACL is tracked.
pub fn dacl_probe_set(cfg: &BilevelConfig, images: &[Raster]) -> Result<Vec<(Raster, CompositeAugmentation)>> {
    images
        .iter()
        .take(cfg.dacl_probe_size)
        .enumerate()
        .map(|(i, x)| {
            let a = sample_composite(cfg.length_for(i), cfg.magnitude, derive_seed(cfg.seed, stream::DACL, i as u64))?;
            Ok((x.clone(), a))
        })
        .collect()
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-epoch accumulation of step records.
#[derive(Default)]
struct EpochAccumulator {
    contrast: Vec<f64>,
    consist: Vec<f64>,
    lu: Vec<f64>,
    ce: Vec<f64>,
    acc: Vec<f64>,
    k: Vec<Vec<f64>>,
    coefficient: Vec<Vec<f64>>,
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let Some(width) = rows.first().map(Vec::len) else {
        return Vec::new();
    };
    (0..width)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
        .collect()
}

impl EpochAccumulator {
    fn add(&mut self, r: &MetricsRecord) {
        if r.warmup {
            return;
        }
        self.contrast.extend(r.l_contrast);
        self.consist.extend(r.l_consist);
        self.lu.extend(r.l_u);
        self.ce.extend(r.ce);
        self.acc.extend(r.probe_accuracy);
        if !r.k.is_empty() {
            self.k.push(r.k.clone());
        }
        if !r.coefficient.is_empty() {
            self.coefficient.push(r.coefficient.clone());
        }
    }
}

fn gather(images: &[Raster], idx: &[usize]) -> Result<Matrix<f64>> {
    rasters_to_matrix(&idx.iter().map(|&i| &images[i]).collect::<Vec<_>>())
}

/// Runs the alternating scheme for `cfg.epochs` epochs and returns the final
/// state. Every iteration is encoder step → probe step → predictor step;
/// one record is passed to `sink` per iteration and per epoch.
pub fn train<F>(cfg: &BilevelConfig, data: TrainData<'_>, mut sink: F) -> Result<TrainState>
where
    F: FnMut(&MetricsRecord) -> Result<()>,
{
    cfg.validate()?;
    data.validate(cfg)?;
    let per_epoch = data.unlabeled.len() / cfg.batch_size;
    let total = per_epoch * cfg.epochs;
    let encoder_steps = total.saturating_sub(cfg.warmup_iterations());
    let mut state = TrainState::new(cfg.clone(), data.classes, Some(encoder_steps))?;
    if cfg.epochs == 0 {
        return Ok(state);
    }
    let start = Instant::now();
    let clock = |r: &mut MetricsRecord| {
        if cfg.record_wall_clock {
            r.wall_clock = Some(start.elapsed().as_secs_f64());
        }
    };
    let probe_set = dacl_probe_set(cfg, data.unlabeled)?;
    let mut labeled = LabeledSampler::new(data.labeled.len(), cfg.seed);
    let mut order: Vec<usize> = (0..data.unlabeled.len()).collect();
    let learns_target = cfg.target == DeviationTarget::Pmnn;

    for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut derived_rng(cfg.seed, stream::SHUFFLE, epoch as u64));
        let mut acc = EpochAccumulator::default();
        let mut anchor = None;
        for b in 0..per_epoch {
            let batch: Vec<&Raster> = order[b * cfg.batch_size..(b + 1) * cfg.batch_size]
                .iter()
                .map(|&i| &data.unlabeled[i])
                .collect();
            let report = state.encoder_step(&batch)?;
            let mut rec = MetricsRecord::new(RecordKind::Step, epoch, state.steps_taken());
            rec.lr = report.lr;
            rec.warmup = report.warmup;
            if let Some(bd) = &report.breakdown {
                rec.l_contrast = Some(bd.contrastive);
                rec.l_consist = Some(bd.consistency);
                rec.l_u = Some(bd.total);
                rec.k = bd.k.clone();
            }
            if !report.warmup {
                if anchor.is_none() && cfg.alternation == Alternation::PerEpoch {
                    anchor = state.epoch_anchor();
                }
                let idx = labeled.next(cfg.labeled_batch_size);
                let inputs = gather(data.labeled, &idx)?;
                let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
                let probe = state.probe_step(&inputs, &labels)?;
                rec.probe_accuracy = Some(probe.accuracy);
                rec.ce = Some(probe.loss);
                if learns_target && cfg.alternation == Alternation::PerIteration {
                    let scalars = state.pmnn_step(&inputs, &labels)?;
                    rec.ce = Some(scalars.ce_after);
                    rec.coefficient = scalars.coefficient;
                }
            }
            rec.guard_count = state.guard_count();
            rec.degenerate_embeddings = state.degenerate_count();
            clock(&mut rec);
            acc.add(&rec);
            sink(&rec)?;
        }
        if let (Some(a), true) = (anchor, learns_target) {
            state.cache_from_anchor(a)?;
            let idx = labeled.next(cfg.labeled_batch_size);
            let inputs = gather(data.labeled, &idx)?;
            let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
            let scalars = state.pmnn_step(&inputs, &labels)?;
            acc.coefficient.push(scalars.coefficient);
        }
        let mut rec = MetricsRecord::new(RecordKind::Epoch, epoch, state.steps_taken());
        rec.warmup = acc.lu.is_empty();
        rec.l_contrast = mean(&acc.contrast);
        rec.l_consist = mean(&acc.consist);
        rec.l_u = mean(&acc.lu);
        rec.ce = mean(&acc.ce);
        rec.probe_accuracy = mean(&acc.acc);
        rec.k = column_means(&acc.k);
        rec.coefficient = column_means(&acc.coefficient);
        rec.guard_count = state.guard_count();
        rec.degenerate_embeddings = state.degenerate_count();
        rec.lr = state.encoder_lr();
        rec.dacl = Some(match cfg.target {
            DeviationTarget::Pmnn => {
                let pmnn = state.pmnn();
                dacl(state.encoder(), |_, a| pmnn.predict(&a.composition_vector()), &probe_set)?
            }
            DeviationTarget::Constant(c) => dacl(state.encoder(), |_, _| Ok(c), &probe_set)?,
        });
        clock(&mut rec);
        sink(&rec)?;
    }
    Ok(state)
}
