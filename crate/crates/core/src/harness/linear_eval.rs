use rand::seq::SliceRandom;

use crate::augment::Raster;
use crate::bilevel::LinearProbe;
use crate::encoder::{rasters_to_matrix, Encoder};
use crate::error::{Error, Result};
use crate::harness::{Dataset, Split};
use crate::numcore::rng::{derived_rng, stream};
use crate::numcore::{Matrix, SgdConfig, SgdState};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearEvalConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for LinearEvalConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

/// Per-column mean and standard deviation (floored to 1 for constant columns).
fn standardizer(m: &Matrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows() as f64;
    let mean: Vec<f64> = m.column_sums().into_iter().map(|s| s / n).collect();
    let mut var = vec![0.0; m.cols()];
    for row in m.iter_rows() {
        for ((v, x), mu) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - mu) * (x - mu) / n;
        }
    }
    let std = var
        .into_iter()
        .map(|v| if v.sqrt() > 1e-8 { v.sqrt() } else { 1.0 })
        .collect();
    (mean, std)
}

fn standardize(m: &Matrix<f64>, mean: &[f64], std: &[f64]) -> Matrix<f64> {
    Matrix::from_fn(m.rows(), m.cols(), |r, c| (m.get(r, c) - mean[c]) / std[c])
}

fn accuracy(probe: &LinearProbe, x: &Matrix<f64>, y: &[usize]) -> Result<f64> {
    let pred = probe.predict(x)?;
    Ok(pred.iter().zip(y).filter(|(p, t)| p == t).count() as f64 / y.len() as f64)
}

/// Trains a fresh affine classifier on frozen, standardised backbone features
/// of `train` and returns top-1 accuracy on `test`. The encoder is only read.
pub fn linear_eval(
    encoder: &Encoder<f64>,
    train: (&[Raster], &[usize]),
    test: (&[Raster], &[usize]),
    classes: usize,
    cfg: &LinearEvalConfig,
) -> Result<f64> {
    if train.0.is_empty() || test.0.is_empty() {
        return Err(Error::input("linear evaluation needs non-empty train and test sets"));
    }
    if train.0.len() != train.1.len() || test.0.len() != test.1.len() {
        return Err(Error::dim("images and labels differ in length"));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::input("linear evaluation needs epochs and batch size >= 1"));
    }
    let feats = |imgs: &[Raster]| -> Result<Matrix<f64>> {
        encoder.features(&rasters_to_matrix(&imgs.iter().collect::<Vec<_>>())?)
    };
    let train_raw = feats(train.0)?;
    let (mean, std) = standardizer(&train_raw);
    let xtr = standardize(&train_raw, &mean, &std);
    let xte = standardize(&feats(test.0)?, &mean, &std);

    let batch = cfg.batch_size.min(xtr.rows());
    let per_epoch = xtr.rows().div_ceil(batch);
    let mut probe = LinearProbe::new(xtr.cols(), classes)?;
    let mut opt = SgdState::new(
        SgdConfig {
            lr: cfg.lr,
            momentum: cfg.momentum,
            weight_decay: cfg.weight_decay,
            cosine_steps: Some(cfg.epochs * per_epoch),
        },
        probe.params(),
    )?;
    let mut order: Vec<usize> = (0..xtr.rows()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut derived_rng(cfg.seed, stream::LINEAR_EVAL, epoch as u64));
        for chunk in order.chunks(batch) {
            let xb = xtr.select_rows(chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| train.1[i]).collect();
            let loss = probe.loss(&xb, &yb)?;
            opt.step(probe.params_mut(), &loss.grads)?;
        }
    }
    accuracy(&probe, &xte, test.1)
}

/// [`linear_eval`] on the eval-train and eval-test splits of `dataset`.
pub fn linear_eval_dataset(encoder: &Encoder<f64>, dataset: &Dataset, cfg: &LinearEvalConfig) -> Result<f64> {
    let (xtr, ytr) = dataset.split(Split::EvalTrain)?;
    let (xte, yte) = dataset.split(Split::EvalTest)?;
    linear_eval(encoder, (&xtr, &ytr), (&xte, &yte), dataset.classes(), cfg)
}
