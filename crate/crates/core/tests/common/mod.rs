#![allow(dead_code)]

use cocor::augment::Raster;
use cocor::bilevel::{BilevelConfig, LinearProbe, TrainState};
use cocor::encoder::{rasters_to_matrix, EncoderConfig};
use cocor::harness::synth_dataset;
use cocor::numcore::rng::rng_from_seed;
use cocor::numcore::{Matrix, ParamSet};
use cocor::pmnn::PmnnConfig;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub const SIDE: usize = 6;
pub const CLASSES: usize = 4;

/// Small configuration: 6×6 inputs, two backbone layers, batch 4, queue 8.
pub fn tiny_config(seed: u64) -> BilevelConfig {
    BilevelConfig {
        encoder: EncoderConfig::new(SIDE * SIDE, vec![12, 8], 8, 4).unwrap(),
        pmnn: PmnnConfig { hidden: 4, init_range: 0.5 },
        queue_capacity: 8,
        batch_size: 4,
        labeled_batch_size: 8,
        key_momentum: 1.0,
        encoder_momentum: 0.0,
        encoder_weight_decay: 0.0,
        encoder_lr: 0.05,
        epochs: 1,
        dacl_probe_size: 4,
        seed,
        ..BilevelConfig::desk_default()
    }
}

pub fn random_units(rows: usize, dim: usize, rng: &mut impl Rng) -> Matrix<f64> {
    let mut m: Matrix<f64> = Matrix::from_fn(rows, dim, |_, _| StandardNormal.sample(rng));
    for r in 0..rows {
        let n = m.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        m.row_mut(r).iter_mut().for_each(|v| *v /= n);
    }
    m
}

pub struct Tiny {
    pub state: TrainState,
    pub unlabeled: Vec<Raster>,
    pub labeled: Matrix<f64>,
    pub labels: Vec<usize>,
}

/// A state with a full random queue, no warm-up left and a random probe.
pub fn tiny_instance(seed: u64) -> Tiny {
    tiny_instance_with(tiny_config(seed))
}

pub fn tiny_instance_with(cfg: BilevelConfig) -> Tiny {
    let seed = cfg.seed;
    let mut rng = rng_from_seed(seed ^ 0xA5A5);
    let data = synth_dataset(CLASSES, 3, SIDE, SIDE, 0.2, seed).unwrap();
    let mut state = TrainState::new(cfg.clone(), CLASSES, None).unwrap();
    state
        .push_negatives(&random_units(cfg.queue_capacity, cfg.encoder.embed_dim, &mut rng))
        .unwrap();
    state.end_warmup();
    let mut probe = ParamSet::new();
    probe
        .push("weight", Matrix::from_fn(cfg.encoder.feature_dim(), CLASSES, |_, _| rng.random_range(-1.0..1.0)))
        .unwrap();
    probe
        .push("bias", Matrix::from_fn(1, CLASSES, |_, _| rng.random_range(-0.1..0.1)))
        .unwrap();
    state.set_probe(LinearProbe::from_params(probe).unwrap()).unwrap();
    let images = data.images().to_vec();
    let labels = data.labels().unwrap().to_vec();
    let labeled = rasters_to_matrix(&images.iter().take(8).collect::<Vec<_>>()).unwrap();
    Tiny {
        state,
        unlabeled: images[4..8].to_vec(),
        labeled,
        labels: labels[..8].to_vec(),
    }
}

pub fn cosine(a: &ParamSet<f64>, b: &ParamSet<f64>) -> f64 {
    a.dot(b).unwrap() / (a.norm() * b.norm())
}
