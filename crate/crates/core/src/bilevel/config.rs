use crate::augment::WeakAugment;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::losses::ConsistencyVariant;
use crate::numcore::SgdConfig;
use crate::pmnn::PmnnConfig;

/// What the consistency term pulls the measured deviation towards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeviationTarget {
    /// The learned monotone predictor, updated by the hypergradient step.
    Pmnn,
    /// A fixed value for every composition; no predictor is trained.
    Constant(f64),
}

/// When the predictor update happens relative to encoder updates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Alternation {
    /// One predictor step after every encoder step, using that step's
    /// before/after encoder pair.
    #[default]
    PerIteration,
    /// One predictor step per epoch, using the encoder at the start and end
    /// of the epoch, evaluated on the epoch's first batch.
    PerEpoch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BilevelConfig {
    pub encoder: EncoderConfig,
    pub pmnn: PmnnConfig,
    pub tau: f64,
    pub queue_capacity: usize,
    /// Key-encoder momentum `m`.
    pub key_momentum: f64,
    pub encoder_lr: f64,
    pub encoder_momentum: f64,
    pub encoder_weight_decay: f64,
    pub pmnn_lr: f64,
    pub probe_lr: f64,
    /// Composite lengths used by the consistency term.
    pub lengths: Vec<usize>,
    pub magnitude: f64,
    pub variant: ConsistencyVariant,
    pub consistency_weight: f64,
    pub target: DeviationTarget,
    pub alternation: Alternation,
    pub batch_size: usize,
    pub labeled_batch_size: usize,
    pub epochs: usize,
    /// Predictor updates are skipped when |ΔL_u| falls below this.
    pub eps_den: f64,
    pub weak: WeakAugment,
    /// Number of unlabeled images in the fixed DACL probe set.
    pub dacl_probe_size: usize,
    /// Fill the wall-clock field of metrics records (breaks byte-identical reruns).
    pub record_wall_clock: bool,
    pub seed: u64,
}

impl BilevelConfig {
    pub fn desk_default() -> Self {
        Self {
            encoder: EncoderConfig::desk_default(),
            pmnn: PmnnConfig::default(),
            tau: 0.2,
            queue_capacity: 4096,
            key_momentum: 0.99,
            encoder_lr: 0.03,
            encoder_momentum: 0.9,
            encoder_weight_decay: 1e-4,
            pmnn_lr: 1e-2,
            probe_lr: 0.1,
            lengths: vec![1],
            magnitude: 0.5,
            variant: ConsistencyVariant::Softplus,
            consistency_weight: 1.0,
            target: DeviationTarget::Pmnn,
            alternation: Alternation::PerIteration,
            batch_size: 64,
            labeled_batch_size: 64,
            epochs: 20,
            eps_den: 1e-8,
            weak: WeakAugment::default(),
            dacl_probe_size: 64,
            record_wall_clock: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.pmnn.hidden == 0 {
            return Err(Error::input("PMNN hidden width must be >= 1"));
        }
        let positive = [
            ("tau", self.tau),
            ("pmnn_lr", self.pmnn_lr),
            ("probe_lr", self.probe_lr),
            ("eps_den", self.eps_den),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::input(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.encoder_lr >= 0.0 && self.encoder_lr.is_finite()) {
            return Err(Error::input("encoder_lr must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.key_momentum) {
            return Err(Error::input("key momentum must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.magnitude) {
            return Err(Error::input("magnitude must lie in [0, 1]"));
        }
        if !(self.consistency_weight >= 0.0 && self.consistency_weight.is_finite()) {
            return Err(Error::input("consistency weight must be >= 0"));
        }
        if self.lengths.is_empty() || self.lengths.iter().any(|l| !(1..=8).contains(l)) {
            return Err(Error::input(format!("lengths {:?} must be a non-empty subset of [1, 8]", self.lengths)));
        }
        let mut sorted = self.lengths.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.lengths.len() {
            return Err(Error::input("lengths must not repeat"));
        }
        if self.queue_capacity == 0 {
            return Err(Error::input("queue capacity must be >= 1"));
        }
        if self.batch_size < self.lengths.len() {
            return Err(Error::input("batch size must be at least the number of lengths"));
        }
        if self.labeled_batch_size == 0 {
            return Err(Error::input("labeled batch size must be >= 1"));
        }
        if let DeviationTarget::Constant(c) = self.target {
            if !(-1.0..=1.0).contains(&c) {
                return Err(Error::input(format!("constant deviation target {c} outside [-1, 1]")));
            }
        }
        self.encoder_sgd(None).validate()
    }

    pub fn encoder_sgd(&self, cosine_steps: Option<usize>) -> SgdConfig {
        SgdConfig {
            lr: self.encoder_lr,
            momentum: self.encoder_momentum,
            weight_decay: self.encoder_weight_decay,
            cosine_steps,
        }
    }

    /// Iterations that only fill the queue: ⌈capacity / batch⌉.
    pub fn warmup_iterations(&self) -> usize {
        self.queue_capacity.div_ceil(self.batch_size)
    }

    /// Length assigned to sample `i` of a batch; lengths are used round-robin
    /// so every group is non-empty.
    pub fn length_for(&self, i: usize) -> usize {
        self.lengths[i % self.lengths.len()]
    }
}
