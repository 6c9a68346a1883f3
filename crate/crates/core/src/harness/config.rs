//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional; missing keys take the defaults of [`RunConfig::default`].
//! List values are comma separated. [`RunConfig::to_config_string`] writes
//! every key and parses back to an identical config.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::augment::WeakAugment;
use crate::bilevel::{Alternation, BilevelConfig, DeviationTarget};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::fsutil::read_file;
use crate::harness::{load_idx, synth_dataset, Dataset, LinearEvalConfig, SplitSpec};
use crate::losses::ConsistencyVariant;
use crate::pmnn::PmnnConfig;

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic {
        classes: usize,
        per_class: usize,
        size: usize,
        noise: f64,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub hidden: Vec<usize>,
    pub head_hidden: usize,
    pub embed_dim: usize,
    pub pmnn_hidden: usize,
    pub tau: f64,
    pub queue: usize,
    pub key_momentum: f64,
    pub encoder_lr: f64,
    pub encoder_momentum: f64,
    pub weight_decay: f64,
    pub pmnn_lr: f64,
    pub probe_lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub labeled_batch_size: usize,
    pub lengths: Vec<usize>,
    pub magnitude: f64,
    pub variant: ConsistencyVariant,
    pub consistency_weight: f64,
    /// `None` trains the predictor; `Some(c)` pins the target to `c`.
    pub constant_target: Option<f64>,
    pub alternation: Alternation,
    pub eps_den: f64,
    pub labeled_frac: f64,
    pub eval_train_frac: f64,
    pub eval_test_frac: f64,
    pub eval_epochs: usize,
    pub eval_lr: f64,
    pub eval_batch_size: usize,
    pub pilot_epochs: usize,
    pub pilot_grid: Vec<f64>,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub dacl_probe_size: usize,
    pub timing: bool,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic {
                classes: 8,
                per_class: 200,
                size: 32,
                noise: 0.3,
            },
            hidden: vec![256, 128],
            head_hidden: 64,
            embed_dim: 32,
            pmnn_hidden: 16,
            tau: 0.2,
            queue: 4096,
            key_momentum: 0.99,
            encoder_lr: 0.03,
            encoder_momentum: 0.9,
            weight_decay: 1e-4,
            pmnn_lr: 1e-2,
            probe_lr: 0.1,
            epochs: 20,
            batch_size: 64,
            labeled_batch_size: 64,
            lengths: vec![1],
            magnitude: 0.5,
            variant: ConsistencyVariant::Softplus,
            consistency_weight: 1.0,
            constant_target: None,
            alternation: Alternation::PerIteration,
            eps_den: 1e-8,
            labeled_frac: 0.1,
            eval_train_frac: 0.25,
            eval_test_frac: 0.25,
            eval_epochs: 100,
            eval_lr: 0.1,
            eval_batch_size: 64,
            pilot_epochs: 5,
            pilot_grid: vec![0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            seed: 0,
            seeds: vec![0, 1, 2, 3, 4],
            dacl_probe_size: 64,
            timing: false,
            out: PathBuf::from("runs/default"),
        }
    }
}

fn parse<T: FromStr>(field: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::config(field, format!("cannot parse '{value}': {e}")))
}

fn parse_list<T: FromStr>(field: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(field, s))
        .collect()
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_bool(field: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::config(field, format!("expected true or false, got '{other}'"))),
    }
}

/// Every recognised key, in the order written by [`RunConfig::to_config_string`].
pub const KEYS: &[&str] = &[
    "data",
    "synth_classes",
    "synth_per_class",
    "synth_size",
    "synth_noise",
    "idx_images",
    "idx_labels",
    "hidden",
    "head_hidden",
    "embed_dim",
    "pmnn_hidden",
    "tau",
    "queue",
    "key_momentum",
    "encoder_lr",
    "encoder_momentum",
    "weight_decay",
    "pmnn_lr",
    "probe_lr",
    "epochs",
    "batch_size",
    "labeled_batch_size",
    "lengths",
    "magnitude",
    "variant",
    "consistency_weight",
    "target",
    "alternation",
    "eps_den",
    "labeled_frac",
    "eval_train_frac",
    "eval_test_frac",
    "eval_epochs",
    "eval_lr",
    "eval_batch_size",
    "pilot_epochs",
    "pilot_grid",
    "seed",
    "seeds",
    "dacl_probe_size",
    "timing",
    "out",
];

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "data" => {
                self.data = match v {
                    "synthetic" => match &self.data {
                        d @ DataSource::Synthetic { .. } => d.clone(),
                        DataSource::Idx { .. } => RunConfig::default().data,
                    },
                    "idx" => match &self.data {
                        d @ DataSource::Idx { .. } => d.clone(),
                        DataSource::Synthetic { .. } => DataSource::Idx {
                            images: PathBuf::new(),
                            labels: PathBuf::new(),
                        },
                    },
                    other => return Err(Error::config(key, format!("expected synthetic or idx, got '{other}'"))),
                }
            }
            "synth_classes" | "synth_per_class" | "synth_size" | "synth_noise" => {
                let DataSource::Synthetic {
                    classes,
                    per_class,
                    size,
                    noise,
                } = &mut self.data
                else {
                    return Err(Error::config(key, "only valid with data = synthetic"));
                };
                match key {
                    "synth_classes" => *classes = parse(key, v)?,
                    "synth_per_class" => *per_class = parse(key, v)?,
                    "synth_size" => *size = parse(key, v)?,
                    _ => *noise = parse(key, v)?,
                }
            }
            "idx_images" | "idx_labels" => {
                let DataSource::Idx { images, labels } = &mut self.data else {
                    return Err(Error::config(key, "only valid with data = idx"));
                };
                if key == "idx_images" {
                    *images = PathBuf::from(v);
                } else {
                    *labels = PathBuf::from(v);
                }
            }
            "hidden" => self.hidden = parse_list(key, v)?,
            "head_hidden" => self.head_hidden = parse(key, v)?,
            "embed_dim" => self.embed_dim = parse(key, v)?,
            "pmnn_hidden" => self.pmnn_hidden = parse(key, v)?,
            "tau" => self.tau = parse(key, v)?,
            "queue" => self.queue = parse(key, v)?,
            "key_momentum" => self.key_momentum = parse(key, v)?,
            "encoder_lr" => self.encoder_lr = parse(key, v)?,
            "encoder_momentum" => self.encoder_momentum = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "pmnn_lr" => self.pmnn_lr = parse(key, v)?,
            "probe_lr" => self.probe_lr = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "labeled_batch_size" => self.labeled_batch_size = parse(key, v)?,
            "lengths" => self.lengths = parse_list(key, v)?,
            "magnitude" => self.magnitude = parse(key, v)?,
            "variant" => self.variant = v.parse().map_err(|e: Error| Error::config(key, e.to_string()))?,
            "consistency_weight" => self.consistency_weight = parse(key, v)?,
            "target" => {
                self.constant_target = match v {
                    "pmnn" => None,
                    _ => match v.strip_prefix("constant:") {
                        Some(c) => Some(parse(key, c)?),
                        None => {
                            return Err(Error::config(key, format!("expected pmnn or constant:<value>, got '{v}'")))
                        }
                    },
                }
            }
            "alternation" => {
                self.alternation = match v {
                    "iteration" => Alternation::PerIteration,
                    "epoch" => Alternation::PerEpoch,
                    other => return Err(Error::config(key, format!("expected iteration or epoch, got '{other}'"))),
                }
            }
            "eps_den" => self.eps_den = parse(key, v)?,
            "labeled_frac" => self.labeled_frac = parse(key, v)?,
            "eval_train_frac" => self.eval_train_frac = parse(key, v)?,
            "eval_test_frac" => self.eval_test_frac = parse(key, v)?,
            "eval_epochs" => self.eval_epochs = parse(key, v)?,
            "eval_lr" => self.eval_lr = parse(key, v)?,
            "eval_batch_size" => self.eval_batch_size = parse(key, v)?,
            "pilot_epochs" => self.pilot_epochs = parse(key, v)?,
            "pilot_grid" => self.pilot_grid = parse_list(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "seeds" => self.seeds = parse_list(key, v)?,
            "dacl_probe_size" => self.dacl_probe_size = parse(key, v)?,
            "timing" => self.timing = parse_bool(key, v)?,
            "out" => self.out = PathBuf::from(v),
            other => return Err(Error::config(other, "unknown key")),
        }
        Ok(())
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        // `data` decides which dataset keys are legal, so it is applied first.
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", n + 1), format!("expected key = value, got '{line}'")))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Error::config(k, "key given more than once"));
            }
            entries.push((k.to_string(), v.trim().to_string()));
        }
        entries.sort_by_key(|(k, _)| k != "data");
        for (k, v) in entries {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        let text = String::from_utf8(bytes).map_err(|_| Error::Format {
            path: path.to_path_buf(),
            msg: "config is not UTF-8".into(),
        })?;
        Self::parse_str(&text)
    }

    /// Complete config file text; parses back to `self`.
    pub fn to_config_string(&self) -> String {
        let mut out = String::from("# resolved run configuration\n");
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        match &self.data {
            DataSource::Synthetic {
                classes,
                per_class,
                size,
                noise,
            } => {
                put("data", "synthetic".into());
                put("synth_classes", classes.to_string());
                put("synth_per_class", per_class.to_string());
                put("synth_size", size.to_string());
                put("synth_noise", noise.to_string());
            }
            DataSource::Idx { images, labels } => {
                put("data", "idx".into());
                put("idx_images", images.display().to_string());
                put("idx_labels", labels.display().to_string());
            }
        }
        put("hidden", join(&self.hidden));
        put("head_hidden", self.head_hidden.to_string());
        put("embed_dim", self.embed_dim.to_string());
        put("pmnn_hidden", self.pmnn_hidden.to_string());
        put("tau", self.tau.to_string());
        put("queue", self.queue.to_string());
        put("key_momentum", self.key_momentum.to_string());
        put("encoder_lr", self.encoder_lr.to_string());
        put("encoder_momentum", self.encoder_momentum.to_string());
        put("weight_decay", self.weight_decay.to_string());
        put("pmnn_lr", self.pmnn_lr.to_string());
        put("probe_lr", self.probe_lr.to_string());
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("labeled_batch_size", self.labeled_batch_size.to_string());
        put("lengths", join(&self.lengths));
        put("magnitude", self.magnitude.to_string());
        put("variant", self.variant.to_string());
        put("consistency_weight", self.consistency_weight.to_string());
        put(
            "target",
            match self.constant_target {
                None => "pmnn".into(),
                Some(c) => format!("constant:{c}"),
            },
        );
        put(
            "alternation",
            match self.alternation {
                Alternation::PerIteration => "iteration",
                Alternation::PerEpoch => "epoch",
            }
            .into(),
        );
        put("eps_den", self.eps_den.to_string());
        put("labeled_frac", self.labeled_frac.to_string());
        put("eval_train_frac", self.eval_train_frac.to_string());
        put("eval_test_frac", self.eval_test_frac.to_string());
        put("eval_epochs", self.eval_epochs.to_string());
        put("eval_lr", self.eval_lr.to_string());
        put("eval_batch_size", self.eval_batch_size.to_string());
        put("pilot_epochs", self.pilot_epochs.to_string());
        put("pilot_grid", join(&self.pilot_grid));
        put("seed", self.seed.to_string());
        put("seeds", join(&self.seeds));
        put("dacl_probe_size", self.dacl_probe_size.to_string());
        put("timing", self.timing.to_string());
        put("out", self.out.display().to_string());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("tau", self.tau),
            ("encoder_lr", self.encoder_lr),
            ("pmnn_lr", self.pmnn_lr),
            ("probe_lr", self.probe_lr),
            ("eval_lr", self.eval_lr),
            ("eps_den", self.eps_den),
        ];
        for (k, v) in rates {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(k, format!("must be > 0, got {v}")));
            }
        }
        for (k, v) in [
            ("queue", self.queue),
            ("batch_size", self.batch_size),
            ("labeled_batch_size", self.labeled_batch_size),
            ("head_hidden", self.head_hidden),
            ("embed_dim", self.embed_dim),
            ("pmnn_hidden", self.pmnn_hidden),
            ("eval_epochs", self.eval_epochs),
            ("eval_batch_size", self.eval_batch_size),
            ("dacl_probe_size", self.dacl_probe_size),
        ] {
            if v == 0 {
                return Err(Error::config(k, "must be >= 1"));
            }
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("hidden", "needs at least one non-zero width"));
        }
        if self.lengths.is_empty() || self.lengths.iter().any(|l| !(1..=8).contains(l)) {
            return Err(Error::config("lengths", format!("{:?} must be a non-empty subset of [1, 8]", self.lengths)));
        }
        let mut dedup = self.lengths.clone();
        dedup.sort_unstable();
        dedup.dedup();
        if dedup.len() != self.lengths.len() {
            return Err(Error::config("lengths", "values must not repeat"));
        }
        if self.batch_size < self.lengths.len() {
            return Err(Error::config("batch_size", "must be at least the number of lengths"));
        }
        for (k, v) in [("key_momentum", self.key_momentum), ("magnitude", self.magnitude)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(k, format!("{v} outside [0, 1]")));
            }
        }
        if !(0.0..1.0).contains(&self.encoder_momentum) {
            return Err(Error::config("encoder_momentum", "must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay", "must be >= 0"));
        }
        if !(self.consistency_weight >= 0.0 && self.consistency_weight.is_finite()) {
            return Err(Error::config("consistency_weight", "must be >= 0"));
        }
        if let Some(c) = self.constant_target {
            if !(-1.0..=1.0).contains(&c) {
                return Err(Error::config("target", format!("constant {c} outside [-1, 1]")));
            }
        }
        if self.pilot_grid.iter().any(|c| !(-1.0..=1.0).contains(c)) {
            return Err(Error::config("pilot_grid", "values must lie in [-1, 1]"));
        }
        self.split_spec()
            .validate()
            .map_err(|e| Error::config("labeled_frac", e.to_string()))?;
        match &self.data {
            DataSource::Synthetic {
                classes,
                per_class,
                size,
                noise,
            } => {
                if *classes < 2 {
                    return Err(Error::config("synth_classes", "must be >= 2"));
                }
                if *per_class == 0 || *size == 0 {
                    return Err(Error::config("synth_per_class", "sizes must be >= 1"));
                }
                if !(*noise >= 0.0 && noise.is_finite()) {
                    return Err(Error::config("synth_noise", "must be >= 0"));
                }
            }
            DataSource::Idx { images, labels } => {
                if images.as_os_str().is_empty() {
                    return Err(Error::config("idx_images", "path required with data = idx"));
                }
                if labels.as_os_str().is_empty() {
                    return Err(Error::config("idx_labels", "path required with data = idx"));
                }
            }
        }
        Ok(())
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            labeled: self.labeled_frac,
            eval_train: self.eval_train_frac,
            eval_test: self.eval_test_frac,
        }
    }

    pub fn linear_eval_config(&self) -> LinearEvalConfig {
        LinearEvalConfig {
            epochs: self.eval_epochs,
            batch_size: self.eval_batch_size,
            lr: self.eval_lr,
            seed: self.seed,
            ..LinearEvalConfig::default()
        }
    }

    /// Loads or generates the dataset and assigns its splits.
    pub fn dataset(&self) -> Result<Dataset> {
        let mut d = match &self.data {
            DataSource::Synthetic {
                classes,
                per_class,
                size,
                noise,
            } => synth_dataset(*classes, *per_class, *size, *size, *noise, self.seed)?,
            DataSource::Idx { images, labels } => load_idx(images, labels)?,
        };
        d.assign_splits(self.split_spec(), self.seed)?;
        Ok(d)
    }

    pub fn bilevel(&self, input_dim: usize) -> Result<BilevelConfig> {
        let cfg = BilevelConfig {
            encoder: EncoderConfig::new(input_dim, self.hidden.clone(), self.head_hidden, self.embed_dim)?,
            pmnn: PmnnConfig {
                hidden: self.pmnn_hidden,
                ..PmnnConfig::default()
            },
            tau: self.tau,
            queue_capacity: self.queue,
            key_momentum: self.key_momentum,
            encoder_lr: self.encoder_lr,
            encoder_momentum: self.encoder_momentum,
            encoder_weight_decay: self.weight_decay,
            pmnn_lr: self.pmnn_lr,
            probe_lr: self.probe_lr,
            lengths: self.lengths.clone(),
            magnitude: self.magnitude,
            variant: self.variant,
            consistency_weight: self.consistency_weight,
            target: match self.constant_target {
                None => DeviationTarget::Pmnn,
                Some(c) => DeviationTarget::Constant(c),
            },
            alternation: self.alternation,
            batch_size: self.batch_size,
            labeled_batch_size: self.labeled_batch_size,
            epochs: self.epochs,
            eps_den: self.eps_den,
            weak: WeakAugment::default(),
            dacl_probe_size: self.dacl_probe_size,
            record_wall_clock: self.timing,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
