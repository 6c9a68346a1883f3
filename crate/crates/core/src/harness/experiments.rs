use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::Raster;
use crate::bilevel::{train, TrainData, TrainState};
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::harness::{linear_eval, linear_eval_dataset, write_metrics, Dataset, MetricsRecord, RunConfig, Split};

pub const RESOLVED_CONFIG: &str = "resolved.cfg";
pub const METRICS_JSONL: &str = "metrics.jsonl";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const CHECKPOINT: &str = "model.ckpt";
pub const EVAL_JSON: &str = "eval.json";
pub const ABLATION_JSON: &str = "ablation.json";
pub const ABLATION_CSV: &str = "ablation.csv";

/// Creates `dir` and writes the resolved config into it.
pub fn prepare_out_dir(cfg: &RunConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join(RESOLVED_CONFIG), cfg.to_config_string().as_bytes())
}

fn input_dim(dataset: &Dataset) -> usize {
    let (h, w, c) = dataset.dims();
    h * w * c
}

/// Trains on the unlabeled and labeled splits of `dataset`; no files written.
pub fn run_training(cfg: &RunConfig, dataset: &Dataset) -> Result<(TrainState, Vec<MetricsRecord>)> {
    let bilevel = cfg.bilevel(input_dim(dataset))?;
    let (unlabeled, _) = dataset.split(Split::UnlabeledTrain)?;
    let (labeled, labels) = dataset.split(Split::LabeledTrain)?;
    let mut records = Vec::new();
    let state = train(
        &bilevel,
        TrainData {
            unlabeled: &unlabeled,
            labeled: &labeled,
            labels: &labels,
            classes: dataset.classes(),
        },
        |r| {
            records.push(r.clone());
            Ok(())
        },
    )?;
    Ok((state, records))
}

#[derive(Debug)]
pub struct PretrainOutcome {
    pub state: TrainState,
    pub records: Vec<MetricsRecord>,
    pub out_dir: PathBuf,
}

/// Trains and writes the resolved config, metrics stream, CSV summary and
/// checkpoint into `cfg.out`.
pub fn pretrain(cfg: &RunConfig) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let dataset = cfg.dataset()?;
    prepare_out_dir(cfg, &cfg.out)?;
    let (state, records) = run_training(cfg, &dataset)?;
    write_metrics(&cfg.out.join(METRICS_JSONL), &cfg.out.join(SUMMARY_CSV), &records)?;
    save_checkpoint(&cfg.out.join(CHECKPOINT), &state.checkpoint_params()?)?;
    Ok(PretrainOutcome {
        state,
        records,
        out_dir: cfg.out.clone(),
    })
}

/// Reads the query encoder out of a training checkpoint.
pub fn load_encoder(cfg: &RunConfig, dataset: &Dataset, path: &Path) -> Result<Encoder<f64>> {
    let params = load_checkpoint(path)?.strip_prefix("encoder.");
    let bilevel = cfg.bilevel(input_dim(dataset))?;
    Encoder::from_params(bilevel.encoder, params).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: format!("checkpoint does not match the configured encoder: {e}"),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint: String,
    pub accuracy: f64,
}

/// Linear evaluation of a checkpoint; writes `eval.json` into `cfg.out`.
pub fn eval_linear(cfg: &RunConfig, checkpoint: &Path) -> Result<EvalReport> {
    cfg.validate()?;
    let dataset = cfg.dataset()?;
    let encoder = load_encoder(cfg, &dataset, checkpoint)?;
    prepare_out_dir(cfg, &cfg.out)?;
    let report = EvalReport {
        checkpoint: checkpoint.display().to_string(),
        accuracy: linear_eval_dataset(&encoder, &dataset, &cfg.linear_eval_config())?,
    };
    write_json(&cfg.out.join(EVAL_JSON), &report)?;
    Ok(report)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::input(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PilotResult {
    pub omega: f64,
    pub validation_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub seed: u64,
    /// Linear-probe accuracy with the consistency target pinned to Ω*.
    pub without_pmnn: f64,
    /// Linear-probe accuracy with the learned monotone predictor.
    pub with_pmnn: f64,
    /// `with_pmnn − without_pmnn`.
    pub difference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub lengths: Vec<usize>,
    pub pilot_epochs: usize,
    pub pilot: Vec<PilotResult>,
    pub omega_star: f64,
    pub rows: Vec<AblationRow>,
    pub mean_without_pmnn: f64,
    pub mean_with_pmnn: f64,
    pub mean_difference: f64,
}

impl AblationReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,without_pmnn,with_pmnn,difference\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.seed, r.without_pmnn, r.with_pmnn, r.difference));
        }
        s.push_str(&format!(
            "mean,{},{},{}\n",
            self.mean_without_pmnn, self.mean_with_pmnn, self.mean_difference
        ));
        s
    }
}

type Labeled = (Vec<Raster>, Vec<usize>);

/// Halves of the eval-train split (alternating samples) used to score pilots
/// without touching eval-test.
fn pilot_validation(dataset: &Dataset) -> Result<(Labeled, Labeled)> {
    let (x, y) = dataset.split(Split::EvalTrain)?;
    let mut fit = (Vec::new(), Vec::new());
    let mut val = (Vec::new(), Vec::new());
    for (i, (img, label)) in x.into_iter().zip(y).enumerate() {
        let side = if i % 2 == 0 { &mut fit } else { &mut val };
        side.0.push(img);
        side.1.push(label);
    }
    Ok((fit, val))
}

/// Picks Ω* from `cfg.pilot_grid` by short constant-target runs on `cfg.seed`,
/// scored on a validation half of eval-train. Ties keep the earlier value.
pub fn select_constant_target(cfg: &RunConfig) -> Result<(f64, Vec<PilotResult>)> {
    if cfg.pilot_grid.is_empty() {
        return Err(Error::config("pilot_grid", "needs at least one value"));
    }
    if cfg.pilot_epochs == 0 {
        return Err(Error::config("pilot_epochs", "must be >= 1"));
    }
    let dataset = cfg.dataset()?;
    let ((fx, fy), (vx, vy)) = pilot_validation(&dataset)?;
    let mut results = Vec::with_capacity(cfg.pilot_grid.len());
    for &omega in &cfg.pilot_grid {
        let pilot = RunConfig {
            epochs: cfg.pilot_epochs,
            constant_target: Some(omega),
            ..cfg.clone()
        };
        let (state, _) = run_training(&pilot, &dataset)?;
        let acc = linear_eval(state.encoder(), (&fx, &fy), (&vx, &vy), dataset.classes(), &pilot.linear_eval_config())?;
        results.push(PilotResult {
            omega,
            validation_accuracy: acc,
        });
    }
    let best = results
        .iter()
        .fold(&results[0], |b, r| if r.validation_accuracy > b.validation_accuracy { r } else { b });
    Ok((best.omega, results))
}

/// Paired comparison over `cfg.seeds` of a grid-tuned constant target
/// against the learned predictor. Requires `lengths = 2`.
pub fn ablate_pmnn(cfg: &RunConfig) -> Result<AblationReport> {
    cfg.validate()?;
    if cfg.lengths != [2] {
        return Err(Error::config("lengths", "the predictor ablation runs with lengths = 2"));
    }
    if cfg.seeds.is_empty() {
        return Err(Error::config("seeds", "needs at least one seed"));
    }
    prepare_out_dir(cfg, &cfg.out)?;
    let base = RunConfig {
        constant_target: None,
        ..cfg.clone()
    };
    let (omega_star, pilot) = select_constant_target(&base)?;
    let mut rows = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let run = RunConfig { seed, ..base.clone() };
        let dataset = run.dataset()?;
        let le = run.linear_eval_config();
        let without = RunConfig {
            constant_target: Some(omega_star),
            ..run.clone()
        };
        let (s_without, _) = run_training(&without, &dataset)?;
        let acc_without = linear_eval_dataset(s_without.encoder(), &dataset, &le)?;
        let (s_with, _) = run_training(&run, &dataset)?;
        let acc_with = linear_eval_dataset(s_with.encoder(), &dataset, &le)?;
        rows.push(AblationRow {
            seed,
            without_pmnn: acc_without,
            with_pmnn: acc_with,
            difference: acc_with - acc_without,
        });
    }
    let n = rows.len() as f64;
    let mean_without_pmnn = rows.iter().map(|r| r.without_pmnn).sum::<f64>() / n;
    let mean_with_pmnn = rows.iter().map(|r| r.with_pmnn).sum::<f64>() / n;
    let report = AblationReport {
        lengths: cfg.lengths.clone(),
        pilot_epochs: cfg.pilot_epochs,
        pilot,
        omega_star,
        rows,
        mean_without_pmnn,
        mean_with_pmnn,
        mean_difference: mean_with_pmnn - mean_without_pmnn,
    };
    write_json(&cfg.out.join(ABLATION_JSON), &report)?;
    write_atomic(&cfg.out.join(ABLATION_CSV), report.to_csv().as_bytes())?;
    Ok(report)
}
