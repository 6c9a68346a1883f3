use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cocor::augment::{apply_composite, decode_pnm, encode_pnm, pnm_extension, sample_composite, Raster};
use cocor::fsutil::{read_file, write_atomic};
use cocor::harness::{
    ablate_pmnn, eval_linear, gradient_suite, prepare_out_dir, pretrain, write_idx, DataSource, RecordKind, RunConfig,
    CHECKPOINT, GRAD_TOLERANCE,
};
use cocor::numcore::rng::derive_seed;
use cocor::Error;

/// Consistent contrastive pretraining with composite augmentations.
///
/// Settings come from the defaults, then the `--config` file, then the
/// command-line flags; later sources win. Every command writes the resolved
/// configuration as `resolved.cfg` into its output directory.
#[derive(Parser, Debug)]
#[command(name = "cocor", version, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train encoder, predictor and probe; writes metrics.jsonl, summary.csv and model.ckpt.
    Pretrain {
        #[command(flatten)]
        common: Common,
    },
    /// Linear evaluation of a checkpoint on the eval splits; writes eval.json.
    EvalLinear {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `pretrain` (default: <out>/model.ckpt).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Constant-target versus learned-predictor comparison over several seeds; writes ablation.json and ablation.csv.
    AblatePmnn {
        #[command(flatten)]
        common: Common,
        /// Comma-separated seeds to compare on.
        #[arg(long, value_name = "LIST")]
        seeds: Option<String>,
    },
    /// Finite-difference check of every analytic gradient; fails if any relative error reaches 1e-5.
    GradCheck {
        #[command(flatten)]
        common: Common,
    },
    /// Writes PGM/PPM previews of sampled composite augmentations.
    AugmentPreview {
        #[command(flatten)]
        common: Common,
        /// PGM or PPM image to augment (default: an image of the configured dataset).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Dataset index used when no --input is given.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Number of composites per length.
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
    /// Writes the configured synthetic dataset as IDX files (images.idx, labels.idx).
    MakeData {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Comma-separated composite lengths, each in [1, 8].
    #[arg(long, value_name = "LIST")]
    lengths: Option<String>,
    /// Consistency loss form: abs or softplus.
    #[arg(long)]
    variant: Option<String>,
    /// Fraction of each class used as labeled training data.
    #[arg(long, value_name = "F", allow_hyphen_values = true)]
    labeled_frac: Option<String>,
    /// Negative queue capacity.
    #[arg(long)]
    queue: Option<usize>,
    /// Contrastive temperature.
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<String>,
    /// Any other config key, as KEY=VALUE; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    error: Error,
}

impl Failure {
    fn validation(error: Error) -> Self {
        Self { code: 1, error }
    }

    fn runtime(error: Error) -> Self {
        let code = if matches!(error, Error::Config { .. }) { 1 } else { 2 };
        Self { code, error }
    }
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path).map_err(Failure::validation)?,
            None => RunConfig::default(),
        };
        let mut overrides: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                overrides.push((k.to_string(), v));
            }
        };
        put("seed", self.seed.map(|s| s.to_string()));
        put("out", self.out.as_ref().map(|p| p.display().to_string()));
        put("epochs", self.epochs.map(|e| e.to_string()));
        put("lengths", self.lengths.clone());
        put("variant", self.variant.clone());
        put("labeled_frac", self.labeled_frac.clone());
        put("queue", self.queue.map(|q| q.to_string()));
        put("tau", self.tau.clone());
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| {
                Failure::validation(Error::Config {
                    field: kv.clone(),
                    msg: "--set expects KEY=VALUE".into(),
                })
            })?;
            overrides.push((k.trim().to_string(), v.to_string()));
        }
        overrides.sort_by_key(|(k, _)| k != "data");
        for (k, v) in overrides {
            cfg.set(&k, &v).map_err(Failure::validation)?;
        }
        cfg.validate().map_err(Failure::validation)?;
        Ok(cfg)
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Pretrain { common } => {
            let cfg = common.resolve()?;
            let outcome = pretrain(&cfg).map_err(Failure::runtime)?;
            if let Some(last) = outcome.records.iter().rev().find(|r| r.kind == RecordKind::Epoch) {
                println!(
                    "epoch {}: L_u {} probe accuracy {} DACL {}",
                    last.epoch,
                    fmt_opt(last.l_u),
                    fmt_opt(last.probe_accuracy),
                    fmt_opt(last.dacl)
                );
            }
            println!("wrote {}", outcome.out_dir.display());
        }
        Command::EvalLinear { common, checkpoint } => {
            let cfg = common.resolve()?;
            let path = checkpoint.unwrap_or_else(|| cfg.out.join(CHECKPOINT));
            let report = eval_linear(&cfg, &path).map_err(Failure::runtime)?;
            println!("linear evaluation accuracy {:.4}", report.accuracy);
        }
        Command::AblatePmnn { common, seeds } => {
            let mut cfg = common.resolve()?;
            if let Some(s) = seeds {
                cfg.set("seeds", &s).map_err(Failure::validation)?;
            }
            let report = ablate_pmnn(&cfg).map_err(Failure::runtime)?;
            println!("constant target {:.2}", report.omega_star);
            for r in &report.rows {
                println!(
                    "seed {}: without {:.4} with {:.4} difference {:+.4}",
                    r.seed, r.without_pmnn, r.with_pmnn, r.difference
                );
            }
            println!(
                "mean: without {:.4} with {:.4} difference {:+.4}",
                report.mean_without_pmnn, report.mean_with_pmnn, report.mean_difference
            );
        }
        Command::GradCheck { common } => {
            let cfg = common.resolve()?;
            prepare_out_dir(&cfg, &cfg.out).map_err(Failure::runtime)?;
            let suite = gradient_suite(cfg.seed).map_err(Failure::runtime)?;
            let mut failed = Vec::new();
            for c in &suite {
                let verdict = if c.passed() { "ok" } else { "FAIL" };
                println!("{:<28} {:>5} params  max rel error {:.3e}  {verdict}", c.name, c.parameters, c.max_rel_error);
                if !c.passed() {
                    failed.push(c.name.clone());
                }
            }
            if !failed.is_empty() {
                return Err(Failure::runtime(Error::NonFinite(format!(
                    "gradient checks above {GRAD_TOLERANCE:e}: {}",
                    failed.join(", ")
                ))));
            }
        }
        Command::AugmentPreview {
            common,
            input,
            index,
            count,
        } => {
            let cfg = common.resolve()?;
            let image = match &input {
                Some(path) => decode_pnm(&read_file(path).map_err(Failure::validation)?).map_err(|e| {
                    Failure::validation(Error::Format {
                        path: path.clone(),
                        msg: e.to_string(),
                    })
                })?,
                None => {
                    let d = cfg.dataset().map_err(Failure::runtime)?;
                    d.images()
                        .get(index)
                        .cloned()
                        .ok_or_else(|| Failure::validation(Error::Input(format!("index {index} outside the dataset of {}", d.len()))))?
                }
            };
            prepare_out_dir(&cfg, &cfg.out).map_err(Failure::runtime)?;
            preview(&cfg, &image, count).map_err(Failure::runtime)?;
            println!("wrote previews to {}", cfg.out.display());
        }
        Command::MakeData { common } => {
            let cfg = common.resolve()?;
            if !matches!(cfg.data, DataSource::Synthetic { .. }) {
                return Err(Failure::validation(Error::Config {
                    field: "data".into(),
                    msg: "make-data generates synthetic data only".into(),
                }));
            }
            prepare_out_dir(&cfg, &cfg.out).map_err(Failure::runtime)?;
            let d = cfg.dataset().map_err(Failure::runtime)?;
            let (images, labels) = (cfg.out.join("images.idx"), cfg.out.join("labels.idx"));
            write_idx(&d, &images, &labels).map_err(Failure::runtime)?;
            println!("wrote {} images to {} and {}", d.len(), images.display(), labels.display());
        }
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

fn preview(cfg: &RunConfig, image: &Raster, count: usize) -> cocor::Result<()> {
    let ext = pnm_extension(image);
    write_atomic(&cfg.out.join(format!("original.{ext}")), &encode_pnm(image))?;
    let mut listing = String::new();
    for &len in &cfg.lengths {
        for k in 0..count {
            let a = sample_composite(len, cfg.magnitude, derive_seed(cfg.seed, len as u64, k as u64))?;
            let name = format!("length{len}_{k}.{ext}");
            write_atomic(&cfg.out.join(&name), &encode_pnm(&apply_composite(&a, image)?))?;
            listing.push_str(&format!("{name}\t{a}\n"));
        }
    }
    write_atomic(&cfg.out.join("previews.tsv"), listing.as_bytes())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.error);
            ExitCode::from(f.code)
        }
    }
}
