//! Datasets, evaluation protocols, experiment drivers and metrics persistence.

mod config;
mod data;
mod experiments;
mod gradients;
mod idx;
mod linear_eval;
mod metrics;

pub use config::{DataSource, RunConfig, KEYS};
pub use data::{class_template, synth_dataset, Dataset, Split, SplitSpec};
pub use gradients::{gradient_suite, GradientCheck, GRAD_TOLERANCE};
pub use idx::{encode_idx_images, encode_idx_labels, load_idx, parse_idx_images, parse_idx_labels, write_idx, IMAGE_MAGIC, LABEL_MAGIC};
pub use linear_eval::{linear_eval, linear_eval_dataset, LinearEvalConfig};
pub use metrics::{csv_summary, write_metrics, MetricsRecord, RecordKind, CSV_HEADER};
pub use experiments::{
    ablate_pmnn, eval_linear, load_encoder, prepare_out_dir, pretrain, run_training, select_constant_target,
    AblationReport, AblationRow, EvalReport, PilotResult, PretrainOutcome, ABLATION_CSV, ABLATION_JSON, CHECKPOINT,
    EVAL_JSON, METRICS_JSONL, RESOLVED_CONFIG, SUMMARY_CSV,
};
