use std::fs;

use cocor::checkpoint::load_checkpoint;
use cocor::encoder::{Encoder, EncoderConfig};
use cocor::harness::{
    eval_linear, linear_eval, linear_eval_dataset, pretrain, select_constant_target, synth_dataset, Dataset,
    LinearEvalConfig, MetricsRecord, RecordKind, RunConfig, SplitSpec, CHECKPOINT, METRICS_JSONL, RESOLVED_CONFIG,
    SUMMARY_CSV,
};
use cocor::numcore::rng::rng_from_seed;
use rand::Rng;

fn encoder(input: usize, seed: u64) -> Encoder<f64> {
    Encoder::new(EncoderConfig::new(input, vec![32], 16, 8).unwrap(), &mut rng_from_seed(seed)).unwrap()
}

fn quick() -> LinearEvalConfig {
    LinearEvalConfig {
        epochs: 30,
        ..LinearEvalConfig::default()
    }
}

#[test]
fn noiseless_classes_are_separable() {
    let mut d = synth_dataset(5, 20, 10, 10, 0.0, 1).unwrap();
    d.assign_splits(SplitSpec::default(), 1).unwrap();
    let acc = linear_eval_dataset(&encoder(100, 4), &d, &quick()).unwrap();
    assert_eq!(acc, 1.0);
}

#[test]
fn random_labels_stay_near_chance() {
    let classes = 4;
    let mut rng = rng_from_seed(2);
    let n = 2400;
    let images: Vec<_> = (0..n)
        .map(|_| cocor::augment::Raster::new(6, 6, 1, (0..36).map(|_| rng.random::<f64>()).collect()).unwrap())
        .collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
    let mut d = Dataset::new(images, Some(labels), classes).unwrap();
    d.assign_splits(SplitSpec::default(), 2).unwrap();
    let acc = linear_eval_dataset(&encoder(36, 5), &d, &quick()).unwrap();
    assert!((acc - 0.25).abs() <= 0.05, "{acc}");
}

#[test]
fn evaluation_is_deterministic_and_read_only() {
    let mut d = synth_dataset(3, 12, 8, 8, 0.3, 3).unwrap();
    d.assign_splits(SplitSpec::default(), 3).unwrap();
    let enc = encoder(64, 6);
    let bits = enc.params().flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let a = linear_eval_dataset(&enc, &d, &quick()).unwrap();
    let b = linear_eval_dataset(&enc, &d, &quick()).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    assert_eq!(enc.params().flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), bits);
    let empty: (&[cocor::augment::Raster], &[usize]) = (&[], &[]);
    assert!(linear_eval(&enc, empty, empty, 3, &quick()).is_err());
}

fn small(out: &std::path::Path) -> RunConfig {
    let mut cfg = RunConfig::parse_str(
        "synth_classes = 3\nsynth_per_class = 20\nsynth_size = 8\nqueue = 16\nbatch_size = 8\nlabeled_batch_size = 4\n\
         epochs = 2\neval_epochs = 5\nhidden = 16\nhead_hidden = 8\nembed_dim = 4\ndacl_probe_size = 4\n\
         pilot_epochs = 1\npilot_grid = 0.5, 0.5, 0.7\n",
    )
    .unwrap();
    cfg.out = out.to_path_buf();
    cfg
}

#[test]
fn pretrain_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(&dir.path().join("run"));
    let outcome = pretrain(&cfg).unwrap();
    let resolved = RunConfig::load(&cfg.out.join(RESOLVED_CONFIG)).unwrap();
    assert_eq!(resolved, cfg);
    let text = fs::read_to_string(cfg.out.join(METRICS_JSONL)).unwrap();
    let parsed: Vec<MetricsRecord> = text.lines().map(|l| MetricsRecord::from_json_line(l).unwrap()).collect();
    assert_eq!(parsed, outcome.records);
    assert_eq!(parsed.iter().filter(|r| r.kind == RecordKind::Epoch).count(), 2);
    assert!(parsed.iter().all(|r| r.wall_clock.is_none()));
    let csv = fs::read_to_string(cfg.out.join(SUMMARY_CSV)).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let ckpt = load_checkpoint(&cfg.out.join(CHECKPOINT)).unwrap();
    assert_eq!(ckpt, outcome.state.checkpoint_params().unwrap());
    assert!(!dir.path().join("run").join("model.ckpt.tmp").exists());
}

#[test]
fn timing_adds_wall_clock() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.timing = true;
    let outcome = pretrain(&cfg).unwrap();
    assert!(outcome.records.iter().all(|r| r.wall_clock.is_some()));
}

#[test]
fn eval_linear_leaves_checkpoint_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    pretrain(&cfg).unwrap();
    let path = cfg.out.join(CHECKPOINT);
    let before = fs::read(&path).unwrap();
    let report = eval_linear(&cfg, &path).unwrap();
    assert!((0.0..=1.0).contains(&report.accuracy));
    assert_eq!(fs::read(&path).unwrap(), before);
    assert_eq!(eval_linear(&cfg, &path).unwrap(), report);

    let other = RunConfig {
        hidden: vec![12],
        ..cfg.clone()
    };
    let err = eval_linear(&other, &path).unwrap_err().to_string();
    assert!(err.contains("model.ckpt"), "{err}");
}

#[test]
fn pilot_selection_keeps_the_first_of_tied_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let (best, pilots) = select_constant_target(&cfg).unwrap();
    assert_eq!(pilots.len(), 3);
    assert_eq!(pilots[0].validation_accuracy, pilots[1].validation_accuracy);
    let top = pilots.iter().map(|p| p.validation_accuracy).fold(f64::MIN, f64::max);
    let first = pilots.iter().find(|p| p.validation_accuracy == top).unwrap();
    assert_eq!(best, first.omega);
}
