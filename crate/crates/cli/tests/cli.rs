use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cocor::harness::{RunConfig, RESOLVED_CONFIG};

const SMALL: &str = "synth_classes = 4\nsynth_per_class = 20\nsynth_size = 12\nqueue = 32\nbatch_size = 16\nlabeled_batch_size = 8\nepochs = 2\neval_epochs = 5\nhidden = 32\nhead_hidden = 16\nembed_dim = 8\ndacl_probe_size = 8\n";

fn cocor(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cocor"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_config(dir: &Path) {
    fs::write(dir.join("run.cfg"), SMALL).unwrap();
}

#[test]
fn help_lists_commands_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    let o = cocor(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for c in ["pretrain", "eval-linear", "ablate-pmnn", "grad-check", "augment-preview", "make-data"] {
        assert!(text.contains(c), "{c}");
    }
    let o = cocor(dir.path(), &["pretrain", "--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    for f in ["--config", "--seed", "--out", "--epochs", "--lengths", "--variant", "--labeled-frac", "--queue", "--tau", "--set"] {
        assert!(text.contains(f), "{f}");
    }
}

#[test]
fn validation_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = cocor(dir.path(), &["pretrain", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    let o = cocor(dir.path(), &["pretrain", "--config", "missing.cfg"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing.cfg"), "{}", stderr(&o));
    let o = cocor(dir.path(), &["pretrain", "--tau", "-0.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("tau"));
    let o = cocor(dir.path(), &["pretrain", "--variant", "cubic"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("variant"));
    let o = cocor(dir.path(), &["pretrain", "--lengths", "0,9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lengths"));
    let o = cocor(dir.path(), &["pretrain", "--set", "colour=red"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"));
    fs::write(dir.path().join("bad.cfg"), "epochs = 3\nepochs = 4\n").unwrap();
    let o = cocor(dir.path(), &["pretrain", "--config", "bad.cfg"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("epochs"));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1, "nothing written on validation failure");
}

#[test]
fn pretrain_is_reproducible_and_echoes_its_config() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    for out in ["a", "b"] {
        let o = cocor(dir.path(), &["pretrain", "--config", "run.cfg", "--seed", "7", "--out", out]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["metrics.jsonl", "summary.csv", "model.ckpt"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
    let resolved = RunConfig::load(&dir.path().join("a").join(RESOLVED_CONFIG)).unwrap();
    assert_eq!(resolved.seed, 7);
    assert_eq!(resolved.epochs, 2);
    assert_eq!(RunConfig::parse_str(&resolved.to_config_string()).unwrap(), resolved);
    let mut entries: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    entries.sort();
    assert_eq!(entries, ["a", "b", "run.cfg"]);

    let o = cocor(dir.path(), &["eval-linear", "--config", "run.cfg", "--seed", "7", "--out", "a"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let eval = fs::read_to_string(dir.path().join("a/eval.json")).unwrap();
    assert!(eval.contains("accuracy"));
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    let o = cocor(dir.path(), &["eval-linear", "--config", "run.cfg", "--checkpoint", "none.ckpt", "--out", "e"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("none.ckpt"));
    fs::write(dir.path().join("junk.ckpt"), b"not a checkpoint").unwrap();
    let o = cocor(dir.path(), &["eval-linear", "--config", "run.cfg", "--checkpoint", "junk.ckpt", "--out", "e"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("junk.ckpt"));
}

#[test]
fn ablation_requires_length_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = cocor(dir.path(), &["ablate-pmnn", "--lengths", "1", "--out", "x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lengths"));
}

#[test]
fn ablation_writes_a_paired_report() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    let o = cocor(
        dir.path(),
        &["ablate-pmnn", "--config", "run.cfg", "--lengths", "2", "--seeds", "0,1", "--set", "pilot_grid=0.5,0.7", "--set", "pilot_epochs=1", "--out", "abl"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("abl/ablation.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "seed,without_pmnn,with_pmnn,difference");
    assert!(lines[3].starts_with("mean,"));
    let json = fs::read_to_string(dir.path().join("abl/ablation.json")).unwrap();
    for key in ["\"omega_star\"", "\"with_pmnn\"", "\"without_pmnn\"", "\"difference\"", "\"mean_difference\""] {
        assert!(json.contains(key), "{key}");
    }
}

#[test]
fn grad_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = cocor(dir.path(), &["grad-check", "--out", "g"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().filter(|l| l.ends_with("ok")).count(), 7, "{text}");
}

#[test]
fn generated_idx_data_trains() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    let o = cocor(dir.path(), &["make-data", "--config", "run.cfg", "--out", "data"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let images = fs::read(dir.path().join("data/images.idx")).unwrap();
    assert_eq!(&images[..4], &[0, 0, 8, 3]);
    let idx_cfg = SMALL
        .lines()
        .filter(|l| !l.starts_with("synth_"))
        .chain(["data = idx", "idx_images = data/images.idx", "idx_labels = data/labels.idx"])
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(dir.path().join("idx.cfg"), idx_cfg).unwrap();
    let o = cocor(dir.path(), &["pretrain", "--config", "idx.cfg", "--out", "run"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("run/model.ckpt").exists());
}

#[test]
fn augment_preview_writes_images() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    let o = cocor(dir.path(), &["augment-preview", "--config", "run.cfg", "--lengths", "1,3", "--count", "2", "--out", "p"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["original.pgm", "length1_0.pgm", "length1_1.pgm", "length3_0.pgm", "length3_1.pgm", "previews.tsv", RESOLVED_CONFIG] {
        assert!(dir.path().join("p").join(f).exists(), "{f}");
    }
    let pgm = fs::read(dir.path().join("p/original.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5"));
    let o = cocor(dir.path(), &["augment-preview", "--input", "p/original.pgm", "--out", "q"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = cocor(dir.path(), &["augment-preview", "--input", "run.cfg", "--out", "r"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("run.cfg"));
}
