//! One test per acceptance criterion. Each prints a single PASS/FAIL line.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::time::{Duration, Instant};

use cocor::augment::{CompositionVector, POOL_SIZE};
use cocor::bilevel::{
    hyper_coefficient, hypergradient, logistic_derivative, probe_ce, unsup_objective, TrainState,
};
use cocor::harness::{
    ablate_pmnn, linear_eval_dataset, pretrain, RecordKind, RunConfig, CHECKPOINT, METRICS_JSONL, SUMMARY_CSV,
};
use cocor::losses::{
    consistency_loss, contrastive_loss, cross_entropy, ConsistencyVariant, DeviationGroup, NegativeQueue,
};
use cocor::numcore::rng::rng_from_seed;
use cocor::numcore::{grad_check, softplus, Matrix, ParamSet};
use cocor::pmnn::{Pmnn, PmnnConfig};
use common::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn verdict(id: &str, name: &str, pass: bool, detail: String) {
    println!("criterion {id} ({name}): {} | {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} failed: {detail}");
}

fn random_pmnn(rng: &mut impl Rng) -> Pmnn<f64> {
    let hidden = rng.random_range(1..=16);
    let spread = rng.random_range(0.1..4.0);
    let mut p = Pmnn::new(PmnnConfig { hidden, init_range: 0.5 }, rng).unwrap();
    let flat: Vec<f64> = (0..p.params().num_params()).map(|_| rng.random_range(-spread..spread)).collect();
    p.params_mut().assign_flat(&flat).unwrap();
    p
}

fn random_counts(rng: &mut impl Rng, max: u32) -> [u32; POOL_SIZE] {
    std::array::from_fn(|_| rng.random_range(0..=max))
}

#[test]
fn criterion_1_monotonicity() {
    let start = Instant::now();
    let mut rng = rng_from_seed(1);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let p = random_pmnn(&mut rng);
        let v = CompositionVector::from_counts(random_counts(&mut rng, 5));
        let i = rng.random_range(0..POOL_SIZE);
        let d = p.predict(&v.incremented(i)).unwrap() - p.predict(&v).unwrap();
        worst = worst.max(d);
        if d > 1e-12 {
            violations += 1;
        }
    }
    let mut chain = 0;
    for _ in 0..1_000 {
        let p = random_pmnn(&mut rng);
        let lo = random_counts(&mut rng, 4);
        let extra = random_counts(&mut rng, 3);
        let hi: [u32; POOL_SIZE] = std::array::from_fn(|j| lo[j] + extra[j]);
        let (lo, hi) = (CompositionVector::from_counts(lo), CompositionVector::from_counts(hi));
        assert!(lo.dominated_by(&hi));
        if p.predict(&hi).unwrap() > p.predict(&lo).unwrap() + 1e-12 {
            chain += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        "1",
        "monotonicity",
        violations == 0 && chain == 0 && elapsed < Duration::from_secs(10),
        format!("{violations}/10000 single-step violations (max increase {worst:.2e}), {chain}/1000 chain violations, {elapsed:.2?}"),
    );
}

fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn pair(a: Matrix<f64>, b: Matrix<f64>) -> ParamSet<f64> {
    let mut p = ParamSet::new();
    p.push("a", a).unwrap();
    p.push("b", b).unwrap();
    p
}

fn row(v: Vec<f64>) -> Matrix<f64> {
    Matrix::row_vector(v)
}

#[test]
fn criterion_2_gradients() {
    let start = Instant::now();
    let mut rng = rng_from_seed(2);
    let mut errors: Vec<(&str, f64)> = Vec::new();

    let mut queue = NegativeQueue::new(16, 8).unwrap();
    queue.push(&random_units(16, 8, &mut rng)).unwrap();
    let base = pair(random_units(4, 8, &mut rng), random_units(4, 8, &mut rng));
    let r = grad_check(
        |p: &ParamSet<f64>| {
            let out = contrastive_loss(p.require("a")?, p.require("b")?, &queue, 0.2)?;
            Ok((out.loss, pair(out.grad_query, out.grad_positive)))
        },
        &base,
        1e-6,
    )
    .unwrap();
    errors.push(("contrastive", r.max_rel_error));

    for variant in [ConsistencyVariant::Abs, ConsistencyVariant::Softplus] {
        let omega: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pred: Vec<f64> = omega.iter().map(|o| o - rng.random_range(0.05..0.5) * if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let base = pair(row(omega), row(pred));
        let r = grad_check(
            |p: &ParamSet<f64>| {
                let (o, g) = (p.require("a")?.data(), p.require("b")?.data());
                let groups = vec![
                    DeviationGroup::new(1, o[..2].to_vec(), g[..2].to_vec())?,
                    DeviationGroup::new(2, o[2..].to_vec(), g[2..].to_vec())?,
                ];
                let out = consistency_loss(variant, &groups)?;
                let go: Vec<f64> = out.grad_omega.concat();
                let gp: Vec<f64> = out.grad_predicted.concat();
                Ok((out.loss, pair(row(go), row(gp))))
            },
            &base,
            1e-6,
        )
        .unwrap();
        errors.push((variant.name(), r.max_rel_error));
    }

    let labels = vec![0, 2, 1, 2, 0];
    let mut logits = ParamSet::new();
    logits.push("logits", gaussian(5, 3, &mut rng)).unwrap();
    let r = grad_check(
        |p: &ParamSet<f64>| {
            let out = cross_entropy(p.require("logits")?, &labels)?;
            let mut g = ParamSet::new();
            g.push("logits", out.grad_logits)?;
            Ok((out.loss, g))
        },
        &logits,
        1e-6,
    )
    .unwrap();
    errors.push(("cross-entropy", r.max_rel_error));

    let pm = Pmnn::<f64>::new(PmnnConfig::default(), &mut rng).unwrap();
    let batch: Vec<CompositionVector> = (0..6)
        .map(|_| {
            let mut c = [0u32; POOL_SIZE];
            for _ in 0..rng.random_range(1..=3) {
                c[rng.random_range(0..POOL_SIZE)] += 1;
            }
            CompositionVector::from_counts(c)
        })
        .collect();
    let r = grad_check(|p: &ParamSet<f64>| pm.with_params(p.clone())?.mean_and_grad(&batch), pm.params(), 1e-6).unwrap();
    errors.push(("pmnn mean output", r.max_rel_error));

    let mut cfg = tiny_config(11);
    cfg.batch_size = 2;
    cfg.queue_capacity = 4;
    cfg.lengths = vec![1, 2];
    let mut t = tiny_instance_with(cfg);
    t.unlabeled.truncate(2);
    let st = t.state.clone();
    let imgs: Vec<_> = t.unlabeled.iter().collect();
    t.state.encoder_step(&imgs).unwrap();
    let views = t.state.hyper_cache().unwrap().views.clone();
    let keys = st.key_encoder().forward(&views.keys).unwrap().embeddings;
    let predicted = st.predictions(&views).unwrap();
    assert!(st.encoder().params().num_params() <= 2000);
    let r = grad_check(
        |p: &ParamSet<f64>| {
            let enc = st.encoder().with_params(p.clone())?;
            let ev = unsup_objective(st.config(), &enc, &views, &keys, st.queue(), &predicted, true)?;
            Ok((ev.breakdown.total, ev.grads.unwrap()))
        },
        st.encoder().params(),
        1e-5,
    )
    .unwrap();
    errors.push(("full unsupervised loss", r.max_rel_error));

    let elapsed = start.elapsed();
    let worst = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    let detail = errors.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    verdict("2", "gradients", worst < 1e-5 && elapsed < Duration::from_secs(60), format!("{detail}; {elapsed:.2?}"));
}

#[test]
fn criterion_3_loss_oracles() {
    let mut rng = rng_from_seed(3);
    let mut queue = NegativeQueue::new(16, 8).unwrap();
    queue.push(&random_units(16, 8, &mut rng)).unwrap();
    let q = random_units(4, 8, &mut rng);
    let k = random_units(4, 8, &mut rng);
    let out = contrastive_loss(&q, &k, &queue, 0.2).unwrap();
    let mut oracle = 0.0;
    for r in 0..4 {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / 0.2;
        let mut logits = vec![dot(q.row(r), k.row(r))];
        logits.extend(queue.iter().map(|n| dot(q.row(r), n)));
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        oracle += (lse - logits[0]) / 4.0;
    }
    let oracle_err = (out.loss - oracle).abs();

    let e0 = row(vec![1.0, 0.0, 0.0, 0.0]);
    let mut one = NegativeQueue::new(1, 4).unwrap();
    one.push(&e0).unwrap();
    let ln2_err = (contrastive_loss(&e0, &e0, &one, 0.2).unwrap().loss - 2f64.ln()).abs();
    let mut full = NegativeQueue::new(4095, 4).unwrap();
    full.push(&Matrix::from_fn(4095, 4, |_, c| if c == 0 { 1.0 } else { 0.0 })).unwrap();
    let lnn = contrastive_loss(&e0, &e0, &full, 0.2).unwrap().loss;
    let lnn_err = (lnn - 4096f64.ln()).abs();
    let sp_err = (softplus(0.0f64) - 2f64.ln()).abs();
    verdict(
        "3",
        "loss oracles",
        oracle_err < 1e-10 && ln2_err < 1e-9 && lnn_err < 1e-9 && sp_err < 1e-12,
        format!("log-softmax {oracle_err:.1e}, ln 2 {ln2_err:.1e}, ln 4096 {lnn_err:.1e} (loss {lnn:.6}), softplus(0) {sp_err:.1e}"),
    );
}

#[test]
fn criterion_4_hypergradient_fidelity() {
    let start = Instant::now();
    let (mut used, mut skipped, mut parallel, mut agree) = (0, 0, 0, 0);
    let mut worst_cos_gap = 0.0f64;
    let mut seed = 0;
    while used < 50 {
        let mut t = tiny_instance(seed);
        seed += 1;
        let imgs: Vec<_> = t.unlabeled.iter().collect();
        let report = t.state.encoder_step(&imgs).unwrap();
        let cache = t.state.hyper_cache().unwrap().clone();
        let before = t.state.encoder().with_params(cache.before.clone()).unwrap();
        let ce_before = probe_ce(&before, t.state.probe(), &t.labeled, &t.labels).unwrap().loss;
        let ce_after = probe_ce(t.state.encoder(), t.state.probe(), &t.labeled, &t.labels).unwrap().loss;
        let (scalars, update) = hypergradient(t.state.config(), t.state.pmnn(), &cache, ce_before, ce_after).unwrap();
        let oracle = t.state.exact_hypergradient(&t.labeled, &t.labels).unwrap();
        // Instances whose step leaves simi unchanged carry no direction to compare.
        if report.degenerate > 0 || scalars.guarded || scalars.simi_after == scalars.simi_before {
            skipped += 1;
            continue;
        }
        used += 1;
        let update = update.unwrap();
        let cos = update.dot(&oracle).unwrap() / (update.norm() * oracle.norm());
        worst_cos_gap = worst_cos_gap.max((cos.abs() - 1.0).abs());
        if (cos.abs() - 1.0).abs() <= 1e-9 {
            parallel += 1;
        }
        if cos > 0.0 {
            agree += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        "4",
        "hypergradient fidelity",
        parallel == 50 && agree >= 40 && elapsed < Duration::from_secs(60),
        format!(
            "parallel {parallel}/50 (max ||cos|-1| {worst_cos_gap:.1e}), sign agreement {agree}/50 (needs 40), {skipped} degenerate instances skipped, {elapsed:.2?}"
        ),
    );
}

#[test]
fn criterion_5_coefficient_identity() {
    let mut rng = rng_from_seed(5);
    let worst = (0..1000)
        .map(|_| {
            let k: f64 = rng.random_range(-30.0..30.0);
            (hyper_coefficient(k) - logistic_derivative(k)).abs()
        })
        .fold(0.0, f64::max);
    let at_zero = hyper_coefficient(0.0);
    verdict(
        "5",
        "coefficient identity",
        worst <= 1e-12 && at_zero == 0.25,
        format!("max |e^k/(1+e^k)^2 - s'(k)| {worst:.1e}, value at 0 = {at_zero}"),
    );
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn desk_config(out: &std::path::Path) -> RunConfig {
    RunConfig {
        queue: 256,
        epochs: 20,
        batch_size: 64,
        out: out.to_path_buf(),
        ..RunConfig::default()
    }
}

#[test]
fn criterion_6_end_to_end_trend() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = desk_config(dir.path());
    let dataset = cfg.dataset().unwrap();
    let (h, w, c) = dataset.dims();
    let le = cfg.linear_eval_config();
    let random = TrainState::new(cfg.bilevel(h * w * c).unwrap(), dataset.classes(), None).unwrap();
    let acc_random = linear_eval_dataset(random.encoder(), &dataset, &le).unwrap();
    let outcome = pretrain(&cfg).unwrap();
    let acc_trained = linear_eval_dataset(outcome.state.encoder(), &dataset, &le).unwrap();
    let epochs: Vec<Vec<f64>> = outcome
        .records
        .iter()
        .filter(|r| r.kind == RecordKind::Epoch)
        .map(|r| r.k.iter().map(|k| k.abs()).collect())
        .collect();
    assert_eq!(epochs.len(), 20);
    let first = median(epochs[..5].concat());
    let last = median(epochs[15..].concat());
    let gain = 100.0 * (acc_trained - acc_random);
    let elapsed = start.elapsed();
    verdict(
        "6",
        "end-to-end trend",
        gain >= 10.0 && last < first && elapsed < Duration::from_secs(300),
        format!(
            "probe {:.2}% vs random encoder {:.2}% (+{gain:.2} points); median |k| first 5 epochs {first:.4}, last 5 {last:.4}; {elapsed:.1?}",
            100.0 * acc_trained,
            100.0 * acc_random
        ),
    );
}

#[test]
fn criterion_7_ablation_trend() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        lengths: vec![2],
        seeds: vec![0, 1, 2, 3, 4],
        ..desk_config(dir.path())
    };
    let report = ablate_pmnn(&cfg).unwrap();
    let elapsed = start.elapsed();
    let rows = report
        .rows
        .iter()
        .map(|r| format!("{}: {:.2}/{:.2}", r.seed, 100.0 * r.without_pmnn, 100.0 * r.with_pmnn))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(
        "7",
        "ablation trend",
        report.mean_with_pmnn >= report.mean_without_pmnn && elapsed < Duration::from_secs(1800),
        format!(
            "mean with predictor {:.2}% vs constant target {:.2} {:.2}% (per seed without/with {rows}); {elapsed:.1?}",
            100.0 * report.mean_with_pmnn,
            report.omega_star,
            100.0 * report.mean_without_pmnn
        ),
    );
}

#[test]
fn criterion_8_determinism() {
    let root = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let mut cfg = RunConfig {
            queue: 128,
            epochs: 3,
            out: root.path().join(name),
            ..RunConfig::default()
        };
        cfg.set("synth_per_class", "60").unwrap();
        cfg.set("synth_size", "16").unwrap();
        pretrain(&cfg).unwrap();
        [METRICS_JSONL, SUMMARY_CSV, CHECKPOINT].map(|f| std::fs::read(cfg.out.join(f)).unwrap())
    };
    let a = run("a");
    let b = run("b");
    let same = a == b;
    verdict(
        "8",
        "determinism",
        same && a.iter().all(|f| !f.is_empty()),
        format!(
            "metrics {} bytes, summary {} bytes, checkpoint {} bytes, identical: {same}",
            a[0].len(),
            a[1].len(),
            a[2].len()
        ),
    );
}

#[test]
fn criterion_9_stop_gradient_and_queue() {
    let mut t = tiny_instance(9);
    let bits = |p: &ParamSet<f64>| p.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let enc = bits(t.state.encoder().params());
    for _ in 0..10 {
        t.state.probe_step(&t.labeled, &t.labels).unwrap();
        probe_ce(t.state.encoder(), t.state.probe(), &t.labeled, &t.labels).unwrap();
    }
    let imgs: Vec<_> = t.unlabeled.iter().collect();
    t.state.encoder_step(&imgs).unwrap();
    let stepped = bits(t.state.encoder().params());
    t.state.probe_step(&t.labeled, &t.labels).unwrap();
    t.state.exact_hypergradient(&t.labeled, &t.labels).unwrap();
    t.state.pmnn_step(&t.labeled, &t.labels).unwrap();
    let untouched = bits(t.state.encoder().params()) == stepped && stepped != enc;
    let probe_only = {
        let mut s = tiny_instance(10);
        let before = bits(s.state.encoder().params());
        s.state.probe_step(&s.labeled, &s.labels).unwrap();
        bits(s.state.encoder().params()) == before
    };

    let mut rng = rng_from_seed(9);
    let mut q = NegativeQueue::new(5, 3).unwrap();
    let mut pushed: Vec<Vec<f64>> = Vec::new();
    let mut fifo = true;
    for n in [2, 3, 4, 1, 5] {
        let m = random_units(n, 3, &mut rng);
        q.push(&m).unwrap();
        pushed.extend(m.iter_rows().map(|r| r.to_vec()));
        let kept: Vec<Vec<f64>> = q.iter().map(|r| r.to_vec()).collect();
        fifo &= q.len() == pushed.len().min(5) && kept[..] == pushed[pushed.len() - kept.len()..];
    }
    let before: Vec<Vec<f64>> = q.iter().map(|r| r.to_vec()).collect();
    let rejected = q.push(&row(vec![0.6, 0.6, 0.6])).is_err() && q.push(&row(vec![1.0, 0.0])).is_err();
    let unchanged = q.iter().map(|r| r.to_vec()).collect::<Vec<_>>() == before;
    verdict(
        "9",
        "stop-gradient and queue semantics",
        untouched && probe_only && fifo && rejected && unchanged,
        format!(
            "encoder bitwise unchanged by probe/CE paths: {}, FIFO and capacity: {fifo}, non-unit rows rejected atomically: {}",
            untouched && probe_only,
            rejected && unchanged
        ),
    );
}
