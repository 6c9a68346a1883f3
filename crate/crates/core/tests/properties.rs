mod common;

use cocor::augment::{apply_composite, sample_composite, CompositionVector, Raster, WeakAugment, POOL_SIZE};
use cocor::losses::NegativeQueue;
use cocor::numcore::rng::rng_from_seed;
use cocor::numcore::Matrix;
use cocor::pmnn::{Pmnn, PmnnConfig};
use proptest::prelude::*;
use rand::Rng;

fn random_pmnn(seed: u64, hidden: usize, spread: f64) -> Pmnn<f64> {
    let mut rng = rng_from_seed(seed);
    let mut p = Pmnn::new(PmnnConfig { hidden, init_range: 0.5 }, &mut rng).unwrap();
    let flat: Vec<f64> = (0..p.params().num_params())
        .map(|_| rng.random_range(-spread..spread))
        .collect();
    p.params_mut().assign_flat(&flat).unwrap();
    p
}

fn counts() -> impl Strategy<Value = [u32; POOL_SIZE]> {
    prop::array::uniform14(0u32..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn predictor_is_non_increasing_in_every_count(
        seed in any::<u64>(), hidden in 1usize..12, spread in 0.1f64..4.0, v in counts(), i in 0usize..POOL_SIZE,
    ) {
        let p = random_pmnn(seed, hidden, spread);
        let v = CompositionVector::from_counts(v);
        let g = p.predict(&v).unwrap();
        prop_assert!(g > -1.0 && g < 1.0);
        prop_assert!(p.predict(&v.incremented(i)).unwrap() <= g + 1e-12);
    }

    #[test]
    fn predictor_respects_componentwise_dominance(
        seed in any::<u64>(), v in counts(), extra in counts(),
    ) {
        let p = random_pmnn(seed, 8, 2.0);
        let lo = CompositionVector::from_counts(v);
        let mut hi = v;
        for (h, e) in hi.iter_mut().zip(extra) {
            *h += e;
        }
        let hi = CompositionVector::from_counts(hi);
        prop_assert!(lo.dominated_by(&hi));
        prop_assert!(p.predict(&hi).unwrap() <= p.predict(&lo).unwrap() + 1e-12);
    }

    #[test]
    fn queue_keeps_the_newest_unit_rows(
        capacity in 1usize..12, batches in prop::collection::vec(1usize..6, 1..8), seed in any::<u64>(),
    ) {
        let mut rng = rng_from_seed(seed);
        let mut q = NegativeQueue::<f64>::new(capacity, 5).unwrap();
        let mut all: Vec<Vec<f64>> = Vec::new();
        for b in batches {
            let m = common::random_units(b, 5, &mut rng);
            q.push(&m).unwrap();
            all.extend(m.iter_rows().map(|r| r.to_vec()));
            prop_assert!(q.len() <= capacity);
            prop_assert_eq!(q.len(), all.len().min(capacity));
            let kept: Vec<Vec<f64>> = q.iter().map(|r| r.to_vec()).collect();
            prop_assert_eq!(&kept[..], &all[all.len() - kept.len()..]);
            for r in q.iter() {
                let n: f64 = r.iter().map(|v| v * v).sum();
                prop_assert!((n.sqrt() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn queue_rejects_non_unit_batches_atomically(capacity in 2usize..8, scale in 1.01f64..5.0, seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let mut q = NegativeQueue::<f64>::new(capacity, 4).unwrap();
        q.push(&common::random_units(1, 4, &mut rng)).unwrap();
        let mut bad = common::random_units(2, 4, &mut rng);
        bad.row_mut(1).iter_mut().for_each(|v| *v *= scale);
        prop_assert!(q.push(&bad).is_err());
        prop_assert_eq!(q.len(), 1);
        prop_assert!(q.push(&Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn composites_stay_in_range_and_count_their_length(
        len in 1usize..6, magnitude in 0.0f64..=1.0, seed in any::<u64>(), h in 3usize..10, w in 3usize..10, rgb in any::<bool>(),
    ) {
        let ch = if rgb { 3 } else { 1 };
        let mut rng = rng_from_seed(seed ^ 1);
        let img = Raster::new(h, w, ch, (0..h * w * ch).map(|_| rng.random::<f64>()).collect()).unwrap();
        let a = sample_composite(len, magnitude, seed).unwrap();
        prop_assert_eq!(a.composition_vector().total() as usize, len);
        let out = apply_composite(&a, &img).unwrap();
        prop_assert_eq!(out.dims(), img.dims());
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(apply_composite(&a, &img).unwrap(), out);
        let weak = WeakAugment::default().apply(&img, seed);
        prop_assert_eq!(weak.dims(), img.dims());
        prop_assert!(weak.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
