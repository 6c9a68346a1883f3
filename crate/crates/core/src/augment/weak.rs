//! Weak augmentations for the contrastive views.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::augment::raster::Raster;
use crate::numcore::rng::rng_from_seed;

/// Horizontal flip, per-channel brightness jitter and additive pixel noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakAugment {
    pub flip_prob: f64,
    /// Per-channel multiplicative jitter drawn from U(1 − b, 1 + b).
    pub brightness: f64,
    pub noise_std: f64,
}

impl Default for WeakAugment {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            brightness: 0.2,
            noise_std: 0.02,
        }
    }
}

impl WeakAugment {
    pub fn apply(&self, img: &Raster, seed: u64) -> Raster {
        let mut rng = rng_from_seed(seed);
        let (h, w, ch) = img.dims();
        let flip = rng.random::<f64>() < self.flip_prob;
        let gains: Vec<f64> = (0..ch)
            .map(|_| 1.0 + rng.random_range(-self.brightness..=self.brightness))
            .collect();
        let noise = Normal::new(0.0, self.noise_std).expect("noise std is finite and >= 0");
        let mut data = Vec::with_capacity(img.len());
        for y in 0..h {
            for x in 0..w {
                let sx = if flip { w - 1 - x } else { x };
                for (c, gain) in gains.iter().enumerate() {
                    data.push(img.get(y, sx, c) * gain + noise.sample(&mut rng));
                }
            }
        }
        Raster::from_clamped(h, w, ch, data)
    }
}
