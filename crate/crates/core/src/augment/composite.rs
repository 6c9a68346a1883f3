//! Composite augmentations and composition vectors.

use std::fmt;

use rand::Rng;

use crate::augment::raster::Raster;
use crate::augment::transform::{apply_basic, BasicTransform, TransformId, POOL_SIZE};
use crate::error::{Error, Result};
use crate::numcore::rng::rng_from_seed;

/// Non-empty ordered chain of basic transforms.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeAugmentation {
    transforms: Vec<BasicTransform>,
}

impl CompositeAugmentation {
    pub fn new(transforms: Vec<BasicTransform>) -> Result<Self> {
        if transforms.is_empty() {
            return Err(Error::input("composite augmentation needs at least one transform"));
        }
        Ok(Self { transforms })
    }

    pub fn transforms(&self) -> &[BasicTransform] {
        &self.transforms
    }

    /// Number of chained transforms, `l`.
    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn composition_vector(&self) -> CompositionVector {
        composition_vector(self)
    }
}

impl fmt::Display for CompositeAugmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.transforms.iter().enumerate() {
            if i > 0 {
                f.write_str(" -> ")?;
            }
            let sign = if t.sign() < 0 { '-' } else { '+' };
            write!(f, "{}({sign}{:.2})", t.id(), t.magnitude())?;
        }
        Ok(())
    }
}

/// Multiplicity of each pool transform in a composite; order-insensitive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct CompositionVector([u32; POOL_SIZE]);

impl CompositionVector {
    pub fn from_counts(counts: [u32; POOL_SIZE]) -> Self {
        Self(counts)
    }

    /// One-hot vector for a single transform.
    pub fn unit(id: TransformId) -> Self {
        let mut c = [0; POOL_SIZE];
        c[id.index()] = 1;
        Self(c)
    }

    pub fn counts(&self) -> &[u32; POOL_SIZE] {
        &self.0
    }

    pub fn count(&self, id: TransformId) -> u32 {
        self.0[id.index()]
    }

    /// Σ V_i, which equals the length of the originating composite.
    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Copy with coordinate `i` incremented.
    pub fn incremented(&self, i: usize) -> Self {
        let mut c = self.0;
        c[i] += 1;
        Self(c)
    }

    /// Componentwise `self ≤ other`.
    pub fn dominated_by(&self, other: &Self) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }
}

pub fn composition_vector(a: &CompositeAugmentation) -> CompositionVector {
    let mut counts = [0u32; POOL_SIZE];
    for t in &a.transforms {
        counts[t.id().index()] += 1;
    }
    CompositionVector(counts)
}

/// Draws `len` transforms uniformly with replacement from the pool, each with
/// the given magnitude and a uniformly random sign.
pub fn sample_composite_with<R: Rng + ?Sized>(len: usize, magnitude: f64, rng: &mut R) -> Result<CompositeAugmentation> {
    if len == 0 {
        return Err(Error::input("composite length must be >= 1"));
    }
    let mut transforms = Vec::with_capacity(len);
    for _ in 0..len {
        let id = TransformId::ALL[rng.random_range(0..POOL_SIZE)];
        let sign = if rng.random::<bool>() { 1 } else { -1 };
        transforms.push(BasicTransform::new(id, magnitude, sign)?);
    }
    CompositeAugmentation::new(transforms)
}

/// Seeded form of [`sample_composite_with`].
pub fn sample_composite(len: usize, magnitude: f64, seed: u64) -> Result<CompositeAugmentation> {
    sample_composite_with(len, magnitude, &mut rng_from_seed(seed))
}

/// Applies the transforms one after another in list order.
pub fn apply_composite(a: &CompositeAugmentation, img: &Raster) -> Result<Raster> {
    let mut out = apply_basic(&a.transforms[0], img)?;
    for t in &a.transforms[1..] {
        out = apply_basic(t, &out)?;
    }
    Ok(out)
}
