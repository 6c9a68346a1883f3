use crate::augment::{apply_composite, sample_composite, CompositionVector, Raster};
use crate::bilevel::BilevelConfig;
use crate::encoder::rasters_to_matrix;
use crate::error::{Error, Result};
use crate::numcore::rng::{derive_seed, stream};
use crate::numcore::Matrix;

/// Everything the unsupervised objective needs for one minibatch.
#[derive(Clone, Debug)]
pub struct UnsupViews {
    /// Weakly augmented views fed to the query encoder.
    pub queries: Matrix<f64>,
    /// Independently augmented views fed to the key encoder.
    pub keys: Matrix<f64>,
    /// Pristine images.
    pub raws: Matrix<f64>,
    /// Composite-augmented pristine images.
    pub augmented: Matrix<f64>,
    pub compositions: Vec<CompositionVector>,
    /// Composite length of each sample.
    pub lengths: Vec<usize>,
}

impl UnsupViews {
    pub fn batch_size(&self) -> usize {
        self.raws.rows()
    }

    /// Sample indices of each configured length, in configuration order;
    /// lengths with no sample are omitted.
    pub fn groups(&self, lengths: &[usize]) -> Vec<(usize, Vec<usize>)> {
        lengths
            .iter()
            .map(|&l| {
                let idx: Vec<usize> = (0..self.lengths.len()).filter(|&i| self.lengths[i] == l).collect();
                (l, idx)
            })
            .filter(|(_, idx)| !idx.is_empty())
            .collect()
    }
}

/// Per-sample seed counter for `sample` of iteration `step`.
fn counter(step: usize, sample: usize) -> u64 {
    ((step as u64) << 24) | sample as u64
}

/// Builds all views of `images` for global iteration `step`.
pub fn build_views(cfg: &BilevelConfig, images: &[&Raster], step: usize) -> Result<UnsupViews> {
    if images.is_empty() {
        return Err(Error::input("empty unlabeled batch"));
    }
    let mut queries = Vec::with_capacity(images.len());
    let mut keys = Vec::with_capacity(images.len());
    let mut augmented = Vec::with_capacity(images.len());
    let mut compositions = Vec::with_capacity(images.len());
    let mut lengths = Vec::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        let c = counter(step, i);
        queries.push(cfg.weak.apply(img, derive_seed(cfg.seed, stream::WEAK_QUERY, c)));
        keys.push(cfg.weak.apply(img, derive_seed(cfg.seed, stream::WEAK_KEY, c)));
        let len = cfg.length_for(i);
        let a = sample_composite(len, cfg.magnitude, derive_seed(cfg.seed, stream::COMPOSITE, c))?;
        augmented.push(apply_composite(&a, img)?);
        compositions.push(a.composition_vector());
        lengths.push(len);
    }
    let refs = |v: &[Raster]| -> Result<Matrix<f64>> { rasters_to_matrix(&v.iter().collect::<Vec<_>>()) };
    Ok(UnsupViews {
        queries: refs(&queries)?,
        keys: refs(&keys)?,
        raws: rasters_to_matrix(images)?,
        augmented: refs(&augmented)?,
        compositions,
        lengths,
    })
}
