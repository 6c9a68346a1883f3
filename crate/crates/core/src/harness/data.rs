use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::augment::Raster;
use crate::error::{Error, Result};
use crate::numcore::rng::{derived_rng, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    UnlabeledTrain,
    LabeledTrain,
    EvalTrain,
    EvalTest,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::UnlabeledTrain, Split::LabeledTrain, Split::EvalTrain, Split::EvalTest];
}

/// Fractions of each class assigned to the labeled, eval-train and eval-test
/// splits; the remainder is unlabeled training data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub labeled: f64,
    pub eval_train: f64,
    pub eval_test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            labeled: 0.1,
            eval_train: 0.25,
            eval_test: 0.25,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.labeled, self.eval_train, self.eval_test];
        if parts.iter().any(|f| !(*f > 0.0 && *f < 1.0)) || parts.iter().sum::<f64>() >= 1.0 {
            return Err(Error::input(format!(
                "split fractions {parts:?} must each lie in (0, 1) and sum to < 1"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Vec<Raster>,
    labels: Option<Vec<usize>>,
    classes: usize,
    splits: Option<Vec<Split>>,
}

impl Dataset {
    pub fn new(images: Vec<Raster>, labels: Option<Vec<usize>>, classes: usize) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::input("dataset has no images"));
        }
        let dims = images[0].dims();
        if images.iter().any(|r| r.dims() != dims) {
            return Err(Error::dim("all images of a dataset must share dimensions"));
        }
        if let Some(l) = &labels {
            if l.len() != images.len() {
                return Err(Error::dim(format!("{} images but {} labels", images.len(), l.len())));
            }
            crate::losses::check_labels(l, classes)?;
        }
        Ok(Self {
            images,
            labels,
            classes,
            splits: None,
        })
    }

    pub fn images(&self) -> &[Raster] {
        &self.images
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// (height, width, channels) of every image.
    pub fn dims(&self) -> (usize, usize, usize) {
        self.images[0].dims()
    }

    pub fn splits(&self) -> Option<&[Split]> {
        self.splits.as_deref()
    }

    /// Stratified seeded assignment of every sample to one split.
    pub fn assign_splits(&mut self, spec: SplitSpec, seed: u64) -> Result<()> {
        spec.validate()?;
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::input("splitting requires labels"))?;
        let mut splits = vec![Split::UnlabeledTrain; self.images.len()];
        for c in 0..self.classes {
            let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            members.shuffle(&mut derived_rng(seed, stream::SPLIT, c as u64));
            let n = members.len() as f64;
            let counts = [
                (Split::EvalTest, (spec.eval_test * n).round() as usize),
                (Split::EvalTrain, (spec.eval_train * n).round() as usize),
                (Split::LabeledTrain, (spec.labeled * n).round() as usize),
            ];
            let mut it = members.into_iter();
            for (split, count) in counts {
                for i in it.by_ref().take(count) {
                    splits[i] = split;
                }
            }
        }
        self.splits = Some(splits);
        Ok(())
    }

    /// Images and labels (when present) of one split.
    pub fn split(&self, which: Split) -> Result<(Vec<Raster>, Vec<usize>)> {
        let splits = self
            .splits
            .as_ref()
            .ok_or_else(|| Error::State("dataset has no split assignment".into()))?;
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for (i, s) in splits.iter().enumerate() {
            if *s == which {
                images.push(self.images[i].clone());
                if let Some(l) = &self.labels {
                    labels.push(l[i]);
                }
            }
        }
        Ok((images, labels))
    }
}

/// Noise-free class template: a Gaussian bump on the diagonal plus an
/// intensity ramp whose slope depends on the class.
pub fn class_template(class: usize, classes: usize, height: usize, width: usize) -> Vec<f64> {
    let c = class as f64;
    let n = classes as f64;
    let cy = (c + 0.5) / n * height as f64;
    let cx = (c + 0.5) / n * width as f64;
    let s = 0.12 * height.min(width) as f64;
    let slope = 0.3 * c / (n - 1.0).max(1.0);
    let mut out = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
            let bump = (-(dy * dy + dx * dx) / (2.0 * s * s)).exp();
            let ramp = slope * (y as f64 + 0.5) / height as f64;
            out.push((0.15 + 0.6 * bump + ramp).clamp(0.0, 1.0));
        }
    }
    out
}

/// `per_class` grayscale samples of each class: template plus i.i.d. N(0, σ²)
/// pixel noise, clamped to [0, 1]. Samples are ordered class by class.
pub fn synth_dataset(classes: usize, per_class: usize, height: usize, width: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::input("synthetic dataset needs at least two classes"));
    }
    if per_class == 0 || height == 0 || width == 0 {
        return Err(Error::input("synthetic dataset sizes must be non-zero"));
    }
    let normal = Normal::new(0.0, noise).map_err(|e| Error::input(format!("noise level {noise}: {e}")))?;
    let mut rng = derived_rng(seed, stream::DATASET, 0);
    let mut images = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        let t = class_template(c, classes, height, width);
        for _ in 0..per_class {
            let data = t
                .iter()
                .map(|&v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0))
                .collect();
            images.push(Raster::new(height, width, 1, data)?);
            labels.push(c);
        }
    }
    Dataset::new(images, Some(labels), classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_free_classes_are_constant() {
        let d = synth_dataset(3, 4, 8, 8, 0.0, 1).unwrap();
        for c in 0..3 {
            let first = &d.images()[c * 4];
            assert!(d.images()[c * 4..(c + 1) * 4].iter().all(|r| r == first));
        }
        assert_ne!(d.images()[0], d.images()[4]);
    }

    #[test]
    fn nearest_template_is_perfect_at_low_noise() {
        let (classes, h, w) = (8, 32, 32);
        let d = synth_dataset(classes, 25, h, w, 0.05, 7).unwrap();
        let templates: Vec<_> = (0..classes).map(|c| class_template(c, classes, h, w)).collect();
        for (img, &y) in d.images().iter().zip(d.labels().unwrap()) {
            let best = (0..classes)
                .min_by(|&a, &b| {
                    let da: f64 = img.data().iter().zip(&templates[a]).map(|(p, q)| (p - q).powi(2)).sum();
                    let db: f64 = img.data().iter().zip(&templates[b]).map(|(p, q)| (p - q).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            assert_eq!(best, y);
        }
    }

    #[test]
    fn splits_are_disjoint_and_stratified() {
        let mut d = synth_dataset(4, 20, 4, 4, 0.1, 2).unwrap();
        d.assign_splits(SplitSpec::default(), 3).unwrap();
        let mut total = 0;
        for s in Split::ALL {
            let (imgs, labels) = d.split(s).unwrap();
            total += imgs.len();
            for c in 0..4 {
                let n = labels.iter().filter(|&&l| l == c).count();
                let expected = match s {
                    Split::LabeledTrain => 2,
                    Split::EvalTrain | Split::EvalTest => 5,
                    Split::UnlabeledTrain => 8,
                };
                assert_eq!(n, expected);
            }
        }
        assert_eq!(total, d.len());
    }

    #[test]
    fn deterministic_and_validated() {
        assert_eq!(
            synth_dataset(2, 3, 5, 5, 0.2, 9).unwrap(),
            synth_dataset(2, 3, 5, 5, 0.2, 9).unwrap()
        );
        assert!(synth_dataset(1, 3, 5, 5, 0.2, 9).is_err());
        assert!(synth_dataset(2, 0, 5, 5, 0.2, 9).is_err());
    }
}
