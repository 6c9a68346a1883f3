//! Named parameter collections.

use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::scalar::Scalar;

/// One named block of parameters. Bias vectors are stored as 1×n matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment<T> {
    pub name: String,
    pub value: Matrix<T>,
}

/// Ordered collection of named parameter segments.
///
/// The flattened view concatenates segments in insertion order, each one
/// row-major. Gradients are represented by a `ParamSet` with the same layout.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T> {
    segments: Vec<Segment<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self { segments: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Matrix<T>) -> Result<()> {
        let name = name.into();
        if self.segments.iter().any(|s| s.name == name) {
            return Err(Error::input(format!("duplicate parameter segment `{name}`")));
        }
        self.segments.push(Segment { name, value });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Matrix<T>> {
        self.segments.iter().find(|s| s.name == name).map(|s| &s.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix<T>> {
        self.segments
            .iter_mut()
            .find(|s| s.name == name)
            .map(|s| &mut s.value)
    }

    /// Like [`get`](Self::get) but reports a missing segment as an error.
    pub fn require(&self, name: &str) -> Result<&Matrix<T>> {
        self.get(name)
            .ok_or_else(|| Error::State(format!("missing parameter segment `{name}`")))
    }

    pub fn segments(&self) -> &[Segment<T>] {
        &self.segments
    }

    pub fn segments_mut(&mut self) -> &mut [Segment<T>] {
        &mut self.segments
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.segments.iter().map(|s| s.name.as_str())
    }

    pub fn num_params(&self) -> usize {
        self.segments.iter().map(|s| s.value.len()).sum()
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            segments: self
                .segments
                .iter()
                .map(|s| Segment {
                    name: s.name.clone(),
                    value: Matrix::zeros(s.value.rows(), s.value.cols()),
                })
                .collect(),
        }
    }

    /// True when both sets have the same segment names and shapes in the same order.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.segments.len() == other.segments.len()
            && self
                .segments
                .iter()
                .zip(&other.segments)
                .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape())
    }

    pub fn require_same_layout(&self, other: &Self) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::dim("parameter sets have different layouts"))
        }
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for s in &self.segments {
            out.extend_from_slice(s.value.data());
        }
        out
    }

    /// Overwrites every parameter from a flat vector in [`flatten`](Self::flatten) order.
    pub fn assign_flat(&mut self, flat: &[T]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::dim(format!(
                "flat vector of length {} for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for s in &mut self.segments {
            let n = s.value.len();
            s.value.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Mutable access to one scalar by its flat index.
    pub fn flat_mut(&mut self, mut index: usize) -> Option<&mut T> {
        for s in &mut self.segments {
            if index < s.value.len() {
                return s.value.data_mut().get_mut(index);
            }
            index -= s.value.len();
        }
        None
    }

    /// In-place `self += alpha · other`.
    pub fn add_scaled(&mut self, other: &Self, alpha: T) -> Result<()> {
        self.require_same_layout(other)?;
        for (a, b) in self.segments.iter_mut().zip(&other.segments) {
            a.value.add_scaled(&b.value, alpha)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: T) {
        for s in &mut self.segments {
            for v in s.value.data_mut() {
                *v *= alpha;
            }
        }
    }

    pub fn dot(&self, other: &Self) -> Result<T> {
        self.require_same_layout(other)?;
        let mut acc = T::zero();
        for (a, b) in self.segments.iter().zip(&other.segments) {
            acc += a.value.frobenius_dot(&b.value)?;
        }
        Ok(acc)
    }

    pub fn norm(&self) -> T {
        self.segments
            .iter()
            .flat_map(|s| s.value.data())
            .fold(T::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.segments.iter().all(|s| s.value.is_finite())
    }

    /// Copies segments into a new set, prefixing each name.
    pub fn prefixed(&self, prefix: &str) -> Self {
        Self {
            segments: self
                .segments
                .iter()
                .map(|s| Segment {
                    name: format!("{prefix}{}", s.name),
                    value: s.value.clone(),
                })
                .collect(),
        }
    }

    /// Appends every segment of `other`, keeping names unique.
    pub fn extend(&mut self, other: Self) -> Result<()> {
        for s in other.segments {
            self.push(s.name, s.value)?;
        }
        Ok(())
    }

    /// Segments whose name starts with `prefix`, with the prefix stripped.
    pub fn strip_prefix(&self, prefix: &str) -> Self {
        Self {
            segments: self
                .segments
                .iter()
                .filter_map(|s| {
                    s.name.strip_prefix(prefix).map(|rest| Segment {
                        name: rest.to_string(),
                        value: s.value.clone(),
                    })
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamSet<f64> {
        let mut p = ParamSet::new();
        p.push("w", Matrix::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap())
            .unwrap();
        p.push("b", Matrix::row_vector(vec![5.0, 6.0])).unwrap();
        p
    }

    #[test]
    fn flatten_order_is_insertion_then_row_major() {
        let p = sample();
        assert_eq!(p.flatten(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let mut q = p.zeros_like();
        q.assign_flat(&p.flatten()).unwrap();
        assert_eq!(p, q);
        *q.flat_mut(4).unwrap() = -1.0;
        assert_eq!(q.get("b").unwrap().data(), &[-1.0, 6.0]);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut p = sample();
        assert!(p.push("w", Matrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn layout_checks() {
        let p = sample();
        let mut other = ParamSet::new();
        other.push("w", Matrix::zeros(2, 2)).unwrap();
        assert!(!p.same_layout(&other));
        assert!(p.dot(&other).is_err());
        assert_eq!(p.dot(&p).unwrap(), 91.0);
    }

    #[test]
    fn prefix_round_trip() {
        let p = sample();
        let q = p.prefixed("enc.").strip_prefix("enc.");
        assert_eq!(p, q);
    }
}
