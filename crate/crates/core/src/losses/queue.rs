use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::numcore::{dot, Matrix};
use crate::scalar::Scalar;

/// Tolerance on ‖z‖ − 1 for admission into the queue.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// Fixed-capacity FIFO of unit-norm negative embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct NegativeQueue<T> {
    capacity: usize,
    dim: usize,
    entries: VecDeque<Vec<T>>,
}

impl<T: Scalar> NegativeQueue<T> {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 || dim == 0 {
            return Err(Error::input("queue capacity and dimension must be non-zero"));
        }
        Ok(Self {
            capacity,
            dim,
            entries: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &[T]> {
        self.entries.iter().map(|v| v.as_slice())
    }

    /// Appends the rows of `batch`, evicting the oldest entries past capacity.
    ///
    /// The whole batch is validated before anything is enqueued.
    pub fn push(&mut self, batch: &Matrix<T>) -> Result<()> {
        if batch.cols() != self.dim {
            return Err(Error::dim(format!(
                "queue holds {}-dim embeddings, got {}",
                self.dim,
                batch.cols()
            )));
        }
        for (i, row) in batch.iter_rows().enumerate() {
            let norm = dot(row, row).sqrt().to_f64_lossy();
            if !((norm - 1.0).abs() <= UNIT_NORM_TOL) {
                return Err(Error::input(format!("queue entry {i} has norm {norm}, expected 1")));
            }
        }
        for row in batch.iter_rows() {
            if self.entries.len() == self.capacity {
                self.entries.pop_front();
            }
            self.entries.push_back(row.to_vec());
        }
        Ok(())
    }

    /// Queue contents as a fill × dim matrix, oldest first.
    pub fn to_matrix(&self) -> Matrix<T> {
        let mut data = Vec::with_capacity(self.len() * self.dim);
        for e in &self.entries {
            data.extend_from_slice(e);
        }
        Matrix::new(self.len(), self.dim, data).expect("queue entries are finite")
    }
}

/// Functional form: pushes `batch` and returns the queue.
pub fn queue_push<T: Scalar>(mut queue: NegativeQueue<T>, batch: &Matrix<T>) -> Result<NegativeQueue<T>> {
    queue.push(batch)?;
    Ok(queue)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(angle: f64) -> Vec<f64> {
        vec![angle.cos(), angle.sin()]
    }

    #[test]
    fn fifo_eviction() {
        let mut q = NegativeQueue::new(2, 2).unwrap();
        for a in [0.1, 0.2, 0.3] {
            q.push(&Matrix::row_vector(unit(a))).unwrap();
        }
        let contents: Vec<Vec<f64>> = q.iter().map(|r| r.to_vec()).collect();
        assert_eq!(contents, vec![unit(0.2), unit(0.3)]);
    }

    #[test]
    fn full_batch_replaces_queue() {
        let mut q = NegativeQueue::new(3, 2).unwrap();
        q.push(&Matrix::from_rows(&[unit(0.0), unit(1.0)]).unwrap()).unwrap();
        let batch = Matrix::from_rows(&[unit(2.0), unit(3.0), unit(4.0)]).unwrap();
        q.push(&batch).unwrap();
        assert_eq!(q.to_matrix(), batch);
    }

    #[test]
    fn rejects_non_unit_rows_atomically() {
        let mut q = NegativeQueue::new(3, 2).unwrap();
        let batch = Matrix::from_rows(&[unit(0.5), vec![1.0, 1.0]]).unwrap();
        assert!(q.push(&batch).is_err());
        assert!(q.is_empty());
        assert!(q.push(&Matrix::row_vector(vec![1.0, 0.0, 0.0])).is_err());
    }
}
