use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct CrossEntropyOutput<T> {
    pub loss: T,
    /// ∂loss/∂logits: (softmax − one-hot) / batch.
    pub grad_logits: Matrix<T>,
    /// Fraction of rows whose arg-max equals the label.
    pub accuracy: f64,
}

pub fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
        return Err(Error::input(format!("label {l} at index {i} outside [0, {classes})")));
    }
    Ok(())
}

/// Mean negative log-softmax of the true class.
pub fn cross_entropy<T: Scalar>(logits: &Matrix<T>, labels: &[usize]) -> Result<CrossEntropyOutput<T>> {
    if logits.rows() != labels.len() {
        return Err(Error::dim(format!(
            "{} logit rows but {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::input("cross entropy needs a non-empty batch"));
    }
    check_labels(labels, logits.cols())?;
    let n = T::from_count(labels.len());
    let mut loss = T::zero();
    let mut correct = 0usize;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let (argmax, max) = row
            .iter()
            .copied()
            .enumerate()
            .fold((0, T::neg_infinity()), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
        if argmax == y {
            correct += 1;
        }
        let g = grad.row_mut(i);
        let mut denom = T::zero();
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - max).exp();
            denom += *gj;
        }
        loss += denom.ln() + max - row[y];
        for gj in g.iter_mut() {
            *gj = *gj / denom / n;
        }
        g[y] -= T::one() / n;
    }
    Ok(CrossEntropyOutput {
        loss: loss / n,
        grad_logits: grad,
        accuracy: correct as f64 / labels.len() as f64,
    })
}
