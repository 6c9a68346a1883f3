//! Affine layer forward and backward passes.

use crate::error::{Error, Result};
use crate::numcore::Matrix;
use crate::scalar::Scalar;

/// `input · weights + bias`, with the bias broadcast over rows.
pub fn affine_forward<T: Scalar>(input: &Matrix<T>, weights: &Matrix<T>, bias: &[T]) -> Result<Matrix<T>> {
    if bias.len() != weights.cols() {
        return Err(Error::dim(format!(
            "bias length {} for weights {}x{}",
            bias.len(),
            weights.rows(),
            weights.cols()
        )));
    }
    input.matmul(weights)?.add_row_broadcast(bias)
}

pub struct AffineGrads<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
    /// Gradient with respect to the layer input; `None` when not requested.
    pub input: Option<Matrix<T>>,
}

/// Backward pass of [`affine_forward`] given the upstream gradient.
pub fn affine_backward<T: Scalar>(
    input: &Matrix<T>,
    weights: &Matrix<T>,
    grad_out: &Matrix<T>,
    need_input_grad: bool,
) -> Result<AffineGrads<T>> {
    if grad_out.rows() != input.rows() || grad_out.cols() != weights.cols() {
        return Err(Error::dim(format!(
            "upstream gradient {:?} for output {}x{}",
            grad_out.shape(),
            input.rows(),
            weights.cols()
        )));
    }
    let grad_w = input.matmul_tn(grad_out)?;
    let grad_b = grad_out.column_sums();
    let grad_in = if need_input_grad {
        Some(grad_out.matmul_nt(weights)?)
    } else {
        None
    };
    Ok(AffineGrads {
        weights: grad_w,
        bias: grad_b,
        input: grad_in,
    })
}
