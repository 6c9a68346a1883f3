use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::losses::{cross_entropy, CrossEntropyOutput};
use crate::numcore::{affine_backward, affine_forward, Matrix, ParamSet};

/// Affine classifier on backbone features.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProbe {
    params: ParamSet<f64>,
}

pub struct ProbeLoss {
    pub ce: CrossEntropyOutput<f64>,
    pub grads: ParamSet<f64>,
    /// ∂CE/∂features; only used to differentiate through the encoder in
    /// analysis code, never during training.
    pub grad_features: Matrix<f64>,
}

impl LinearProbe {
    /// Zero-initialised classifier.
    pub fn new(feature_dim: usize, classes: usize) -> Result<Self> {
        if feature_dim == 0 || classes < 2 {
            return Err(Error::input("probe needs features and at least two classes"));
        }
        let mut params = ParamSet::new();
        params.push("weight", Matrix::zeros(feature_dim, classes))?;
        params.push("bias", Matrix::zeros(1, classes))?;
        Ok(Self { params })
    }

    pub fn from_params(params: ParamSet<f64>) -> Result<Self> {
        let w = params.require("weight")?;
        let b = params.require("bias")?;
        if b.rows() != 1 || b.cols() != w.cols() || params.num_segments() != 2 {
            return Err(Error::dim("probe parameters must be weight (d×C) and bias (1×C)"));
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &ParamSet<f64> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<f64> {
        &mut self.params
    }

    pub fn classes(&self) -> usize {
        self.params.require("weight").expect("layout").cols()
    }

    pub fn logits(&self, features: &Matrix<f64>) -> Result<Matrix<f64>> {
        affine_forward(
            features,
            self.params.require("weight")?,
            self.params.require("bias")?.data(),
        )
    }

    pub fn loss(&self, features: &Matrix<f64>, labels: &[usize]) -> Result<ProbeLoss> {
        let ce = cross_entropy(&self.logits(features)?, labels)?;
        let w = self.params.require("weight")?;
        let g = affine_backward(features, w, &ce.grad_logits, true)?;
        let mut grads = ParamSet::new();
        grads.push("weight", g.weights)?;
        grads.push("bias", Matrix::row_vector(g.bias))?;
        Ok(ProbeLoss {
            ce,
            grads,
            grad_features: g.input.expect("requested"),
        })
    }

    pub fn predict(&self, features: &Matrix<f64>) -> Result<Vec<usize>> {
        let logits = self.logits(features)?;
        Ok(logits
            .iter_rows()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc })
                    .0
            })
            .collect())
    }
}

/// Probe cross-entropy through frozen backbone features.
pub fn probe_ce(encoder: &Encoder<f64>, probe: &LinearProbe, inputs: &Matrix<f64>, labels: &[usize]) -> Result<CrossEntropyOutput<f64>> {
    Ok(probe.loss(&encoder.features(inputs)?, labels)?.ce)
}

/// Gradient of the probe cross-entropy with respect to the encoder parameters.
pub fn probe_ce_encoder_grad(
    encoder: &Encoder<f64>,
    probe: &LinearProbe,
    inputs: &Matrix<f64>,
    labels: &[usize],
) -> Result<(f64, ParamSet<f64>)> {
    let pass = encoder.forward(inputs)?;
    let loss = probe.loss(&pass.features, labels)?;
    Ok((loss.ce.loss, encoder.backward(&pass, None, Some(&loss.grad_features))?))
}
