//! Partially monotonic network predicting the optimal latent deviation from a
//! composition vector.
//!
//! Architecture: 14 → h → h → 1 with tanh everywhere, including the output,
//! so predictions lie in (−1, 1). Every weight is `softplus(raw)`, hence
//! non-negative, and layers fed by hidden units further divide by their
//! fan-in. A network with non-negative weights and increasing activations is
//! non-decreasing in its input; feeding `u = −V` makes the prediction
//! non-increasing in every count `V_i`, whatever the raw parameters are.

use rand::Rng;

use crate::augment::{CompositionVector, POOL_SIZE};
use crate::error::{Error, Result};
use crate::numcore::{affine_forward, sigmoid, softplus, Activation, Matrix, ParamSet};
use crate::scalar::Scalar;

const LAYERS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PmnnConfig {
    pub hidden: usize,
    /// Raw weights are drawn from U(−r, r).
    pub init_range: f64,
}

impl Default for PmnnConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            init_range: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pmnn<T> {
    hidden: usize,
    params: ParamSet<T>,
}

/// Forward intermediates for the backward pass.
struct PmnnPass<T> {
    inputs: Vec<Matrix<T>>,
    pre: Vec<Matrix<T>>,
    effective: Vec<Matrix<T>>,
    output: Matrix<T>,
}

fn raw_name(layer: usize) -> String {
    format!("layer{layer}.raw_weight")
}

fn bias_name(layer: usize) -> String {
    format!("layer{layer}.bias")
}

impl<T: Scalar> Pmnn<T> {
    pub fn new<R: Rng + ?Sized>(config: PmnnConfig, rng: &mut R) -> Result<Self> {
        if config.hidden == 0 {
            return Err(Error::input("PMNN hidden width must be >= 1"));
        }
        let h = config.hidden;
        let r = config.init_range;
        let mut params = ParamSet::new();
        for (layer, (fan_in, fan_out)) in [(POOL_SIZE, h), (h, h), (h, 1)].into_iter().enumerate() {
            params.push(raw_name(layer), Matrix::uniform(fan_in, fan_out, -r, r, rng))?;
            params.push(bias_name(layer), Matrix::zeros(1, fan_out))?;
        }
        Ok(Self { hidden: h, params })
    }

    pub fn from_params(params: ParamSet<T>) -> Result<Self> {
        let first = params.require(&raw_name(0))?;
        if first.rows() != POOL_SIZE {
            return Err(Error::dim(format!(
                "PMNN input layer expects {POOL_SIZE} rows, got {}",
                first.rows()
            )));
        }
        let h = first.cols();
        let mut expected = ParamSet::<T>::new();
        for (layer, (fan_in, fan_out)) in [(POOL_SIZE, h), (h, h), (h, 1)].into_iter().enumerate() {
            expected.push(raw_name(layer), Matrix::zeros(fan_in, fan_out))?;
            expected.push(bias_name(layer), Matrix::zeros(1, fan_out))?;
        }
        expected.require_same_layout(&params)?;
        Ok(Self { hidden: h, params })
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn with_params(&self, params: ParamSet<T>) -> Result<Self> {
        Self::from_params(params)
    }

    /// Divisor applied to a layer's softplus weights.
    fn layer_scale(&self, layer: usize) -> T {
        if layer == 0 {
            T::one()
        } else {
            T::from_count(self.hidden)
        }
    }

    /// Non-negative weights actually used by `layer`.
    pub fn effective_weights(&self, layer: usize) -> Result<Matrix<T>> {
        let scale = self.layer_scale(layer);
        Ok(self.params.require(&raw_name(layer))?.map(|w| softplus(w) / scale))
    }

    fn forward(&self, inputs: &Matrix<T>) -> Result<PmnnPass<T>> {
        if inputs.cols() != POOL_SIZE {
            return Err(Error::dim(format!(
                "PMNN input has {} entries, expected {POOL_SIZE}",
                inputs.cols()
            )));
        }
        let mut pass = PmnnPass {
            inputs: Vec::with_capacity(LAYERS),
            pre: Vec::with_capacity(LAYERS),
            effective: Vec::with_capacity(LAYERS),
            output: Matrix::zeros(0, 0),
        };
        let mut x = inputs.map(|v| -v);
        for layer in 0..LAYERS {
            let w = self.effective_weights(layer)?;
            let pre = affine_forward(&x, &w, self.params.require(&bias_name(layer))?.data())?;
            pass.inputs.push(x);
            x = Activation::Tanh.forward(&pre);
            pass.pre.push(pre);
            pass.effective.push(w);
        }
        pass.output = x;
        Ok(pass)
    }

    fn batch_matrix(batch: &[CompositionVector]) -> Matrix<T> {
        Matrix::from_fn(batch.len(), POOL_SIZE, |r, c| T::lit(f64::from(batch[r].counts()[c])))
    }

    /// Prediction for one composition vector; in (−1, 1).
    pub fn predict(&self, v: &CompositionVector) -> Result<T> {
        Ok(self.forward(&Self::batch_matrix(std::slice::from_ref(v)))?.output.get(0, 0))
    }

    pub fn predict_batch(&self, batch: &[CompositionVector]) -> Result<Vec<T>> {
        Ok(self.forward(&Self::batch_matrix(batch))?.output.into_data())
    }

    /// Prediction for an arbitrary real-valued 14-vector (used by property tests
    /// and for probing the network between integer counts).
    pub fn predict_raw(&self, v: &[T]) -> Result<T> {
        let m = Matrix::new(1, v.len(), v.to_vec())?;
        Ok(self.forward(&m)?.output.get(0, 0))
    }

    /// Mean prediction over `batch` and its gradient with respect to the raw parameters.
    pub fn mean_and_grad(&self, batch: &[CompositionVector]) -> Result<(T, ParamSet<T>)> {
        if batch.is_empty() {
            return Err(Error::input("PMNN gradient needs a non-empty batch"));
        }
        let pass = self.forward(&Self::batch_matrix(batch))?;
        let n = T::from_count(batch.len());
        let mean = pass.output.sum() / n;
        let mut grads = self.params.zeros_like();
        let mut upstream = Matrix::from_fn(batch.len(), 1, |_, _| T::one() / n);
        for layer in (0..LAYERS).rev() {
            let grad_pre = Activation::Tanh.backward(&pass.pre[layer], &upstream);
            let grad_eff = pass.inputs[layer].matmul_tn(&grad_pre)?;
            let scale = self.layer_scale(layer);
            let raw = self.params.require(&raw_name(layer))?;
            // d softplus(r)/dr = sigmoid(r)
            let grad_raw = raw.zip_map(&grad_eff, |r, g| g * sigmoid(r) / scale)?;
            *grads.get_mut(&raw_name(layer)).expect("layout") = grad_raw;
            *grads.get_mut(&bias_name(layer)).expect("layout") = Matrix::row_vector(grad_pre.column_sums());
            if layer > 0 {
                upstream = grad_pre.matmul_nt(&pass.effective[layer])?;
            }
        }
        Ok((mean, grads))
    }

    /// Gradient of the batch-mean prediction with respect to the raw parameters.
    pub fn grad_wrt_params(&self, batch: &[CompositionVector]) -> Result<ParamSet<T>> {
        Ok(self.mean_and_grad(batch)?.1)
    }
}
