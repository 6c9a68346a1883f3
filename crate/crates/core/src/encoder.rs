//! Query/momentum encoders: an MLP backbone on flattened rasters followed by a
//! two-layer projection head whose output is ℓ2-normalised onto the unit sphere.

use rand::Rng;

use crate::augment::{apply_composite, CompositeAugmentation, Raster};
use crate::error::{Error, Result};
use crate::numcore::{affine_backward, affine_forward, dot, Activation, Matrix, ParamSet};
use crate::scalar::Scalar;

/// Projections with a smaller norm are treated as degenerate.
pub const NORM_EPS: f64 = 1e-12;

/// Unit vector substituted for a degenerate projection.
fn fallback_direction<T: Scalar>(dim: usize) -> Vec<T> {
    let mut v = vec![T::zero(); dim];
    v[0] = T::one();
    v
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    /// Flattened input length, H·W·C.
    pub input_dim: usize,
    /// Widths of the ReLU backbone layers; the last one is the feature dimension.
    pub hidden: Vec<usize>,
    pub head_hidden: usize,
    pub embed_dim: usize,
}

impl EncoderConfig {
    pub fn new(input_dim: usize, hidden: Vec<usize>, head_hidden: usize, embed_dim: usize) -> Result<Self> {
        let cfg = Self {
            input_dim,
            hidden,
            head_hidden,
            embed_dim,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.head_hidden == 0 || self.embed_dim == 0 {
            return Err(Error::input("encoder dimensions must be non-zero"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::input("encoder needs at least one non-zero backbone layer"));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        *self.hidden.last().expect("validated non-empty")
    }

    /// 32×32 grayscale input, backbone 256→128, head 128→64→32.
    pub fn desk_default() -> Self {
        Self {
            input_dim: 32 * 32,
            hidden: vec![256, 128],
            head_hidden: 64,
            embed_dim: 32,
        }
    }

    fn layer_dims(&self) -> Vec<(String, usize, usize)> {
        let mut dims = Vec::new();
        let mut fan_in = self.input_dim;
        for (i, &w) in self.hidden.iter().enumerate() {
            dims.push((format!("backbone.{i}"), fan_in, w));
            fan_in = w;
        }
        dims.push(("head.0".to_string(), fan_in, self.head_hidden));
        dims.push(("head.1".to_string(), self.head_hidden, self.embed_dim));
        dims
    }
}

/// Unit-norm embedding vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding<T>(Vec<T>);

impl<T: Scalar> Embedding<T> {
    /// Normalises `v`. A norm below [`NORM_EPS`] yields the first basis
    /// vector and a `true` guard flag.
    pub fn normalize(v: Vec<T>) -> (Self, bool) {
        let n = dot(&v, &v).sqrt();
        if !(n >= T::lit(NORM_EPS)) {
            return (Self(fallback_direction(v.len())), true);
        }
        (Self(v.into_iter().map(|x| x / n).collect()), false)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &Self) -> T {
        dot(&self.0, &other.0)
    }
}

/// Intermediate values of a batched forward pass, kept for the backward pass.
#[derive(Clone, Debug)]
pub struct EncoderPass<T> {
    /// Input to every affine layer, in layer order.
    layer_inputs: Vec<Matrix<T>>,
    /// Pre-activation outputs of every affine layer.
    pre_activations: Vec<Matrix<T>>,
    /// Backbone output (batch × feature_dim).
    pub features: Matrix<T>,
    /// Row norms of the projection before normalisation; zero for guarded rows.
    norms: Vec<T>,
    /// Rows whose projection norm fell below [`NORM_EPS`]; they embed to the
    /// first basis vector and pass no gradient.
    pub guarded_rows: usize,
    /// Normalised embeddings (batch × embed_dim).
    pub embeddings: Matrix<T>,
}

#[derive(Clone, Debug)]
pub struct Encoder<T> {
    config: EncoderConfig,
    params: ParamSet<T>,
}

impl<T: Scalar> Encoder<T> {
    /// Glorot-uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        for (name, fan_in, fan_out) in config.layer_dims() {
            params.push(format!("{name}.weight"), Matrix::glorot(fan_in, fan_out, rng))?;
            params.push(format!("{name}.bias"), Matrix::zeros(1, fan_out))?;
        }
        Ok(Self { config, params })
    }

    /// Wraps existing parameters after checking them against the configured layout.
    pub fn from_params(config: EncoderConfig, params: ParamSet<T>) -> Result<Self> {
        config.validate()?;
        let mut expected = ParamSet::<T>::new();
        for (name, fan_in, fan_out) in config.layer_dims() {
            expected.push(format!("{name}.weight"), Matrix::zeros(fan_in, fan_out))?;
            expected.push(format!("{name}.bias"), Matrix::zeros(1, fan_out))?;
        }
        expected.require_same_layout(&params)?;
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn with_params(&self, params: ParamSet<T>) -> Result<Self> {
        Self::from_params(self.config.clone(), params)
    }

    fn layer_names(&self) -> Vec<String> {
        self.config.layer_dims().into_iter().map(|(n, _, _)| n).collect()
    }

    /// Batched forward pass over row-flattened inputs.
    pub fn forward(&self, input: &Matrix<T>) -> Result<EncoderPass<T>> {
        if input.cols() != self.config.input_dim {
            return Err(Error::dim(format!(
                "encoder expects inputs of length {}, got {}",
                self.config.input_dim,
                input.cols()
            )));
        }
        let names = self.layer_names();
        let backbone_layers = self.config.hidden.len();
        let mut layer_inputs = Vec::with_capacity(names.len());
        let mut pre_activations = Vec::with_capacity(names.len());
        let mut x = input.clone();
        let mut features = None;
        for (i, name) in names.iter().enumerate() {
            let w = self.params.require(&format!("{name}.weight"))?;
            let b = self.params.require(&format!("{name}.bias"))?;
            let pre = affine_forward(&x, w, b.data())?;
            layer_inputs.push(x);
            let is_last = i + 1 == names.len();
            x = if is_last {
                pre.clone()
            } else {
                Activation::Relu.forward(&pre)
            };
            pre_activations.push(pre);
            if i + 1 == backbone_layers {
                features = Some(x.clone());
            }
        }
        let projection = x;
        let mut norms = Vec::with_capacity(projection.rows());
        let mut guarded_rows = 0;
        let mut embeddings = projection.clone();
        for r in 0..projection.rows() {
            let n = dot(projection.row(r), projection.row(r)).sqrt();
            if !(n >= T::lit(NORM_EPS)) {
                guarded_rows += 1;
                embeddings
                    .row_mut(r)
                    .copy_from_slice(&fallback_direction(projection.cols()));
                norms.push(T::zero());
                continue;
            }
            for v in embeddings.row_mut(r) {
                *v /= n;
            }
            norms.push(n);
        }
        Ok(EncoderPass {
            layer_inputs,
            pre_activations,
            features: features.expect("backbone has at least one layer"),
            norms,
            guarded_rows,
            embeddings,
        })
    }

    /// Backbone features only (no projection head).
    pub fn features(&self, input: &Matrix<T>) -> Result<Matrix<T>> {
        if input.cols() != self.config.input_dim {
            return Err(Error::dim("encoder input width"));
        }
        let mut x = input.clone();
        for i in 0..self.config.hidden.len() {
            let w = self.params.require(&format!("backbone.{i}.weight"))?;
            let b = self.params.require(&format!("backbone.{i}.bias"))?;
            x = Activation::Relu.forward(&affine_forward(&x, w, b.data())?);
        }
        Ok(x)
    }

    /// Gradient of a loss with respect to all parameters, given the loss
    /// gradient on the embeddings and/or on the backbone features.
    pub fn backward(
        &self,
        pass: &EncoderPass<T>,
        grad_embeddings: Option<&Matrix<T>>,
        grad_features: Option<&Matrix<T>>,
    ) -> Result<ParamSet<T>> {
        let names = self.layer_names();
        let backbone_layers = self.config.hidden.len();
        let mut grads = self.params.zeros_like();
        let batch = pass.embeddings.rows();

        // Gradient flowing into the head's last pre-activation.
        let mut upstream: Option<Matrix<T>> = match grad_embeddings {
            Some(gz) => {
                pass.embeddings.require_same_shape(gz)?;
                // z = p/‖p‖  ⇒  ∂L/∂p = (g − z(z·g)) / ‖p‖
                let mut gp = Matrix::zeros(batch, gz.cols());
                for r in 0..batch {
                    let z = pass.embeddings.row(r);
                    let g = gz.row(r);
                    let zg = dot(z, g);
                    let n = pass.norms[r];
                    if n == T::zero() {
                        continue;
                    }
                    for ((o, &zi), &gi) in gp.row_mut(r).iter_mut().zip(z).zip(g) {
                        *o = (gi - zi * zg) / n;
                    }
                }
                Some(gp)
            }
            None => None,
        };

        for i in (0..names.len()).rev() {
            let is_last = i + 1 == names.len();
            // Output of layer i is the features when i is the last backbone layer.
            if i + 1 == backbone_layers {
                if let Some(gf) = grad_features {
                    pass.features.require_same_shape(gf)?;
                    upstream = Some(match upstream {
                        Some(u) => u.add(gf)?,
                        None => gf.clone(),
                    });
                }
            }
            let Some(grad_out) = upstream.take() else {
                continue;
            };
            let grad_pre = if is_last {
                grad_out
            } else {
                Activation::Relu.backward(&pass.pre_activations[i], &grad_out)
            };
            let w = self.params.require(&format!("{}.weight", names[i]))?;
            let g = affine_backward(&pass.layer_inputs[i], w, &grad_pre, i > 0)?;
            *grads
                .get_mut(&format!("{}.weight", names[i]))
                .expect("layout") = g.weights;
            *grads.get_mut(&format!("{}.bias", names[i])).expect("layout") = Matrix::row_vector(g.bias);
            upstream = g.input;
        }
        Ok(grads)
    }

    /// Encodes one raster: backbone features and the unit embedding.
    pub fn encode(&self, img: &Raster) -> Result<(Vec<T>, Embedding<T>)> {
        let pass = self.forward(&rasters_to_matrix(&[img])?)?;
        Ok((
            pass.features.row(0).to_vec(),
            Embedding(pass.embeddings.row(0).to_vec()),
        ))
    }

    /// Parameter-space blend used for the momentum encoder: `self ← m·self + (1−m)·query`.
    pub fn momentum_update(&mut self, query: &Encoder<T>, m: f64) -> Result<()> {
        self.params = momentum_update(&self.params, &query.params, m)?;
        Ok(())
    }
}

/// `m·key + (1−m)·query`, elementwise.
pub fn momentum_update<T: Scalar>(key: &ParamSet<T>, query: &ParamSet<T>, m: f64) -> Result<ParamSet<T>> {
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::input(format!("momentum coefficient {m} outside [0, 1]")));
    }
    key.require_same_layout(query)?;
    let mut out = key.clone();
    let (mk, mq) = (T::lit(m), T::lit(1.0 - m));
    for (o, q) in out.segments_mut().iter_mut().zip(query.segments()) {
        for (ov, &qv) in o.value.data_mut().iter_mut().zip(q.value.data()) {
            *ov = mk * *ov + mq * qv;
        }
    }
    Ok(out)
}

/// Flattens rasters into the rows of an input matrix.
pub fn rasters_to_matrix<T: Scalar>(imgs: &[&Raster]) -> Result<Matrix<T>> {
    let cols = imgs.first().map_or(0, |r| r.len());
    let mut data = Vec::with_capacity(imgs.len() * cols);
    for img in imgs {
        if img.len() != cols {
            return Err(Error::dim("rasters in a batch must share dimensions"));
        }
        data.extend(img.data().iter().map(|&v| T::lit(v)));
    }
    Matrix::new(imgs.len(), cols, data)
}

/// Anything that maps a raster onto the unit sphere.
pub trait Embed<T> {
    fn embed(&self, img: &Raster) -> Result<Embedding<T>>;
}

impl<T: Scalar> Embed<T> for Encoder<T> {
    fn embed(&self, img: &Raster) -> Result<Embedding<T>> {
        Ok(self.encode(img)?.1)
    }
}

/// Ω(x; f, A) = f(x)ᵀ f(A(x)).
pub fn latent_deviation<T: Scalar, E: Embed<T> + ?Sized>(
    encoder: &E,
    x: &Raster,
    augmentation: &CompositeAugmentation,
) -> Result<T> {
    let augmented = apply_composite(augmentation, x)?;
    let zx = encoder.embed(x)?;
    let za = encoder.embed(&augmented)?;
    Ok(zx.dot(&za))
}
