//! SGD with momentum, weight decay and an optional cosine learning-rate schedule.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numcore::ParamSet;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Length of the cosine schedule in steps; `None` keeps the rate constant.
    pub cosine_steps: Option<usize>,
}

impl SgdConfig {
    pub fn plain(lr: f64) -> Self {
        Self {
            lr,
            momentum: 0.0,
            weight_decay: 0.0,
            cosine_steps: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::input(format!("learning rate {} must be >= 0", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::input(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::input("weight decay must be >= 0"));
        }
        if self.cosine_steps == Some(0) {
            return Err(Error::input("cosine schedule needs at least one step"));
        }
        Ok(())
    }
}

/// Cosine-annealed rate at `step` of a `total`-step schedule.
///
/// Starts at `base`, never increases, and stays strictly positive: steps at or
/// past the end reuse the rate of the last scheduled step.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    let t = step.min(total.saturating_sub(1)) as f64;
    base * 0.5 * (1.0 + (PI * t / total as f64).cos())
}

/// Momentum buffers and schedule position for one parameter set.
#[derive(Clone, Debug)]
pub struct SgdState<T> {
    config: SgdConfig,
    buffers: ParamSet<T>,
    step: usize,
}

impl<T: Scalar> SgdState<T> {
    pub fn new(config: SgdConfig, params: &ParamSet<T>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            buffers: params.zeros_like(),
            step: 0,
        })
    }

    pub fn config(&self) -> &SgdConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn buffers(&self) -> &ParamSet<T> {
        &self.buffers
    }

    /// Learning rate the next call to [`step`](Self::step) will use.
    pub fn current_lr(&self) -> f64 {
        match self.config.cosine_steps {
            Some(total) => cosine_lr(self.config.lr, self.step, total),
            None => self.config.lr,
        }
    }

    /// One update: `d = g + wd·p`, `buf = μ·buf + d`, `p -= lr·buf`.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>) -> Result<()> {
        params.require_same_layout(grads)?;
        params.require_same_layout(&self.buffers)?;
        let lr = T::lit(self.current_lr());
        let mu = T::lit(self.config.momentum);
        let wd = T::lit(self.config.weight_decay);
        for ((p, g), b) in params
            .segments_mut()
            .iter_mut()
            .zip(grads.segments())
            .zip(self.buffers.segments_mut())
        {
            for ((pv, &gv), bv) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(g.value.data())
                .zip(b.value.data_mut())
            {
                let d = gv + wd * *pv;
                *bv = mu * *bv + d;
                *pv -= lr * *bv;
            }
        }
        self.step += 1;
        if !params.is_finite() {
            return Err(Error::NonFinite("parameters after SGD step".into()));
        }
        Ok(())
    }
}

/// Functional form of one SGD step: returns the updated parameters.
pub fn sgd_step<T: Scalar>(params: &ParamSet<T>, grads: &ParamSet<T>, state: &mut SgdState<T>) -> Result<ParamSet<T>> {
    let mut out = params.clone();
    state.step(&mut out, grads)?;
    Ok(out)
}
