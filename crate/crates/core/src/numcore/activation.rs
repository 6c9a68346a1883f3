//! Elementwise activations and their derivatives.

use crate::numcore::Matrix;
use crate::scalar::Scalar;

/// Above this input softplus switches to `x + ln(1 + e^-x)`.
const SOFTPLUS_SWITCH: f64 = 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Softplus,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => relu(x),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Softplus => softplus(x),
        }
    }

    /// Derivative evaluated at the pre-activation `x`.
    #[inline]
    pub fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                T::one() - t * t
            }
            Activation::Sigmoid => sigmoid_derivative(x),
            Activation::Softplus => sigmoid(x),
        }
    }

    pub fn forward<T: Scalar>(self, pre: &Matrix<T>) -> Matrix<T> {
        pre.map(|v| self.apply(v))
    }

    /// Multiplies an upstream gradient by the activation derivative at `pre`.
    pub fn backward<T: Scalar>(self, pre: &Matrix<T>, grad_out: &Matrix<T>) -> Matrix<T> {
        pre.zip_map(grad_out, |x, g| g * self.derivative(x))
            .expect("activation backward with mismatched shapes")
    }
}

#[inline]
pub fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

/// Logistic function, evaluated without overflow for large |x|.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn sigmoid_derivative<T: Scalar>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() - s)
}

/// `ln(1 + e^x)`.
#[inline]
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::lit(SOFTPLUS_SWITCH) {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
