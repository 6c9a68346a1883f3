#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod bilevel;
pub mod checkpoint;
pub mod encoder;
pub mod error;
pub mod fsutil;
pub mod harness;
pub mod losses;
pub mod numcore;
pub mod pmnn;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = numcore::Matrix<f64>;
pub type Matrix32 = numcore::Matrix<f32>;
pub type ParamSet64 = numcore::ParamSet<f64>;
pub type Encoder64 = encoder::Encoder<f64>;
pub type Encoder32 = encoder::Encoder<f32>;
pub type Pmnn64 = pmnn::Pmnn<f64>;
pub type Pmnn32 = pmnn::Pmnn<f32>;
pub type NegativeQueue64 = losses::NegativeQueue<f64>;
