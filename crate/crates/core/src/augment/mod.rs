//! Image rasters, the fourteen-transform augmentation pool, composite
//! augmentations with their composition vectors, and the weak augmentations
//! used for contrastive views.

mod composite;
mod pnm;
mod raster;
mod transform;
mod weak;

pub use composite::{
    apply_composite, composition_vector, sample_composite, sample_composite_with, CompositeAugmentation,
    CompositionVector,
};
pub use pnm::{decode_pnm, encode_pnm, pnm_extension};
pub use raster::{clamp_unit, dequantize, quantize, Raster};
pub use transform::{
    apply_basic, enhance_factor, translate, translate_offset, BasicTransform, TransformId, FILL, POOL_SIZE,
};
pub use weak::WeakAugment;
