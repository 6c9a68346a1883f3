use crate::augment::{CompositeAugmentation, Raster};
use crate::encoder::{latent_deviation, Embed};
use crate::error::{Error, Result};

/// Mean |Ω(x; f, A) − Ω_ref(x, A)| over a probe set.
pub fn dacl<E, F>(encoder: &E, reference: F, probe_set: &[(Raster, CompositeAugmentation)]) -> Result<f64>
where
    E: Embed<f64> + ?Sized,
    F: Fn(&Raster, &CompositeAugmentation) -> Result<f64>,
{
    if probe_set.is_empty() {
        return Err(Error::input("DACL needs a non-empty probe set"));
    }
    let mut total = 0.0;
    for (x, a) in probe_set {
        let omega = latent_deviation(encoder, x, a)?;
        total += (omega - reference(x, a)?).abs();
    }
    Ok(total / probe_set.len() as f64)
}
