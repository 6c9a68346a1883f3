//! The fourteen basic transforms and their pixel semantics.
//!
//! Magnitudes live in [0, 1]. Enhancement transforms blend towards a base
//! image with factor `f = 0.1 + 1.8·m`, so `m = 0.5` is neutral. Geometric
//! transforms are neutral at `m = 0`, fill vacated pixels with 0.5 and never
//! change the raster size.

use std::fmt;
use std::str::FromStr;

use crate::augment::raster::{dequantize, quantize, Raster};
use crate::error::{Error, Result};

/// Number of transforms in the pool.
pub const POOL_SIZE: usize = 14;

/// Fill value for pixels uncovered by a geometric transform.
pub const FILL: f64 = 0.5;

const MAX_ROTATE_DEG: f64 = 30.0;
const MAX_SHEAR: f64 = 0.3;
const MAX_TRANSLATE_FRAC: f64 = 0.3;

/// Transform identifiers. The declaration order fixes composition-vector coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TransformId {
    Autocontrast,
    Brightness,
    Color,
    Contrast,
    Equalize,
    Identity,
    Posterize,
    Rotate,
    Sharpness,
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
    Solarize,
}

impl TransformId {
    pub const ALL: [TransformId; POOL_SIZE] = [
        TransformId::Autocontrast,
        TransformId::Brightness,
        TransformId::Color,
        TransformId::Contrast,
        TransformId::Equalize,
        TransformId::Identity,
        TransformId::Posterize,
        TransformId::Rotate,
        TransformId::Sharpness,
        TransformId::ShearX,
        TransformId::ShearY,
        TransformId::TranslateX,
        TransformId::TranslateY,
        TransformId::Solarize,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TransformId::Autocontrast => "Autocontrast",
            TransformId::Brightness => "Brightness",
            TransformId::Color => "Color",
            TransformId::Contrast => "Contrast",
            TransformId::Equalize => "Equalize",
            TransformId::Identity => "Identity",
            TransformId::Posterize => "Posterize",
            TransformId::Rotate => "Rotate",
            TransformId::Sharpness => "Sharpness",
            TransformId::ShearX => "ShearX",
            TransformId::ShearY => "ShearY",
            TransformId::TranslateX => "TranslateX",
            TransformId::TranslateY => "TranslateY",
            TransformId::Solarize => "Solarize",
        }
    }

    /// Whether the transform uses the direction sign.
    pub fn is_signed(self) -> bool {
        matches!(
            self,
            TransformId::Rotate
                | TransformId::ShearX
                | TransformId::ShearY
                | TransformId::TranslateX
                | TransformId::TranslateY
        )
    }
}

impl fmt::Display for TransformId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransformId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::input(format!("unknown transform `{s}`")))
    }
}

/// One transform from the pool with its strength and direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BasicTransform {
    id: TransformId,
    magnitude: f64,
    sign: i8,
}

impl BasicTransform {
    pub fn new(id: TransformId, magnitude: f64, sign: i8) -> Result<Self> {
        if !(0.0..=1.0).contains(&magnitude) {
            return Err(Error::input(format!("magnitude {magnitude} outside [0, 1]")));
        }
        if sign != 1 && sign != -1 {
            return Err(Error::input(format!("direction sign must be ±1, got {sign}")));
        }
        Ok(Self { id, magnitude, sign })
    }

    #[inline]
    pub fn id(&self) -> TransformId {
        self.id
    }

    #[inline]
    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    #[inline]
    pub fn sign(&self) -> i8 {
        self.sign
    }

    fn signed(&self, scale: f64) -> f64 {
        f64::from(self.sign) * scale * self.magnitude
    }
}

/// Blend factor used by the enhancement transforms.
#[inline]
pub fn enhance_factor(magnitude: f64) -> f64 {
    0.1 + 1.8 * magnitude
}

/// Pixel offset applied by TranslateX/TranslateY along a dimension of `extent` pixels.
pub fn translate_offset(t: &BasicTransform, extent: usize) -> i64 {
    i64::from(t.sign) * (MAX_TRANSLATE_FRAC * extent as f64 * t.magnitude).round() as i64
}

/// Applies one transform. Output has the input's dimensions and values in [0, 1].
///
/// The transforms are deterministic: the same transform and image always give
/// bit-identical output.
pub fn apply_basic(t: &BasicTransform, img: &Raster) -> Result<Raster> {
    if img.channels() != 1 && img.channels() != 3 {
        return Err(Error::input(format!("unsupported channel count {}", img.channels())));
    }
    let out = match t.id {
        TransformId::Identity => img.clone(),
        TransformId::Autocontrast => autocontrast(img),
        TransformId::Brightness => {
            let f = enhance_factor(t.magnitude);
            map_values(img, |v| f * v)
        }
        TransformId::Color => blend(img, &grayscale(img), enhance_factor(t.magnitude)),
        TransformId::Contrast => blend(img, &channel_means(img), enhance_factor(t.magnitude)),
        TransformId::Sharpness => blend(img, &box_blur(img), enhance_factor(t.magnitude)),
        TransformId::Equalize => equalize(img),
        TransformId::Posterize => {
            let bits = 8 - (4.0 * t.magnitude).round() as u32;
            let mask = !((1u16 << (8 - bits)) - 1) as u8;
            map_values(img, |v| dequantize(quantize(v) & mask))
        }
        TransformId::Solarize => {
            let threshold = 1.0 - t.magnitude;
            map_values(img, |v| if v > threshold { 1.0 - v } else { v })
        }
        TransformId::Rotate => {
            let angle = t.signed(MAX_ROTATE_DEG).to_radians();
            let (sin, cos) = angle.sin_cos();
            let (cy, cx) = center(img);
            // Inverse mapping: rotate the output coordinate by -angle.
            resample(img, |y, x| {
                let (dy, dx) = (y - cy, x - cx);
                (cy - sin * dx + cos * dy, cx + cos * dx + sin * dy)
            })
        }
        TransformId::ShearX => {
            let s = t.signed(MAX_SHEAR);
            let (cy, _) = center(img);
            resample(img, |y, x| (y, x + s * (y - cy)))
        }
        TransformId::ShearY => {
            let s = t.signed(MAX_SHEAR);
            let (_, cx) = center(img);
            resample(img, |y, x| (y + s * (x - cx), x))
        }
        TransformId::TranslateX => translate(img, 0, translate_offset(t, img.width())),
        TransformId::TranslateY => translate(img, translate_offset(t, img.height()), 0),
    };
    Ok(out)
}

/// Shifts content by whole pixels: `out(y, x) = in(y − dy, x − dx)`, vacated pixels filled.
pub fn translate(img: &Raster, dy: i64, dx: i64) -> Raster {
    let (h, w, ch) = img.dims();
    let mut data = vec![FILL; img.len()];
    for y in 0..h {
        let sy = y as i64 - dy;
        if sy < 0 || sy >= h as i64 {
            continue;
        }
        for x in 0..w {
            let sx = x as i64 - dx;
            if sx < 0 || sx >= w as i64 {
                continue;
            }
            for c in 0..ch {
                data[img.index(y, x, c)] = img.get(sy as usize, sx as usize, c);
            }
        }
    }
    Raster::from_clamped(h, w, ch, data)
}

fn center(img: &Raster) -> (f64, f64) {
    ((img.height() as f64 - 1.0) / 2.0, (img.width() as f64 - 1.0) / 2.0)
}

fn map_values(img: &Raster, f: impl Fn(f64) -> f64) -> Raster {
    let (h, w, c) = img.dims();
    Raster::from_clamped(h, w, c, img.data().iter().map(|&v| f(v)).collect())
}

/// `base + f·(img − base)` per value.
fn blend(img: &Raster, base: &[f64], f: f64) -> Raster {
    let (h, w, c) = img.dims();
    Raster::from_clamped(
        h,
        w,
        c,
        img.data()
            .iter()
            .zip(base)
            .map(|(&v, &b)| b + f * (v - b))
            .collect(),
    )
}

/// Per-pixel luma replicated across channels; a single-channel image is its own gray.
fn grayscale(img: &Raster) -> Vec<f64> {
    if img.channels() == 1 {
        return img.data().to_vec();
    }
    let mut out = Vec::with_capacity(img.len());
    for px in img.data().chunks(3) {
        let y = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
        out.extend_from_slice(&[y, y, y]);
    }
    out
}

fn channel_means(img: &Raster) -> Vec<f64> {
    let ch = img.channels();
    let pixels = (img.height() * img.width()) as f64;
    let mut means = vec![0.0; ch];
    for px in img.data().chunks(ch) {
        for (m, &v) in means.iter_mut().zip(px) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= pixels;
    }
    (0..img.len()).map(|i| means[i % ch]).collect()
}

/// 3×3 mean filter with edge replication.
fn box_blur(img: &Raster) -> Vec<f64> {
    let (h, w, ch) = img.dims();
    let mut out = vec![0.0; img.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                        let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                        acc += img.get(sy, sx, c);
                    }
                }
                out[img.index(y, x, c)] = acc / 9.0;
            }
        }
    }
    out
}

fn autocontrast(img: &Raster) -> Raster {
    let ch = img.channels();
    let mut lo = vec![f64::INFINITY; ch];
    let mut hi = vec![f64::NEG_INFINITY; ch];
    for px in img.data().chunks(ch) {
        for c in 0..ch {
            lo[c] = lo[c].min(px[c]);
            hi[c] = hi[c].max(px[c]);
        }
    }
    let data = img
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = i % ch;
            let span = hi[c] - lo[c];
            if span < 1.0 / 255.0 {
                v
            } else {
                (v - lo[c]) / span
            }
        })
        .collect();
    Raster::from_clamped(img.height(), img.width(), ch, data)
}

/// Per-channel histogram equalisation on 8-bit values.
fn equalize(img: &Raster) -> Raster {
    let ch = img.channels();
    let quant = img.to_u8();
    let mut luts: Vec<Option<[u8; 256]>> = Vec::with_capacity(ch);
    for c in 0..ch {
        let mut hist = [0usize; 256];
        for &q in quant.iter().skip(c).step_by(ch) {
            hist[q as usize] += 1;
        }
        luts.push(equalize_lut(&hist));
    }
    let data = quant
        .iter()
        .enumerate()
        .map(|(i, &q)| match &luts[i % ch] {
            Some(lut) => dequantize(lut[q as usize]),
            None => img.data()[i],
        })
        .collect();
    Raster::from_clamped(img.height(), img.width(), ch, data)
}

/// Equalisation lookup table; `None` when the histogram is too concentrated to stretch.
fn equalize_lut(hist: &[usize; 256]) -> Option<[u8; 256]> {
    let nonzero: Vec<usize> = hist.iter().copied().filter(|&n| n > 0).collect();
    if nonzero.len() <= 1 {
        return None;
    }
    let total: usize = nonzero.iter().sum();
    let step = (total - nonzero[nonzero.len() - 1]) / 255;
    if step == 0 {
        return None;
    }
    let mut lut = [0u8; 256];
    let mut n = step / 2;
    for (i, slot) in lut.iter_mut().enumerate() {
        *slot = (n / step).min(255) as u8;
        n += hist[i];
    }
    Some(lut)
}

/// Inverse-mapped bilinear resampling; `source(y, x)` gives the sample location
/// for output pixel (y, x). Samples outside the image take [`FILL`].
fn resample(img: &Raster, source: impl Fn(f64, f64) -> (f64, f64)) -> Raster {
    let (h, w, ch) = img.dims();
    let mut data = vec![FILL; img.len()];
    let (hf, wf) = ((h - 1) as f64, (w - 1) as f64);
    const EDGE: f64 = 1e-9;
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = source(y as f64, x as f64);
            if sy < -EDGE || sy > hf + EDGE || sx < -EDGE || sx > wf + EDGE {
                continue;
            }
            let (sy, sx) = (sy.clamp(0.0, hf), sx.clamp(0.0, wf));
            let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
            for c in 0..ch {
                let v = if fy == 0.0 && fx == 0.0 {
                    img.get(y0, x0, c)
                } else {
                    let top = img.get(y0, x0, c) * (1.0 - fx) + img.get(y0, x1, c) * fx;
                    let bottom = img.get(y1, x0, c) * (1.0 - fx) + img.get(y1, x1, c) * fx;
                    top * (1.0 - fy) + bottom * fy
                };
                data[img.index(y, x, c)] = v;
            }
        }
    }
    Raster::from_clamped(h, w, ch, data)
}
