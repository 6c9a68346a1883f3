//! Binary PGM (P5) / PPM (P6) encoding with maxval 255.

use crate::augment::raster::Raster;
use crate::error::{Error, Result};

/// Encodes as P5 for one channel and P6 for three.
pub fn encode_pnm(img: &Raster) -> Vec<u8> {
    let magic = if img.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.to_u8());
    out
}

/// Extension matching [`encode_pnm`]'s output.
pub fn pnm_extension(img: &Raster) -> &'static str {
    if img.channels() == 1 {
        "pgm"
    } else {
        "ppm"
    }
}

/// Decodes the subset of PNM written by [`encode_pnm`] (no comments, maxval 255).
pub fn decode_pnm(bytes: &[u8]) -> Result<Raster> {
    let bad = |msg: &str| Error::input(format!("pnm: {msg}"));
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
    }
    pos += 1;
    let channels = match fields[0] {
        "P5" => 1,
        "P6" => 3,
        other => return Err(bad(&format!("unsupported magic {other}"))),
    };
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (width, height, maxval) = (parse(fields[1])?, parse(fields[2])?, parse(fields[3])?);
    if maxval != 255 {
        return Err(bad("maxval must be 255"));
    }
    let payload = bytes.get(pos..).ok_or_else(|| bad("missing payload"))?;
    if payload.len() != width * height * channels {
        return Err(bad("payload length mismatch"));
    }
    Raster::from_u8(height, width, channels, payload)
}
