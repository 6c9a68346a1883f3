//! IDX files: big-endian magic `0x00000803` for u8 image stacks
//! (count × rows × cols) and `0x00000801` for u8 label vectors.

use std::path::Path;

use crate::augment::Raster;
use crate::error::{Error, Result};
use crate::fsutil::{read_file, write_atomic};
use crate::harness::Dataset;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| format_err(path, "truncated header"))
}

/// Parses an image file into rasters.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Vec<Raster>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(format_err(path, format!("bad magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}")));
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let rows = be_u32(bytes, 8, path)? as usize;
    let cols = be_u32(bytes, 12, path)? as usize;
    let per = rows
        .checked_mul(cols)
        .ok_or_else(|| format_err(path, "image size overflows"))?;
    let expected = count
        .checked_mul(per)
        .ok_or_else(|| format_err(path, "payload size overflows"))?;
    let payload = &bytes[16..];
    if payload.len() != expected {
        return Err(format_err(
            path,
            format!("declared {count}x{rows}x{cols} = {expected} bytes, payload has {}", payload.len()),
        ));
    }
    if per == 0 {
        return Err(format_err(path, "zero-sized images"));
    }
    payload
        .chunks_exact(per)
        .map(|chunk| Raster::from_u8(rows, cols, 1, chunk))
        .collect()
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(format_err(path, format!("bad magic {magic:#010x}, expected {LABEL_MAGIC:#010x}")));
    }
    let count = be_u32(bytes, 4, path)? as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(format_err(
            path,
            format!("declared {count} labels, payload has {}", payload.len()),
        ));
    }
    Ok(payload.to_vec())
}

/// Loads an image/label file pair. The class count is one more than the
/// largest label.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let rasters = parse_idx_images(&read_file(images)?, images)?;
    let raw = parse_idx_labels(&read_file(labels)?, labels)?;
    if raw.len() != rasters.len() {
        return Err(format_err(
            labels,
            format!("{} labels for {} images in {}", raw.len(), rasters.len(), images.display()),
        ));
    }
    let classes = raw.iter().copied().max().map_or(0, |m| m as usize + 1).max(2);
    Dataset::new(rasters, Some(raw.into_iter().map(usize::from).collect()), classes)
}

pub fn encode_idx_images(images: &[Raster]) -> Result<Vec<u8>> {
    let first = images.first().ok_or_else(|| Error::input("no images to encode"))?;
    let (h, w, c) = first.dims();
    if c != 1 {
        return Err(Error::input("IDX image files hold single-channel images only"));
    }
    let mut out = Vec::with_capacity(16 + images.len() * h * w);
    for v in [IMAGE_MAGIC, images.len() as u32, h as u32, w as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        if img.dims() != (h, w, 1) {
            return Err(Error::dim("all IDX images must share dimensions"));
        }
        out.extend(img.to_u8());
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        out.push(u8::try_from(l).map_err(|_| Error::input(format!("label {l} does not fit in a byte")))?);
    }
    Ok(out)
}

/// Writes a labeled single-channel dataset as an IDX file pair.
pub fn write_idx(dataset: &Dataset, images: &Path, labels: &Path) -> Result<()> {
    let l = dataset
        .labels()
        .ok_or_else(|| Error::input("writing IDX labels requires a labeled dataset"))?;
    write_atomic(images, &encode_idx_images(dataset.images())?)?;
    write_atomic(labels, &encode_idx_labels(l)?)
}
