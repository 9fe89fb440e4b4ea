use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Loads an IDX u8 image file as an `(N, 1, H, W)` tensor scaled to `[0, 1]`.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Tensor4> {
    parse_idx_images(&super::read_file(path.as_ref())?)
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<Tensor4> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::format(
            "magic",
            format!("expected {IMAGES_MAGIC:#010x}, found {magic:#010x}"),
        ));
    }
    let n = be_u32(bytes, 4)? as usize;
    let h = be_u32(bytes, 8)? as usize;
    let w = be_u32(bytes, 12)? as usize;
    let pixels = &bytes[16..];
    if pixels.len() != n * h * w {
        return Err(Error::format(
            "data",
            format!("expected {} pixels, found {}", n * h * w, pixels.len()),
        ));
    }
    let data = pixels.iter().map(|&p| f32::from(p) / 255.0).collect();
    Tensor4::from_parts((n, 1, h, w), data)
}

/// Loads an IDX u8 label file.
pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let bytes = super::read_file(path.as_ref())?;
    let magic = be_u32(&bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::format(
            "magic",
            format!("expected {LABELS_MAGIC:#010x}, found {magic:#010x}"),
        ));
    }
    let n = be_u32(&bytes, 4)? as usize;
    let labels = &bytes[8..];
    if labels.len() != n {
        return Err(Error::format(
            "data",
            format!("expected {n} labels, found {}", labels.len()),
        ));
    }
    Ok(labels.to_vec())
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format("header", "truncated IDX header"))
}
