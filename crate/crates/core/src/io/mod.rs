//! File formats: NPY tensors, IDX image sets, and pooling index sidecars.

mod idx;
mod npy;

pub use idx::{load_idx_images, load_idx_labels, parse_idx_images};
pub use npy::{load_npy, read_npy, save_npy, write_npy};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
