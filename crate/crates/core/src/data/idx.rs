//! Big-endian IDX files (the MNIST / Fashion-MNIST container).
//!
//! Images: magic `0x00000803`, then `u32` N, rows, cols, then `N·rows·cols` bytes.
//! Labels: magic `0x00000801`, then `u32` N, then N bytes.

use std::path::Path;

use crate::error::{Error, ParseErrorKind, Result};
use crate::linalg::Matrix;

use super::LabeledSet;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn parse_err(path: &Path, offset: usize, kind: ParseErrorKind) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        offset: offset as u64,
        kind,
    }
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| {
            parse_err(
                path,
                bytes.len(),
                ParseErrorKind::Truncated {
                    needed: (offset + 4) as u64,
                    available: bytes.len() as u64,
                },
            )
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = read_u32(bytes, 0, path)?;
    if found != expected {
        return Err(parse_err(path, 0, ParseErrorKind::BadMagic { expected, found }));
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], start: usize, len: usize, path: &Path) -> Result<&'a [u8]> {
    let end = start + len;
    if bytes.len() < end {
        return Err(parse_err(
            path,
            bytes.len(),
            ParseErrorKind::Truncated {
                needed: end as u64,
                available: bytes.len() as u64,
            },
        ));
    }
    if bytes.len() > end {
        return Err(parse_err(
            path,
            end,
            ParseErrorKind::BadDimensions(format!("{} bytes after the declared payload", bytes.len() - end)),
        ));
    }
    Ok(&bytes[start..end])
}

/// Parses an image file into an `N × (rows·cols)` matrix scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Matrix> {
    check_magic(bytes, IDX_IMAGES_MAGIC, path)?;
    let n = read_u32(bytes, 4, path)? as usize;
    let rows = read_u32(bytes, 8, path)? as usize;
    let cols = read_u32(bytes, 12, path)? as usize;
    if rows == 0 || cols == 0 {
        return Err(parse_err(path, 8, ParseErrorKind::BadDimensions(format!("{rows}×{cols} images"))));
    }
    let pixels = payload(bytes, 16, n * rows * cols, path)?;
    let data = pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(Matrix::from_vec(n, rows * cols, data))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    check_magic(bytes, IDX_LABELS_MAGIC, path)?;
    let n = read_u32(bytes, 4, path)? as usize;
    Ok(payload(bytes, 8, n, path)?.iter().map(|&b| b as usize).collect())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads an image/label pair, optionally keeping a seeded fraction of it.
pub fn load_idx(images: &Path, labels: &Path, subsample: Option<(f64, u64)>) -> Result<LabeledSet> {
    let x = parse_idx_images(&read(images)?, images)?;
    let y = parse_idx_labels(&read(labels)?, labels)?;
    if x.rows() != y.len() {
        return Err(parse_err(
            labels,
            4,
            ParseErrorKind::CountMismatch {
                images: x.rows(),
                labels: y.len(),
            },
        ));
    }
    let classes = y.iter().max().map_or(1, |m| m + 1).max(10);
    let set = LabeledSet::new(x, y, classes)?;
    match subsample {
        Some((fraction, seed)) => set.subsample(fraction, seed),
        None => Ok(set),
    }
}
