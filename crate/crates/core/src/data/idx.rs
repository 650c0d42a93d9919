//! Big-endian IDX files (MNIST / Fashion-MNIST layout).

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn fail<T>(detail: impl Into<String>) -> Result<T> {
    Err(Error::Format {
        format: "IDX",
        detail: detail.into(),
    })
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    match bytes.get(offset..offset + 4) {
        Some(b) => Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]])),
        None => fail(format!("truncated header at byte {offset}")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// `count x rows x cols`, row-major.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols).max(1)
    }
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = read_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return fail(format!("image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"));
    }
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    if rows == 0 || cols == 0 {
        return fail("zero image dimension");
    }
    let Some(len) = count.checked_mul(rows).and_then(|v| v.checked_mul(cols)) else {
        return fail("image payload size overflows");
    };
    let body = &bytes[16..];
    if body.len() < len {
        return fail(format!("truncated file: {} of {len} pixel bytes", body.len()));
    }
    if body.len() > len {
        return fail(format!("{} trailing bytes", body.len() - len));
    }
    Ok(IdxImages {
        rows,
        cols,
        pixels: body.to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return fail(format!("label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"));
    }
    let count = read_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return fail(format!("truncated file: {} of {count} labels", body.len()));
    }
    if body.len() > count {
        return fail(format!("{} trailing bytes", body.len() - count));
    }
    Ok(body.to_vec())
}

/// Flattens images to rows scaled into `[0, 1]`; labels shift to `1..=C`.
pub fn idx_to_features(images: &IdxImages, labels: &[u8]) -> Result<FeatureMatrix> {
    let count = images.count();
    if count != labels.len() {
        return fail(format!("{count} images but {} labels", labels.len()));
    }
    if count == 0 {
        return fail("no samples");
    }
    let d = images.rows * images.cols;
    let data = DMatrix::from_row_iterator(count, d, images.pixels.iter().map(|&p| p as f64 / 255.0));
    let labels = labels.iter().map(|&l| l as u16 + 1).collect();
    FeatureMatrix::new(0, data, Some(labels))
}

pub fn parse_idx_pair(images: &[u8], labels: &[u8]) -> Result<FeatureMatrix> {
    idx_to_features(&parse_idx_images(images)?, &parse_idx_labels(labels)?)
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let read = |p: &Path| std::fs::read(p).map_err(|e| Error::io(p, e));
    parse_idx_pair(&read(images_path.as_ref())?, &read(labels_path.as_ref())?)
}

pub fn encode_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.count() as u32).to_be_bytes());
    out.extend_from_slice(&(images.rows as u32).to_be_bytes());
    out.extend_from_slice(&(images.cols as u32).to_be_bytes());
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
