//! `FEDFEAT1` feature files.
//!
//! Layout: the 8 magic bytes `FEDFEAT1`, little-endian `u32 n`, `u32 d`,
//! `u8 has_labels`, then `n * d` little-endian `f32` row-major, then (if
//! labelled) `n` little-endian `u16` labels in `1..=C`.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub const MAGIC: &[u8; 8] = b"FEDFEAT1";
const HEADER_LEN: usize = 8 + 4 + 4 + 1;

fn fail<T>(detail: impl Into<String>) -> Result<T> {
    Err(Error::Format {
        format: "feature file",
        detail: detail.into(),
    })
}

pub fn parse_feature_file(bytes: &[u8]) -> Result<FeatureMatrix> {
    if bytes.len() < HEADER_LEN {
        return fail(format!("truncated header: {} bytes", bytes.len()));
    }
    if &bytes[..8] != MAGIC {
        return fail("bad magic");
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let has_labels = match bytes[16] {
        0 => false,
        1 => true,
        other => return fail(format!("has_labels byte is {other}")),
    };
    if n == 0 || d == 0 {
        return fail(format!("header declares {n} x {d}"));
    }
    let Some(values) = n.checked_mul(d) else {
        return fail("header shape overflows");
    };
    let expected = values
        .checked_mul(4)
        .and_then(|v| v.checked_add(if has_labels { n * 2 } else { 0 }))
        .and_then(|v| v.checked_add(HEADER_LEN));
    let Some(expected) = expected else {
        return fail("header shape overflows");
    };
    if bytes.len() < expected {
        return fail(format!(
            "truncated: header declares {n} x {d} ({expected} bytes), file has {}",
            bytes.len()
        ));
    }
    if bytes.len() > expected {
        return fail(format!("{} trailing bytes", bytes.len() - expected));
    }

    let body = &bytes[HEADER_LEN..HEADER_LEN + values * 4];
    let mut floats = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    if let Some(bad) = floats.clone().position(|v| !v.is_finite()) {
        return fail(format!("non-finite value at row {}, column {}", bad / d, bad % d));
    }
    let mut data = DMatrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            data[(i, j)] = floats.next().unwrap();
        }
    }
    let labels = if has_labels {
        let raw = &bytes[HEADER_LEN + values * 4..];
        let labels: Vec<u16> = raw
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        if let Some(bad) = labels.iter().position(|&l| l == 0) {
            return fail(format!("label at row {bad} is 0, labels start at 1"));
        }
        Some(labels)
    } else {
        None
    };
    FeatureMatrix::new(0, data, labels)
}

/// Encodes features as `f32`; values outside the `f32` range are rejected.
pub fn encode_feature_file(features: &FeatureMatrix) -> Result<Vec<u8>> {
    let (n, d) = (features.samples(), features.dim());
    let (Ok(n32), Ok(d32)) = (u32::try_from(n), u32::try_from(d)) else {
        return fail("shape exceeds u32");
    };
    let labels = features.labels();
    let mut out = Vec::with_capacity(HEADER_LEN + n * d * 4 + n * 2);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&n32.to_le_bytes());
    out.extend_from_slice(&d32.to_le_bytes());
    out.push(labels.is_some() as u8);
    for i in 0..n {
        for j in 0..d {
            let v = features.data()[(i, j)] as f32;
            if !v.is_finite() {
                return fail(format!("value at ({i}, {j}) does not fit in f32"));
            }
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(labels) = labels {
        if labels.contains(&0) {
            return fail("labels must be >= 1");
        }
        for l in labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn load_feature_file(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_feature_file(&bytes)
}

pub fn write_feature_file(path: impl AsRef<Path>, features: &FeatureMatrix) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_feature_file(features)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
