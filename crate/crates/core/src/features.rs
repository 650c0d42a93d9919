use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// One user's mapped data: `n` samples (rows) by `d` features, with optional
/// class labels in `1..=C`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    user_id: u32,
    data: DMatrix<f64>,
    labels: Option<Vec<u16>>,
}

impl FeatureMatrix {
    pub fn new(user_id: u32, data: DMatrix<f64>, labels: Option<Vec<u16>>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "user {user_id}: feature matrix must be at least 1x1, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            // nalgebra storage is column-major
            let (row, col) = (pos % data.nrows(), pos / data.nrows());
            return Err(Error::InvalidInput(format!(
                "user {user_id}: non-finite entry at ({row}, {col})"
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != data.nrows() {
                return Err(Error::InvalidInput(format!(
                    "user {user_id}: {} labels for {} samples",
                    labels.len(),
                    data.nrows()
                )));
            }
        }
        Ok(Self {
            user_id,
            data,
            labels,
        })
    }

    /// Builds a matrix from row-major samples.
    pub fn from_rows(user_id: u32, rows: &[Vec<f64>], labels: Option<Vec<u16>>) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::InvalidInput(format!(
                "user {user_id}: row {bad} has {} features, expected {d}",
                rows[bad].len()
            )));
        }
        let data = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        Self::new(user_id, data, labels)
    }

    pub fn user_id(&self) -> u32 {
        self.user_id
    }

    pub fn with_user_id(mut self, user_id: u32) -> Self {
        self.user_id = user_id;
        self
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn labels(&self) -> Option<&[u16]> {
        self.labels.as_deref()
    }

    /// Number of samples.
    pub fn samples(&self) -> usize {
        self.data.nrows()
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// Returns the subset of rows given by `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let data = self.data.select_rows(indices);
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Self::new(self.user_id, data, labels)
    }

    /// Multiplies every entry by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.user_id, &self.data * factor, self.labels.clone())
    }

    /// Applies a `d x d` linear map to every sample: `X -> X Q`.
    pub fn transformed(&self, map: &DMatrix<f64>) -> Result<Self> {
        if map.nrows() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "user {}: transform has {} rows, features have {} columns",
                self.user_id,
                map.nrows(),
                self.dim()
            )));
        }
        Self::new(self.user_id, &self.data * map, self.labels.clone())
    }
}
