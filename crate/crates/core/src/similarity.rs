//! Spectral data similarity between users.
//!
//! Every user eigendecomposes the Gram matrix of its own features and
//! publishes only the leading eigenvectors. A user then measures how much its
//! own data varies along another user's principal directions, compares those
//! projected magnitudes with its own eigenvalues, and reports a scalar
//! relevance score. The scores are symmetrized into a [`RelevanceMatrix`].
//!
//! The only object that ever crosses a user boundary is an [`EigenSummary`]
//! (and later a scalar). [`Participant`] owns one user's raw features and
//! never receives another user's [`FeatureMatrix`].

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Eigenvalues in `[-NEGATIVE_TOLERANCE, 0)` are treated as rounding noise and
/// clamped to zero; anything more negative is rejected.
pub const NEGATIVE_TOLERANCE: f64 = 1e-9;

const EIGEN_EPS: f64 = 1e-15;
const EIGEN_MAX_ITER: usize = 10_000;

/// Default number of shared eigenvectors.
pub const DEFAULT_KEEP: usize = 5;
/// Default small-eigenvalue floor, relative to the local leading eigenvalue.
pub const DEFAULT_RELATIVE_FLOOR: f64 = 1e-6;

/// `(1/n) XᵀX`, exactly symmetric.
pub fn gram_matrix(features: &FeatureMatrix) -> DMatrix<f64> {
    let x = features.data();
    let mut gram = x.tr_mul(x) / features.samples() as f64;
    let d = gram.nrows();
    for i in 0..d {
        for j in (i + 1)..d {
            let v = 0.5 * (gram[(i, j)] + gram[(j, i)]);
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    gram
}

/// Leading eigenpairs of one user's Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSummary {
    user_id: u32,
    eigenvalues: Vec<f64>,
    /// `p x d`; row `k` pairs with `eigenvalues[k]`.
    eigenvectors: DMatrix<f64>,
}

impl EigenSummary {
    pub fn user_id(&self) -> u32 {
        self.user_id
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn full_dim(&self) -> usize {
        self.eigenvectors.ncols()
    }

    pub fn kept(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Shape of the matrix a user has to send to its peers.
    pub fn exchanged_shape(&self) -> (usize, usize) {
        self.eigenvectors.shape()
    }

    /// The same summary restricted to its first `keep` pairs.
    pub fn truncated(&self, keep: usize) -> Result<Self> {
        if keep == 0 || keep > self.kept() {
            return Err(Error::InvalidInput(format!(
                "user {}: cannot keep {keep} of {} eigenpairs",
                self.user_id,
                self.kept()
            )));
        }
        Ok(Self {
            user_id: self.user_id,
            eigenvalues: self.eigenvalues[..keep].to_vec(),
            eigenvectors: self.eigenvectors.rows(0, keep).into_owned(),
        })
    }

    fn from_gram(user_id: u32, gram: &DMatrix<f64>, keep: usize) -> Result<Self> {
        let d = gram.nrows();
        if keep == 0 || keep > d {
            return Err(Error::InvalidInput(format!(
                "user {user_id}: keep must be in 1..={d}, got {keep}"
            )));
        }
        let eig = SymmetricEigen::try_new(gram.clone(), EIGEN_EPS, EIGEN_MAX_ITER).ok_or_else(
            || Error::Numeric {
                user: user_id,
                detail: "symmetric eigensolver did not converge".into(),
            },
        )?;
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        order.truncate(keep);

        let mut eigenvalues = Vec::with_capacity(keep);
        let mut eigenvectors = DMatrix::zeros(keep, d);
        for (row, &idx) in order.iter().enumerate() {
            let value = eig.eigenvalues[idx];
            if value < -NEGATIVE_TOLERANCE {
                return Err(Error::Numeric {
                    user: user_id,
                    detail: format!("Gram matrix has negative eigenvalue {value:e}"),
                });
            }
            eigenvalues.push(value.max(0.0));
            let column = eig.eigenvectors.column(idx);
            let norm = column.norm();
            for c in 0..d {
                eigenvectors[(row, c)] = column[c] / norm;
            }
        }
        Ok(Self {
            user_id,
            eigenvalues,
            eigenvectors,
        })
    }
}

/// Top-`keep` eigenpairs of `gram_matrix(features)`, eigenvalues descending.
pub fn eigen_summary(features: &FeatureMatrix, keep: usize) -> Result<EigenSummary> {
    EigenSummary::from_gram(features.user_id(), &gram_matrix(features), keep)
}

fn project(user_id: u32, gram: &DMatrix<f64>, remote: &EigenSummary) -> Result<Vec<f64>> {
    if remote.full_dim() != gram.nrows() {
        return Err(Error::Shape {
            local: user_id,
            remote: remote.user_id,
            detail: format!(
                "remote eigenvectors have dimension {}, local features have {}",
                remote.full_dim(),
                gram.nrows()
            ),
        });
    }
    Ok(remote
        .eigenvectors
        .row_iter()
        .map(|v| (gram * v.transpose()).norm())
        .collect())
}

/// `‖G_local v_k‖` for every row `v_k` of the remote summary.
pub fn projected_eigenvalues(local: &FeatureMatrix, remote: &EigenSummary) -> Result<Vec<f64>> {
    project(local.user_id(), &gram_matrix(local), remote)
}

/// How the geometric-mean exponent is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExponentMode {
    /// `1/d'` with `d'` the number of index pairs that survive the floor.
    #[default]
    Retained,
    /// `1/d` with `d` the full feature dimension, regardless of truncation.
    FullDimension,
}

/// Relevance of two eigenvalue spectra paired by index.
///
/// Pairs whose larger value is `<= floor` are skipped. `full_dim` is only read
/// in [`ExponentMode::FullDimension`].
pub fn relevance(
    local_eigs: &[f64],
    projected: &[f64],
    floor: f64,
    mode: ExponentMode,
    full_dim: usize,
) -> Result<f64> {
    if local_eigs.len() != projected.len() {
        return Err(Error::InvalidInput(format!(
            "spectra have lengths {} and {}",
            local_eigs.len(),
            projected.len()
        )));
    }
    if !(floor >= 0.0) {
        return Err(Error::InvalidInput(format!("floor must be >= 0, got {floor}")));
    }
    let clamp = |v: f64| -> Result<f64> {
        if !v.is_finite() || v < -NEGATIVE_TOLERANCE {
            Err(Error::Numeric {
                user: u32::MAX,
                detail: format!("invalid eigenvalue {v:e}"),
            })
        } else {
            Ok(v.max(0.0))
        }
    };

    let mut log_sum = 0.0;
    let mut retained = 0usize;
    for (&a, &b) in local_eigs.iter().zip(projected) {
        let (a, b) = (clamp(a)?, clamp(b)?);
        let hi = a.max(b);
        if hi <= floor {
            continue;
        }
        retained += 1;
        log_sum += (a.min(b) / hi).ln();
    }
    if retained == 0 {
        return Err(Error::Degenerate(format!(
            "all {} eigenvalue pairs fall below the floor {floor:e}",
            local_eigs.len()
        )));
    }
    let exponent_count = match mode {
        ExponentMode::Retained => retained,
        ExponentMode::FullDimension => full_dim.max(1),
    };
    Ok((log_sum / exponent_count as f64).exp().clamp(0.0, 1.0))
}

/// Knobs shared by every relevance computation in a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimilarityParams {
    /// Number of eigenvectors each user shares.
    pub keep: usize,
    /// Floor relative to the local leading eigenvalue.
    pub floor: f64,
    pub exponent: ExponentMode,
}

impl Default for SimilarityParams {
    fn default() -> Self {
        Self {
            keep: DEFAULT_KEEP,
            floor: DEFAULT_RELATIVE_FLOOR,
            exponent: ExponentMode::Retained,
        }
    }
}

/// One user's side of the similarity protocol.
pub struct Participant<'a> {
    features: &'a FeatureMatrix,
    gram: DMatrix<f64>,
    own: EigenSummary,
}

impl<'a> Participant<'a> {
    pub fn new(features: &'a FeatureMatrix, keep: usize) -> Result<Self> {
        let gram = gram_matrix(features);
        let own = EigenSummary::from_gram(features.user_id(), &gram, keep)?;
        Ok(Self {
            features,
            gram,
            own,
        })
    }

    pub fn user_id(&self) -> u32 {
        self.features.user_id()
    }

    /// What this user publishes.
    pub fn summary(&self) -> &EigenSummary {
        &self.own
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// `r(self, remote)` using this user's own eigenvalues and the remote
    /// eigenvectors projected through this user's Gram matrix.
    pub fn relevance_to(&self, remote: &EigenSummary, params: &SimilarityParams) -> Result<f64> {
        relevance_against(self.user_id(), &self.gram, &self.own, remote, params)
    }
}

fn relevance_against(
    user_id: u32,
    gram: &DMatrix<f64>,
    own: &EigenSummary,
    remote: &EigenSummary,
    params: &SimilarityParams,
) -> Result<f64> {
    let projected = project(user_id, gram, remote)?;
    let p = projected.len().min(own.kept());
    let leading = own.eigenvalues.first().copied().unwrap_or(0.0);
    relevance(
        &own.eigenvalues[..p],
        &projected[..p],
        params.floor * leading,
        params.exponent,
        gram.nrows(),
    )
    .map_err(|e| match e {
        Error::Numeric { detail, .. } => Error::Numeric {
            user: user_id,
            detail,
        },
        other => other,
    })
}

/// Symmetric pairwise data similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceMatrix {
    user_ids: Vec<u32>,
    values: Vec<Vec<f64>>,
}

impl RelevanceMatrix {
    /// Validates a square, symmetric matrix with unit diagonal and entries in
    /// `[0, 1]`.
    pub fn new(user_ids: Vec<u32>, values: Vec<Vec<f64>>) -> Result<Self> {
        let n = user_ids.len();
        if values.len() != n || values.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput(format!(
                "relevance matrix must be {n}x{n}"
            )));
        }
        for i in 0..n {
            if (values[i][i] - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "diagonal entry {i} is {}, expected 1",
                    values[i][i]
                )));
            }
            for j in 0..n {
                let v = values[i][j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidInput(format!(
                        "entry ({i}, {j}) = {v} outside [0, 1]"
                    )));
                }
                if v != values[j][i] {
                    return Err(Error::InvalidInput(format!(
                        "entries ({i}, {j}) and ({j}, {i}) differ"
                    )));
                }
            }
        }
        Ok(Self { user_ids, values })
    }

    /// `(r + rᵀ)/2` with the diagonal forced to 1.
    pub fn from_directed(user_ids: Vec<u32>, directed: &[Vec<f64>]) -> Result<Self> {
        let n = user_ids.len();
        let mut values = vec![vec![1.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (directed[i][j] + directed[j][i]);
                values[i][j] = avg;
                values[j][i] = avg;
            }
        }
        Self::new(user_ids, values)
    }

    pub fn len(&self) -> usize {
        self.user_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.user_ids.is_empty()
    }

    pub fn user_ids(&self) -> &[u32] {
        &self.user_ids
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Header row of user ids, then one row per user.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("user");
        for id in &self.user_ids {
            out.push_str(&format!(",{id}"));
        }
        out.push('\n');
        for (id, row) in self.user_ids.iter().zip(&self.values) {
            out.push_str(&id.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// `r(i, j)` for every ordered pair; row `i` is computed by user `i` alone.
/// Diagonal entries are the self-relevances.
pub fn directed_relevance(
    summaries: &[EigenSummary],
    features: &[FeatureMatrix],
    params: &SimilarityParams,
) -> Result<Vec<Vec<f64>>> {
    if summaries.len() != features.len() {
        return Err(Error::InvalidInput(format!(
            "{} summaries for {} users",
            summaries.len(),
            features.len()
        )));
    }
    for (s, f) in summaries.iter().zip(features) {
        if s.user_id() != f.user_id() {
            return Err(Error::InvalidInput(format!(
                "summary for user {} paired with features of user {}",
                s.user_id(),
                f.user_id()
            )));
        }
    }
    features
        .par_iter()
        .zip(summaries.par_iter())
        .map(|(local, own)| {
            let gram = gram_matrix(local);
            summaries
                .iter()
                .map(|remote| {
                    relevance_against(local.user_id(), &gram, own, remote, params).map_err(|e| {
                        Error::Pair {
                            i: local.user_id(),
                            j: remote.user_id(),
                            source: Box::new(e),
                        }
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// Builds `R` from published summaries and each user's private features.
pub fn relevance_matrix(
    summaries: &[EigenSummary],
    features: &[FeatureMatrix],
    params: &SimilarityParams,
) -> Result<RelevanceMatrix> {
    let directed = directed_relevance(summaries, features, params)?;
    RelevanceMatrix::from_directed(summaries.iter().map(EigenSummary::user_id).collect(), &directed)
}

/// Runs the whole protocol for a set of users: summaries with `params.keep`
/// vectors (capped at `d`), then `R`.
pub fn similarity_from_features(
    features: &[FeatureMatrix],
    params: &SimilarityParams,
) -> Result<(Vec<EigenSummary>, RelevanceMatrix)> {
    let summaries = features
        .par_iter()
        .map(|f| eigen_summary(f, params.keep.min(f.dim())))
        .collect::<Result<Vec<_>>>()?;
    let matrix = relevance_matrix(&summaries, features, params)?;
    Ok((summaries, matrix))
}

#[derive(Serialize, Deserialize)]
struct EigenSummaryRecord {
    user_id: u32,
    full_dim: usize,
    kept: usize,
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<Vec<f64>>,
}

impl Serialize for EigenSummary {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        EigenSummaryRecord {
            user_id: self.user_id,
            full_dim: self.full_dim(),
            kept: self.kept(),
            eigenvalues: self.eigenvalues.clone(),
            eigenvectors: self
                .eigenvectors
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for EigenSummary {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let rec = EigenSummaryRecord::deserialize(deserializer)?;
        if rec.eigenvalues.len() != rec.kept
            || rec.eigenvectors.len() != rec.kept
            || rec.eigenvectors.iter().any(|r| r.len() != rec.full_dim)
        {
            return Err(D::Error::custom("eigen summary shape mismatch"));
        }
        Ok(Self {
            user_id: rec.user_id,
            eigenvalues: rec.eigenvalues,
            eigenvectors: DMatrix::from_fn(rec.kept, rec.full_dim, |i, j| rec.eigenvectors[i][j]),
        })
    }
}
