//! Reference implementations used as independent oracles. Nothing here calls
//! into the library's numeric paths.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Rows = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_rows(rng: &mut impl Rng, n: usize, d: usize) -> Rows {
    (0..n)
        .map(|_| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

/// Gaussian rows with per-column scales so spectra are well separated.
pub fn anisotropic_rows(rng: &mut impl Rng, n: usize, d: usize) -> Rows {
    let scales: Vec<f64> = (0..d).map(|k| 1.0 + 2.0 * (d - k) as f64 * rng.random::<f64>()).collect();
    (0..n)
        .map(|_| (0..d).map(|k| scales[k] * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

/// `(1/n) XᵀX` with three explicit loops.
pub fn naive_gram(x: &Rows) -> Rows {
    let n = x.len();
    let d = x[0].len();
    let mut g = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..d {
            let mut s = 0.0;
            for row in x {
                s += row[a] * row[b];
            }
            g[a][b] = s / n as f64;
        }
    }
    g
}

pub fn mat_vec(m: &Rows, v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cyclic Jacobi rotations. Returns eigenvalues descending with their unit
/// eigenvectors.
pub fn jacobi_eigen(m: &Rows) -> (Vec<f64>, Rows) {
    let d = m.len();
    let mut a = m.clone();
    let mut v: Rows = (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..d).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap());
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..d).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

/// Directed relevance straight from the definitions: full spectra, Jacobi
/// eigenvectors, floor relative to the local leading eigenvalue, exponent
/// over the retained pairs.
pub fn reference_relevance(users: &[Rows], relative_floor: f64) -> Rows {
    let grams: Vec<Rows> = users.iter().map(naive_gram).collect();
    let eig: Vec<(Vec<f64>, Rows)> = grams.iter().map(jacobi_eigen).collect();
    let n = users.len();
    let mut r = vec![vec![0.0; n]; n];
    for i in 0..n {
        let (lam, _) = &eig[i];
        let floor = relative_floor * lam[0];
        for j in 0..n {
            let (_, vecs) = &eig[j];
            let mut prod_log = 0.0;
            let mut count = 0;
            for k in 0..lam.len() {
                let hat = norm(&mat_vec(&grams[i], &vecs[k]));
                let local = lam[k].max(0.0);
                let hi = local.max(hat);
                if hi <= floor {
                    continue;
                }
                prod_log += (local.min(hat) / hi).ln();
                count += 1;
            }
            r[i][j] = (prod_log / count as f64).exp();
        }
    }
    r
}

pub fn reference_matrix(users: &[Rows], relative_floor: f64) -> Rows {
    let r = reference_relevance(users, relative_floor);
    let n = r.len();
    let mut out = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out[i][j] = (r[i][j] + r[j][i]) / 2.0;
            }
        }
    }
    out
}

/// Random orthogonal matrix via Gram-Schmidt on Gaussian columns.
pub fn random_orthogonal(rng: &mut impl Rng, d: usize) -> Rows {
    let mut basis: Rows = Vec::with_capacity(d);
    while basis.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for b in &basis {
            let p = dot(&v, b);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= p * y;
            }
        }
        let n = norm(&v);
        if n > 1e-6 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

pub fn mat_mul(a: &Rows, b: &Rows) -> Rows {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n)
        .map(|i| (0..m).map(|j| (0..k).map(|t| a[i][t] * b[t][j]).sum()).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveMerge {
    pub members_a: Vec<usize>,
    pub members_b: Vec<usize>,
    pub height: f64,
}

/// Agglomerates by recomputing every cluster-pair linkage from the original
/// dissimilarities at each step. `average` uses the mean over member pairs.
pub fn naive_hac(dissimilarity: &Rows, linkage: &str) -> Vec<NaiveMerge> {
    let n = dissimilarity.len();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut merges = Vec::new();
    while clusters.len() > 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let pairs: Vec<f64> = clusters[a]
                    .iter()
                    .flat_map(|&i| clusters[b].iter().map(move |&j| dissimilarity[i][j]))
                    .collect();
                let h = match linkage {
                    "single" => pairs.iter().cloned().fold(f64::INFINITY, f64::min),
                    "complete" => pairs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    _ => pairs.iter().sum::<f64>() / pairs.len() as f64,
                };
                let ma = *clusters[a].iter().min().unwrap();
                let mb = *clusters[b].iter().min().unwrap();
                let key = (ma.min(mb), ma.max(mb));
                let better = match best {
                    None => true,
                    Some((bh, k0, k1, _, _)) => h < bh - 1e-12 || ((h - bh).abs() <= 1e-12 && key < (k0, k1)),
                };
                if better {
                    best = Some((h, key.0, key.1, a, b));
                }
            }
        }
        let (h, _, _, a, b) = best.unwrap();
        let (mut ca, mut cb) = (clusters[a].clone(), clusters[b].clone());
        ca.sort_unstable();
        cb.sort_unstable();
        if cb[0] < ca[0] {
            std::mem::swap(&mut ca, &mut cb);
        }
        let mut joined = ca.clone();
        joined.extend(&cb);
        joined.sort_unstable();
        merges.push(NaiveMerge { members_a: ca, members_b: cb, height: h });
        clusters.remove(b);
        clusters.remove(a);
        clusters.push(joined);
    }
    merges
}
