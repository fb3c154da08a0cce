use serde::{Deserialize, Serialize};

use super::{check_points, kmeans, ClusterAssignment, KMeansConfig};
use crate::error::Result;
use crate::linalg::{pairwise_distances, symmetric_eigen, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    pub k: usize,
    pub seed: u64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self { k: 3, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    pub assignment: ClusterAssignment,
    pub bandwidth: f64,
    /// Laplacian eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Gaussian affinities `exp(-d^2 / (2 s^2))` with `s` the median pairwise
/// distance; zero diagonal. Returns the matrix and `s`.
pub fn rbf_affinity(points: &[Vec<f64>]) -> (Matrix, f64) {
    let n = points.len();
    let dist = pairwise_distances(points);
    let mut upper = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            upper.push(dist.get(i, j));
        }
    }
    let mut s = median(upper);
    if !(s > 0.0) {
        s = 1.0;
    }
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let d = dist.get(i, j);
            let a = (-d * d / (2.0 * s * s)).exp();
            w.set(i, j, a);
            w.set(j, i, a);
        }
    }
    (w, s)
}

/// `I - D^{-1/2} W D^{-1/2}`; isolated nodes keep a unit diagonal.
pub fn normalized_laplacian(w: &Matrix) -> Matrix {
    let n = w.rows;
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let deg: f64 = w.row(i).iter().sum();
            if deg > 0.0 {
                1.0 / deg.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = -inv_sqrt[i] * w.get(i, j) * inv_sqrt[j];
            l.set(i, j, if i == j { 1.0 + v } else { v });
        }
    }
    l
}

/// Normalized spectral clustering: bottom-k Laplacian eigenvectors,
/// unit-normalized rows, then k-means.
pub fn spectral(points: &[Vec<f64>], cfg: &SpectralConfig) -> Result<SpectralResult> {
    check_points(points, cfg.k, "spectral")?;
    let (w, bandwidth) = rbf_affinity(points);
    let lap = normalized_laplacian(&w);
    let (values, vectors) = symmetric_eigen(&lap)?;
    let rows: Vec<Vec<f64>> = (0..points.len())
        .map(|i| {
            let r: Vec<f64> = (0..cfg.k).map(|c| vectors.get(i, c)).collect();
            let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                r.into_iter().map(|x| x / norm).collect()
            } else {
                r
            }
        })
        .collect();
    let km = kmeans(
        &rows,
        &KMeansConfig {
            k: cfg.k,
            seed: cfg.seed,
            ..Default::default()
        },
    )?;
    Ok(SpectralResult {
        assignment: km.assignment,
        bandwidth,
        eigenvalues: values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::adjusted_rand_index;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_blobs() -> (Vec<Vec<f64>>, Vec<i64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut p = Vec::new();
        let mut t = Vec::new();
        for c in 0..2 {
            for _ in 0..25 {
                let off = 12.0 * c as f64;
                p.push(vec![off + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
                t.push(c);
            }
        }
        (p, t)
    }

    #[test]
    fn blobs_split_exactly() {
        let (p, t) = two_blobs();
        let r = spectral(&p, &SpectralConfig { k: 2, seed: 0 }).unwrap();
        assert_eq!(adjusted_rand_index(&r.assignment.labels, &t).unwrap(), 1.0);
    }

    #[test]
    fn affinity_symmetric_zero_diagonal() {
        let (p, _) = two_blobs();
        let (w, s) = rbf_affinity(&p);
        assert!(s > 0.0);
        for i in 0..p.len() {
            assert_eq!(w.get(i, i), 0.0);
            for j in 0..p.len() {
                assert_eq!(w.get(i, j), w.get(j, i));
            }
        }
    }

    #[test]
    fn laplacian_spectrum_bounded() {
        let (p, _) = two_blobs();
        let (w, _) = rbf_affinity(&p);
        let (vals, _) = symmetric_eigen(&normalized_laplacian(&w)).unwrap();
        assert!(vals.iter().all(|&v| (-1e-9..=2.0 + 1e-9).contains(&v)));
        assert!(vals[0].abs() < 1e-9);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
