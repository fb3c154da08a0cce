//! PCA and exact t-SNE.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{column_means, sq_dist, symmetric_eigen, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Unit components as rows, by decreasing variance.
    pub components: Vec<Vec<f64>>,
    /// Sample variance (n - 1 denominator) along each component.
    pub explained_variance: Vec<f64>,
}

fn check_rect(points: &[Vec<f64>], op: &str) -> Result<usize> {
    let d = points.first().map_or(0, Vec::len);
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::Contract(format!("{op}: points have unequal dimension")));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!("{op}: non-finite coordinate")));
    }
    Ok(d)
}

/// Covariance eigen-decomposition; each component's largest-magnitude entry
/// is made positive.
pub fn pca_fit(points: &[Vec<f64>], out_dims: usize) -> Result<PcaModel> {
    let d = check_rect(points, "pca_fit")?;
    let n = points.len();
    if n < 2 || out_dims == 0 || out_dims > n.min(d) {
        return Err(Error::Contract(format!(
            "pca_fit: {out_dims} components requested from {n} points of dimension {d}"
        )));
    }
    let mean = column_means(points);
    let mut cov = Matrix::zeros(d, d);
    for p in points {
        for a in 0..d {
            let da = p[a] - mean[a];
            for b in a..d {
                cov.data[a * d + b] += da * (p[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov.get(a, b) / (n - 1) as f64;
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }
    let (values, vectors) = symmetric_eigen(&cov)?;
    let mut components = Vec::with_capacity(out_dims);
    let mut explained = Vec::with_capacity(out_dims);
    for c in (0..d).rev().take(out_dims) {
        let mut v: Vec<f64> = (0..d).map(|k| vectors.get(k, c)).collect();
        let mut big = 0;
        for k in 1..d {
            if v[k].abs() > v[big].abs() {
                big = k;
            }
        }
        if v[big] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        explained.push(values[c].max(0.0));
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance: explained,
    })
}

impl PcaModel {
    pub fn transform(&self, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let d = self.mean.len();
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::Contract(format!("pca transform expects dimension {d}")));
        }
        Ok(points
            .iter()
            .map(|p| {
                self.components
                    .iter()
                    .map(|c| c.iter().zip(p).zip(&self.mean).map(|((w, x), m)| w * (x - m)).sum())
                    .collect()
            })
            .collect())
    }

    pub fn inverse_transform(&self, scores: &[Vec<f64>]) -> Vec<Vec<f64>> {
        scores
            .iter()
            .map(|s| {
                let mut x = self.mean.clone();
                for (c, &w) in self.components.iter().zip(s) {
                    for (xi, ci) in x.iter_mut().zip(c) {
                        *xi += w * ci;
                    }
                }
                x
            })
            .collect()
    }
}

/// Convenience: fit and transform in one go.
pub fn pca(points: &[Vec<f64>], out_dims: usize) -> Result<Vec<Vec<f64>>> {
    pca_fit(points, out_dims)?.transform(points)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub dims: usize,
    pub perplexity: f64,
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub momentum_start: f64,
    pub momentum_final: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            dims: 3,
            perplexity: 100.0,
            iterations: 1000,
            exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            momentum_start: 0.5,
            momentum_final: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    pub embedding: Vec<Vec<f64>>,
    /// KL(P || Q) at the start and after every iteration (unexaggerated P).
    pub kl: Vec<f64>,
}

/// Row-conditional affinities matched to `perplexity` by bisection on the
/// Gaussian precision. Returns the row-stochastic matrix and each row's entropy.
pub fn conditional_affinities(sq: &Matrix, perplexity: f64) -> (Matrix, Vec<f64>) {
    let n = sq.rows;
    let target = perplexity.ln();
    let mut p = Matrix::zeros(n, n);
    let mut entropies = vec![0.0; n];
    let mut row = vec![0.0; n];
    for i in 0..n {
        let dmin = (0..n)
            .filter(|&j| j != i)
            .map(|j| sq.get(i, j))
            .fold(f64::INFINITY, f64::min);
        let mut beta = 1.0;
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        let mut h = 0.0;
        for _ in 0..50 {
            let mut z = 0.0;
            let mut wsum = 0.0;
            for j in 0..n {
                if j == i {
                    row[j] = 0.0;
                    continue;
                }
                let dj = sq.get(i, j) - dmin;
                let e = (-beta * dj).exp();
                row[j] = e;
                z += e;
                wsum += e * dj;
            }
            h = z.ln() + beta * wsum / z;
            for r in row.iter_mut() {
                *r /= z;
            }
            let diff = h - target;
            if diff.abs() < 1e-5 {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        entropies[i] = h;
        p.data[i * n..(i + 1) * n].copy_from_slice(&row);
    }
    (p, entropies)
}

fn joint_affinities(cond: &Matrix) -> Matrix {
    let n = cond.rows;
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            p.data[i * n + j] = ((cond.get(i, j) + cond.get(j, i)) / (2.0 * n as f64)).max(1e-12);
        }
        p.data[i * n + i] = 0.0;
    }
    p
}

fn kl_and_grad(p: &Matrix, y: &[Vec<f64>], exaggeration: f64, grad: &mut [Vec<f64>]) -> f64 {
    let n = y.len();
    let mut num = Matrix::zeros(n, n);
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let v = 1.0 / (1.0 + sq_dist(&y[i], &y[j]));
            num.data[i * n + j] = v;
            num.data[j * n + i] = v;
            z += 2.0 * v;
        }
    }
    let mut kl = 0.0;
    for g in grad.iter_mut() {
        g.iter_mut().for_each(|x| *x = 0.0);
    }
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = p.get(i, j);
            let w = num.get(i, j);
            let q = (w / z).max(1e-12);
            kl += pij * (pij / q).ln();
            let coef = 4.0 * (exaggeration * pij - q) * w;
            for (g, (a, b)) in grad[i].iter_mut().zip(y[i].iter().zip(&y[j])) {
                *g += coef * (a - b);
            }
        }
    }
    kl
}

/// Exact t-SNE from a PCA start rescaled to standard deviation 1e-4.
pub fn tsne(points: &[Vec<f64>], cfg: &TsneConfig) -> Result<TsneResult> {
    let d = check_rect(points, "tsne")?;
    let n = points.len();
    if !(cfg.perplexity > 0.0) || 3.0 * cfg.perplexity >= n as f64 {
        return Err(Error::Contract(format!(
            "tsne: perplexity {} needs more than {} points, got {n}",
            cfg.perplexity,
            3.0 * cfg.perplexity
        )));
    }
    if cfg.dims == 0 {
        return Err(Error::Config("tsne: dims must be positive".into()));
    }
    let mut sq = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = sq_dist(&points[i], &points[j]);
            sq.set(i, j, v);
            sq.set(j, i, v);
        }
    }
    let (cond, _) = conditional_affinities(&sq, cfg.perplexity);
    let p = joint_affinities(&cond);

    let pca_dims = cfg.dims.min(d).min(n);
    let start = pca(points, pca_dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut y: Vec<Vec<f64>> = start
        .into_iter()
        .map(|mut r| {
            while r.len() < cfg.dims {
                r.push(rng.sample::<f64, _>(StandardNormal));
            }
            r
        })
        .collect();
    let m0 = y.iter().map(|r| r[0]).sum::<f64>() / n as f64;
    let sd0 = (y.iter().map(|r| (r[0] - m0).powi(2)).sum::<f64>() / n as f64).sqrt();
    let scale = if sd0 > 0.0 { 1e-4 / sd0 } else { 1e-4 };
    for r in &mut y {
        r.iter_mut().for_each(|x| *x *= scale);
    }

    let mut grad = vec![vec![0.0; cfg.dims]; n];
    let mut update = vec![vec![0.0; cfg.dims]; n];
    let mut gains = vec![vec![1.0f64; cfg.dims]; n];
    let mut kl = Vec::with_capacity(cfg.iterations + 1);
    for it in 0..cfg.iterations {
        let early = it < cfg.exaggeration_iters;
        let ex = if early { cfg.exaggeration } else { 1.0 };
        let momentum = if early { cfg.momentum_start } else { cfg.momentum_final };
        kl.push(kl_and_grad(&p, &y, ex, &mut grad));
        for i in 0..n {
            for c in 0..cfg.dims {
                let g = grad[i][c];
                let u = update[i][c];
                gains[i][c] = if (g > 0.0) != (u > 0.0) {
                    gains[i][c] + 0.2
                } else {
                    (gains[i][c] * 0.8).max(0.01)
                };
                update[i][c] = momentum * u - cfg.learning_rate * gains[i][c] * g;
                y[i][c] += update[i][c];
            }
        }
        let mean = column_means(&y);
        for r in &mut y {
            for (x, m) in r.iter_mut().zip(&mean) {
                *x -= m;
            }
        }
    }
    kl.push(kl_and_grad(&p, &y, 1.0, &mut grad));
    if y.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("tsne diverged".into()));
    }
    Ok(TsneResult { embedding: y, kl })
}
