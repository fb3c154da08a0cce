use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::{check_points, ClusterAssignment};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, forward_substitute, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Added to every covariance diagonal.
    pub reg: f64,
    /// Stop once the log-likelihood gains less than this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            k: 3,
            max_iter: 200,
            reg: 1e-6,
            tol: 1e-7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmResult {
    pub assignment: ClusterAssignment,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Matrix>,
    /// Total log-likelihood at each E-step.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

struct Params {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covs: Vec<Matrix>,
}

fn m_step(points: &[Vec<f64>], resp: &[Vec<f64>], reg: f64) -> Params {
    let n = points.len();
    let d = points[0].len();
    let k = resp[0].len();
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    for j in 0..k {
        let nk: f64 = resp.iter().map(|r| r[j]).sum::<f64>() + 10.0 * f64::EPSILON;
        let mut mean = vec![0.0; d];
        for (r, p) in resp.iter().zip(points) {
            for (m, x) in mean.iter_mut().zip(p) {
                *m += r[j] * x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nk);
        let mut cov = Matrix::zeros(d, d);
        for (r, p) in resp.iter().zip(points) {
            let w = r[j];
            if w == 0.0 {
                continue;
            }
            for a in 0..d {
                let da = p[a] - mean[a];
                for b in 0..=a {
                    let v = cov.get(a, b) + w * da * (p[b] - mean[b]);
                    cov.set(a, b, v);
                }
            }
        }
        for a in 0..d {
            for b in 0..=a {
                let v = cov.get(a, b) / nk;
                cov.set(a, b, v);
                cov.set(b, a, v);
            }
            let v = cov.get(a, a) + reg;
            cov.set(a, a, v);
        }
        weights.push(nk / n as f64);
        means.push(mean);
        covs.push(cov);
    }
    Params {
        weights,
        means,
        covs,
    }
}

/// Fills `resp` with posterior responsibilities; returns the total log-likelihood.
fn e_step(points: &[Vec<f64>], params: &Params, resp: &mut [Vec<f64>]) -> Result<f64> {
    let d = points[0].len();
    let k = params.weights.len();
    let log2pi = (2.0 * std::f64::consts::PI).ln();
    let mut factors = Vec::with_capacity(k);
    for (j, c) in params.covs.iter().enumerate() {
        let l = cholesky(c).map_err(|_| {
            Error::Numerical(format!("covariance of component {j} is singular"))
        })?;
        let logdet: f64 = (0..d).map(|i| l.get(i, i).ln()).sum::<f64>() * 2.0;
        factors.push((l, logdet));
    }
    let mut total = 0.0;
    let mut logp = vec![0.0; k];
    for (p, r) in points.iter().zip(resp.iter_mut()) {
        for j in 0..k {
            let (l, logdet) = &factors[j];
            let diff: Vec<f64> = p.iter().zip(&params.means[j]).map(|(x, m)| x - m).collect();
            let y = forward_substitute(l, &diff);
            let maha: f64 = y.iter().map(|v| v * v).sum();
            logp[j] = params.weights[j].ln() - 0.5 * (d as f64 * log2pi + logdet + maha);
        }
        let mx = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + logp.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        total += lse;
        for j in 0..k {
            r[j] = (logp[j] - lse).exp();
        }
    }
    if !total.is_finite() {
        return Err(Error::Numerical("non-finite log-likelihood".into()));
    }
    Ok(total)
}

/// Full-covariance EM started from Dirichlet(1, ..., 1) responsibilities.
pub fn gmm(points: &[Vec<f64>], cfg: &GmmConfig) -> Result<GmmResult> {
    check_points(points, cfg.k, "gmm")?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut resp: Vec<Vec<f64>> = points
        .iter()
        .map(|_| {
            let draw: Vec<f64> = (0..cfg.k).map(|_| Exp1.sample(&mut rng)).collect();
            let s: f64 = draw.iter().sum();
            draw.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let mut params = m_step(points, &resp, cfg.reg);
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_iter.max(1) {
        let ll = e_step(points, &params, &mut resp)?;
        let gain = trace.last().map(|prev| ll - prev);
        trace.push(ll);
        if gain.is_some_and(|g| g < cfg.tol) {
            converged = true;
            break;
        }
        params = m_step(points, &resp, cfg.reg);
    }
    let raw: Vec<i64> = resp
        .iter()
        .map(|r| {
            let mut best = 0;
            for j in 1..r.len() {
                if r[j] > r[best] {
                    best = j;
                }
            }
            best as i64
        })
        .collect();
    Ok(GmmResult {
        assignment: ClusterAssignment::from_labels(&raw),
        weights: params.weights,
        means: params.means,
        covariances: params.covs,
        log_likelihood: trace,
        converged,
    })
}
