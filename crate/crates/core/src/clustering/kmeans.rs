use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_points, ClusterAssignment};
use crate::error::Result;
use crate::linalg::sq_dist;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub k: usize,
    pub n_init: usize,
    pub max_iter: usize,
    /// Largest centroid move (Euclidean) that still counts as converged.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 3,
            n_init: 10,
            max_iter: 300,
            tol: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignment: ClusterAssignment,
    /// Raw labels `0..k` aligned with `centroids` (before renumbering).
    pub raw_labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub wcss: f64,
    /// WCSS after each assignment step of the winning restart.
    pub trace: Vec<f64>,
    pub iterations: usize,
}

pub fn wcss(points: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, &centroids[l]))
        .sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(
    points: &[Vec<f64>],
    mut centroids: Vec<Vec<f64>>,
    cfg: &KMeansConfig,
) -> (Vec<usize>, Vec<Vec<f64>>, Vec<f64>, usize) {
    let dim = points[0].len();
    let mut labels = vec![0; points.len()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    for _ in 0..cfg.max_iter {
        iterations += 1;
        let mut total = 0.0;
        for (l, p) in labels.iter_mut().zip(points) {
            let (j, d) = nearest(p, &centroids);
            *l = j;
            total += d;
        }
        trace.push(total);
        let mut sums = vec![vec![0.0; dim]; cfg.k];
        let mut counts = vec![0usize; cfg.k];
        for (&l, p) in labels.iter().zip(points) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut shift: f64 = 0.0;
        for j in 0..cfg.k {
            if counts[j] == 0 {
                continue;
            }
            let new: Vec<f64> = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            shift = shift.max(sq_dist(&new, &centroids[j]).sqrt());
            centroids[j] = new;
        }
        if shift < cfg.tol {
            break;
        }
    }
    for (l, p) in labels.iter_mut().zip(points) {
        *l = nearest(p, &centroids).0;
    }
    (labels, centroids, trace, iterations)
}

/// k-means++ seeding and Lloyd iterations; keeps the restart with the lowest WCSS.
pub fn kmeans(points: &[Vec<f64>], cfg: &KMeansConfig) -> Result<KMeansResult> {
    check_points(points, cfg.k, "kmeans")?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..cfg.n_init.max(1) {
        let init = plus_plus(points, cfg.k, &mut rng);
        let (labels, centroids, trace, iterations) = lloyd(points, init, cfg);
        let w = wcss(points, &labels, &centroids);
        if best.as_ref().is_none_or(|b| w < b.wcss) {
            let raw: Vec<i64> = labels.iter().map(|&l| l as i64).collect();
            best = Some(KMeansResult {
                assignment: ClusterAssignment::from_labels(&raw),
                raw_labels: labels,
                centroids,
                wcss: w,
                trace,
                iterations,
            });
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::adjusted_rand_index;

    fn pts(v: &[(f64, f64)]) -> Vec<Vec<f64>> {
        v.iter().map(|&(x, y)| vec![x, y]).collect()
    }

    #[test]
    fn four_point_instance() {
        let p = pts(&[(0.0, 0.0), (0.0, 1.0), (10.0, 0.0), (10.0, 1.0)]);
        let r = kmeans(&p, &KMeansConfig { k: 2, ..Default::default() }).unwrap();
        let l = &r.assignment.labels;
        assert_eq!(l[0], l[1]);
        assert_eq!(l[2], l[3]);
        assert_ne!(l[0], l[2]);
        assert!((r.wcss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_equals_n_has_zero_wcss() {
        let p = pts(&[(0.0, 0.0), (1.0, 5.0), (-3.0, 2.0)]);
        let r = kmeans(&p, &KMeansConfig { k: 3, ..Default::default() }).unwrap();
        assert_eq!(r.wcss, 0.0);
        assert_eq!(r.assignment.k, 3);
    }

    #[test]
    fn too_few_points() {
        let p = pts(&[(0.0, 0.0)]);
        assert!(kmeans(&p, &KMeansConfig { k: 2, ..Default::default() }).is_err());
    }

    #[test]
    fn duplicated_data_same_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let c = if i < 15 { 0.0 } else { 6.0 };
                vec![c + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]
            })
            .collect();
        let mut twice = p.clone();
        twice.extend(p.iter().cloned());
        let cfg = KMeansConfig { k: 2, ..Default::default() };
        let a = kmeans(&p, &cfg).unwrap();
        let b = kmeans(&twice, &cfg).unwrap();
        let ari = adjusted_rand_index(&a.assignment.labels, &b.assignment.labels[..30]).unwrap();
        assert_eq!(ari, 1.0);
        assert!((b.wcss - 2.0 * a.wcss).abs() < 1e-9);
    }

    #[test]
    fn trace_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)])
            .collect();
        for seed in 0..5 {
            let r = kmeans(&p, &KMeansConfig { k: 4, seed, ..Default::default() }).unwrap();
            assert!(r.trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));
            assert!(r.wcss <= *r.trace.last().unwrap() + 1e-9);
        }
    }
}
