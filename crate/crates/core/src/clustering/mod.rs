//! k-means, Gaussian mixtures, spectral clustering, HDBSCAN and the
//! silhouette/ARI metrics.

mod gmm;
mod hdbscan;
mod kmeans;
mod metrics;
mod spectral;

pub use gmm::{gmm, GmmConfig, GmmResult};
pub use hdbscan::{
    condensed_tree, core_distances, hdbscan, minimum_spanning_tree, mutual_reachability,
    single_linkage, CondensedEdge, HdbscanConfig, HdbscanResult, MergeStep,
};
pub use kmeans::{kmeans, wcss, KMeansConfig, KMeansResult};
pub use metrics::{adjusted_rand_index, silhouette};
pub use spectral::{normalized_laplacian, rbf_affinity, spectral, SpectralConfig, SpectralResult};

use crate::error::{Error, Result};

/// Label reserved for points no cluster claims.
pub const NOISE: i64 = -1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub labels: Vec<i64>,
    /// Number of clusters, noise excluded.
    pub k: usize,
}

impl ClusterAssignment {
    /// Renumbers non-noise labels to `0..k` in order of first appearance.
    pub fn from_labels(raw: &[i64]) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|&l| {
                if l < 0 {
                    NOISE
                } else {
                    let next = map.len() as i64;
                    *map.entry(l).or_insert(next)
                }
            })
            .collect();
        Self {
            labels,
            k: map.len(),
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            if l >= 0 {
                s[l as usize] += 1;
            }
        }
        s
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l < 0).count()
    }
}

pub(crate) fn check_points(points: &[Vec<f64>], k: usize, op: &str) -> Result<usize> {
    let n = points.len();
    if k == 0 {
        return Err(Error::Config(format!("{op}: k must be at least 1")));
    }
    if n < k {
        return Err(Error::Contract(format!("{op}: {n} points for {k} clusters")));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::Contract(format!("{op}: points have unequal dimension")));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Numerical(format!("{op}: non-finite coordinate")));
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relabels_contiguously() {
        let a = ClusterAssignment::from_labels(&[5, 5, -1, 2, 9, 2]);
        assert_eq!(a.labels, vec![0, 0, -1, 1, 2, 1]);
        assert_eq!(a.k, 3);
        assert_eq!(a.sizes(), vec![2, 2, 1]);
        assert_eq!(a.noise_count(), 1);
    }
}
