use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::linalg::dist;

/// Mean silhouette over non-noise points, or `None` with fewer than two
/// non-noise clusters. Points alone in their cluster score 0.
pub fn silhouette(points: &[Vec<f64>], labels: &[i64]) -> Result<Option<f64>> {
    if points.len() != labels.len() {
        return Err(Error::Shape {
            op: "silhouette",
            lhs: vec![points.len()],
            rhs: vec![labels.len()],
        });
    }
    let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] >= 0).collect();
    let clusters: BTreeSet<i64> = idx.iter().map(|&i| labels[i]).collect();
    if clusters.len() < 2 {
        return Ok(None);
    }
    let slot: BTreeMap<i64, usize> = clusters.iter().enumerate().map(|(s, &c)| (c, s)).collect();
    let mut sizes = vec![0usize; clusters.len()];
    for &i in &idx {
        sizes[slot[&labels[i]]] += 1;
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; clusters.len()];
    for &i in &idx {
        let own = slot[&labels[i]];
        if sizes[own] == 1 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for &j in &idx {
            if j != i {
                sums[slot[&labels[j]]] += dist(&points[i], &points[j]);
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..sums.len())
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(Some(total / idx.len() as f64))
}

fn choose2(x: u64) -> f64 {
    (x * x.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index over points that are non-noise in both labelings.
pub fn adjusted_rand_index(labels: &[i64], truth: &[i64]) -> Result<f64> {
    if labels.len() != truth.len() {
        return Err(Error::Shape {
            op: "adjusted_rand_index",
            lhs: vec![labels.len()],
            rhs: vec![truth.len()],
        });
    }
    let mut table: BTreeMap<(i64, i64), u64> = BTreeMap::new();
    let mut rows: BTreeMap<i64, u64> = BTreeMap::new();
    let mut cols: BTreeMap<i64, u64> = BTreeMap::new();
    let mut n = 0u64;
    for (&a, &b) in labels.iter().zip(truth) {
        if a < 0 || b < 0 {
            continue;
        }
        *table.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
        n += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sa: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sb: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive(points: &[Vec<f64>], labels: &[i64]) -> f64 {
        let n = points.len();
        let mut s = 0.0;
        for i in 0..n {
            let same: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
            if same.is_empty() {
                continue;
            }
            let a = same.iter().map(|&j| dist(&points[i], &points[j])).sum::<f64>() / same.len() as f64;
            let mut b = f64::INFINITY;
            for c in labels.iter().copied().collect::<BTreeSet<_>>() {
                if c == labels[i] {
                    continue;
                }
                let other: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
                b = b.min(other.iter().map(|&j| dist(&points[i], &points[j])).sum::<f64>() / other.len() as f64);
            }
            s += (b - a) / a.max(b);
        }
        s / n as f64
    }

    #[test]
    fn single_cluster_invalid() {
        let p = vec![vec![0.0], vec![1.0]];
        assert_eq!(silhouette(&p, &[0, 0]).unwrap(), None);
        assert_eq!(silhouette(&p, &[0, -1]).unwrap(), None);
    }

    #[test]
    fn four_points_match_naive() {
        let p = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 0.0], vec![10.0, 1.0]];
        let l = [0, 0, 1, 1];
        let s = silhouette(&p, &l).unwrap().unwrap();
        assert!((s - naive(&p, &l)).abs() < 1e-12);
        let b = (10.0 + 101f64.sqrt()) / 2.0;
        assert!((s - (b - 1.0) / b).abs() < 1e-12);
    }

    #[test]
    fn mixed_labels_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = Vec::new();
        let mut l = Vec::new();
        for blob in 0..2 {
            for i in 0..20 {
                p.push(vec![20.0 * blob as f64 + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
                l.push(i % 2);
            }
        }
        assert!(silhouette(&p, &l).unwrap().unwrap() < 0.0);
    }

    #[test]
    fn noise_excluded_from_silhouette() {
        let p = vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0], vec![500.0]];
        let with = silhouette(&p, &[0, 0, 1, 1, -1]).unwrap().unwrap();
        let without = silhouette(&p[..4], &[0, 0, 1, 1]).unwrap().unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn ari_identity_and_permutation() {
        let t = [0, 0, 1, 1, 2, 2, 2];
        assert_eq!(adjusted_rand_index(&t, &t).unwrap(), 1.0);
        let perm = [2, 2, 0, 0, 1, 1, 1];
        assert_eq!(adjusted_rand_index(&perm, &t).unwrap(), 1.0);
        assert!(adjusted_rand_index(&t, &t[..3]).is_err());
    }

    #[test]
    fn ari_hand_value() {
        // contingency [[2,1],[0,2]]: index 2, a-sums 3+1, b-sums 1+3, n=5
        let a = [0, 0, 0, 1, 1];
        let b = [0, 0, 1, 1, 1];
        let expected = 4.0 * 4.0 / 10.0;
        let hand = (2.0 - expected) / (4.0 - expected);
        assert!((adjusted_rand_index(&a, &b).unwrap() - hand).abs() < 1e-15);
    }

    #[test]
    fn ari_random_labels_near_zero() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth: Vec<i64> = (0..500).map(|i| i % 3).collect();
            let guess: Vec<i64> = (0..500).map(|_| rng.gen_range(0..3)).collect();
            assert!(adjusted_rand_index(&guess, &truth).unwrap().abs() < 0.1);
        }
    }
}
