mod common;

use common::*;
use phenotraj::clustering::{hdbscan, HdbscanConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instance(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = rng.gen_range(8..=25);
    let groups = rng.gen_range(1..=3);
    let centers: Vec<(f64, f64)> = (0..groups).map(|_| (rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0))).collect();
    (0..n)
        .map(|_| {
            let (cx, cy) = centers[rng.gen_range(0..groups)];
            vec![cx + rng.gen_range(-1.5..1.5), cy + rng.gen_range(-1.5..1.5)]
        })
        .collect()
}

#[test]
fn matches_threshold_sweep_oracle_on_small_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut checked, mut skipped, mut with_clusters) = (0, 0, 0);
    while checked < 300 {
        let pts = random_instance(&mut rng);
        let mcs = rng.gen_range(2..=6);
        let ms = if rng.gen() { mcs } else { rng.gen_range(1..=mcs) };
        let Some(expect) = hdbscan_oracle(&pts, mcs, ms) else {
            skipped += 1;
            continue;
        };
        let cfg = HdbscanConfig { min_cluster_size: mcs, min_samples: Some(ms) };
        let got = hdbscan(&pts, &cfg).unwrap();
        assert_eq!(canonical(&got.assignment.labels), expect, "mcs {mcs}, min_samples {ms}, points {pts:?}");
        checked += 1;
        if expect.iter().any(|&l| l >= 0) {
            with_clusters += 1;
        }
    }
    eprintln!("checked {checked}, skipped {skipped}, with clusters {with_clusters}");
    assert!(with_clusters > 100, "only {with_clusters} instances produced clusters");
}

#[test]
fn sparse_scatter_is_all_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0)]).collect();
    let got = hdbscan(&pts, &HdbscanConfig::default()).unwrap();
    assert_eq!(hdbscan_oracle(&pts, 15, 15), Some(vec![-1; 20]));
    assert_eq!(got.assignment.k, 0);
    assert!(got.assignment.labels.iter().all(|&l| l == -1));
}
