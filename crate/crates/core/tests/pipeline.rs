mod common;

use common::*;
use phenotraj::data::FeatureKind;
use phenotraj::pipeline::{
    baseline_descriptors, export_scatter, run, run_baseline, Descriptor, ExperimentConfig, Method,
    Overlay, PipelineKind, Reduction, REPORT_HEADER,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_strats() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.pipeline.kind = PipelineKind::Strats;
    cfg.encoder.d_var = 8;
    cfg.encoder.d_stat = 4;
    cfg.encoder.blocks = 1;
    cfg.encoder.heads = 2;
    cfg.train.samples_per_epoch = 64;
    cfg.train.max_epochs = 2;
    cfg
}

#[test]
fn descriptors_match_a_direct_scan() {
    let ds = synthetic_dataset(7);
    let all = [Descriptor::Min, Descriptor::Max, Descriptor::Mean];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let s = &ds.series[rng.gen_range(0..ds.len())];
        let v = baseline_descriptors(s, &all);
        assert_eq!(v.len(), 21);
        for f in FeatureKind::ALL {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let (mut sum, mut n) = (0.0, 0usize);
            for t in &s.triplets {
                if t.feature == f {
                    lo = lo.min(t.value);
                    hi = hi.max(t.value);
                    sum += t.value;
                    n += 1;
                }
            }
            let expect = if n == 0 { [0.0; 3] } else { [lo, hi, sum / n as f64] };
            let k = f.code();
            // feature-major: min, max, mean of feature 0, then feature 1, ...
            assert_eq!(v[3 * k], expect[0]);
            assert_eq!(v[3 * k + 1], expect[1]);
            assert!((v[3 * k + 2] - expect[2]).abs() < 1e-12);
        }
        let max_only: Vec<f64> = (0..7).map(|k| v[3 * k + 1]).collect();
        assert_eq!(baseline_descriptors(s, &[Descriptor::Max]), max_only);
    }
}

#[test]
fn baseline_run_is_byte_deterministic_and_complete() {
    let mut cfg = ExperimentConfig::default();
    cfg.pipeline.methods = vec![Method::Kmeans, Method::Gmm, Method::Hdb];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_baseline(&cfg, a.path()).unwrap();
    let rb = run_baseline(&cfg, b.path()).unwrap();
    assert_eq!(ra.files.len(), rb.files.len());
    for (fa, fb) in ra.files.iter().zip(&rb.files) {
        assert_eq!(fa.file_name(), fb.file_name());
        let bytes = std::fs::read(fa).unwrap();
        assert!(!bytes.is_empty(), "{} is empty", fa.display());
        assert_eq!(bytes, std::fs::read(fb).unwrap(), "{} differs", fa.display());
    }
    let names: Vec<String> = ra.files.iter().map(|f| f.file_name().unwrap().to_string_lossy().into_owned()).collect();
    for want in ["report.csv", "assignments_kmeans.csv", "assignments_gmm.csv", "assignments_hdb.csv", "embeddings.csv"] {
        assert!(names.iter().any(|n| n == want), "missing {want} in {names:?}");
    }
    let report = std::fs::read_to_string(a.path().join("report.csv")).unwrap();
    let header = report.lines().next().unwrap();
    assert_eq!(header, REPORT_HEADER.join(","));
    let row: Vec<&str> = report.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row.len(), 12);
    assert_eq!(&row[..4], &["baseline-min+max+mean", "A", "pca", "3"]);
    // spectral was not requested
    assert_eq!(row[5], "");
    assert_eq!(row[9], "");
}

#[test]
fn strats_run_is_deterministic_and_writes_training_artifacts() {
    let cfg = tiny_strats();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run(&cfg, a.path()).unwrap();
    run(&cfg, b.path()).unwrap();
    for f in &ra.files {
        let name = f.file_name().unwrap();
        assert!(std::fs::metadata(f).unwrap().len() > 0);
        assert_eq!(std::fs::read(f).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name:?} differs");
    }
    for want in ["params.bin", "loss_history.csv", "encodings.csv", "report.csv", "embeddings.csv"] {
        assert!(a.path().join(want).exists(), "missing {want}");
    }
    assert_eq!(ra.history.len(), 2);
    assert_eq!(ra.report.model, "strats");
    assert!(ra.report.ari.contains_key(&Method::Kmeans));
}

#[test]
fn strats_without_params_or_training_is_a_config_error() {
    let mut cfg = tiny_strats();
    cfg.encoder.train = false;
    let dir = tempfile::tempdir().unwrap();
    let err = run(&cfg, dir.path()).unwrap_err();
    assert!(err.is_config(), "{err}");
}

#[test]
fn reusing_saved_params_skips_training() {
    let cfg = tiny_strats();
    let first = tempfile::tempdir().unwrap();
    let trained = run(&cfg, first.path()).unwrap();
    let mut reuse = cfg.clone();
    reuse.encoder.train = false;
    reuse.encoder.params = Some(first.path().join("params.bin"));
    let second = tempfile::tempdir().unwrap();
    let again = run(&reuse, second.path()).unwrap();
    assert!(again.history.is_empty());
    assert_eq!(
        std::fs::read(first.path().join("encodings.csv")).unwrap(),
        std::fs::read(second.path().join("encodings.csv")).unwrap()
    );
    assert_eq!(trained.report, again.report);
}

#[test]
fn scatter_marks_noise_distinctly() {
    let (mut pts, _) = blobs(&[vec![0.0, 0.0, 0.0], vec![8.0, 8.0, 8.0]], 30, 0.4, 2);
    pts.extend([vec![40.0, -40.0, 0.0], vec![-40.0, 40.0, 3.0], vec![0.0, 60.0, -60.0]]);
    let labels = phenotraj::clustering::hdbscan(&pts, &phenotraj::clustering::HdbscanConfig::default())
        .unwrap()
        .assignment
        .labels;
    assert!(labels.contains(&-1));
    let ids: Vec<String> = (0..pts.len()).map(|i| format!("s{i}")).collect();
    let dir = tempfile::tempdir().unwrap();
    let (csv_path, svg_path) = export_scatter(dir.path(), "clusters", &ids, &pts, &labels, Overlay::Cluster).unwrap();
    let csv = std::fs::read_to_string(csv_path).unwrap();
    assert_eq!(csv.lines().count(), pts.len() + 1);
    assert_eq!(csv.lines().next().unwrap(), "series_id,x,y,z,overlay_value");
    assert!(csv.lines().any(|l| l.ends_with(",-1")));
    let svg = std::fs::read_to_string(svg_path).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert!(svg.contains("#9e9e9e"));
    assert_eq!(svg.matches("data-value=").count(), pts.len());
}

#[test]
fn gender_overlay_is_binary() {
    let ds = synthetic_dataset(0);
    let ids: Vec<String> = ds.series.iter().map(|s| s.id.clone()).collect();
    let coords: Vec<Vec<f64>> = (0..ds.len()).map(|i| vec![i as f64, 0.0, 1.0]).collect();
    let values: Vec<i64> = ds
        .series
        .iter()
        .map(|s| (s.demographics.gender == Some(phenotraj::data::Gender::Male)) as i64)
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let (csv_path, _) = export_scatter(dir.path(), "g", &ids, &coords, &values, Overlay::Gender).unwrap();
    let csv = std::fs::read_to_string(csv_path).unwrap();
    assert_eq!(csv.lines().count(), ds.len() + 1);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",0") || l.ends_with(",1")));
    assert!("sideways".parse::<Overlay>().is_err());
}

#[test]
fn tsne_reduction_runs_end_to_end() {
    let mut cfg = ExperimentConfig::default();
    cfg.synth.n_series = 150;
    cfg.pipeline.reduction = Reduction::Tsne;
    cfg.pipeline.descriptors = vec![Descriptor::Max];
    cfg.pipeline.methods = vec![Method::Kmeans];
    cfg.tsne.perplexity = 30.0;
    cfg.tsne.iterations = 300;
    let dir = tempfile::tempdir().unwrap();
    let out = run_baseline(&cfg, dir.path()).unwrap();
    assert_eq!(out.report.reduction, "tsne");
    assert_eq!(out.report.model, "baseline-max");
    assert!(out.points.iter().all(|p| p.len() == 3));
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let default = ExperimentConfig::load(&dir.join("default.toml")).unwrap();
    assert_eq!(default, ExperimentConfig::default());
    let quick = ExperimentConfig::load(&dir.join("strats_quick.toml")).unwrap();
    assert_eq!(quick.pipeline.kind, PipelineKind::Strats);
}
