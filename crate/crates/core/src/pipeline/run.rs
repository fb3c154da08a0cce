use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::artifacts::{write_assignments, write_embeddings, write_report, ReportRow};
use super::config::{Descriptor, ExperimentConfig, Method, PipelineKind, Reduction, SourceKind};
use crate::clustering::{
    adjusted_rand_index, gmm, hdbscan, kmeans, silhouette, spectral, ClusterAssignment, GmmConfig,
    KMeansConfig, SpectralConfig,
};
use crate::data::{
    parse_demographics, parse_observations, prepare, Dataset, DemographicsTable, FeatureKind,
    LengthSummary, PatientRows, VitalSeries,
};
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::reduce::{pca, tsne};
use crate::synth::{default_phenotypes, generate_corpus, read_labels};
use crate::trainer::{fit, save_history, EpochRecord};

/// Per-feature statistics in `ALL` feature order; a feature never observed
/// in the series contributes zeros.
pub fn baseline_descriptors(series: &VitalSeries, which: &[Descriptor]) -> Vec<f64> {
    let mut out = Vec::with_capacity(FeatureKind::ALL.len() * which.len());
    for f in FeatureKind::ALL {
        let values: Vec<f64> = series.values_of(f).collect();
        for d in which {
            let v = if values.is_empty() {
                0.0
            } else {
                match d {
                    Descriptor::Min => values.iter().cloned().fold(f64::INFINITY, f64::min),
                    Descriptor::Max => values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    Descriptor::Mean => values.iter().sum::<f64>() / values.len() as f64,
                }
            };
            out.push(v);
        }
    }
    out
}

/// A prepared dataset plus optional ground-truth phenotype ids per series.
pub struct LoadedData {
    pub dataset: Dataset,
    pub summary: LengthSummary,
    pub truth: Option<Vec<i64>>,
    /// Phenotype names indexed by truth id.
    pub phenotype_names: Vec<String>,
}

fn truth_from_labels(ds: &Dataset, labels: &[(String, String)]) -> (Option<Vec<i64>>, Vec<String>) {
    let mut names: Vec<String> = Vec::new();
    let mut by_id: HashMap<&str, i64> = HashMap::new();
    for (id, p) in labels {
        let code = match names.iter().position(|n| n == p) {
            Some(c) => c,
            None => {
                names.push(p.clone());
                names.len() - 1
            }
        };
        by_id.insert(id.as_str(), code as i64);
    }
    let truth: Option<Vec<i64>> = ds.series.iter().map(|s| by_id.get(s.id.as_str()).copied()).collect();
    (truth, names)
}

/// Raw rows and demographics from the configured source.
pub fn load_raw(cfg: &ExperimentConfig) -> Result<(Vec<PatientRows>, DemographicsTable, Option<Vec<(String, String)>>)> {
    match cfg.data.source {
        SourceKind::Synthetic => {
            let corpus = generate_corpus(&cfg.synth, &default_phenotypes())?;
            Ok((corpus.patients, corpus.demographics, Some(corpus.labels)))
        }
        SourceKind::Files => {
            let obs = cfg
                .data
                .observations
                .as_ref()
                .ok_or_else(|| Error::Config("data.observations is not set".into()))?;
            let patients = parse_observations(obs)?;
            let demo = match &cfg.data.demographics {
                Some(p) => parse_demographics(p)?,
                None => DemographicsTable::new(),
            };
            let labels = cfg.data.labels.as_deref().map(read_labels).transpose()?;
            Ok((patients, demo, labels))
        }
    }
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<LoadedData> {
    let (patients, demo, labels) = load_raw(cfg)?;
    let (dataset, summary) = prepare(&patients, &demo, &cfg.prepare_config())?;
    let (truth, phenotype_names) = match labels {
        Some(l) => truth_from_labels(&dataset, &l),
        None => (None, Vec::new()),
    };
    Ok(LoadedData {
        dataset,
        summary,
        truth,
        phenotype_names,
    })
}

/// Projects to three dimensions (or passes through).
pub fn reduce_points(points: &[Vec<f64>], reduction: Reduction, cfg: &ExperimentConfig) -> Result<Vec<Vec<f64>>> {
    match reduction {
        Reduction::None => Ok(points.to_vec()),
        Reduction::Pca => pca(points, 3),
        Reduction::Tsne => Ok(tsne(points, &cfg.tsne)?.embedding),
    }
}

pub fn cluster_with(points: &[Vec<f64>], method: Method, cfg: &ExperimentConfig) -> Result<ClusterAssignment> {
    let k = cfg.pipeline.k;
    let seed = cfg.seed;
    Ok(match method {
        Method::Kmeans => {
            kmeans(
                points,
                &KMeansConfig {
                    k,
                    seed,
                    ..Default::default()
                },
            )?
            .assignment
        }
        Method::Sc => spectral(points, &SpectralConfig { k, seed })?.assignment,
        Method::Gmm => {
            gmm(
                points,
                &GmmConfig {
                    k,
                    seed,
                    ..Default::default()
                },
            )?
            .assignment
        }
        Method::Hdb => hdbscan(points, &cfg.hdbscan)?.assignment,
    })
}

/// Outcome of one pipeline run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: ReportRow,
    pub assignments: Vec<(Method, ClusterAssignment)>,
    /// The space clustering ran in.
    pub points: Vec<Vec<f64>>,
    pub series_ids: Vec<String>,
    pub history: Vec<EpochRecord>,
    pub files: Vec<PathBuf>,
}

/// Clusters `points` with every configured method and scores the result.
pub fn evaluate(
    model: String,
    points: &[Vec<f64>],
    truth: Option<&[i64]>,
    cfg: &ExperimentConfig,
) -> Result<(ReportRow, Vec<(Method, ClusterAssignment)>)> {
    let mut row = ReportRow::new(model, cfg.set_name(), cfg.pipeline.reduction.name().into(), cfg.pipeline.k);
    let mut out = Vec::new();
    for &m in &cfg.pipeline.methods {
        let a = cluster_with(points, m, cfg)?;
        let sil = silhouette(points, &a.labels)?;
        let ari = truth.map(|t| adjusted_rand_index(&a.labels, t)).transpose()?;
        row.set(m, sil, ari);
        out.push((m, a));
    }
    Ok((row, out))
}

fn write_outputs(out_dir: &Path, run: &mut RunOutput) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let report = out_dir.join("report.csv");
    write_report(BufWriter::new(File::create(&report)?), std::slice::from_ref(&run.report))?;
    run.files.push(report);
    for (m, a) in &run.assignments {
        let p = out_dir.join(format!("assignments_{}.csv", m.name()));
        write_assignments(BufWriter::new(File::create(&p)?), &run.series_ids, &a.labels)?;
        run.files.push(p);
    }
    let coords = if run.points.first().map_or(0, Vec::len) == 3 {
        run.points.clone()
    } else {
        pca(&run.points, 3.min(run.points.first().map_or(0, Vec::len)).min(run.points.len()))?
    };
    let p = out_dir.join("embeddings.csv");
    write_embeddings(BufWriter::new(File::create(&p)?), &run.series_ids, &coords)?;
    run.files.push(p);
    Ok(())
}

pub fn run_baseline(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let ds = &data.dataset;
    let x: Vec<Vec<f64>> = ds
        .series
        .iter()
        .map(|s| baseline_descriptors(s, &cfg.pipeline.descriptors))
        .collect();
    let points = reduce_points(&x, cfg.pipeline.reduction, cfg)?;
    let names: Vec<&str> = cfg.pipeline.descriptors.iter().map(|d| d.name()).collect();
    let model = format!("baseline-{}", names.join("+"));
    let (report, assignments) = evaluate(model, &points, data.truth.as_deref(), cfg)?;
    let mut run = RunOutput {
        report,
        assignments,
        points,
        series_ids: ds.series.iter().map(|s| s.id.clone()).collect(),
        history: Vec::new(),
        files: Vec::new(),
    };
    write_outputs(out_dir, &mut run)?;
    Ok(run)
}

/// Trains (or loads) the encoder named by the config.
pub fn obtain_encoder(cfg: &ExperimentConfig, ds: &Dataset) -> Result<(Encoder, Vec<EpochRecord>)> {
    if cfg.encoder.train {
        let enc = Encoder::init(cfg.encoder.to_config(ds.demographic_width()), cfg.seed)?;
        let out = fit(ds, enc, &cfg.train)?;
        Ok((out.encoder, out.history))
    } else {
        let path = cfg
            .encoder
            .params
            .as_ref()
            .ok_or_else(|| Error::Config("encoder.params is required when encoder.train = false".into()))?;
        let enc = Encoder::load(path)?;
        if enc.config().demo_width != ds.demographic_width() {
            return Err(Error::Contract(format!(
                "encoder expects demographic width {}, data has {}",
                enc.config().demo_width,
                ds.demographic_width()
            )));
        }
        Ok((enc, Vec::new()))
    }
}

/// `e_E` for every series, in dataset order.
pub fn encode_all(enc: &Encoder, ds: &Dataset) -> Result<Vec<Vec<f64>>> {
    (0..ds.len())
        .map(|i| Ok(enc.encode(&ds.series[i].triplets, &ds.demographic_vector(i))?.e_e))
        .collect()
}

pub fn run_strats(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let ds = &data.dataset;
    let (enc, history) = obtain_encoder(cfg, ds)?;
    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    if cfg.encoder.train {
        let p = out_dir.join("params.bin");
        enc.save(&p)?;
        files.push(p);
        let h = out_dir.join("loss_history.csv");
        save_history(&h, &history)?;
        files.push(h);
    }
    let encodings = encode_all(&enc, ds)?;
    let series_ids: Vec<String> = ds.series.iter().map(|s| s.id.clone()).collect();
    let p = out_dir.join("encodings.csv");
    super::artifacts::write_matrix(BufWriter::new(File::create(&p)?), "e", &series_ids, &encodings)?;
    files.push(p);
    let points = reduce_points(&encodings, cfg.pipeline.reduction, cfg)?;
    let (report, assignments) = evaluate("strats".into(), &points, data.truth.as_deref(), cfg)?;
    let mut run = RunOutput {
        report,
        assignments,
        points,
        series_ids,
        history,
        files,
    };
    write_outputs(out_dir, &mut run)?;
    Ok(run)
}

pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    match cfg.pipeline.kind {
        PipelineKind::Baseline => run_baseline(cfg, out_dir),
        PipelineKind::Strats => run_strats(cfg, out_dir),
    }
}
