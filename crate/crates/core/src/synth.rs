//! NEWS-like synthetic corpora with planted phenotype structure.
//!
//! Each generated series follows one phenotype's per-feature trajectory
//! `baseline + slope * t + amplitude * sin(2 pi t / period) + noise`, sampled at
//! exponentially distributed intervals and clamped to physiologic bounds.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{
    write_demographics, write_observations, DemographicsTable, FeatureKind, Gender,
    ObservationRow, PatientRows, DEFAULT_GAP_HOURS, N_CONTINUOUS, N_FEATURES,
};
use crate::error::{Error, Result};

/// Physiologic clamp range for each continuous feature (raw units).
pub const BOUNDS: [(f64, f64); N_CONTINUOUS] = [
    (50.0, 250.0),
    (30.0, 150.0),
    (50.0, 100.0),
    (4.0, 60.0),
    (33.0, 43.0),
    (20.0, 220.0),
];

const MIN_INTERVAL_HOURS: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub baseline: f64,
    pub slope: f64,
    pub amplitude: f64,
    pub period: f64,
    pub noise_std: f64,
}

impl Trajectory {
    pub fn flat(baseline: f64, noise_std: f64) -> Self {
        Self {
            baseline,
            slope: 0.0,
            amplitude: 0.0,
            period: 24.0,
            noise_std,
        }
    }

    /// Noise-free value at `t` hours.
    pub fn mean_at(&self, t: f64) -> f64 {
        self.baseline
            + self.slope * t
            + self.amplitude * (2.0 * std::f64::consts::PI * t / self.period).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenotypeSpec {
    pub name: String,
    /// Indexed by continuous feature code.
    pub trajectories: [Trajectory; N_CONTINUOUS],
    pub o2_probability: f64,
    /// Relative weights over the generator's ward names; uniform when absent.
    pub ward_weights: Option<Vec<f64>>,
}

impl PhenotypeSpec {
    fn validate(&self) -> Result<()> {
        for (f, tr) in FeatureKind::CONTINUOUS.iter().zip(&self.trajectories) {
            if !(tr.noise_std >= 0.0) {
                return Err(Error::Config(format!("{}: {f} noise_std must be >= 0", self.name)));
            }
            if !(tr.period > 0.0) {
                return Err(Error::Config(format!("{}: {f} period must be > 0", self.name)));
            }
        }
        if !(0.0..=1.0).contains(&self.o2_probability) {
            return Err(Error::Config(format!("{}: o2_probability outside [0, 1]", self.name)));
        }
        Ok(())
    }
}

fn optima() -> [f64; N_CONTINUOUS] {
    let mut out = [0.0; N_CONTINUOUS];
    for f in FeatureKind::CONTINUOUS {
        out[f.code()] = f.optimal().unwrap();
    }
    out
}

/// Small-noise flat trajectories at the ideal values.
fn stable_trajectories() -> [Trajectory; N_CONTINUOUS] {
    let noise = [5.0, 4.0, 1.0, 1.5, 0.2, 4.0];
    let base = optima();
    std::array::from_fn(|k| Trajectory::flat(base[k], noise[k]))
}

/// The three built-in phenotypes: stable, deteriorating and febrile.
pub fn default_phenotypes() -> Vec<PhenotypeSpec> {
    let stable = PhenotypeSpec {
        name: "stable".into(),
        trajectories: stable_trajectories(),
        o2_probability: 0.05,
        ward_weights: Some(vec![0.25, 0.25, 0.5]),
    };

    let mut det = stable_trajectories();
    det[FeatureKind::Pulse.code()].slope = 2.0;
    det[FeatureKind::RespiratoryRate.code()].slope = 0.5;
    det[FeatureKind::Systolic.code()].slope = -1.5;
    let deteriorating = PhenotypeSpec {
        name: "deteriorating".into(),
        trajectories: det,
        o2_probability: 0.4,
        ward_weights: Some(vec![0.25, 0.5, 0.25]),
    };

    let mut feb = stable_trajectories();
    feb[FeatureKind::Temperature.code()].baseline += 1.8;
    feb[FeatureKind::Temperature.code()].amplitude = 0.5;
    feb[FeatureKind::Temperature.code()].period = 24.0;
    feb[FeatureKind::Pulse.code()].baseline += 25.0;
    let febrile = PhenotypeSpec {
        name: "febrile".into(),
        trajectories: feb,
        o2_probability: 0.1,
        ward_weights: Some(vec![0.5, 0.25, 0.25]),
    };
    vec![stable, deteriorating, febrile]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_series: usize,
    /// Phenotype mixture weights; must sum to 1.
    pub mix: Vec<f64>,
    pub mean_interval_hours: f64,
    pub min_rows: usize,
    pub max_rows: usize,
    pub missing_probability: f64,
    pub gender_missing_probability: f64,
    pub male_fraction: f64,
    pub ward_names: Vec<String>,
    pub ward_change_probability: f64,
    /// Probability that a series is a later visit of the previous patient.
    pub revisit_probability: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_series: 600,
            mix: vec![1.0 / 3.0; 3],
            mean_interval_hours: 6.0,
            min_rows: 4,
            max_rows: 40,
            missing_probability: 0.05,
            gender_missing_probability: 0.24,
            male_fraction: 0.51,
            ward_names: vec!["infection".into(), "medical".into(), "surgical".into()],
            ward_change_probability: 0.1,
            revisit_probability: 0.1,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self, n_phenotypes: usize) -> Result<()> {
        let mut bad = Vec::new();
        if self.n_series == 0 {
            bad.push("n_series");
        }
        if self.mix.len() != n_phenotypes
            || self.mix.iter().any(|w| !(*w >= 0.0))
            || (self.mix.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            bad.push("mix");
        }
        if !(self.mean_interval_hours > 0.0) {
            bad.push("mean_interval_hours");
        }
        if self.min_rows < 1 {
            bad.push("min_rows");
        }
        if self.max_rows < self.min_rows {
            bad.push("max_rows");
        }
        for (name, p) in [
            ("missing_probability", self.missing_probability),
            ("gender_missing_probability", self.gender_missing_probability),
            ("male_fraction", self.male_fraction),
            ("ward_change_probability", self.ward_change_probability),
            ("revisit_probability", self.revisit_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                bad.push(name);
            }
        }
        if self.ward_names.is_empty() {
            bad.push("ward_names");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid generator fields: {}", bad.join(", "))))
        }
    }
}

/// Generated observations, demographics and per-series ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub patients: Vec<PatientRows>,
    pub demographics: DemographicsTable,
    /// `(series_id, phenotype name)` in generation order.
    pub labels: Vec<(String, String)>,
    pub phenotype_names: Vec<String>,
}

impl Corpus {
    pub fn label_of(&self, series_id: &str) -> Option<usize> {
        self.labels
            .iter()
            .find(|(id, _)| id == series_id)
            .and_then(|(_, name)| self.phenotype_names.iter().position(|n| n == name))
    }

    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_observations(&self.patients, BufWriter::new(File::create(dir.join("observations.csv"))?))?;
        write_demographics(&self.demographics, BufWriter::new(File::create(dir.join("demographics.csv"))?))?;
        write_labels(&self.labels, BufWriter::new(File::create(dir.join("labels.csv"))?))
    }
}

pub fn write_labels<W: Write>(labels: &[(String, String)], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["series_id", "phenotype"])?;
    for (id, p) in labels {
        w.write_record([id, p])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::Reader::from_reader(crate::error::open_file(path)?);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["series_id", "phenotype"] {
        return Err(Error::Schema("labels.csv must have header series_id,phenotype".into()));
    }
    rdr.records()
        .map(|r| {
            let r = r?;
            Ok((r[0].to_string(), r[1].to_string()))
        })
        .collect()
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Draws a full corpus. Deterministic in `config.seed`.
pub fn generate_corpus(config: &GeneratorConfig, phenotypes: &[PhenotypeSpec]) -> Result<Corpus> {
    if phenotypes.is_empty() {
        return Err(Error::Config("at least one phenotype is required".into()));
    }
    config.validate(phenotypes.len())?;
    for p in phenotypes {
        p.validate()?;
        if let Some(w) = &p.ward_weights {
            if w.len() != config.ward_names.len() || w.iter().any(|x| !(*x >= 0.0)) {
                return Err(Error::Config(format!("{}: ward_weights length/sign", p.name)));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let interval = Exp::new(1.0 / config.mean_interval_hours)
        .map_err(|e| Error::Config(format!("mean_interval_hours: {e}")))?;
    let revisit_gap = 72.0..240.0;

    let mut patients: Vec<PatientRows> = Vec::new();
    let mut demographics = DemographicsTable::new();
    let mut labels = Vec::with_capacity(config.n_series);
    let mut visit_of_last = 0usize;
    let uniform_wards = vec![1.0; config.ward_names.len()];

    for _ in 0..config.n_series {
        let ph_idx = pick(&mut rng, &config.mix);
        let ph = &phenotypes[ph_idx];
        let revisit = !patients.is_empty() && rng.gen::<f64>() < config.revisit_probability;
        let (pid, origin) = if revisit {
            let last = patients.last().unwrap();
            let end = last.rows.last().unwrap().timestamp;
            visit_of_last += 1;
            (last.patient_id.clone(), round4(end + rng.gen_range(revisit_gap.clone())))
        } else {
            visit_of_last = 0;
            let pid = format!("P{:05}", patients.len());
            let gender = if rng.gen::<f64>() < config.gender_missing_probability {
                None
            } else if rng.gen::<f64>() < config.male_fraction {
                Some(Gender::Male)
            } else {
                Some(Gender::Female)
            };
            demographics.insert(pid.clone(), (gender, None));
            patients.push(PatientRows {
                patient_id: pid.clone(),
                rows: Vec::new(),
            });
            (pid, 0.0)
        };

        let weights = ph.ward_weights.as_deref().unwrap_or(&uniform_wards);
        let ward = pick(&mut rng, weights);
        let change_at = (rng.gen::<f64>() < config.ward_change_probability).then(|| rng.gen::<f64>());
        let second_ward = (ward + 1 + rng.gen_range(0..config.ward_names.len().max(2) - 1))
            % config.ward_names.len();

        let m = rng.gen_range(config.min_rows..=config.max_rows);
        let mut t = 0.0f64;
        let mut rows = Vec::with_capacity(m);
        for i in 0..m {
            if i > 0 {
                // keep visits contiguous: an interval longer than the split gap would start a new visit
                let dt = loop {
                    let d = interval.sample(&mut rng);
                    if (MIN_INTERVAL_HOURS..DEFAULT_GAP_HOURS).contains(&d) {
                        break d;
                    }
                };
                t = round4(t + dt);
            }
            let mut values = [None; N_FEATURES];
            for f in FeatureKind::CONTINUOUS {
                let tr = &ph.trajectories[f.code()];
                let noise = if tr.noise_std > 0.0 {
                    Normal::new(0.0, tr.noise_std).unwrap().sample(&mut rng)
                } else {
                    0.0
                };
                let (lo, hi) = BOUNDS[f.code()];
                values[f.code()] = Some(round4((tr.mean_at(t) + noise).clamp(lo, hi)));
            }
            values[FeatureKind::SupplementalOxygen.code()] =
                Some(if rng.gen::<f64>() < ph.o2_probability { 1.0 } else { 0.0 });
            for slot in values.iter_mut() {
                if rng.gen::<f64>() < config.missing_probability {
                    *slot = None;
                }
            }
            if values.iter().all(Option::is_none) {
                let p = FeatureKind::Pulse;
                let (lo, hi) = BOUNDS[p.code()];
                values[p.code()] = Some(round4(ph.trajectories[p.code()].mean_at(t).clamp(lo, hi)));
            }
            let ward_idx = match change_at {
                Some(frac) if i > 0 && (i as f64) >= frac * m as f64 => second_ward,
                _ => ward,
            };
            rows.push(ObservationRow {
                timestamp: round4(origin + t),
                values,
                ward: Some(config.ward_names[ward_idx].clone()),
            });
        }
        let patient = patients.last_mut().unwrap();
        debug_assert_eq!(patient.patient_id, pid);
        patient.rows.extend(rows);
        if !revisit {
            demographics.get_mut(&pid).unwrap().1 = Some(config.ward_names[ward].clone());
        }
        labels.push((format!("{pid}_v{visit_of_last}"), ph.name.clone()));
    }
    Ok(Corpus {
        patients,
        demographics,
        labels,
        phenotype_names: phenotypes.iter().map(|p| p.name.clone()).collect(),
    })
}

/// Nearest-centroid accuracy on per-series mean vitals (raw units), with
/// centroids fit on the same series. A quick check that the planted phenotypes
/// are separable before any learning happens.
pub fn centroid_separability(corpus: &Corpus) -> f64 {
    let series = crate::data::split_visits(&corpus.patients, DEFAULT_GAP_HOURS);
    let mut feats: Vec<[f64; N_CONTINUOUS]> = Vec::new();
    let mut truth = Vec::new();
    for s in &series {
        let Some(label) = corpus.label_of(&s.id) else { continue };
        let mut m = [0.0; N_CONTINUOUS];
        for f in FeatureKind::CONTINUOUS {
            let vals: Vec<f64> = s.values_of(f).collect();
            m[f.code()] = if vals.is_empty() {
                f.optimal().unwrap()
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            };
        }
        feats.push(m);
        truth.push(label);
    }
    let k = corpus.phenotype_names.len();
    let mut centroids = vec![[0.0; N_CONTINUOUS]; k];
    let mut counts = vec![0usize; k];
    for (x, &c) in feats.iter().zip(&truth) {
        counts[c] += 1;
        for j in 0..N_CONTINUOUS {
            centroids[c][j] += x[j];
        }
    }
    for c in 0..k {
        for j in 0..N_CONTINUOUS {
            centroids[c][j] /= counts[c].max(1) as f64;
        }
    }
    let correct = feats
        .iter()
        .zip(&truth)
        .filter(|(x, &c)| {
            let nearest = (0..k)
                .filter(|&j| counts[j] > 0)
                .min_by(|&a, &b| {
                    let da: f64 = (0..N_CONTINUOUS).map(|i| (x[i] - centroids[a][i]).powi(2)).sum();
                    let db: f64 = (0..N_CONTINUOUS).map(|i| (x[i] - centroids[b][i]).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            nearest == c
        })
        .count();
    correct as f64 / feats.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::split_visits;

    fn quiet(mut p: PhenotypeSpec) -> PhenotypeSpec {
        for tr in &mut p.trajectories {
            tr.noise_std = 0.0;
        }
        p
    }

    #[test]
    fn degenerate_generator_emits_baselines() {
        let mut p = quiet(default_phenotypes().remove(0));
        p.o2_probability = 0.0;
        let cfg = GeneratorConfig {
            n_series: 1,
            mix: vec![1.0],
            missing_probability: 0.0,
            ..Default::default()
        };
        let c = generate_corpus(&cfg, &[p.clone()]).unwrap();
        for row in &c.patients[0].rows {
            for f in FeatureKind::CONTINUOUS {
                assert_eq!(row.values[f.code()], Some(p.trajectories[f.code()].baseline));
            }
            assert_eq!(row.values[6], Some(0.0));
        }
    }

    #[test]
    fn stable_temperature_is_37_without_noise() {
        let p = quiet(default_phenotypes().remove(0));
        let temp = p.trajectories[FeatureKind::Temperature.code()];
        for t in [0.0, 3.5, 100.0] {
            assert_eq!(temp.mean_at(t), 37.0);
        }
    }

    #[test]
    fn deteriorating_pulse_after_ten_hours() {
        let p = &default_phenotypes()[1];
        assert_eq!(p.name, "deteriorating");
        assert_eq!(p.trajectories[FeatureKind::Pulse.code()].mean_at(10.0), 90.0);
    }

    #[test]
    fn defaults_differ_pairwise_in_two_parameters() {
        let ps = default_phenotypes();
        for i in 0..ps.len() {
            for j in i + 1..ps.len() {
                let differing = FeatureKind::CONTINUOUS
                    .iter()
                    .filter(|f| {
                        let (a, b) = (ps[i].trajectories[f.code()], ps[j].trajectories[f.code()]);
                        a.baseline != b.baseline || a.slope != b.slope
                    })
                    .count();
                assert!(differing >= 2, "{} vs {}", ps[i].name, ps[j].name);
            }
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        for seed in [0, 7, 12345] {
            let cfg = GeneratorConfig { n_series: 40, seed, ..Default::default() };
            let a = generate_corpus(&cfg, &default_phenotypes()).unwrap();
            let b = generate_corpus(&cfg, &default_phenotypes()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn invariants_hold_on_default_corpus() {
        let cfg = GeneratorConfig { n_series: 300, seed: 3, ..Default::default() };
        let c = generate_corpus(&cfg, &default_phenotypes()).unwrap();
        assert_eq!(c.labels.len(), 300);
        let series = split_visits(&c.patients, DEFAULT_GAP_HOURS);
        assert_eq!(series.len(), 300);
        for (s, (id, _)) in series.iter().zip(&c.labels) {
            assert_eq!(&s.id, id);
        }
        for p in &c.patients {
            for w in p.rows.windows(2) {
                assert!(w[1].timestamp > w[0].timestamp);
            }
            for r in &p.rows {
                for f in FeatureKind::CONTINUOUS {
                    if let Some(v) = r.values[f.code()] {
                        let (lo, hi) = BOUNDS[f.code()];
                        assert!((lo..=hi).contains(&v));
                    }
                }
            }
        }
    }

    #[test]
    fn invalid_config_lists_fields() {
        let cfg = GeneratorConfig {
            mix: vec![0.5, 0.6, 0.0],
            min_rows: 0,
            ..Default::default()
        };
        let err = generate_corpus(&cfg, &default_phenotypes()).unwrap_err().to_string();
        assert!(err.contains("mix") && err.contains("min_rows"), "{err}");
    }

    #[test]
    fn separated_phenotypes_are_centroid_separable() {
        // three phenotypes 6 noise-sd apart in pulse and temperature
        let mut ps = default_phenotypes();
        for (i, p) in ps.iter_mut().enumerate() {
            for tr in p.trajectories.iter_mut() {
                tr.slope = 0.0;
                tr.amplitude = 0.0;
            }
            p.trajectories[FeatureKind::Pulse.code()].baseline = 70.0 + 24.0 * i as f64;
            p.trajectories[FeatureKind::Temperature.code()].baseline = 36.5 + 1.2 * i as f64;
        }
        let cfg = GeneratorConfig { n_series: 600, seed: 1, ..Default::default() };
        let c = generate_corpus(&cfg, &ps).unwrap();
        assert!(centroid_separability(&c) >= 0.95);
    }
}
