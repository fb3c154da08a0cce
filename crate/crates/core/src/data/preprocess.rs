//! Visit splitting, length filtering, normalization, standardization and
//! demographic imputation/encoding.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::feature::{FeatureKind, N_CONTINUOUS};
use super::series::{Demographics, DemographicsTable, Gender, PatientRows, Triplet, VitalSeries};
use crate::error::{Error, Result};

pub const DEFAULT_GAP_HOURS: f64 = 48.0;
pub const MAX_ROWS: usize = 60;
/// Male share used when a corpus has no recorded gender at all.
pub const DEFAULT_MALE_FRACTION: f64 = 0.51;

/// Splits each patient's rows into visits wherever consecutive timestamps
/// differ by strictly more than `gap_hours`, re-basing each visit to `t = 0`.
pub fn split_visits(patients: &[PatientRows], gap_hours: f64) -> Vec<VitalSeries> {
    let mut out = Vec::new();
    for p in patients {
        let mut visit = 0usize;
        let mut start = 0usize;
        for i in 0..p.rows.len() {
            let last = i + 1 == p.rows.len();
            let gap_after = !last && p.rows[i + 1].timestamp - p.rows[i].timestamp > gap_hours;
            if last || gap_after {
                out.push(build_series(p, start, i + 1, visit));
                visit += 1;
                start = i + 1;
            }
        }
    }
    out
}

fn build_series(p: &PatientRows, from: usize, to: usize, visit: usize) -> VitalSeries {
    let rows = &p.rows[from..to];
    let origin = rows[0].timestamp;
    let mut triplets = Vec::with_capacity(rows.len() * 7);
    for r in rows {
        for f in FeatureKind::ALL {
            if let Some(v) = r.values[f.code()] {
                triplets.push(Triplet {
                    t: r.timestamp - origin,
                    feature: f,
                    value: v,
                });
            }
        }
    }
    let wards: BTreeSet<&str> = rows.iter().filter_map(|r| r.ward.as_deref()).collect();
    let demographics = Demographics {
        ward: rows.iter().find_map(|r| r.ward.clone()),
        ward_change: wards.len() > 1,
        ..Demographics::default()
    };
    let mut s = VitalSeries {
        id: format!("{}_v{}", p.patient_id, visit),
        patient_id: p.patient_id.clone(),
        start_hours: origin,
        triplets,
        demographics,
        rows: rows.len(),
    };
    s.sort_triplets();
    s
}

/// Fills gender and ward from the demographics table. A ward in the table
/// takes precedence over the first ward seen on observation rows.
pub fn attach_demographics(series: &mut [VitalSeries], table: &DemographicsTable) {
    for s in series {
        if let Some((gender, ward)) = table.get(&s.patient_id) {
            s.demographics.gender = *gender;
            if ward.is_some() {
                s.demographics.ward = ward.clone();
            }
        }
    }
}

/// Count, mean and (population) standard deviation of series lengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthSummary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
}

impl LengthSummary {
    pub fn of(series: &[VitalSeries]) -> Self {
        let n = series.len();
        if n == 0 {
            return Self { n, mean: 0.0, std: 0.0 };
        }
        let mean = series.iter().map(|s| s.rows as f64).sum::<f64>() / n as f64;
        let var = series
            .iter()
            .map(|s| (s.rows as f64 - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        Self { n, mean, std: var.sqrt() }
    }
}

impl std::fmt::Display for LengthSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "N = {}, \u{3bc} = {:.2}, \u{3c3} = {:.2}", self.n, self.mean, self.std)
    }
}

/// Keeps series with `m_min <= rows <= 60`.
pub fn filter_series(series: Vec<VitalSeries>, m_min: usize) -> (Vec<VitalSeries>, LengthSummary) {
    let kept: Vec<_> = series
        .into_iter()
        .filter(|s| s.rows >= m_min && s.rows <= MAX_ROWS)
        .collect();
    let summary = LengthSummary::of(&kept);
    (kept, summary)
}

/// `v - optimal(f)` for a continuous feature.
pub fn normalize_value(v: f64, f: FeatureKind) -> Result<f64> {
    f.optimal()
        .map(|o| v - o)
        .ok_or_else(|| Error::Contract(format!("{f} is categorical and has no optimal value")))
}

/// Applies [`normalize_value`] to every continuous triplet.
pub fn normalize_series(series: &mut [VitalSeries]) {
    for s in series {
        for t in &mut s.triplets {
            if let Some(o) = t.feature.optimal() {
                t.value -= o;
            }
        }
    }
}

/// Per-continuous-feature mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureStats {
    pub mean: [f64; N_CONTINUOUS],
    pub std: [f64; N_CONTINUOUS],
}

impl FeatureStats {
    /// Statistics over all triplets of the given series.
    pub fn compute<'a>(series: impl IntoIterator<Item = &'a VitalSeries>) -> Result<Self> {
        let mut sum = [0.0; N_CONTINUOUS];
        let mut count = [0usize; N_CONTINUOUS];
        let collected: Vec<&VitalSeries> = series.into_iter().collect();
        for s in &collected {
            for t in &s.triplets {
                if !t.feature.is_categorical() {
                    sum[t.feature.code()] += t.value;
                    count[t.feature.code()] += 1;
                }
            }
        }
        let mut mean = [0.0; N_CONTINUOUS];
        for k in 0..N_CONTINUOUS {
            if count[k] == 0 {
                return Err(Error::DegenerateFeature(FeatureKind::CONTINUOUS[k].column()));
            }
            mean[k] = sum[k] / count[k] as f64;
        }
        let mut ss = [0.0; N_CONTINUOUS];
        for s in &collected {
            for t in &s.triplets {
                if !t.feature.is_categorical() {
                    let d = t.value - mean[t.feature.code()];
                    ss[t.feature.code()] += d * d;
                }
            }
        }
        let mut std = [0.0; N_CONTINUOUS];
        for k in 0..N_CONTINUOUS {
            std[k] = (ss[k] / count[k] as f64).sqrt();
            if !(std[k] > 0.0) {
                return Err(Error::DegenerateFeature(FeatureKind::CONTINUOUS[k].column()));
            }
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, series: &mut [VitalSeries]) {
        for s in series {
            for t in &mut s.triplets {
                if !t.feature.is_categorical() {
                    let k = t.feature.code();
                    t.value = (t.value - self.mean[k]) / self.std[k];
                }
            }
        }
    }

    /// Maps a standardized value back to normalized units.
    pub fn invert(&self, f: FeatureKind, z: f64) -> f64 {
        if f.is_categorical() {
            z
        } else {
            z * self.std[f.code()] + self.mean[f.code()]
        }
    }
}

/// Fills missing genders with independent draws (male with probability
/// `male_fraction`, defaulting to the share among recorded genders).
pub fn impute_gender(
    demographics: &[Demographics],
    male_fraction: Option<f64>,
    seed: u64,
) -> Result<Vec<Demographics>> {
    let fraction = match male_fraction {
        Some(f) if (0.0..=1.0).contains(&f) => f,
        Some(f) => return Err(Error::Config(format!("male_fraction {f} outside [0, 1]"))),
        None => estimate_male_fraction(demographics),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(demographics
        .iter()
        .map(|d| {
            let mut d = d.clone();
            if d.gender.is_none() {
                let male = rng.gen::<f64>() < fraction;
                d.gender = Some(if male { Gender::Male } else { Gender::Female });
                d.imputed_gender = true;
            }
            d
        })
        .collect())
}

pub fn estimate_male_fraction(demographics: &[Demographics]) -> f64 {
    let known: Vec<_> = demographics.iter().filter_map(|d| d.gender).collect();
    if known.is_empty() {
        DEFAULT_MALE_FRACTION
    } else {
        known.iter().filter(|g| **g == Gender::Male).count() as f64 / known.len() as f64
    }
}

/// Ward-type code table. Codes `0..names.len()` are the known wards; the
/// last code is reserved for wards not seen when the vocabulary was built.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WardVocab {
    names: Vec<String>,
}

impl WardVocab {
    pub fn build<'a>(wards: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<&str> = wards.into_iter().collect();
        Self {
            names: set.into_iter().map(str::to_string).collect(),
        }
    }

    pub fn from_names(names: Vec<String>) -> Self {
        Self { names }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Number of codes, including the reserved "other" code.
    pub fn len(&self) -> usize {
        self.names.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn other_code(&self) -> usize {
        self.names.len()
    }

    pub fn code(&self, ward: Option<&str>) -> usize {
        ward.and_then(|w| self.names.iter().position(|n| n == w))
            .unwrap_or(self.other_code())
    }
}

pub fn demographic_width(vocab: &WardVocab) -> usize {
    3 + vocab.len()
}

/// `[gender, imputed_gender, one-hot(ward), ward_change]`; male = 1.
pub fn encode_demographics(d: &Demographics, vocab: &WardVocab) -> Vec<f64> {
    encode_with_code(d, vocab.code(d.ward.as_deref()), vocab.len())
}

pub(crate) fn encode_with_code(d: &Demographics, code: usize, vocab_len: usize) -> Vec<f64> {
    let mut v = vec![0.0; 3 + vocab_len];
    v[0] = f64::from(u8::from(d.gender == Some(Gender::Male)));
    v[1] = f64::from(u8::from(d.imputed_gender));
    v[2 + code] = 1.0;
    v[2 + vocab_len] = f64::from(u8::from(d.ward_change));
    v
}

/// Ward code recovered from the one-hot block of an encoded vector.
pub fn decode_ward_code(encoded: &[f64], vocab_len: usize) -> Option<usize> {
    encoded
        .get(2..2 + vocab_len)?
        .iter()
        .position(|&x| x == 1.0)
}
