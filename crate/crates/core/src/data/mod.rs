//! Triplet data model and the preprocessing chain from raw CSV rows to a
//! standardized, split dataset.

mod feature;
mod io;
mod preprocess;
mod series;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use feature::{FeatureKind, N_CONTINUOUS, N_FEATURES};
pub use io::{
    parse_demographics, parse_observations, read_demographics, read_observations,
    write_demographics, write_observations,
};
pub use preprocess::{
    attach_demographics, decode_ward_code, demographic_width, encode_demographics,
    estimate_male_fraction, filter_series, impute_gender, normalize_series, normalize_value,
    split_visits, FeatureStats, LengthSummary, WardVocab, DEFAULT_GAP_HOURS,
    DEFAULT_MALE_FRACTION, MAX_ROWS,
};
pub use series::{
    Demographics, DemographicsTable, Gender, ObservationRow, PatientRows, Split, Triplet,
    VitalSeries,
};

use crate::error::{Error, Result};

/// Preprocessed corpus: series plus split membership, training-split
/// statistics and the ward vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub series: Vec<VitalSeries>,
    pub split: Vec<Split>,
    pub feature_stats: Option<FeatureStats>,
    pub ward_vocab: WardVocab,
}

impl Dataset {
    /// Builds the ward vocabulary from the training split.
    pub fn new(series: Vec<VitalSeries>, split: Vec<Split>) -> Result<Self> {
        if series.len() != split.len() {
            return Err(Error::Contract(format!(
                "{} series but {} split tags",
                series.len(),
                split.len()
            )));
        }
        let ward_vocab = WardVocab::build(
            series
                .iter()
                .zip(&split)
                .filter(|(_, s)| **s == Split::Train)
                .filter_map(|(s, _)| s.demographics.ward.as_deref()),
        );
        Ok(Self {
            series,
            split,
            feature_stats: None,
            ward_vocab,
        })
    }

    /// Seeded train/validation split by series.
    pub fn with_random_split(series: Vec<VitalSeries>, val_fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(Error::Config(format!("validation fraction {val_fraction} outside [0, 1)")));
        }
        let n = series.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_val = ((n as f64) * val_fraction).round() as usize;
        let n_val = if n > 1 { n_val.min(n - 1) } else { 0 };
        let mut split = vec![Split::Train; n];
        for &i in &order[..n_val] {
            split[i] = Split::Val;
        }
        Self::new(series, split)
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn indices(&self, which: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == which).collect()
    }

    pub fn demographic_width(&self) -> usize {
        demographic_width(&self.ward_vocab)
    }

    pub fn demographic_vector(&self, i: usize) -> Vec<f64> {
        encode_demographics(&self.series[i].demographics, &self.ward_vocab)
    }
}

/// Computes continuous-feature statistics on the training split and applies
/// them to every series.
pub fn standardize(mut ds: Dataset) -> Result<Dataset> {
    let stats = FeatureStats::compute(
        ds.series
            .iter()
            .zip(&ds.split)
            .filter(|(_, s)| **s == Split::Train)
            .map(|(s, _)| s),
    )?;
    stats.apply(&mut ds.series);
    ds.feature_stats = Some(stats);
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareConfig {
    pub m_min: usize,
    pub gap_hours: f64,
    pub val_fraction: f64,
    pub male_fraction: Option<f64>,
    pub seed: u64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            m_min: 4,
            gap_hours: DEFAULT_GAP_HOURS,
            val_fraction: 0.2,
            male_fraction: None,
            seed: 0,
        }
    }
}

/// Raw rows to standardized dataset: visit split, demographics, length
/// filter, gender imputation, offset normalization, split, standardization.
pub fn prepare(
    patients: &[PatientRows],
    demographics: &DemographicsTable,
    cfg: &PrepareConfig,
) -> Result<(Dataset, LengthSummary)> {
    let mut series = split_visits(patients, cfg.gap_hours);
    attach_demographics(&mut series, demographics);
    let (mut series, summary) = filter_series(series, cfg.m_min);
    if series.is_empty() {
        return Err(Error::Contract(format!("no series with at least {} rows", cfg.m_min)));
    }
    let demos: Vec<Demographics> = series.iter().map(|s| s.demographics.clone()).collect();
    let completed = impute_gender(&demos, cfg.male_fraction, cfg.seed)?;
    for (s, d) in series.iter_mut().zip(completed) {
        s.demographics = d;
    }
    normalize_series(&mut series);
    let ds = Dataset::with_random_split(series, cfg.val_fraction, cfg.seed)?;
    Ok((standardize(ds)?, summary))
}
