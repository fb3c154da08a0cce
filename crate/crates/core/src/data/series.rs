use std::collections::BTreeMap;

use super::feature::{FeatureKind, N_FEATURES};

/// One measurement: hours since visit start, which vital, and its value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet {
    pub t: f64,
    pub feature: FeatureKind,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gender {
    Male,
    Female,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Demographics {
    pub gender: Option<Gender>,
    /// Set iff `gender` was missing on ingest and filled by imputation.
    pub imputed_gender: bool,
    pub ward: Option<String>,
    pub ward_change: bool,
}

/// One hospital visit as a time-ordered triplet list.
#[derive(Debug, Clone, PartialEq)]
pub struct VitalSeries {
    pub id: String,
    pub patient_id: String,
    /// Absolute timestamp (hours) of the first observation; triplet times are relative to it.
    pub start_hours: f64,
    pub triplets: Vec<Triplet>,
    pub demographics: Demographics,
    /// Observation-row count (sampling instants).
    pub rows: usize,
}

impl VitalSeries {
    /// Sorts triplets by time, ties broken by feature code.
    pub fn sort_triplets(&mut self) {
        self.triplets.sort_by(|a, b| {
            a.t.total_cmp(&b.t)
                .then_with(|| a.feature.code().cmp(&b.feature.code()))
        });
    }

    /// Distinct timestamps in ascending order.
    pub fn timestamps(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self.triplets.iter().map(|t| t.t).collect();
        ts.dedup();
        ts
    }

    /// Values observed for one feature, in time order.
    pub fn values_of(&self, f: FeatureKind) -> impl Iterator<Item = f64> + '_ {
        self.triplets
            .iter()
            .filter(move |t| t.feature == f)
            .map(|t| t.value)
    }
}

/// One observation row as read from the CSV (raw units).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRow {
    pub timestamp: f64,
    pub values: [Option<f64>; N_FEATURES],
    pub ward: Option<String>,
}

impl ObservationRow {
    pub fn present(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// All rows of one patient, time-sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRows {
    pub patient_id: String,
    pub rows: Vec<ObservationRow>,
}

/// Demographics CSV contents keyed by patient id.
pub type DemographicsTable = BTreeMap<String, (Option<Gender>, Option<String>)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}
