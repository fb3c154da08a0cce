use std::fmt;

/// The seven vitals carried by one observation row.
///
/// Integer codes are stable: they index the encoder's feature embedding table
/// and the forecast head's output vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    Systolic = 0,
    Diastolic = 1,
    OxygenSaturation = 2,
    RespiratoryRate = 3,
    Temperature = 4,
    Pulse = 5,
    SupplementalOxygen = 6,
}

pub const N_FEATURES: usize = 7;
pub const N_CONTINUOUS: usize = 6;

impl FeatureKind {
    pub const ALL: [FeatureKind; N_FEATURES] = [
        FeatureKind::Systolic,
        FeatureKind::Diastolic,
        FeatureKind::OxygenSaturation,
        FeatureKind::RespiratoryRate,
        FeatureKind::Temperature,
        FeatureKind::Pulse,
        FeatureKind::SupplementalOxygen,
    ];

    pub const CONTINUOUS: [FeatureKind; N_CONTINUOUS] = [
        FeatureKind::Systolic,
        FeatureKind::Diastolic,
        FeatureKind::OxygenSaturation,
        FeatureKind::RespiratoryRate,
        FeatureKind::Temperature,
        FeatureKind::Pulse,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn is_categorical(self) -> bool {
        self == FeatureKind::SupplementalOxygen
    }

    /// Column name in the observation CSV.
    pub fn column(self) -> &'static str {
        match self {
            FeatureKind::Systolic => "sbp",
            FeatureKind::Diastolic => "dbp",
            FeatureKind::OxygenSaturation => "spo2",
            FeatureKind::RespiratoryRate => "resp_rate",
            FeatureKind::Temperature => "temp_c",
            FeatureKind::Pulse => "pulse",
            FeatureKind::SupplementalOxygen => "o2_supplement",
        }
    }

    pub fn from_column(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.column() == name)
    }

    /// Ideal value subtracted before standardization. `None` for the oxygen flag.
    pub fn optimal(self) -> Option<f64> {
        match self {
            FeatureKind::Temperature => Some(37.0),
            FeatureKind::OxygenSaturation => Some(96.0),
            FeatureKind::Pulse => Some(70.0),
            FeatureKind::Systolic => Some(120.0),
            FeatureKind::Diastolic => Some(80.0),
            FeatureKind::RespiratoryRate => Some(16.0),
            FeatureKind::SupplementalOxygen => None,
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_dense_and_stable() {
        for (i, f) in FeatureKind::ALL.iter().enumerate() {
            assert_eq!(f.code(), i);
            assert_eq!(FeatureKind::from_code(i), Some(*f));
            assert_eq!(FeatureKind::from_column(f.column()), Some(*f));
        }
        assert_eq!(FeatureKind::from_code(7), None);
    }

    #[test]
    fn only_oxygen_flag_is_categorical() {
        let cats: Vec<_> = FeatureKind::ALL
            .iter()
            .filter(|f| f.is_categorical())
            .collect();
        assert_eq!(cats, vec![&FeatureKind::SupplementalOxygen]);
        assert!(FeatureKind::CONTINUOUS.iter().all(|f| f.optimal().is_some()));
    }
}
