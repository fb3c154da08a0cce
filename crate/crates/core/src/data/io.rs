//! Observation and demographics CSV reading/writing.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::feature::{FeatureKind, N_FEATURES};
use super::series::{DemographicsTable, Gender, ObservationRow, PatientRows};
use crate::error::{Error, Result};

const PATIENT: &str = "patient_id";
const TIMESTAMP: &str = "timestamp_hours";
const WARD: &str = "ward_type";
const GENDER: &str = "gender";

fn parse_err(source: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: source.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_err(source: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    parse_err(source, line, e.to_string())
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema(format!("missing required column `{name}`")))
}

pub fn parse_observations(path: &Path) -> Result<Vec<PatientRows>> {
    read_observations(crate::error::open_file(path)?, path)
}

/// Reads the observation CSV, grouping rows by patient in order of first
/// appearance. Rows within a patient are stably sorted by timestamp. Rows
/// with all seven vitals empty carry no observation and are skipped.
pub fn read_observations<R: Read>(reader: R, source: &Path) -> Result<Vec<PatientRows>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err(source, e))?.clone();
    for h in headers.iter() {
        let known = h == PATIENT || h == TIMESTAMP || h == WARD || FeatureKind::from_column(h).is_some();
        if !known {
            return Err(Error::Schema(format!("unknown column `{h}`")));
        }
    }
    let pid_col = column_index(&headers, PATIENT)?;
    let ts_col = column_index(&headers, TIMESTAMP)?;
    let feature_cols = FeatureKind::ALL
        .iter()
        .map(|f| column_index(&headers, f.column()))
        .collect::<Result<Vec<_>>>()?;
    let ward_col = headers.iter().position(|h| h == WARD);

    let mut groups: Vec<PatientRows> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(source, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let pid = record[pid_col].trim();
        if pid.is_empty() {
            return Err(parse_err(source, line, "empty patient_id"));
        }
        let ts: f64 = record[ts_col]
            .trim()
            .parse()
            .map_err(|_| parse_err(source, line, format!("bad timestamp `{}`", &record[ts_col])))?;
        if !ts.is_finite() {
            return Err(parse_err(source, line, "non-finite timestamp"));
        }
        let mut values = [None; N_FEATURES];
        for (f, &col) in FeatureKind::ALL.iter().zip(&feature_cols) {
            let cell = record[col].trim();
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(source, line, format!("bad {f} value `{cell}`")))?;
            if !v.is_finite() {
                return Err(parse_err(source, line, format!("non-finite {f} value")));
            }
            if f.is_categorical() && v != 0.0 && v != 1.0 {
                return Err(parse_err(source, line, format!("{f} must be 0 or 1, got `{cell}`")));
            }
            values[f.code()] = Some(v);
        }
        if values.iter().all(Option::is_none) {
            continue;
        }
        let ward = ward_col
            .map(|c| record[c].trim().to_string())
            .filter(|w| !w.is_empty());
        let row = ObservationRow {
            timestamp: ts,
            values,
            ward,
        };
        let slot = *index.entry(pid.to_string()).or_insert_with(|| {
            groups.push(PatientRows {
                patient_id: pid.to_string(),
                rows: Vec::new(),
            });
            groups.len() - 1
        });
        groups[slot].rows.push(row);
    }
    for g in &mut groups {
        g.rows.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    }
    Ok(groups)
}

pub fn parse_demographics(path: &Path) -> Result<DemographicsTable> {
    read_demographics(crate::error::open_file(path)?, path)
}

pub fn read_demographics<R: Read>(reader: R, source: &Path) -> Result<DemographicsTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err(source, e))?.clone();
    for h in headers.iter() {
        if h != PATIENT && h != GENDER && h != WARD {
            return Err(Error::Schema(format!("unknown demographics column `{h}`")));
        }
    }
    let pid_col = column_index(&headers, PATIENT)?;
    let gender_col = column_index(&headers, GENDER)?;
    let ward_col = column_index(&headers, WARD)?;
    let mut table = DemographicsTable::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(source, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let gender = match record[gender_col].trim() {
            "M" => Some(Gender::Male),
            "F" => Some(Gender::Female),
            "" => None,
            other => return Err(parse_err(source, line, format!("bad gender `{other}`"))),
        };
        let ward = Some(record[ward_col].trim().to_string()).filter(|w| !w.is_empty());
        table.insert(record[pid_col].trim().to_string(), (gender, ward));
    }
    Ok(table)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the observation CSV. The `ward_type` column is emitted when any row carries a ward.
pub fn write_observations<W: Write>(patients: &[PatientRows], out: W) -> Result<()> {
    let with_ward = patients
        .iter()
        .any(|p| p.rows.iter().any(|r| r.ward.is_some()));
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header = vec![PATIENT, TIMESTAMP];
    header.extend(FeatureKind::ALL.iter().map(|f| f.column()));
    if with_ward {
        header.push(WARD);
    }
    w.write_record(&header)?;
    for p in patients {
        for r in &p.rows {
            let mut rec = vec![p.patient_id.clone(), r.timestamp.to_string()];
            rec.extend(r.values.iter().map(|v| fmt_opt(*v)));
            if with_ward {
                rec.push(r.ward.clone().unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_demographics<W: Write>(table: &DemographicsTable, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record([PATIENT, GENDER, WARD])?;
    for (pid, (gender, ward)) in table {
        let g = match gender {
            Some(Gender::Male) => "M",
            Some(Gender::Female) => "F",
            None => "",
        };
        w.write_record([pid.as_str(), g, ward.as_deref().unwrap_or("")])?;
    }
    w.flush()?;
    Ok(())
}
