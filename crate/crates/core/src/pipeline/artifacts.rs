use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use super::config::Method;
use crate::error::{Error, Result};

pub const REPORT_HEADER: [&str; 12] = [
    "model", "set", "reduction", "clusters", "kmeans", "sc", "gmm", "hdb", "ari_kmeans", "ari_sc",
    "ari_gmm", "ari_hdb",
];

/// Rendering of a silhouette with fewer than two clusters.
pub const INVALID: &str = "--";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub set: String,
    pub reduction: String,
    pub clusters: usize,
    /// Per method: `Some(None)` is an invalid silhouette, `None` means not run.
    pub silhouette: BTreeMap<Method, Option<f64>>,
    pub ari: BTreeMap<Method, f64>,
}

impl ReportRow {
    pub fn new(model: String, set: String, reduction: String, clusters: usize) -> Self {
        Self {
            model,
            set,
            reduction,
            clusters,
            silhouette: BTreeMap::new(),
            ari: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, m: Method, silhouette: Option<f64>, ari: Option<f64>) {
        self.silhouette.insert(m, silhouette);
        if let Some(a) = ari {
            self.ari.insert(m, a);
        }
    }

    fn cells(&self) -> Vec<String> {
        let mut v = vec![
            self.model.clone(),
            self.set.clone(),
            self.reduction.clone(),
            self.clusters.to_string(),
        ];
        for m in Method::ALL {
            v.push(match self.silhouette.get(&m) {
                None => String::new(),
                Some(None) => INVALID.into(),
                Some(Some(s)) => format!("{s:.4}"),
            });
        }
        for m in Method::ALL {
            v.push(self.ari.get(&m).map(|a| format!("{a:.4}")).unwrap_or_default());
        }
        v
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

pub fn write_report<W: Write>(w: W, rows: &[ReportRow]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(REPORT_HEADER)?;
    for r in rows {
        out.write_record(r.cells())?;
    }
    out.flush()?;
    Ok(())
}

fn parse_cell(s: &str, what: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Format(format!("report: bad {what} value `{s}`")))
}

pub fn read_report<R: Read>(r: R) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != REPORT_HEADER {
        return Err(Error::Schema(format!(
            "report header must be `{}`",
            REPORT_HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut row = ReportRow::new(
            rec[0].to_string(),
            rec[1].to_string(),
            rec[2].to_string(),
            rec[3].parse().map_err(|_| Error::Format(format!("report: bad clusters `{}`", &rec[3])))?,
        );
        for (i, m) in Method::ALL.into_iter().enumerate() {
            let sil = &rec[4 + i];
            let ari = &rec[8 + i];
            if !sil.is_empty() {
                let s = if sil == INVALID { None } else { Some(parse_cell(sil, "silhouette")?) };
                row.silhouette.insert(m, s);
            }
            if !ari.is_empty() {
                row.ari.insert(m, parse_cell(ari, "ari")?);
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_assignments<W: Write>(w: W, ids: &[String], labels: &[i64]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["series_id", "label"])?;
    for (id, l) in ids.iter().zip(labels) {
        out.write_record([id.as_str(), &l.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_assignments(path: &Path) -> Result<Vec<(String, i64)>> {
    let mut rdr = csv::Reader::from_reader(crate::error::open_file(path)?);
    if rdr.headers()?.iter().collect::<Vec<_>>() != ["series_id", "label"] {
        return Err(Error::Schema("assignments header must be `series_id,label`".into()));
    }
    rdr.records()
        .map(|r| {
            let r = r?;
            let l = r[1]
                .parse()
                .map_err(|_| Error::Format(format!("bad label `{}`", &r[1])))?;
            Ok((r[0].to_string(), l))
        })
        .collect()
}

pub fn write_embeddings<W: Write>(w: W, ids: &[String], coords: &[Vec<f64>]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["series_id", "x", "y", "z"])?;
    for (id, c) in ids.iter().zip(coords) {
        let mut rec = vec![id.clone()];
        for k in 0..3 {
            rec.push(c.get(k).copied().unwrap_or(0.0).to_string());
        }
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}

/// `series_id,<prefix>0,<prefix>1,...`
pub fn write_matrix<W: Write>(w: W, prefix: &str, ids: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = writer(w);
    let d = rows.first().map_or(0, Vec::len);
    let mut header = vec!["series_id".to_string()];
    header.extend((0..d).map(|i| format!("{prefix}{i}")));
    out.write_record(header)?;
    for (id, r) in ids.iter().zip(rows) {
        let mut rec = vec![id.clone()];
        rec.extend(r.iter().map(f64::to_string));
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads any `series_id,<numeric columns...>` file.
pub fn read_matrix(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::Reader::from_reader(crate::error::open_file(path)?);
    if rdr.headers()?.get(0) != Some("series_id") {
        return Err(Error::Schema(format!("{}: first column must be series_id", path.display())));
    }
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        ids.push(rec[0].to_string());
        let row = rec
            .iter()
            .skip(1)
            .map(|c| {
                c.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line: i as u64 + 2,
                    message: format!("`{c}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((ids, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Overlay {
    Cluster,
    Gender,
    Phenotype,
}

impl std::str::FromStr for Overlay {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cluster" => Ok(Overlay::Cluster),
            "gender" => Ok(Overlay::Gender),
            "phenotype" => Ok(Overlay::Phenotype),
            other => Err(Error::Config(format!(
                "unknown overlay `{other}` (expected cluster, gender or phenotype)"
            ))),
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const NOISE_COLOR: &str = "#9e9e9e";

fn color(v: i64) -> &'static str {
    if v < 0 {
        NOISE_COLOR
    } else {
        PALETTE[v as usize % PALETTE.len()]
    }
}

/// Scatter of the first two coordinates, one colour per overlay value.
pub fn scatter_svg(coords: &[Vec<f64>], values: &[i64], title: &str) -> String {
    let (w, h, pad) = (640.0, 480.0, 40.0);
    let xs = coords.iter().map(|c| c.first().copied().unwrap_or(0.0));
    let ys = coords.iter().map(|c| c.get(1).copied().unwrap_or(0.0));
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let sx = if x1 > x0 { (w - 2.0 * pad) / (x1 - x0) } else { 1.0 };
    let sy = if y1 > y0 { (h - 2.0 * pad) / (y1 - y0) } else { 1.0 };
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{pad}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{}</text>",
        escape(title)
    );
    for (c, &v) in coords.iter().zip(values) {
        let x = pad + (c.first().copied().unwrap_or(0.0) - x0.min(x1)) * sx;
        let y = h - pad - (c.get(1).copied().unwrap_or(0.0) - y0.min(y1)) * sy;
        let _ = writeln!(
            s,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.8\" data-value=\"{v}\"/>",
            color(v)
        );
    }
    let mut legend: Vec<i64> = values.to_vec();
    legend.sort_unstable();
    legend.dedup();
    for (i, v) in legend.iter().enumerate() {
        let y = 40.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            "<circle cx=\"{}\" cy=\"{y}\" r=\"4\" fill=\"{}\"/><text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{v}</text>",
            w - 70.0,
            color(*v),
            w - 60.0,
            y + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `<stem>.csv` (`series_id,x,y,z,overlay_value`) and `<stem>.svg`.
pub fn export_scatter(
    dir: &Path,
    stem: &str,
    ids: &[String],
    coords: &[Vec<f64>],
    values: &[i64],
    overlay: Overlay,
) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    let dims = coords.first().map_or(0, Vec::len);
    if !(dims == 2 || dims == 3) || coords.iter().any(|c| c.len() != dims) {
        return Err(Error::Contract(format!("scatter export needs 2 or 3 dimensions, got {dims}")));
    }
    if ids.len() != coords.len() || values.len() != coords.len() {
        return Err(Error::Contract("scatter export: ids, coordinates and values differ in length".into()));
    }
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut out = writer(std::io::BufWriter::new(std::fs::File::create(&csv_path)?));
    out.write_record(["series_id", "x", "y", "z", "overlay_value"])?;
    for ((id, c), v) in ids.iter().zip(coords).zip(values) {
        out.write_record([
            id.clone(),
            c[0].to_string(),
            c[1].to_string(),
            c.get(2).copied().unwrap_or(0.0).to_string(),
            v.to_string(),
        ])?;
    }
    out.flush()?;
    let svg_path = dir.join(format!("{stem}.svg"));
    let title = match overlay {
        Overlay::Cluster => "cluster",
        Overlay::Gender => "gender (1 = male)",
        Overlay::Phenotype => "phenotype",
    };
    std::fs::write(&svg_path, scatter_svg(coords, values, title))?;
    Ok((csv_path, svg_path))
}
