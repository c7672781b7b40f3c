//! CSV and JSON writers. Column layouts are listed in `docs/formats.md`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use plateau_core::continuation::EpsilonSolution;
use plateau_core::grid::{GridDomain, NodeTag};
use plateau_core::hypgeo::curvature_frame;
use plateau_core::voper::convexity_margin_v;

/// Version stamped into every JSON document and bumped on layout changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv { path: path.display().to_string(), source }
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File { path: path.display().to_string(), source }
}

pub fn axis_names(n: usize) -> Vec<String> {
    match n {
        2 => vec!["x".into(), "y".into()],
        3 => vec!["x".into(), "y".into(), "z".into()],
        _ => (1..=n).map(|i| format!("x_{i}")).collect(),
    }
}

fn num(x: f64) -> String {
    // shortest round-trip representation
    format!("{x}")
}

/// Field snapshot: one row per dof with position, `v`, `u`, hyperbolic
/// principal curvatures from the discrete jet and the convexity margin.
pub fn write_field_csv(path: &Path, domain: &GridDomain, v: &[f64]) -> Result<(), IoError> {
    let n = domain.n;
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec![String::from("node")];
    header.extend(axis_names(n));
    header.extend(["v".into(), "u".into()]);
    header.extend((1..=n).map(|i| format!("kappa_{i}")));
    header.push("margin".into());
    w.write_record(&header).map_err(csv_err(path))?;
    for d in 0..domain.num_dofs() {
        let jet = domain.jet_at(v, d);
        let kappa = jet
            .to_graph()
            .and_then(|g| curvature_frame(&g))
            .map(|f| f.kappa.to_vec())
            .unwrap_or_else(|_| vec![f64::NAN; n]);
        let mut row = vec![d.to_string()];
        row.extend(domain.point(d).into_iter().map(num));
        row.push(num(v[d]));
        row.push(num(v[d].sqrt()));
        row.extend(kappa.into_iter().map(num));
        row.push(num(convexity_margin_v(&jet)));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(file_err(path))
}

/// Parsed field CSV, kept as named columns.
#[derive(Clone, Debug)]
pub struct FieldTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FieldTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

pub fn read_field_csv(path: &Path) -> Result<FieldTable, IoError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| IoError::Format { path: path.display().to_string(), msg: e.to_string() })?;
        rows.push(row);
    }
    Ok(FieldTable { header, rows })
}

/// Node table: dof index, lattice coordinates, position, tag and the `2n`
/// cut fractions ordered `(axis 0 −, axis 0 +, axis 1 −, …)`.
pub fn write_node_table(path: &Path, domain: &GridDomain) -> Result<(), IoError> {
    let n = domain.n;
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec![String::from("node")];
    header.extend((0..n).map(|a| format!("i_{a}")));
    header.extend(axis_names(n));
    header.push("tag".into());
    for a in 0..n {
        header.push(format!("cut_{a}_minus"));
        header.push(format!("cut_{a}_plus"));
    }
    w.write_record(&header).map_err(csv_err(path))?;
    for d in 0..domain.num_dofs() {
        let mut row = vec![d.to_string()];
        row.extend(domain.lattice_coords(domain.nodes[d]).iter().map(|c| c.to_string()));
        row.extend(domain.point(d).into_iter().map(num));
        row.push(
            match domain.tag(d) {
                NodeTag::Interior => "interior",
                NodeTag::BoundaryAdjacent => "boundary-adjacent",
                NodeTag::Exterior => "exterior",
            }
            .into(),
        );
        row.extend(domain.cut[d].iter().map(|&t| num(t)));
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(file_err(path))
}

/// One row of the schedule summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub level: usize,
    pub eps: f64,
    pub h: f64,
    pub residual: f64,
    pub m0: f64,
    pub c2_interior: f64,
    /// Empty on the first level.
    pub cauchy_gap: Option<f64>,
}

impl ScheduleRow {
    pub fn from_level(level: usize, s: &EpsilonSolution) -> Self {
        ScheduleRow {
            level,
            eps: s.eps,
            h: s.domain.h,
            residual: s.report.final_residual,
            m0: s.diagnostics.m0,
            c2_interior: s.diagnostics.c2_interior,
            cauchy_gap: s.diagnostics.cauchy_gap,
        }
    }
}

pub fn write_schedule_csv(path: &Path, rows: &[ScheduleRow]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    // header-only file when there are no rows
    if rows.is_empty() {
        w.write_record(["level", "eps", "h", "residual", "m0", "c2_interior", "cauchy_gap"])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(file_err(path))
}

pub fn read_schedule_csv(path: &Path) -> Result<Vec<ScheduleRow>, IoError> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().collect::<Result<Vec<_>, _>>().map_err(csv_err(path))
}

/// Every JSON document carries this envelope.
#[derive(Clone, Debug, Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    #[serde(flatten)]
    pub body: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, command: &str, body: &T) -> Result<(), IoError> {
    let file = File::create(path).map_err(file_err(path))?;
    let mut w = BufWriter::new(file);
    let doc = Envelope { schema_version: SCHEMA_VERSION, command, body };
    serde_json::to_writer_pretty(&mut w, &doc)
        .map_err(|source| IoError::Json { path: path.display().to_string(), source })?;
    w.write_all(b"\n").map_err(file_err(path))?;
    w.flush().map_err(file_err(path))
}

/// Plot table derived from the schedule summary, with the observed rate
/// `log(gap_j / gap_{j−1}) / log(ε_j / ε_{j−1})` of the Cauchy gaps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulePlotRow {
    pub eps: f64,
    pub log10_eps: f64,
    pub c2_interior: f64,
    pub m0: f64,
    pub cauchy_gap: Option<f64>,
    pub log10_gap: Option<f64>,
    pub gap_rate: Option<f64>,
}

pub fn schedule_plot_rows(rows: &[ScheduleRow]) -> Vec<SchedulePlotRow> {
    rows.iter()
        .enumerate()
        .map(|(j, r)| {
            let gap_rate = match (j.checked_sub(1).map(|i| &rows[i]), r.cauchy_gap) {
                (Some(p), Some(g)) => p.cauchy_gap.map(|pg| (g / pg).ln() / (r.eps / p.eps).ln()),
                _ => None,
            };
            SchedulePlotRow {
                eps: r.eps,
                log10_eps: r.eps.log10(),
                c2_interior: r.c2_interior,
                m0: r.m0,
                cauchy_gap: r.cauchy_gap,
                log10_gap: r.cauchy_gap.map(f64::log10),
                gap_rate,
            }
        })
        .collect()
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(file_err(path))
}

/// Profile `(coordinate, u)` along the first axis through the row of nodes
/// closest to the mean of the remaining coordinates.
pub fn centerline_profile(table: &FieldTable) -> Option<Vec<(f64, f64)>> {
    let names: Vec<&String> =
        table.header.iter().skip(1).take_while(|h| h.as_str() != "v").collect();
    let u_col = table.column("u")?;
    if names.is_empty() || table.rows.is_empty() {
        return None;
    }
    let cols: Vec<usize> = (1..=names.len()).collect();
    let m = table.rows.len() as f64;
    let mean: Vec<f64> = cols[1..].iter().map(|&c| table.rows.iter().map(|r| r[c]).sum::<f64>() / m).collect();
    let dist = |r: &Vec<f64>| -> f64 { cols[1..].iter().zip(&mean).map(|(&c, mu)| (r[c] - mu).powi(2)).sum() };
    let best = table.rows.iter().map(dist).fold(f64::INFINITY, f64::min);
    let target = table.rows.iter().find(|r| dist(r) == best)?;
    let mut prof: Vec<(f64, f64)> = table
        .rows
        .iter()
        .filter(|r| cols[1..].iter().all(|&c| r[c] == target[c]))
        .map(|r| (r[1], r[u_col]))
        .collect();
    prof.sort_by(|a, b| a.0.total_cmp(&b.0));
    Some(prof)
}
