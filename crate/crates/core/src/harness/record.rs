//! Per-step trajectory logs and their CSV form.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::ParamVector;

/// Runs with more coordinates than this omit raw `x` columns from CSV.
pub const MAX_CSV_COORDS: usize = 16;

/// Fixed CSV columns, in order. Raw coordinates `x0, x1, ...` follow when
/// the run is small enough.
pub const CSV_COLUMNS: [&str; 10] = [
    "t",
    "f",
    "grad_norm",
    "v_norm",
    "sqrt_vmax_hat",
    "max_eff_lr",
    "dist_to_opt",
    "gate_open",
    "L_est",
    "diverged",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub t: u64,
    pub x: ParamVector,
    /// Gradient sampled at `x`.
    pub grad: ParamVector,
    pub f: f64,
    pub grad_norm: f64,
    pub v_norm: Option<f64>,
    pub sqrt_vmax_hat: Option<f64>,
    pub max_eff_lr: Option<f64>,
    pub dist_to_opt: Option<f64>,
    pub gate_open: Option<bool>,
    pub l_est: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Divergence {
    pub step: u64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub dim: usize,
    pub rows: Vec<TrajectoryRow>,
    /// Set when the run stopped early on a non-finite value.
    pub divergence: Option<Divergence>,
}

impl TrajectoryRecord {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            rows: Vec::new(),
            divergence: None,
        }
    }

    pub fn push(&mut self, row: TrajectoryRow) {
        debug_assert!(self.rows.last().is_none_or(|r| r.t < row.t));
        self.rows.push(row);
    }

    pub fn diverged(&self) -> bool {
        self.divergence.is_some()
    }

    pub fn distances(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.dist_to_opt).collect()
    }

    /// Largest recorded `max_eff_lr`.
    pub fn max_effective_lr(&self) -> Option<f64> {
        self.rows
            .iter()
            .filter_map(|r| r.max_eff_lr)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }

    pub fn row_at(&self, t: u64) -> Option<&TrajectoryRow> {
        self.rows.iter().find(|r| r.t == t)
    }

    fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = CSV_COLUMNS.iter().map(|s| s.to_string()).collect();
        if self.dim <= MAX_CSV_COORDS {
            h.extend((0..self.dim).map(|i| format!("x{i}")));
        }
        h
    }

    /// Writes the record as CSV to any writer.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        if self.rows.is_empty() && self.divergence.is_none() {
            return Err(Error::InsufficientData("empty trajectory".into()));
        }
        let with_x = self.dim <= MAX_CSV_COORDS;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![
                r.t.to_string(),
                real(r.f),
                real(r.grad_norm),
                opt(r.v_norm),
                opt(r.sqrt_vmax_hat),
                opt(r.max_eff_lr),
                opt(r.dist_to_opt),
                r.gate_open.map_or(String::new(), |b| u8::from(b).to_string()),
                opt(r.l_est),
                "0".to_string(),
            ];
            if with_x {
                rec.extend(r.x.iter().map(|&v| real(v)));
            }
            w.write_record(&rec)?;
        }
        if let Some(d) = &self.divergence {
            let mut rec = vec![String::new(); self.header().len()];
            rec[0] = d.step.to_string();
            rec[9] = "1".to_string();
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Shortest representation that parses back to the same bits.
fn real(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), real)
}

pub fn export_csv(record: &TrajectoryRecord, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let file = std::fs::File::create(path)?;
    record.write_csv(std::io::BufWriter::new(file))
}

/// A parsed trajectory CSV: header plus cells, empty cells as `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

pub fn read_csv(path: &Path) -> Result<CsvTable> {
    parse_csv(std::fs::File::open(path)?)
}

pub fn parse_csv<R: std::io::Read>(input: R) -> Result<CsvTable> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|cell| {
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>()
                        .map(Some)
                        .map_err(|_| Error::Config(format!("bad CSV cell '{cell}'")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(CsvTable { header, rows })
}
