//! CSV and JSON-lines serialization of result tables.
//!
//! Columns are fixed and always in the same order. Floats are written with 17
//! significant digits, absent values as empty CSV cells or JSON `null`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::model::SystemConfig;
use crate::Result;

use super::run::{Aggregate, MetricRecord, ResultTable, METRICS};
use super::spec::Format;

pub const POINT_COLUMNS: [&str; 10] = ["N", "K", "Q", "L", "M", "P", "rho", "pt_dbm", "sigma2_mw", "distance_model"];

#[derive(Debug, Clone, PartialEq)]
enum Cell {
    Int(usize),
    Float(f64),
    Text(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) if v.is_finite() => format_float(*v),
            Cell::Float(_) | Cell::Empty => "null".into(),
            Cell::Text(s) => serde_json::to_string(s).expect("string serialization"),
        }
    }
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> Cell {
    v.map_or(Cell::Empty, Cell::Float)
}

fn point_cells(cfg: &SystemConfig) -> Vec<Cell> {
    vec![
        Cell::Int(cfg.devices),
        Cell::Int(cfg.subcarriers),
        Cell::Int(cfg.pilot_symbols),
        Cell::Int(cfg.pilot_len()),
        Cell::Int(cfg.antennas),
        Cell::Int(cfg.taps),
        Cell::Float(cfg.rho),
        Cell::Float(cfg.pt_dbm),
        Cell::Float(cfg.sigma2_mw),
        Cell::Text(cfg.distance_model.label()),
    ]
}

pub fn row_header() -> Vec<String> {
    let mut h: Vec<String> = POINT_COLUMNS.iter().map(|s| s.to_string()).collect();
    h.extend(["algorithm", "trial", "iteration", "status"].map(String::from));
    h.extend(METRICS.iter().map(|s| s.to_string()));
    h.push("wall_time_us".into());
    h
}

fn row_cells(r: &MetricRecord) -> Vec<Cell> {
    let mut c = point_cells(&r.cfg);
    c.push(Cell::Text(r.algorithm.name().into()));
    c.push(r.trial.map_or(Cell::Empty, Cell::Int));
    c.push(r.iteration.map_or(Cell::Empty, Cell::Int));
    c.push(Cell::Text(r.status.as_str().into()));
    c.extend(r.metric_values().into_iter().map(opt));
    c.push(opt(r.wall_time_us));
    c
}

pub fn aggregate_header() -> Vec<String> {
    let mut h: Vec<String> = POINT_COLUMNS.iter().map(|s| s.to_string()).collect();
    h.extend(["algorithm", "iteration", "trials_ok", "failed_trials"].map(String::from));
    for m in METRICS {
        h.push(format!("{m}_mean"));
        h.push(format!("{m}_se"));
    }
    h.push("wall_time_us_median".into());
    h
}

fn aggregate_cells(a: &Aggregate) -> Vec<Cell> {
    let mut c = point_cells(&a.cfg);
    c.push(Cell::Text(a.algorithm.name().into()));
    c.push(Cell::Int(a.iteration));
    c.push(Cell::Int(a.trials_ok));
    c.push(Cell::Int(a.failed_trials));
    for s in &a.stats {
        c.push(opt(s.map(|v| v.0)));
        c.push(opt(s.map(|v| v.1)));
    }
    c.push(opt(a.wall_time_us_median));
    c
}

fn write_records<W: Write>(out: W, format: Format, header: &[String], records: impl Iterator<Item = Vec<Cell>>) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(header)?;
            for rec in records {
                w.write_record(rec.iter().map(Cell::csv))?;
            }
            w.flush()?;
        }
        Format::Jsonl => {
            let mut w = BufWriter::new(out);
            for rec in records {
                let fields: Vec<String> = header
                    .iter()
                    .zip(&rec)
                    .map(|(k, v)| format!("{}:{}", serde_json::to_string(k).expect("key"), v.json()))
                    .collect();
                writeln!(w, "{{{}}}", fields.join(","))?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn write_rows<W: Write>(out: W, format: Format, rows: &[MetricRecord]) -> Result<()> {
    write_records(out, format, &row_header(), rows.iter().map(row_cells))
}

pub fn write_aggregates<W: Write>(out: W, format: Format, aggs: &[Aggregate]) -> Result<()> {
    write_records(out, format, &aggregate_header(), aggs.iter().map(aggregate_cells))
}

/// `results.csv` -> `results.summary.csv`.
pub fn summary_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.summary.{}", ext.to_string_lossy()),
        None => format!("{stem}.summary"),
    };
    path.with_file_name(name)
}

/// Writes rows to `path` and aggregates next to it, or rows only to stdout.
pub fn write_table(table: &ResultTable, format: Format, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => {
            write_rows(File::create(p)?, format, &table.rows)?;
            write_aggregates(File::create(summary_path(p))?, format, &table.aggregates)?;
        }
        None => write_rows(std::io::stdout().lock(), format, &table.rows)?,
    }
    Ok(())
}
