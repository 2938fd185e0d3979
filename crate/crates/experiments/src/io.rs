//! CSV files: traces, particle measures, datasets and comparison summaries.
//!
//! Numbers are written with 17 significant digits; lines starting with `#`
//! are comments.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use fastpart::diagnostics::TraceRecord;
use fastpart::ParticleMeasure;

use crate::error::{CliError, CliResult};

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn create(path: &Path) -> CliResult<File> {
    File::create(path).map_err(|e| CliError::io(path, e))
}

fn writer(path: &Path) -> CliResult<csv::Writer<File>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::io(path, source),
        other => CliError::Parse {
            path: path.to_path_buf(),
            reason: format!("{other:?}"),
        },
    }
}

pub const TRACE_HEADER: [&str; 7] = ["k", "J", "tv", "local_j2", "local_g2", "evals", "wall_ns"];

pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(TRACE_HEADER).map_err(|e| csv_err(path, e))?;
    for r in trace {
        w.write_record([
            r.k.to_string(),
            num(r.objective),
            num(r.tv),
            num(r.local_j2),
            num(r.local_g2),
            r.evals.to_string(),
            r.wall_ns.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Writes `weight, t1..td`; atoms with zero weight are dropped when `skip_zero`.
pub fn write_measure(path: &Path, nu: &ParticleMeasure, skip_zero: bool) -> CliResult<()> {
    let mut w = writer(path)?;
    let mut header = vec!["weight".to_string()];
    header.extend((1..=nu.dim()).map(|i| format!("t{i}")));
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (weight, t) in nu.iter() {
        if skip_zero && weight == 0.0 {
            continue;
        }
        let row: Vec<String> = std::iter::once(weight).chain(t.iter().copied()).map(num).collect();
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn read_table(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let file = File::open(path).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| CliError::Parse {
                    path: path.to_path_buf(),
                    reason: format!("row {}: `{f}` is not a number", line + 1),
                })
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Reads a measure written by [`write_measure`] and checks its dimension.
pub fn read_measure(path: &Path, dim: usize) -> CliResult<ParticleMeasure> {
    let (header, rows) = read_table(path)?;
    let parse_err = |reason: String| CliError::Parse {
        path: path.to_path_buf(),
        reason,
    };
    if header.len() != dim + 1 {
        return Err(parse_err(format!(
            "expected {} columns (weight and {dim} coordinates), found {}",
            dim + 1,
            header.len()
        )));
    }
    let mut weights = Vec::with_capacity(rows.len());
    let mut positions = Vec::with_capacity(rows.len() * dim);
    for row in rows {
        weights.push(row[0]);
        positions.extend_from_slice(&row[1..]);
    }
    ParticleMeasure::new(dim, weights, positions).map_err(|e| parse_err(e.to_string()))
}

/// Writes samples row-major with a comment line recording the seed.
pub fn write_dataset(path: &Path, data: &[f64], dim: usize, seed: u64, problem: &str) -> CliResult<()> {
    let mut file = create(path)?;
    writeln!(file, "# problem={problem} seed={seed}").map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for row in data.chunks_exact(dim) {
        let row: Vec<String> = row.iter().copied().map(num).collect();
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads a delimited sample file; returns the row-major data and its width.
pub fn read_dataset(path: &Path) -> CliResult<(Vec<f64>, usize)> {
    let (header, rows) = read_table(path)?;
    let dim = header.len();
    if rows.is_empty() {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            reason: "no samples".into(),
        });
    }
    Ok((rows.concat(), dim))
}

/// One line of a comparison summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub variant: String,
    pub evals_to_threshold: Option<u64>,
    pub final_objective: f64,
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(["variant", "evals_to_threshold", "final_J"])
        .map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.variant.clone(),
            r.evals_to_threshold.map(|e| e.to_string()).unwrap_or_default(),
            num(r.final_objective),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
