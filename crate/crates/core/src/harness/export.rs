//! CSV and JSON export of sampled runs and reports.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::{ComparisonReport, ScenarioConfig, SimOutput};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(Error::Config(format!("unknown format '{s}' (expected csv or json)"))),
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Json => "json",
        })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(source) => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            other => Error::Config(format!("{}: {other:?}", path.display())),
        }
    } else {
        Error::Csv(e)
    }
}

/// Full-precision decimal form; parses back to the identical value.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Serialize)]
struct JsonTrajectory<'a> {
    model: super::ModelKind,
    variant: super::Variant,
    names: &'a [String],
    times: &'a [f64],
    columns: &'a [Vec<f64>],
    stats: crate::odesolve::SolverStats,
    qss_max_residual: Option<f64>,
    config: Option<&'a ScenarioConfig>,
}

/// Write a sampled run as CSV (`t,<names>`) or JSON.
pub fn export_trajectory(out: &SimOutput, config: Option<&ScenarioConfig>, path: &Path, format: ExportFormat) -> Result<()> {
    match format {
        ExportFormat::Csv => {
            let file = File::create(path).map_err(io_err(path))?;
            write_trajectory_csv(out, BufWriter::new(file)).map_err(|e| match e {
                Error::Csv(c) => csv_err(path, c),
                Error::Io { source, .. } => Error::Io {
                    path: path.to_path_buf(),
                    source,
                },
                other => other,
            })
        }
        ExportFormat::Json => {
            let doc = JsonTrajectory {
                model: out.model,
                variant: out.variant,
                names: &out.names,
                times: &out.times,
                columns: &out.columns,
                stats: out.stats,
                qss_max_residual: out.qss_max_residual,
                config,
            };
            write_json(&doc, path)
        }
    }
}

/// Write a sampled run as CSV to any writer.
pub fn write_trajectory_csv<W: Write>(out: &SimOutput, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<&str> = std::iter::once("t").chain(out.names.iter().map(String::as_str)).collect();
    w.write_record(&header)?;
    for (i, t) in out.times.iter().enumerate() {
        let row = std::iter::once(*t).chain(out.columns.iter().map(|c| c[i])).map(format_value);
        w.write_record(row)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<writer>".into(),
        source,
    })
}

pub fn export_report(report: &ComparisonReport, path: &Path) -> Result<()> {
    write_json(report, path)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Header and numeric rows of an exported CSV file.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::Config(format!("{}: bad number '{s}': {e}", path.display()))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{ModelKind, Variant};
    use crate::odesolve::SolverStats;
    use proptest::prelude::*;

    fn output(times: Vec<f64>, col: Vec<f64>) -> SimOutput {
        SimOutput {
            model: ModelKind::MotorA,
            variant: Variant::Full,
            names: vec!["x".into(), "P".into(), "Q".into()],
            columns: vec![col.clone(), col.clone(), col],
            times,
            stats: SolverStats::default(),
            qss_max_residual: None,
        }
    }

    #[test]
    fn empty_run_gives_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        export_trajectory(&output(vec![], vec![]), None, &p, ExportFormat::Csv).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "t,x,P,Q\n");
    }

    #[test]
    fn unwritable_path_reports_the_path() {
        let p = Path::new("/nonexistent-dir/out.csv");
        match export_trajectory(&output(vec![0.0], vec![1.0]), None, p, ExportFormat::Csv) {
            Err(Error::Io { path, .. }) => assert_eq!(path, p),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_contains_arrays() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("o.json");
        export_trajectory(&output(vec![0.0, 0.5], vec![1.0, 2.0]), None, &p, ExportFormat::Json).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(v["times"][1], 0.5);
        assert_eq!(v["columns"][0][1], 2.0);
        assert_eq!(v["names"][1], "P");
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_lossless(vals in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 1..40)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("r.csv");
            let times: Vec<f64> = (0..vals.len()).map(|i| i as f64 * 1e-3).collect();
            export_trajectory(&output(times.clone(), vals.clone()), None, &p, ExportFormat::Csv).unwrap();
            let (header, rows) = read_csv(&p).unwrap();
            prop_assert_eq!(header, vec!["t", "x", "P", "Q"]);
            for (i, row) in rows.iter().enumerate() {
                prop_assert_eq!(row[0].to_bits(), times[i].to_bits());
                prop_assert_eq!(row[1].to_bits(), vals[i].to_bits());
            }
        }
    }
}
