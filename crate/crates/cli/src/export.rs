//! Files written for a single reported solve and for record sets.

use std::fs;
use std::path::{Path, PathBuf};

use ncadmm::io::{write_pgm, write_signals_csv, GrayImage};
use ncadmm::{Complex64, DVector, SolveReport, SolveStatus, TraceEntry};
use serde::{Deserialize, Serialize};

use crate::harness::{recovered, CellOutcome, CellReport};
use crate::problems::{BuiltProblem, Truth};
use crate::records::{self, BenchRecord};
use crate::HarnessError;

/// One trace row; non-finite values become `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TracePoint {
    pub k: usize,
    pub r_norm: Option<f64>,
    pub d_norm: Option<f64>,
    pub tau: Option<f64>,
    pub objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combined: Option<f64>,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl From<&TraceEntry> for TracePoint {
    fn from(t: &TraceEntry) -> Self {
        TracePoint {
            k: t.k,
            r_norm: finite(t.r_norm),
            d_norm: finite(t.d_norm),
            tau: finite(t.tau),
            objective: finite(t.objective),
            combined: t.combined.and_then(finite),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "field", rename_all = "snake_case", deny_unknown_fields)]
pub enum Solution {
    Real { u: Vec<f64>, v: Vec<f64>, lam: Vec<f64> },
    /// Entries are `[re, im]` pairs.
    Complex { u: Vec<[f64; 2]>, v: Vec<[f64; 2]>, lam: Vec<[f64; 2]> },
}

fn pairs(x: &DVector<Complex64>) -> Vec<[f64; 2]> {
    x.iter().map(|z| [z.re, z.im]).collect()
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub record: BenchRecord,
    pub status: SolveStatus,
    /// Iterations actually run, unlike `record.iterations` which reports the
    /// cap for unconverged solves.
    pub iterations_run: usize,
    pub final_tau: f64,
    #[serde(default)]
    pub error: Option<String>,
    pub trace: Vec<TracePoint>,
    pub solution: Solution,
}

impl ReportFile {
    pub fn new(outcome: &CellOutcome) -> Self {
        fn common<T: ncadmm::Field>(r: &SolveReport<T>) -> (SolveStatus, usize, f64, Option<String>, Vec<TracePoint>) {
            (r.status, r.iterations, r.final_tau, r.error.clone(), r.trace.iter().map(TracePoint::from).collect())
        }
        let ((status, iterations_run, final_tau, error, trace), solution) = match &outcome.report {
            CellReport::Real(r) => (
                common(r),
                Solution::Real {
                    u: r.final_u.as_slice().to_vec(),
                    v: r.final_v.as_slice().to_vec(),
                    lam: r.final_lam.as_slice().to_vec(),
                },
            ),
            CellReport::Complex(r) => (
                common(r),
                Solution::Complex { u: pairs(&r.final_u), v: pairs(&r.final_v), lam: pairs(&r.final_lam) },
            ),
        };
        ReportFile { record: outcome.record.clone(), status, iterations_run, final_tau, error, trace, solution }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<fs::File, HarnessError> {
    fs::File::create(path).map_err(|e| io_err(path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn pgm(path: &Path, h: usize, w: usize, pixels: &DVector<f64>) -> Result<(), HarnessError> {
    let img = GrayImage::new(h, w, pixels.clone()).map_err(|e| io_err(path, e))?;
    write_pgm(path, &img).map_err(|e| io_err(path, e))
}

fn signals(path: &Path, cols: &[(&str, &DVector<f64>)]) -> Result<(), HarnessError> {
    write_signals_csv(create(path)?, cols).map_err(|e| io_err(path, e))
}

/// Writes `records.csv`, `records.json` and `table.txt` into `dir`.
pub fn write_records(dir: &Path, recs: &[BenchRecord], text: &str) -> Result<Vec<PathBuf>, HarnessError> {
    ensure_dir(dir)?;
    let csv = dir.join("records.csv");
    records::write_csv(create(&csv)?, recs, true).map_err(|e| io_err(&csv, e))?;
    let json = dir.join("records.json");
    write_text(&json, &records::to_json(recs))?;
    let table = dir.join("table.txt");
    write_text(&table, text)?;
    Ok(vec![csv, json, table])
}

/// Writes the JSON report, the trace (when recorded) and the recovered
/// solution: CSV for signals and vectors, PGM for images.
pub fn export_outputs(dir: &Path, problem: &BuiltProblem, outcome: &CellOutcome) -> Result<Vec<PathBuf>, HarnessError> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    let report = ReportFile::new(outcome);

    let path = dir.join("report.json");
    write_text(&path, &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    written.push(path);

    if !report.trace.is_empty() {
        let path = dir.join("trace.csv");
        let mut w = csv::Writer::from_writer(create(&path)?);
        for t in &report.trace {
            w.serialize(t).map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        written.push(path);
    }

    let rec = recovered(problem, &outcome.report);
    match (&problem.truth, rec) {
        (Truth::Signal { clean, noisy }, Some(x)) => {
            let path = dir.join("signal.csv");
            signals(&path, &[("noisy", noisy), ("recovered", &x), ("clean", clean)])?;
            written.push(path);
        }
        (Truth::Observed { noisy }, Some(x)) => {
            let path = dir.join("signal.csv");
            signals(&path, &[("noisy", noisy), ("recovered", &x)])?;
            written.push(path);
        }
        (Truth::Image { clean, noisy, height, width }, Some(x)) => {
            for (name, img) in [("noisy", noisy), ("recovered", &x), ("clean", clean)] {
                let path = dir.join(format!("{name}.pgm"));
                pgm(&path, *height, *width, img)?;
                written.push(path);
            }
        }
        (Truth::Phase { x: truth, image: Some((h, w)) }, Some(x)) => {
            let path = dir.join("recovered.pgm");
            pgm(&path, *h, *w, &x)?;
            written.push(path);
            let path = dir.join("clean.pgm");
            pgm(&path, *h, *w, &truth.map(|z| z.re))?;
            written.push(path);
        }
        _ => {
            if let CellReport::Real(r) = &outcome.report {
                let path = dir.join("solution.csv");
                signals(&path, &[("v", &r.final_v)])?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
