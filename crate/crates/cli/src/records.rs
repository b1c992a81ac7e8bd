//! Benchmark records and their CSV, JSON and text renderings.
//!
//! Schema version 1. One record per (problem, dataset, policy, τ₀, order)
//! cell. Columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | `schema_version` | always 1 |
//! | `problem` | `l0_regression`, `l0_denoise`, `phase_retrieval`, `eigenvector` |
//! | `dataset` | generator name or file stem |
//! | `policy` | `vanilla`, `residual_balance`, `spectral`, `accelerated_restart` |
//! | `order` | `smooth_first` or `nonsmooth_first` |
//! | `tau0` | initial penalty |
//! | `iterations` | iterations used; the cap when not converged |
//! | `converged` | stopping test met |
//! | `status` | `converged`, `max_iter`, `diverged`, `solver_error` |
//! | `wall_ms` | solve time, excluded from determinism checks |
//! | `objective` | final objective, empty if not finite |
//! | `psnr` | dB against the clean reference, when there is one |
//! | `seed` | generator seed |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use ncadmm::{PolicyKind, SolveStatus, UpdateOrder};
use serde::{Deserialize, Serialize};

use crate::problems::ProblemKind;
use crate::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchRecord {
    pub schema_version: u32,
    pub problem: ProblemKind,
    pub dataset: String,
    pub policy: PolicyKind,
    pub order: UpdateOrder,
    pub tau0: f64,
    pub iterations: usize,
    pub converged: bool,
    pub status: SolveStatus,
    pub wall_ms: f64,
    pub objective: Option<f64>,
    pub psnr: Option<f64>,
    pub seed: u64,
}

impl BenchRecord {
    /// Iteration count as printed in tables: `n+` when the cap was hit.
    pub fn iterations_label(&self) -> String {
        if self.converged {
            self.iterations.to_string()
        } else {
            format!("{}+", self.iterations)
        }
    }

    fn sort_key(&self) -> (ProblemKind, &str, PolicyKind, f64, UpdateOrder, u64) {
        (self.problem, &self.dataset, self.policy, self.tau0, self.order, self.seed)
    }
}

/// Deterministic record order: problem, dataset, policy, τ₀, order, seed.
pub fn sort_records(records: &mut [BenchRecord]) {
    records.sort_by(|a, b| {
        let (ka, kb) = (a.sort_key(), b.sort_key());
        ka.0.cmp(&kb.0)
            .then_with(|| ka.1.cmp(kb.1))
            .then_with(|| ka.2.cmp(&kb.2))
            .then_with(|| ka.3.total_cmp(&kb.3))
            .then_with(|| ka.4.cmp(&kb.4))
            .then_with(|| ka.5.cmp(&kb.5))
    });
}

const HEADER: [&str; 13] = [
    "schema_version",
    "problem",
    "dataset",
    "policy",
    "order",
    "tau0",
    "iterations",
    "converged",
    "status",
    "wall_ms",
    "objective",
    "psnr",
    "seed",
];

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Io(e.to_string())
}

/// Writes records as CSV. Without `with_wall_ms` the timing column is
/// dropped, leaving output that is byte-identical across repeated runs.
pub fn write_csv<W: Write>(writer: W, records: &[BenchRecord], with_wall_ms: bool) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(writer);
    let keep = |name: &str| with_wall_ms || name != "wall_ms";
    w.write_record(HEADER.iter().filter(|h| keep(h))).map_err(csv_err)?;
    for r in records {
        let row = [
            r.schema_version.to_string(),
            r.problem.as_str().to_string(),
            r.dataset.clone(),
            r.policy.as_str().to_string(),
            r.order.as_str().to_string(),
            r.tau0.to_string(),
            r.iterations.to_string(),
            r.converged.to_string(),
            r.status.as_str().to_string(),
            r.wall_ms.to_string(),
            opt(r.objective),
            opt(r.psnr),
            r.seed.to_string(),
        ];
        w.write_record(HEADER.iter().zip(row.iter()).filter(|(h, _)| keep(h)).map(|(_, v)| v))
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))
}

/// Reads a CSV written with the timing column.
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<BenchRecord>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(HarnessError::Validation(format!("unexpected record columns: {headers:?}")));
    }
    rdr.deserialize().map(|r| r.map_err(|e| HarnessError::Validation(e.to_string()))).collect()
}

pub fn to_json(records: &[BenchRecord]) -> String {
    serde_json::to_string_pretty(records).expect("records serialize")
}

pub fn from_json(s: &str) -> Result<Vec<BenchRecord>, HarnessError> {
    serde_json::from_str(s).map_err(|e| HarnessError::Validation(format!("bad record JSON: {e}")))
}

fn fmt_sci(x: f64) -> String {
    if x == 0.0 || (1e-2..1e4).contains(&x.abs()) {
        format!("{x:.4}").trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{x:.3e}")
    }
}

fn quality(r: &BenchRecord) -> String {
    match (r.psnr, r.objective) {
        (Some(p), _) if p.is_finite() => format!("{p:.1} dB"),
        (Some(_), _) => "inf dB".to_string(),
        (None, Some(o)) => fmt_sci(o),
        (None, None) => "-".to_string(),
    }
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> =
            row.iter().enumerate().map(|(c, s)| format!("{s:<w$}", w = widths[c])).collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

/// One line per record.
pub fn sweep_text(records: &[BenchRecord]) -> String {
    let mut rows = vec![["problem", "dataset", "policy", "order", "tau0", "iterations", "status", "objective/psnr"]
        .map(String::from)
        .to_vec()];
    for r in records {
        rows.push(vec![
            r.problem.to_string(),
            r.dataset.clone(),
            r.policy.to_string(),
            r.order.as_str().to_string(),
            fmt_sci(r.tau0),
            r.iterations_label(),
            r.status.to_string(),
            quality(r),
        ]);
    }
    aligned(&rows)
}

/// Comparison layout: one row pair per (problem, dataset, order), one column
/// per policy. The first row holds `iterations(seconds)`, the second the
/// objective or PSNR.
pub fn table_text(records: &[BenchRecord]) -> String {
    let mut policies: Vec<PolicyKind> = records.iter().map(|r| r.policy).collect();
    policies.sort();
    policies.dedup();
    let mut groups: BTreeMap<(ProblemKind, String, UpdateOrder), Vec<&BenchRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.problem, r.dataset.clone(), r.order)).or_default().push(r);
    }
    let mut header = vec!["problem".to_string(), "dataset".into(), "".into()];
    header.extend(policies.iter().map(|p| p.to_string()));
    let mut rows = vec![header];
    for ((problem, dataset, order), recs) in groups {
        let cell = |p: PolicyKind| recs.iter().find(|r| r.policy == p);
        let mut iters = vec![problem.to_string(), dataset.clone(), "iters(s)".into()];
        let mut qual = vec![String::new(), order.as_str().to_string(), "obj/psnr".into()];
        for &p in &policies {
            match cell(p) {
                Some(r) => {
                    iters.push(format!("{}({:.3})", r.iterations_label(), r.wall_ms / 1000.0));
                    qual.push(quality(r));
                }
                None => {
                    iters.push("-".into());
                    qual.push("-".into());
                }
            }
        }
        rows.push(iters);
        rows.push(qual);
    }
    aligned(&rows)
}
