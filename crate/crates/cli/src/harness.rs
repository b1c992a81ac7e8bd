//! Sweep and table runs over a worker pool.

use std::time::Instant;

use ncadmm::metrics::{psnr, signal_peak, IMAGE_PEAK};
use ncadmm::{solve, Complex64, DVector, PolicyKind, SolveConfig, SolveReport, UpdateOrder};
use rayon::prelude::*;

use crate::config::{CellConfig, SweepConfig, TableConfig};
use crate::problems::{aligned_real, build_problem, BuiltProblem, Instance, Truth};
use crate::records::{sort_records, BenchRecord, SCHEMA_VERSION};
use crate::HarnessError;

#[derive(Debug, Clone)]
pub enum CellReport {
    Real(SolveReport<f64>),
    Complex(SolveReport<Complex64>),
}

impl CellReport {
    pub fn trace(&self) -> &[ncadmm::TraceEntry] {
        match self {
            CellReport::Real(r) => &r.trace,
            CellReport::Complex(r) => &r.trace,
        }
    }

    pub fn iterations(&self) -> usize {
        match self {
            CellReport::Real(r) => r.iterations,
            CellReport::Complex(r) => r.iterations,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub record: BenchRecord,
    pub report: CellReport,
}

/// Recovered real signal or image, if the problem has one.
pub fn recovered(problem: &BuiltProblem, report: &CellReport) -> Option<DVector<f64>> {
    match (&problem.truth, report) {
        (Truth::Signal { .. } | Truth::Observed { .. } | Truth::Image { .. }, CellReport::Real(r)) => {
            Some(r.final_u.clone())
        }
        (Truth::Phase { x, image: Some(_) }, CellReport::Complex(r)) => Some(aligned_real(&r.final_v, x)),
        _ => None,
    }
}

fn quality(problem: &BuiltProblem, report: &CellReport) -> Option<f64> {
    let x = recovered(problem, report)?;
    if !x.iter().all(|v| v.is_finite()) {
        return None;
    }
    match &problem.truth {
        Truth::Signal { clean, .. } => Some(psnr(&x, clean, signal_peak(clean))),
        Truth::Image { clean, .. } => Some(psnr(&x, clean, IMAGE_PEAK)),
        Truth::Phase { x: truth, .. } => Some(psnr(&x, &truth.map(|z| z.re), IMAGE_PEAK)),
        _ => None,
    }
}

fn engine_err(e: ncadmm::Error) -> HarnessError {
    HarnessError::Validation(e.to_string())
}

/// Runs one solve and summarizes it.
pub fn solve_cell(
    problem: &BuiltProblem,
    policy: PolicyKind,
    tau0: f64,
    order: UpdateOrder,
    eps_tol: f64,
    max_iter: Option<usize>,
    record_trace: bool,
) -> Result<CellOutcome, HarnessError> {
    let cap = max_iter.unwrap_or(problem.default_max_iter);
    let cfg = SolveConfig { tau0, eps_tol, max_iter: cap, order, policy: policy.policy(), record_trace };
    let start = Instant::now();
    let report = match &problem.instance {
        Instance::Real(p) => CellReport::Real(solve(p, &cfg).map_err(engine_err)?),
        Instance::Complex(p) => CellReport::Complex(solve(p, &cfg).map_err(engine_err)?),
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let (status, iterations, objective) = match &report {
        CellReport::Real(r) => (r.status, r.iterations, r.final_objective),
        CellReport::Complex(r) => (r.status, r.iterations, r.final_objective),
    };
    let converged = status == ncadmm::SolveStatus::Converged;
    let record = BenchRecord {
        schema_version: SCHEMA_VERSION,
        problem: problem.spec.kind,
        dataset: problem.dataset.clone(),
        policy,
        order,
        tau0,
        iterations: if converged { iterations } else { cap },
        converged,
        status,
        wall_ms,
        objective: objective.is_finite().then_some(objective),
        psnr: quality(problem, &report),
        seed: problem.spec.seed,
    };
    Ok(CellOutcome { record, report })
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Validation(format!("cannot start {jobs} workers: {e}")))
}

/// Every (problem, policy, τ₀, order) cell, sorted deterministically.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<BenchRecord>, HarnessError> {
    cfg.validate()?;
    let problems = cfg.problems.iter().map(build_problem).collect::<Result<Vec<_>, _>>()?;
    let orders = cfg.order.orders();
    let mut cells = Vec::new();
    for p in &problems {
        for &policy in &cfg.policies {
            for &tau0 in &cfg.tau_grid {
                for &order in &orders {
                    cells.push((p, policy, tau0, order));
                }
            }
        }
    }
    let outcome: Result<Vec<BenchRecord>, HarnessError> = pool(cfg.jobs)?.install(|| {
        cells
            .par_iter()
            .map(|&(p, policy, tau0, order)| {
                solve_cell(p, policy, tau0, order, cfg.eps_tol, cfg.max_iter, false)
                    .map(|o| o.record)
                    .map_err(|e| e.context(&format!("{} / {} / {policy} / tau0={tau0} / {}", p.spec.kind, p.dataset, order.as_str())))
            })
            .collect()
    });
    let mut records = outcome?;
    sort_records(&mut records);
    Ok(records)
}

/// The three-policy comparison; one record per problem × policy × order.
pub fn run_table(cfg: &TableConfig) -> Result<Vec<BenchRecord>, HarnessError> {
    cfg.validate()?;
    run_sweep(&cfg.as_sweep())
}

/// One fully reported solve.
pub fn run_cell(cfg: &CellConfig) -> Result<(BuiltProblem, CellOutcome), HarnessError> {
    cfg.validate()?;
    let problem = build_problem(&cfg.problem)?;
    let outcome = solve_cell(&problem, cfg.policy, cfg.tau0, cfg.order, cfg.eps_tol, cfg.max_iter, cfg.trace)?;
    Ok((problem, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{ProblemKind, ProblemSpec};

    #[test]
    fn constant_policy_keeps_tau() {
        let p = build_problem(&ProblemSpec::new(ProblemKind::L0Regression)).unwrap();
        let out = solve_cell(&p, PolicyKind::Vanilla, 0.7, UpdateOrder::SmoothFirst, 1e-3, Some(50), true).unwrap();
        let trace = out.report.trace();
        assert_eq!(trace.len(), out.report.iterations());
        assert!(trace.iter().all(|t| t.tau == 0.7));
    }

    #[test]
    fn unconverged_cells_report_the_cap() {
        let p = build_problem(&ProblemSpec::new(ProblemKind::L0Regression)).unwrap();
        let out = solve_cell(&p, PolicyKind::Vanilla, 1e-3, UpdateOrder::SmoothFirst, 1e-3, Some(30), false).unwrap();
        assert!(!out.record.converged);
        assert_eq!(out.record.iterations, 30);
        assert!(out.report.trace().is_empty());
    }

    #[test]
    fn sweep_counts_and_order() {
        let mut cfg = SweepConfig::new(vec![ProblemSpec::new(ProblemKind::Eigenvector)]);
        cfg.tau_grid = vec![100.0, 30.0];
        cfg.policies = vec![PolicyKind::Spectral, PolicyKind::Vanilla];
        cfg.max_iter = Some(40);
        cfg.jobs = 3;
        let recs = run_sweep(&cfg).unwrap();
        assert_eq!(recs.len(), 8);
        assert_eq!(recs[0].policy, PolicyKind::Vanilla);
        assert_eq!(recs[0].tau0, 30.0);
        assert_eq!(recs[0].order, UpdateOrder::SmoothFirst);
        cfg.jobs = 1;
        let serial = run_sweep(&cfg).unwrap();
        let strip = |r: &[BenchRecord]| r.iter().map(|x| BenchRecord { wall_ms: 0.0, ..x.clone() }).collect::<Vec<_>>();
        assert_eq!(strip(&recs), strip(&serial));
    }

    #[test]
    fn empty_policy_list_is_rejected() {
        let mut cfg = SweepConfig::new(vec![ProblemSpec::new(ProblemKind::Eigenvector)]);
        cfg.policies.clear();
        assert!(matches!(run_sweep(&cfg), Err(HarnessError::Validation(_))));
    }

    #[test]
    fn missing_dataset_names_the_cell() {
        let spec = ProblemSpec::new(ProblemKind::L0Regression).with_dataset("/nonexistent/d.csv");
        let err = run_sweep(&SweepConfig::new(vec![spec])).unwrap_err();
        assert!(matches!(err, HarnessError::Io(_)));
        assert!(err.to_string().contains("l0_regression"));
        assert!(err.to_string().contains("/nonexistent/d.csv"));
    }
}
