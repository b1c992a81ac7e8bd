//! Run configurations, loadable from JSON.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use ncadmm::{PolicyKind, UpdateOrder};
use serde::{Deserialize, Serialize};

use crate::problems::{ProblemKind, ProblemSpec, SYNTHETIC, SYNTHETIC_1D, SYNTHETIC_2D};
use crate::HarnessError;

pub const DEFAULT_EPS_TOL: f64 = 1e-3;
pub const DEFAULT_TAU0: f64 = 1.0;
pub const DEFAULT_GRID_POINTS: usize = 25;
pub const DEFAULT_GRID_RANGE: (f64, f64) = (1e-3, 1e3);

/// Policies compared by the table run.
pub const TABLE_POLICIES: [PolicyKind; 3] =
    [PolicyKind::Vanilla, PolicyKind::ResidualBalance, PolicyKind::Spectral];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderChoice {
    #[default]
    Both,
    SmoothFirst,
    NonsmoothFirst,
}

impl OrderChoice {
    pub fn orders(self) -> Vec<UpdateOrder> {
        match self {
            OrderChoice::Both => vec![UpdateOrder::SmoothFirst, UpdateOrder::NonsmoothFirst],
            OrderChoice::SmoothFirst => vec![UpdateOrder::SmoothFirst],
            OrderChoice::NonsmoothFirst => vec![UpdateOrder::NonsmoothFirst],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OrderChoice::Both => "both",
            OrderChoice::SmoothFirst => "smooth_first",
            OrderChoice::NonsmoothFirst => "nonsmooth_first",
        }
    }
}

impl fmt::Display for OrderChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OrderChoice {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "both" => Ok(OrderChoice::Both),
            "smooth_first" | "smooth" => Ok(OrderChoice::SmoothFirst),
            "nonsmooth_first" | "nonsmooth" | "swapped" => Ok(OrderChoice::NonsmoothFirst),
            other => Err(HarnessError::Validation(format!("unknown order `{other}`"))),
        }
    }
}

fn default_grid() -> Vec<f64> {
    logspace(DEFAULT_GRID_RANGE.0, DEFAULT_GRID_RANGE.1, DEFAULT_GRID_POINTS)
}

fn default_eps() -> f64 {
    DEFAULT_EPS_TOL
}

fn default_tau0() -> f64 {
    DEFAULT_TAU0
}

fn default_jobs() -> usize {
    1
}

fn default_policies() -> Vec<PolicyKind> {
    PolicyKind::ALL.to_vec()
}

/// `count` points spaced evenly in log scale over `[lo, hi]`, endpoints included.
pub fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..count)
                .map(|i| {
                    if i == count - 1 {
                        hi
                    } else {
                        10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64)
                    }
                })
                .collect()
        }
    }
}

/// Parses `0.1,1,10` or `log:LO:HI:COUNT`.
pub fn parse_tau_grid(s: &str) -> Result<Vec<f64>, HarnessError> {
    let bad = |what: &str| HarnessError::Validation(format!("bad tau grid `{s}`: {what}"));
    if let Some(rest) = s.strip_prefix("log:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected log:LO:HI:COUNT"));
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad("LO is not a number"))?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad("HI is not a number"))?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad("COUNT is not an integer"))?;
        if !(lo > 0.0 && hi > 0.0) {
            return Err(bad("endpoints must be positive"));
        }
        return Ok(logspace(lo, hi, n));
    }
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| bad(&format!("`{t}` is not a number"))))
        .collect()
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<(), HarnessError> {
    if grid.is_empty() {
        return Err(HarnessError::Validation("tau grid is empty".into()));
    }
    if let Some(t) = grid.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(HarnessError::Validation(format!("tau grid values must be positive, got {t}")));
    }
    Ok(())
}

pub(crate) fn check_common(eps_tol: f64, max_iter: Option<usize>, jobs: usize) -> Result<(), HarnessError> {
    if !(eps_tol >= 0.0 && eps_tol.is_finite()) {
        return Err(HarnessError::Validation(format!("tolerance must be nonnegative, got {eps_tol}")));
    }
    if max_iter == Some(0) {
        return Err(HarnessError::Validation("max_iter must be at least 1".into()));
    }
    if jobs == 0 {
        return Err(HarnessError::Validation("jobs must be at least 1".into()));
    }
    Ok(())
}

/// Policy × τ₀ × order grid over one or more problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub problems: Vec<ProblemSpec>,
    #[serde(default = "default_grid")]
    pub tau_grid: Vec<f64>,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicyKind>,
    #[serde(default)]
    pub order: OrderChoice,
    #[serde(default = "default_eps")]
    pub eps_tol: f64,
    /// Falls back to the per-problem cap (2000 or 200).
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl SweepConfig {
    pub fn new(problems: Vec<ProblemSpec>) -> Self {
        SweepConfig {
            problems,
            tau_grid: default_grid(),
            policies: default_policies(),
            order: OrderChoice::Both,
            eps_tol: DEFAULT_EPS_TOL,
            max_iter: None,
            jobs: 1,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.problems.is_empty() {
            return Err(HarnessError::Validation("no problems given".into()));
        }
        if self.policies.is_empty() {
            return Err(HarnessError::Validation("policy list is empty".into()));
        }
        check_grid(&self.tau_grid)?;
        check_common(self.eps_tol, self.max_iter, self.jobs)
    }
}

/// The three-policy comparison at a shared τ₀.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableConfig {
    #[serde(default = "default_table_problems")]
    pub problems: Vec<ProblemSpec>,
    #[serde(default = "default_tau0")]
    pub tau0: f64,
    #[serde(default = "smooth_first")]
    pub order: OrderChoice,
    #[serde(default = "default_eps")]
    pub eps_tol: f64,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn smooth_first() -> OrderChoice {
    OrderChoice::SmoothFirst
}

pub fn default_table_problems() -> Vec<ProblemSpec> {
    vec![
        ProblemSpec::new(ProblemKind::L0Regression).with_dataset(SYNTHETIC),
        ProblemSpec::new(ProblemKind::L0Denoise).with_dataset(SYNTHETIC_1D),
        ProblemSpec::new(ProblemKind::L0Denoise).with_dataset(SYNTHETIC_2D),
        ProblemSpec::new(ProblemKind::PhaseRetrieval).with_dataset(SYNTHETIC),
    ]
}

impl Default for TableConfig {
    fn default() -> Self {
        TableConfig {
            problems: default_table_problems(),
            tau0: DEFAULT_TAU0,
            order: OrderChoice::SmoothFirst,
            eps_tol: DEFAULT_EPS_TOL,
            max_iter: None,
            jobs: 1,
            out: None,
        }
    }
}

impl TableConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.problems.is_empty() {
            return Err(HarnessError::Validation("no problems given".into()));
        }
        check_grid(&[self.tau0])?;
        check_common(self.eps_tol, self.max_iter, self.jobs)
    }

    /// The equivalent one-point sweep over the table policies.
    pub fn as_sweep(&self) -> SweepConfig {
        SweepConfig {
            problems: self.problems.clone(),
            tau_grid: vec![self.tau0],
            policies: TABLE_POLICIES.to_vec(),
            order: self.order,
            eps_tol: self.eps_tol,
            max_iter: self.max_iter,
            jobs: self.jobs,
            out: self.out.clone(),
        }
    }
}

/// A single solve with full output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub problem: ProblemSpec,
    #[serde(default = "spectral")]
    pub policy: PolicyKind,
    #[serde(default = "default_tau0")]
    pub tau0: f64,
    #[serde(default = "smooth_first_order")]
    pub order: UpdateOrder,
    #[serde(default = "default_eps")]
    pub eps_tol: f64,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub trace: bool,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

fn spectral() -> PolicyKind {
    PolicyKind::Spectral
}

fn smooth_first_order() -> UpdateOrder {
    UpdateOrder::SmoothFirst
}

impl CellConfig {
    pub fn new(problem: ProblemSpec) -> Self {
        CellConfig {
            problem,
            policy: PolicyKind::Spectral,
            tau0: DEFAULT_TAU0,
            order: UpdateOrder::SmoothFirst,
            eps_tol: DEFAULT_EPS_TOL,
            max_iter: None,
            trace: false,
            out: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        check_grid(&[self.tau0])?;
        check_common(self.eps_tol, self.max_iter, 1)
    }
}
