//! Penalty-parameter rules applied once per iteration.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::engine::{ConstraintSystem, Residuals, SolverState, UpdateOrder};
use crate::linalg::{inner, scale, Field};
use crate::{Error, Result};

pub const DEFAULT_TAU_MIN: f64 = 1e-6;
pub const DEFAULT_TAU_MAX: f64 = 1e6;
pub const DEFAULT_ADAPT_HORIZON: usize = 1000;

/// Residual balancing: grow `τ` when the primal residual dominates, shrink it
/// when the dual residual does.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceParams {
    /// Imbalance ratio that triggers an update.
    pub mu: f64,
    /// Multiplicative step.
    pub eta: f64,
    pub tau_min: f64,
    pub tau_max: f64,
}

impl Default for BalanceParams {
    fn default() -> Self {
        BalanceParams {
            mu: 10.0,
            eta: 2.0,
            tau_min: DEFAULT_TAU_MIN,
            tau_max: DEFAULT_TAU_MAX,
        }
    }
}

/// Spectral (Barzilai–Borwein) estimates of the curvatures of the two blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralParams {
    /// Iterations between updates.
    pub period: usize,
    /// Minimum secant correlation for an estimate to be trusted.
    pub eps_corr: f64,
    pub tau_min: f64,
    pub tau_max: f64,
}

impl Default for SpectralParams {
    fn default() -> Self {
        SpectralParams {
            period: 2,
            eps_corr: 0.2,
            tau_min: DEFAULT_TAU_MIN,
            tau_max: DEFAULT_TAU_MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RestartParams {
    /// Required per-iteration shrink factor of the combined residual.
    pub eta: f64,
}

impl Default for RestartParams {
    fn default() -> Self {
        RestartParams { eta: 0.999 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "params")]
pub enum PolicyRule {
    Constant,
    ResidualBalance(BalanceParams),
    Spectral(SpectralParams),
    /// Constant `τ` with Nesterov extrapolation and restart.
    AcceleratedRestart(RestartParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Vanilla,
    ResidualBalance,
    Spectral,
    AcceleratedRestart,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Vanilla,
        PolicyKind::ResidualBalance,
        PolicyKind::Spectral,
        PolicyKind::AcceleratedRestart,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Vanilla => "vanilla",
            PolicyKind::ResidualBalance => "residual_balance",
            PolicyKind::Spectral => "spectral",
            PolicyKind::AcceleratedRestart => "accelerated_restart",
        }
    }

    /// The policy with default parameters.
    pub fn policy(self) -> PenaltyPolicy {
        match self {
            PolicyKind::Vanilla => PenaltyPolicy::constant(),
            PolicyKind::ResidualBalance => PenaltyPolicy::residual_balance(BalanceParams::default()),
            PolicyKind::Spectral => PenaltyPolicy::spectral(SpectralParams::default()),
            PolicyKind::AcceleratedRestart => {
                PenaltyPolicy::accelerated_restart(RestartParams::default())
            }
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "vanilla" | "constant" => Ok(PolicyKind::Vanilla),
            "residual_balance" | "balance" => Ok(PolicyKind::ResidualBalance),
            "spectral" | "adaptive" | "aadmm" => Ok(PolicyKind::Spectral),
            "accelerated_restart" | "accelerated" | "fast" => Ok(PolicyKind::AcceleratedRestart),
            other => Err(Error::InvalidParameter(format!("unknown policy `{other}`"))),
        }
    }
}

/// A penalty rule plus the iteration after which it stops adapting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PenaltyPolicy {
    pub rule: PolicyRule,
    /// From this iteration on `τ` is frozen.
    pub adapt_horizon: usize,
}

impl PenaltyPolicy {
    pub fn constant() -> Self {
        PenaltyPolicy { rule: PolicyRule::Constant, adapt_horizon: DEFAULT_ADAPT_HORIZON }
    }

    pub fn residual_balance(p: BalanceParams) -> Self {
        PenaltyPolicy { rule: PolicyRule::ResidualBalance(p), adapt_horizon: DEFAULT_ADAPT_HORIZON }
    }

    pub fn spectral(p: SpectralParams) -> Self {
        PenaltyPolicy { rule: PolicyRule::Spectral(p), adapt_horizon: DEFAULT_ADAPT_HORIZON }
    }

    pub fn accelerated_restart(p: RestartParams) -> Self {
        PenaltyPolicy {
            rule: PolicyRule::AcceleratedRestart(p),
            adapt_horizon: DEFAULT_ADAPT_HORIZON,
        }
    }

    pub fn with_horizon(mut self, adapt_horizon: usize) -> Self {
        self.adapt_horizon = adapt_horizon;
        self
    }

    pub fn kind(&self) -> PolicyKind {
        match self.rule {
            PolicyRule::Constant => PolicyKind::Vanilla,
            PolicyRule::ResidualBalance(_) => PolicyKind::ResidualBalance,
            PolicyRule::Spectral(_) => PolicyKind::Spectral,
            PolicyRule::AcceleratedRestart(_) => PolicyKind::AcceleratedRestart,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bounds = |lo: f64, hi: f64| {
            if lo > 0.0 && lo < hi && hi.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "penalty bounds must satisfy 0 < tau_min < tau_max, got [{lo}, {hi}]"
                )))
            }
        };
        match self.rule {
            PolicyRule::Constant => Ok(()),
            PolicyRule::ResidualBalance(p) => {
                if !(p.mu > 1.0 && p.eta > 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "balance factors must exceed 1, got mu={} eta={}",
                        p.mu, p.eta
                    )));
                }
                bounds(p.tau_min, p.tau_max)
            }
            PolicyRule::Spectral(p) => {
                if p.period == 0 || !(0.0..1.0).contains(&p.eps_corr) {
                    return Err(Error::InvalidParameter(format!(
                        "spectral period must be >= 1 and eps_corr in [0, 1), got {} and {}",
                        p.period, p.eps_corr
                    )));
                }
                bounds(p.tau_min, p.tau_max)
            }
            PolicyRule::AcceleratedRestart(p) => {
                if p.eta > 0.0 && p.eta < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!(
                        "restart factor must lie in (0, 1), got {}",
                        p.eta
                    )))
                }
            }
        }
    }

    /// Clamps `tau` into the policy's admissible range (a no-op for constant rules).
    pub fn clamp(&self, tau: f64) -> f64 {
        match self.rule {
            PolicyRule::ResidualBalance(p) => tau.clamp(p.tau_min, p.tau_max),
            PolicyRule::Spectral(p) => tau.clamp(p.tau_min, p.tau_max),
            PolicyRule::Constant | PolicyRule::AcceleratedRestart(_) => tau,
        }
    }
}

pub fn update_constant(tau: f64) -> f64 {
    tau
}

pub fn update_balance<T: Field>(tau: f64, res: &Residuals<T>, p: &BalanceParams) -> f64 {
    let next = if res.r_norm > p.mu * res.d_norm {
        tau * p.eta
    } else if res.d_norm > p.mu * res.r_norm {
        tau / p.eta
    } else {
        tau
    };
    next.clamp(p.tau_min, p.tau_max)
}

/// Secant snapshots at the last spectral update.
///
/// `first_image`/`lam_hat` describe the block updated first (`Au` and the
/// intermediate dual for smooth-first); `second_image`/`lam` the other one.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMemory<T: Field> {
    pub first_image: DVector<T>,
    pub lam_hat: DVector<T>,
    pub second_image: DVector<T>,
    pub lam: DVector<T>,
    pub anchor_k: usize,
    pub period: usize,
}

impl<T: Field> SpectralMemory<T> {
    /// Anchors at `state`, taking the intermediate dual equal to `λ`.
    pub fn initial(
        state: &SolverState<T>,
        cs: &ConstraintSystem<T>,
        order: UpdateOrder,
        period: usize,
    ) -> Self {
        let (first_image, second_image) = match order {
            UpdateOrder::SmoothFirst => (cs.a.apply(&state.u), cs.b.apply(&state.v)),
            UpdateOrder::NonsmoothFirst => (cs.b.apply(&state.v), cs.a.apply(&state.u)),
        };
        SpectralMemory {
            first_image,
            lam_hat: state.lam.clone(),
            second_image,
            lam: state.lam.clone(),
            anchor_k: state.k,
            period,
        }
    }
}

/// Hybrid steepest-descent / minimum-gradient curvature estimate from one
/// secant pair, or `None` when the pair is degenerate or poorly correlated.
pub fn spectral_estimate<T: Field>(
    dh: &DVector<T>,
    dlam: &DVector<T>,
    eps_corr: f64,
) -> Option<f64> {
    let hh = inner(dh, dh);
    let ll = inner(dlam, dlam);
    let hl = inner(dh, dlam);
    if hh == 0.0 || ll == 0.0 {
        return None;
    }
    let corr = hl / (hh.sqrt() * ll.sqrt());
    if !(corr > eps_corr) {
        return None;
    }
    let sd = ll / hl;
    let mg = hl / hh;
    let est = if 2.0 * mg > sd { mg } else { sd - 0.5 * mg };
    (est.is_finite() && est > 0.0).then_some(est)
}

/// Spectral penalty update.
///
/// Returns `τ` unchanged until `period` iterations have passed since the
/// anchor. Otherwise forms the secant pairs `(ΔAu, Δλ̂)` and `(ΔBv, Δλ)`,
/// combines the surviving estimates and re-anchors at the current iterate.
pub fn update_spectral<T: Field>(
    before: &SolverState<T>,
    after: &SolverState<T>,
    mem: &SpectralMemory<T>,
    cs: &ConstraintSystem<T>,
    order: UpdateOrder,
    p: &SpectralParams,
) -> (f64, SpectralMemory<T>) {
    let tau = after.tau;
    if after.k < mem.anchor_k + mem.period {
        return (tau, mem.clone());
    }

    let au = cs.a.apply(&after.u);
    let bv = cs.b.apply(&after.v);
    let (first_image, second_image, lam_hat) = match order {
        UpdateOrder::SmoothFirst => {
            let r_half = &cs.rhs - &au - cs.b.apply(&before.v);
            let lam_hat = &before.lam + scale(&r_half, before.tau);
            (au, bv, lam_hat)
        }
        UpdateOrder::NonsmoothFirst => {
            let r_half = &cs.rhs - cs.a.apply(&before.u) - &bv;
            let lam_hat = &before.lam + scale(&r_half, before.tau);
            (bv, au, lam_hat)
        }
    };

    let alpha = spectral_estimate(
        &(&first_image - &mem.first_image),
        &(&lam_hat - &mem.lam_hat),
        p.eps_corr,
    );
    let beta = spectral_estimate(
        &(&second_image - &mem.second_image),
        &(&after.lam - &mem.lam),
        p.eps_corr,
    );
    let next = match (alpha, beta) {
        (Some(a), Some(b)) => (a * b).sqrt(),
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => tau,
    };

    let refreshed = SpectralMemory {
        first_image,
        lam_hat,
        second_image,
        lam: after.lam.clone(),
        anchor_k: after.k,
        period: mem.period,
    };
    (next.clamp(p.tau_min, p.tau_max), refreshed)
}

/// Per-solve memory of the active policy.
pub(crate) enum PolicyState<T: Field> {
    Stateless,
    Spectral(SpectralMemory<T>),
}

impl<T: Field> PolicyState<T> {
    pub(crate) fn new(
        policy: &PenaltyPolicy,
        initial: &SolverState<T>,
        cs: &ConstraintSystem<T>,
        order: UpdateOrder,
    ) -> Self {
        match policy.rule {
            PolicyRule::Spectral(p) => {
                PolicyState::Spectral(SpectralMemory::initial(initial, cs, order, p.period))
            }
            _ => PolicyState::Stateless,
        }
    }

    pub(crate) fn next_tau(
        &mut self,
        policy: &PenaltyPolicy,
        before: &SolverState<T>,
        after: &SolverState<T>,
        res: &Residuals<T>,
        cs: &ConstraintSystem<T>,
        order: UpdateOrder,
    ) -> f64 {
        if after.k >= policy.adapt_horizon {
            return after.tau;
        }
        match (policy.rule, self) {
            (PolicyRule::ResidualBalance(p), _) => update_balance(after.tau, res, &p),
            (PolicyRule::Spectral(p), PolicyState::Spectral(mem)) => {
                let (tau, refreshed) = update_spectral(before, after, mem, cs, order, &p);
                *mem = refreshed;
                tau
            }
            _ => update_constant(after.tau),
        }
    }
}
