//! The generic two-block ADMM iteration.
//!
//! One iteration with the default (smooth-first) order is
//!
//! ```text
//! u'  = argmin_u H(u) − ⟨λ, Au⟩ + τ/2 ‖b − Au − Bv‖²
//! v'  = argmin_v G(v) − ⟨λ, Bv⟩ + τ/2 ‖b − Au' − Bv‖²
//! λ'  = λ + τ (b − Au' − Bv')
//! ```
//!
//! With [`UpdateOrder::NonsmoothFirst`] the two block solves are swapped.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::linalg::{all_finite, norm, scale, Field, LinearMap};
use crate::policy::{PenaltyPolicy, PolicyRule, PolicyState};
use crate::{Error, Result};

/// Iterates whose norm exceeds this are reported as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

/// The constraint `A u + B v = b`.
#[derive(Debug, Clone)]
pub struct ConstraintSystem<T: Field> {
    pub a: Arc<dyn LinearMap<T>>,
    pub b: Arc<dyn LinearMap<T>>,
    pub rhs: DVector<T>,
}

impl<T: Field> ConstraintSystem<T> {
    pub fn new(
        a: Arc<dyn LinearMap<T>>,
        b: Arc<dyn LinearMap<T>>,
        rhs: DVector<T>,
    ) -> Result<Self> {
        if a.out_dim() != b.out_dim() || a.out_dim() != rhs.len() {
            return Err(Error::dim(format!(
                "constraint rows disagree: A is {}x{}, B is {}x{}, b has {}",
                a.out_dim(),
                a.in_dim(),
                b.out_dim(),
                b.in_dim(),
                rhs.len()
            )));
        }
        Ok(ConstraintSystem { a, b, rhs })
    }

    pub fn u_dim(&self) -> usize {
        self.a.in_dim()
    }

    pub fn v_dim(&self) -> usize {
        self.b.in_dim()
    }

    pub fn rows(&self) -> usize {
        self.rhs.len()
    }

    /// `b − A u − B v`.
    pub fn primal_residual(&self, u: &DVector<T>, v: &DVector<T>) -> DVector<T> {
        &self.rhs - self.a.apply(u) - self.b.apply(v)
    }
}

/// The two block minimizations and the objective of one application.
pub trait Oracles<T: Field>: Send + Sync {
    /// Minimizer over `u` of the augmented Lagrangian at fixed `(v, λ, τ)`.
    fn solve_u(&self, v: &DVector<T>, lam: &DVector<T>, tau: f64) -> Result<DVector<T>>;

    /// Minimizer over `v` of the augmented Lagrangian at fixed `(u, λ, τ)`.
    fn solve_v(&self, u: &DVector<T>, lam: &DVector<T>, tau: f64) -> Result<DVector<T>>;

    fn objective(&self, u: &DVector<T>, v: &DVector<T>) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Iterates<T: Field> {
    pub u: DVector<T>,
    pub v: DVector<T>,
    pub lam: DVector<T>,
}

impl<T: Field> Iterates<T> {
    pub fn zeros(u_dim: usize, v_dim: usize, rows: usize) -> Self {
        Iterates {
            u: DVector::zeros(u_dim),
            v: DVector::zeros(v_dim),
            lam: DVector::zeros(rows),
        }
    }
}

/// A fully specified ADMM problem.
///
/// Immutable after construction; one instance can back many concurrent solves.
#[derive(Clone)]
pub struct ProblemInstance<T: Field> {
    pub name: String,
    pub constraint: ConstraintSystem<T>,
    pub oracles: Arc<dyn Oracles<T>>,
    pub init: Iterates<T>,
}

impl<T: Field> fmt::Debug for ProblemInstance<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemInstance")
            .field("name", &self.name)
            .field("u_dim", &self.constraint.u_dim())
            .field("v_dim", &self.constraint.v_dim())
            .field("rows", &self.constraint.rows())
            .finish()
    }
}

impl<T: Field> ProblemInstance<T> {
    pub fn new(
        name: impl Into<String>,
        constraint: ConstraintSystem<T>,
        oracles: Arc<dyn Oracles<T>>,
        init: Iterates<T>,
    ) -> Result<Self> {
        let prob = ProblemInstance {
            name: name.into(),
            constraint,
            oracles,
            init,
        };
        prob.check_iterates(&prob.init.u, &prob.init.v, &prob.init.lam)?;
        Ok(prob)
    }

    fn check_iterates(&self, u: &DVector<T>, v: &DVector<T>, lam: &DVector<T>) -> Result<()> {
        let cs = &self.constraint;
        if u.len() != cs.u_dim() || v.len() != cs.v_dim() || lam.len() != cs.rows() {
            return Err(Error::dim(format!(
                "{}: iterates (u {}, v {}, λ {}) do not match constraint (u {}, v {}, rows {})",
                self.name,
                u.len(),
                v.len(),
                lam.len(),
                cs.u_dim(),
                cs.v_dim(),
                cs.rows()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateOrder {
    /// `u` block first, then `v`.
    SmoothFirst,
    /// `v` block first, then `u`.
    NonsmoothFirst,
}

impl UpdateOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            UpdateOrder::SmoothFirst => "smooth_first",
            UpdateOrder::NonsmoothFirst => "nonsmooth_first",
        }
    }
}

impl fmt::Display for UpdateOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UpdateOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth_first" | "smooth-first" => Ok(UpdateOrder::SmoothFirst),
            "nonsmooth_first" | "nonsmooth-first" => Ok(UpdateOrder::NonsmoothFirst),
            other => Err(Error::InvalidParameter(format!("unknown update order `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState<T: Field> {
    pub u: DVector<T>,
    pub v: DVector<T>,
    /// `u` before the last step.
    pub u_prev: DVector<T>,
    /// `v` before the last step.
    pub v_prev: DVector<T>,
    pub lam: DVector<T>,
    pub tau: f64,
    pub k: usize,
}

impl<T: Field> SolverState<T> {
    pub fn initial(prob: &ProblemInstance<T>, tau: f64) -> Self {
        let init = &prob.init;
        SolverState {
            u: init.u.clone(),
            v: init.v.clone(),
            u_prev: init.u.clone(),
            v_prev: init.v.clone(),
            lam: init.lam.clone(),
            tau,
            k: 0,
        }
    }

    fn exceeds_limit(&self) -> bool {
        [&self.u, &self.v, &self.lam]
            .iter()
            .any(|x| !all_finite(x) || norm(*x) > DIVERGENCE_LIMIT)
            || !self.tau.is_finite()
    }
}

/// Primal and dual residuals of one iterate together with the scales used
/// by the relative stopping test.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals<T: Field> {
    pub r: DVector<T>,
    pub d: DVector<T>,
    pub r_norm: f64,
    pub d_norm: f64,
    /// `max{‖Au‖, ‖Bv‖, ‖b‖}`.
    pub r_rel_denom: f64,
    /// Norm of the dual image of `λ` on the first-updated block.
    pub d_rel_denom: f64,
}

/// Residuals of `after`, the result of one step from `before`.
///
/// The dual residual carries the displacement of whichever block entered the
/// first sub-step: `τ Aᴴ B (v − v_prev)` for smooth-first, `τ Bᴴ A (u − u_prev)`
/// for nonsmooth-first.
pub fn residuals<T: Field>(
    before: &SolverState<T>,
    after: &SolverState<T>,
    cs: &ConstraintSystem<T>,
    order: UpdateOrder,
) -> Residuals<T> {
    let au = cs.a.apply(&after.u);
    let bv = cs.b.apply(&after.v);
    let r = &cs.rhs - &au - &bv;
    let (d, d_rel_denom) = match order {
        UpdateOrder::SmoothFirst => {
            let dv = &after.v - &before.v;
            let d = scale(&cs.a.adjoint(&cs.b.apply(&dv)), after.tau);
            (d, norm(&cs.a.adjoint(&after.lam)))
        }
        UpdateOrder::NonsmoothFirst => {
            let du = &after.u - &before.u;
            let d = scale(&cs.b.adjoint(&cs.a.apply(&du)), after.tau);
            (d, norm(&cs.b.adjoint(&after.lam)))
        }
    };
    let r_rel_denom = norm(&au).max(norm(&bv)).max(norm(&cs.rhs));
    Residuals {
        r_norm: norm(&r),
        d_norm: norm(&d),
        r,
        d,
        r_rel_denom,
        d_rel_denom,
    }
}

/// Relative stopping test; both inequalities are inclusive.
pub fn check_stop<T: Field>(res: &Residuals<T>, eps_tol: f64) -> bool {
    res.r_norm <= eps_tol * res.r_rel_denom && res.d_norm <= eps_tol * res.d_rel_denom
}

/// One plain ADMM iteration at the state's penalty.
pub fn step<T: Field>(
    state: &SolverState<T>,
    prob: &ProblemInstance<T>,
    order: UpdateOrder,
) -> Result<SolverState<T>> {
    let tau = state.tau;
    let oracles = &prob.oracles;
    let (u, v) = match order {
        UpdateOrder::SmoothFirst => {
            let u = oracles.solve_u(&state.v, &state.lam, tau)?;
            let v = oracles.solve_v(&u, &state.lam, tau)?;
            (u, v)
        }
        UpdateOrder::NonsmoothFirst => {
            let v = oracles.solve_v(&state.u, &state.lam, tau)?;
            let u = oracles.solve_u(&v, &state.lam, tau)?;
            (u, v)
        }
    };
    prob.check_iterates(&u, &v, &state.lam)?;
    let r = prob.constraint.primal_residual(&u, &v);
    let lam = &state.lam + scale(&r, tau);
    Ok(SolverState {
        u_prev: state.u.clone(),
        v_prev: state.v.clone(),
        u,
        v,
        lam,
        tau,
        k: state.k + 1,
    })
}

/// Extrapolation state of the restarted Nesterov scheme.
///
/// The "lagged" block is the one fed into the first sub-step (`v` for
/// smooth-first, `u` for nonsmooth-first).
#[derive(Debug, Clone)]
pub struct AccelMemory<T: Field> {
    pub momentum: f64,
    lagged_hat: DVector<T>,
    lam_hat: DVector<T>,
    lagged_prev: DVector<T>,
    lam_prev: DVector<T>,
    combined_prev: f64,
    pub restarts: usize,
}

impl<T: Field> AccelMemory<T> {
    pub fn new(state: &SolverState<T>, order: UpdateOrder) -> Self {
        let lagged = lagged_block(state, order).clone();
        AccelMemory {
            momentum: 1.0,
            lagged_hat: lagged.clone(),
            lam_hat: state.lam.clone(),
            lagged_prev: lagged,
            lam_prev: state.lam.clone(),
            combined_prev: f64::INFINITY,
            restarts: 0,
        }
    }

    /// Effective combined residual of the last accepted iteration.
    pub fn combined(&self) -> f64 {
        self.combined_prev
    }
}

fn lagged_block<T: Field>(state: &SolverState<T>, order: UpdateOrder) -> &DVector<T> {
    match order {
        UpdateOrder::SmoothFirst => &state.v,
        UpdateOrder::NonsmoothFirst => &state.u,
    }
}

#[derive(Debug, Clone)]
pub struct AccelOutcome<T: Field> {
    /// The state the plain step was taken from (extrapolated lagged block and dual).
    pub extrapolated: SolverState<T>,
    pub next: SolverState<T>,
    /// Effective combined residual after the restart test.
    pub combined: f64,
    pub restarted: bool,
}

/// One step of ADMM with Nesterov extrapolation and restart.
///
/// The combined residual `c = ‖λ − λ̂‖²/τ + τ‖B(v − v̂)‖²` must shrink by the
/// factor `eta` each iteration; otherwise momentum resets to 1, the next step
/// starts from the previous un-extrapolated iterate and `c ← c_prev / eta`.
pub fn accelerated_step<T: Field>(
    state: &SolverState<T>,
    mem: &mut AccelMemory<T>,
    prob: &ProblemInstance<T>,
    order: UpdateOrder,
    eta: f64,
) -> Result<AccelOutcome<T>> {
    let mut extrapolated = state.clone();
    match order {
        UpdateOrder::SmoothFirst => extrapolated.v = mem.lagged_hat.clone(),
        UpdateOrder::NonsmoothFirst => extrapolated.u = mem.lagged_hat.clone(),
    }
    extrapolated.lam = mem.lam_hat.clone();

    let next = step(&extrapolated, prob, order)?;
    let tau = next.tau;
    let cs = &prob.constraint;
    let lagged = lagged_block(&next, order);
    let lagged_image = match order {
        UpdateOrder::SmoothFirst => cs.b.apply(&(lagged - &mem.lagged_hat)),
        UpdateOrder::NonsmoothFirst => cs.a.apply(&(lagged - &mem.lagged_hat)),
    };
    let dual_step = norm(&(&next.lam - &mem.lam_hat));
    let combined = dual_step * dual_step / tau + tau * norm(&lagged_image).powi(2);

    let restarted = !(combined < eta * mem.combined_prev);
    if restarted {
        mem.momentum = 1.0;
        mem.lagged_hat = mem.lagged_prev.clone();
        mem.lam_hat = mem.lam_prev.clone();
        mem.combined_prev /= eta;
        mem.restarts += 1;
    } else {
        let alpha = mem.momentum;
        let alpha_next = 0.5 * (1.0 + (1.0 + 4.0 * alpha * alpha).sqrt());
        let w = (alpha - 1.0) / alpha_next;
        mem.lagged_hat = lagged + scale(&(lagged - &mem.lagged_prev), w);
        mem.lam_hat = &next.lam + scale(&(&next.lam - &mem.lam_prev), w);
        mem.momentum = alpha_next;
        mem.combined_prev = combined;
    }
    mem.lagged_prev = lagged.clone();
    mem.lam_prev = next.lam.clone();

    Ok(AccelOutcome {
        extrapolated,
        next,
        combined: mem.combined_prev,
        restarted,
    })
}

#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub tau0: f64,
    pub eps_tol: f64,
    pub max_iter: usize,
    pub order: UpdateOrder,
    pub policy: PenaltyPolicy,
    pub record_trace: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            tau0: 1.0,
            eps_tol: 1e-3,
            max_iter: 2000,
            order: UpdateOrder::SmoothFirst,
            policy: PenaltyPolicy::constant(),
            record_trace: true,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_tol >= 0.0) || !self.eps_tol.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "eps_tol must be a nonnegative finite number, got {}",
                self.eps_tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
        }
        if !(self.tau0 > 0.0) || !self.tau0.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "initial penalty must be positive, got {}",
                self.tau0
            )));
        }
        self.policy.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Diverged,
    SolverError,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::Diverged => "diverged",
            SolveStatus::SolverError => "solver_error",
        }
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub k: usize,
    pub r_norm: f64,
    pub d_norm: f64,
    pub tau: f64,
    pub objective: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combined: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(bound(serialize = "T: Serialize"))]
pub struct SolveReport<T: Field> {
    pub problem: String,
    pub status: SolveStatus,
    pub iterations: usize,
    pub final_objective: f64,
    pub final_tau: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub trace: Vec<TraceEntry>,
    pub final_u: DVector<T>,
    pub final_v: DVector<T>,
    pub final_lam: DVector<T>,
}

impl<T: Field> SolveReport<T> {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Runs ADMM until the relative stopping test passes, the iteration cap is
/// hit, the iterates blow up, or an oracle fails.
///
/// `Err` is returned only for an invalid configuration; runtime failures are
/// reported through [`SolveReport::status`].
pub fn solve<T: Field>(prob: &ProblemInstance<T>, cfg: &SolveConfig) -> Result<SolveReport<T>> {
    cfg.validate()?;
    let cs = &prob.constraint;
    let mut state = SolverState::initial(prob, cfg.policy.clamp(cfg.tau0));
    let mut policy_state = PolicyState::new(&cfg.policy, &state, cs, cfg.order);
    let mut accel = match cfg.policy.rule {
        PolicyRule::AcceleratedRestart(p) => Some((AccelMemory::new(&state, cfg.order), p.eta)),
        _ => None,
    };

    let mut trace = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut error = None;
    let mut objective = prob.oracles.objective(&state.u, &state.v);

    while state.k < cfg.max_iter {
        let stepped = match accel.as_mut() {
            Some((mem, eta)) => accelerated_step(&state, mem, prob, cfg.order, *eta)
                .map(|out| (out.extrapolated, out.next, Some(out.combined))),
            None => step(&state, prob, cfg.order).map(|next| (state.clone(), next, None)),
        };
        let (before, after, combined) = match stepped {
            Ok(s) => s,
            Err(e) => {
                status = SolveStatus::SolverError;
                error = Some(e.to_string());
                break;
            }
        };

        let res = residuals(&before, &after, cs, cfg.order);
        objective = prob.oracles.objective(&after.u, &after.v);
        if cfg.record_trace {
            trace.push(TraceEntry {
                k: after.k,
                r_norm: res.r_norm,
                d_norm: res.d_norm,
                tau: after.tau,
                objective,
                combined,
            });
        }
        state = after;

        if state.exceeds_limit() {
            status = SolveStatus::Diverged;
            break;
        }
        if check_stop(&res, cfg.eps_tol) {
            status = SolveStatus::Converged;
            break;
        }
        state.tau = policy_state.next_tau(&cfg.policy, &before, &state, &res, cs, cfg.order);
    }

    Ok(SolveReport {
        problem: prob.name.clone(),
        status,
        iterations: state.k,
        final_objective: objective,
        final_tau: state.tau,
        error,
        trace,
        final_u: state.u,
        final_v: state.v,
        final_lam: state.lam,
    })
}
