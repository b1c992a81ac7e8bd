//! The four built-in problems and their closed-form block updates.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::StandardNormal;

use crate::datagen::RngSeed;
use crate::engine::{ConstraintSystem, Iterates, Oracles, ProblemInstance};
use crate::linalg::{scale, Field, Identity, LinearMap, Scaled};
use crate::prox::{abs_proj, hard, l0_norm, sphere_project};
use crate::solvers::{
    least_squares_solve, CachedRegressionSolver, GradientOperator, LeastSquaresMap,
    ShiftedEigSolver,
};
use crate::{Error, Result};

fn consensus<T: Field>(n: usize) -> ConstraintSystem<T> {
    let id: Arc<dyn LinearMap<T>> = Arc::new(Identity::new(n));
    ConstraintSystem::new(id.clone(), Arc::new(Scaled::negated(id)), DVector::zeros(n))
        .expect("identity blocks always agree")
}

fn check_rho(rho: f64) -> Result<()> {
    if rho >= 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("rho must be nonnegative and finite, got {rho}")))
    }
}

/// `min ½‖Dx − c‖² + ρ‖x‖₀` with `D` of size `n×m`.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    pub d: DMatrix<f64>,
    pub c: DVector<f64>,
    pub rho: f64,
}

struct RegressionOracles {
    solver: CachedRegressionSolver,
    d: DMatrix<f64>,
    c: DVector<f64>,
    rho: f64,
}

impl Oracles<f64> for RegressionOracles {
    fn solve_u(&self, v: &DVector<f64>, lam: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
        self.solver.solve(v, lam, tau)
    }

    fn solve_v(&self, u: &DVector<f64>, lam: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
        Ok(hard(&(u - lam / tau), self.rho / tau))
    }

    fn objective(&self, _u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        0.5 * (&self.d * v - &self.c).norm_squared() + self.rho * l0_norm(v, 0.0) as f64
    }
}

/// Splits as `u − v = 0`; the objective is evaluated at the sparse iterate `v`.
pub fn build_l0_regression(p: &RegressionProblem) -> Result<ProblemInstance<f64>> {
    check_rho(p.rho)?;
    let m = p.d.ncols();
    let solver = CachedRegressionSolver::new(p.d.clone(), &p.c)?;
    let oracles = RegressionOracles { solver, d: p.d.clone(), c: p.c.clone(), rho: p.rho };
    ProblemInstance::new("l0_regression", consensus(m), Arc::new(oracles), Iterates::zeros(m, m, m))
}

/// `min ½‖x − c‖² + ρ‖∇x‖₀` over a periodic 1-D signal or 2-D image.
#[derive(Debug, Clone)]
pub struct DenoiseProblem {
    pub c: DVector<f64>,
    pub rho: f64,
    pub grad: GradientOperator,
}

struct DenoiseOracles {
    grad: Arc<GradientOperator>,
    c: DVector<f64>,
    rho: f64,
    atol: f64,
}

impl Oracles<f64> for DenoiseOracles {
    fn solve_u(&self, v: &DVector<f64>, lam: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
        self.grad.denoise_solve(&self.c, v, lam, tau)
    }

    fn solve_v(&self, u: &DVector<f64>, lam: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
        Ok(hard(&(self.grad.apply(u) - lam / tau), self.rho / tau))
    }

    fn objective(&self, u: &DVector<f64>, _v: &DVector<f64>) -> f64 {
        let jumps = l0_norm(&self.grad.apply(u), self.atol);
        0.5 * (u - &self.c).norm_squared() + self.rho * jumps as f64
    }
}

/// Gradient entries at or below this fraction of the data scale count as zero
/// in the reported denoising objective.
pub const DENOISE_L0_RTOL: f64 = 1e-6;

/// Splits as `∇u − v = 0`; the objective is evaluated at `(u, ∇u)`.
pub fn build_l0_denoise(p: &DenoiseProblem) -> Result<ProblemInstance<f64>> {
    check_rho(p.rho)?;
    if p.grad.in_dim() != p.c.len() {
        return Err(Error::dim(format!(
            "denoise: gradient grid has {} pixels, signal has {}",
            p.grad.in_dim(),
            p.c.len()
        )));
    }
    let grad = Arc::new(p.grad.clone());
    let n = grad.in_dim();
    let rows = grad.out_dim();
    let a: Arc<dyn LinearMap<f64>> = grad.clone();
    let b: Arc<dyn LinearMap<f64>> = Arc::new(Scaled::negated(Arc::new(Identity::new(rows))));
    let cs = ConstraintSystem::new(a, b, DVector::zeros(rows))?;
    let scale = p.c.amax().max(1.0);
    let oracles = DenoiseOracles { grad, c: p.c.clone(), rho: p.rho, atol: DENOISE_L0_RTOL * scale };
    ProblemInstance::new("l0_denoise", cs, Arc::new(oracles), Iterates::zeros(n, rows, rows))
}

/// `min ½‖|Dx| − c‖²` over complex (or real) `x`.
#[derive(Debug, Clone)]
pub struct PhaseRetrievalProblem<T: Field> {
    pub d: Arc<dyn LeastSquaresMap<T>>,
    pub c: DVector<f64>,
}

struct PhaseOracles<T: Field> {
    d: Arc<dyn LeastSquaresMap<T>>,
    c: DVector<f64>,
}

impl<T: Field> Oracles<T> for PhaseOracles<T> {
    fn solve_u(&self, v: &DVector<T>, lam: &DVector<T>, tau: f64) -> Result<DVector<T>> {
        let z = self.d.apply(v) + scale(lam, 1.0 / tau);
        abs_proj(&z, &self.c, tau)
    }

    fn solve_v(&self, u: &DVector<T>, lam: &DVector<T>, tau: f64) -> Result<DVector<T>> {
        least_squares_solve(self.d.as_ref(), &(u - scale(lam, 1.0 / tau)))
    }

    fn objective(&self, _u: &DVector<T>, v: &DVector<T>) -> f64 {
        phase_objective(self.d.as_ref(), &self.c, v)
    }
}

/// `½‖|Dv| − c‖²`.
pub fn phase_objective<T: Field>(d: &dyn LinearMap<T>, c: &DVector<f64>, v: &DVector<T>) -> f64 {
    let dv = d.apply(v);
    0.5 * dv.iter().zip(c.iter()).map(|(z, ci)| (z.modulus() - ci).powi(2)).sum::<f64>()
}

/// Splits as `u − Dv = 0`; the objective is evaluated at `v`.
pub fn build_phase_retrieval<T: Field>(p: &PhaseRetrievalProblem<T>) -> Result<ProblemInstance<T>> {
    let (m, n) = (p.d.out_dim(), p.d.in_dim());
    if p.c.len() != m {
        return Err(Error::dim(format!("phase retrieval: D has {m} rows, c has {}", p.c.len())));
    }
    if p.c.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidParameter("phase retrieval magnitudes must be nonnegative".into()));
    }
    let d_map: Arc<dyn LinearMap<T>> = p.d.clone();
    let cs = ConstraintSystem::new(
        Arc::new(Identity::new(m)),
        Arc::new(Scaled::negated(d_map)),
        DVector::zeros(m),
    )?;
    let oracles = PhaseOracles { d: p.d.clone(), c: p.c.clone() };
    ProblemInstance::new("phase_retrieval", cs, Arc::new(oracles), Iterates::zeros(m, n, m))
}

/// `max ‖Dx‖²` over the unit sphere.
#[derive(Debug, Clone)]
pub struct EigProblem {
    pub d: DMatrix<f64>,
    /// Seed of the random unit starting vector.
    pub seed: u64,
}

struct EigOracles {
    solver: ShiftedEigSolver,
    d: DMatrix<f64>,
}

impl Oracles<f64> for EigOracles {
    fn solve_u(&self, v: &DVector<f64>, lam: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
        self.solver.solve(v, lam, tau)
    }

    fn solve_v(&self, u: &DVector<f64>, lam: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
        sphere_project(&(u - lam / tau))
    }

    fn objective(&self, _u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        -(&self.d * v).norm_squared()
    }
}

/// Seeded standard-normal direction normalized to unit length.
pub fn random_unit_vector(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = RngSeed(seed).rng();
    loop {
        let z = DVector::from_iterator(n, (0..n).map(|_| rand::Rng::sample(&mut rng, StandardNormal)));
        if let Ok(unit) = sphere_project(&z) {
            return unit;
        }
    }
}

/// Splits as `u − v = 0` with `v` on the unit sphere, starting from a seeded
/// random unit vector (zero is a fixed point of the iteration).
pub fn build_eigenvector(p: &EigProblem) -> Result<ProblemInstance<f64>> {
    build_eigenvector_from(p, random_unit_vector(p.d.ncols(), p.seed))
}

/// As [`build_eigenvector`] with an explicit starting vector `u₀ = v₀`.
pub fn build_eigenvector_from(p: &EigProblem, v0: DVector<f64>) -> Result<ProblemInstance<f64>> {
    let n = p.d.ncols();
    if v0.len() != n {
        return Err(Error::dim(format!("eigenvector: v₀ has {} entries, D has {n} columns", v0.len())));
    }
    let oracles = EigOracles { solver: ShiftedEigSolver::new(&p.d), d: p.d.clone() };
    let init = Iterates { u: v0.clone(), v: v0, lam: DVector::zeros(n) };
    ProblemInstance::new("eigenvector", consensus(n), Arc::new(oracles), init)
}

/// Least-squares map over an explicit dense matrix, for tests and small problems.
pub fn dense_phase_operator<T: Field>(d: DMatrix<T>) -> Result<Arc<dyn LeastSquaresMap<T>>> {
    Ok(Arc::new(crate::solvers::DenseLeastSquares::new(d)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{solve, step, SolveConfig, SolveStatus, SolverState, UpdateOrder};
    use crate::policy::PenaltyPolicy;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn regression_without_penalty_is_least_squares() {
        let mut r = rng(2);
        let d = DMatrix::from_fn(12, 5, |_, _| r.random_range(-1.0..1.0));
        let c = DVector::from_fn(12, |_, _| r.random_range(-1.0..1.0));
        let prob = build_l0_regression(&RegressionProblem { d: d.clone(), c: c.clone(), rho: 0.0 }).unwrap();
        let cfg = SolveConfig { tau0: 1.0, eps_tol: 1e-12, max_iter: 5000, ..Default::default() };
        let report = solve(&prob, &cfg).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        let ls = d.tr_mul(&d).cholesky().unwrap().solve(&d.tr_mul(&c));
        assert!((&report.final_v - &ls).norm() < 1e-6, "{}", (&report.final_v - &ls).norm());
    }

    #[test]
    fn regression_zero_data_is_fixed_point() {
        let d = DMatrix::from_fn(4, 3, |i, j| (i + 2 * j) as f64);
        let prob = build_l0_regression(&RegressionProblem { d, c: DVector::zeros(4), rho: 1.0 }).unwrap();
        let report = solve(&prob, &SolveConfig::default()).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert_eq!(report.final_v, DVector::zeros(3));
        assert_eq!(report.final_objective, 0.0);
    }

    /// Gradient of the u-subproblem objective, `∇H(u) − Aᵀλ − τAᵀ(b − Au − Bv)`.
    fn u_gradient(grad_h: DVector<f64>, prob: &ProblemInstance<f64>, u: &DVector<f64>, v: &DVector<f64>, lam: &DVector<f64>, tau: f64) -> DVector<f64> {
        let cs = &prob.constraint;
        grad_h - cs.a.adjoint(lam) - cs.a.adjoint(&cs.primal_residual(u, v)) * tau
    }

    #[test]
    fn smooth_blocks_are_stationary() {
        let mut r = rng(9);
        let tau = 1.7;

        let d = DMatrix::from_fn(7, 4, |_, _| r.random_range(-1.0..1.0));
        let c = DVector::from_fn(7, |_, _| r.random_range(-1.0..1.0));
        let prob = build_l0_regression(&RegressionProblem { d: d.clone(), c: c.clone(), rho: 0.3 }).unwrap();
        let v = DVector::from_fn(4, |_, _| r.random_range(-1.0..1.0));
        let lam = DVector::from_fn(4, |_, _| r.random_range(-1.0..1.0));
        let u = prob.oracles.solve_u(&v, &lam, tau).unwrap();
        let g = u_gradient(d.tr_mul(&(&d * &u - &c)), &prob, &u, &v, &lam, tau);
        assert!(g.norm() <= 1e-8 * (1.0 + u.norm()));

        let grad = GradientOperator::grid(4, 5).unwrap();
        let c = DVector::from_fn(20, |_, _| r.random_range(0.0..10.0));
        let prob = build_l0_denoise(&DenoiseProblem { c: c.clone(), rho: 2.0, grad }).unwrap();
        let v = DVector::from_fn(40, |_, _| r.random_range(-1.0..1.0));
        let lam = DVector::from_fn(40, |_, _| r.random_range(-1.0..1.0));
        let u = prob.oracles.solve_u(&v, &lam, tau).unwrap();
        let g = u_gradient(&u - &c, &prob, &u, &v, &lam, tau);
        assert!(g.norm() <= 1e-8 * (1.0 + u.norm()));

        let d = DMatrix::from_fn(5, 5, |_, _| r.random_range(-1.0..1.0));
        let prob = build_eigenvector(&EigProblem { d: d.clone(), seed: 4 }).unwrap();
        let tau = 50.0;
        let v = random_unit_vector(5, 8);
        let lam = DVector::from_fn(5, |_, _| r.random_range(-1.0..1.0));
        let u = prob.oracles.solve_u(&v, &lam, tau).unwrap();
        let g = u_gradient(-d.tr_mul(&(&d * &u)) * 2.0, &prob, &u, &v, &lam, tau);
        assert!(g.norm() <= 1e-8 * (1.0 + u.norm()));
    }

    #[test]
    fn denoise_limits() {
        let grad = GradientOperator::line(30).unwrap();
        let mut r = rng(4);
        let c = DVector::from_fn(30, |_, _| r.random_range(0.0..5.0));
        let prob = build_l0_denoise(&DenoiseProblem { c: c.clone(), rho: 0.0, grad: grad.clone() }).unwrap();
        let report = solve(&prob, &SolveConfig { tau0: 1.0, eps_tol: 1e-10, ..Default::default() }).unwrap();
        assert!((report.final_u - &c).norm() < 1e-6);

        // Huge ρ: one step from zero keeps v = 0 and smooths c.
        let prob = build_l0_denoise(&DenoiseProblem { c: c.clone(), rho: 1e12, grad: grad.clone() }).unwrap();
        let s0 = SolverState::initial(&prob, 2.0);
        let s1 = step(&s0, &prob, UpdateOrder::SmoothFirst).unwrap();
        assert_eq!(s1.v, DVector::zeros(30));
        let expected = grad.solve_shifted(&c, 2.0).unwrap();
        assert!((s1.u - expected).norm() < 1e-12);
    }

    #[test]
    fn denoise_rejects_wrong_grid() {
        let grad = GradientOperator::grid(3, 3).unwrap();
        assert!(build_l0_denoise(&DenoiseProblem { c: DVector::zeros(8), rho: 1.0, grad }).is_err());
    }

    fn complex_gaussian(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(rows, cols, |_, _| Complex64::new(r.sample(StandardNormal), r.sample(StandardNormal)))
    }

    #[test]
    fn phase_objective_properties() {
        let mut r = rng(21);
        let d = complex_gaussian(&mut r, 30, 4);
        let x0 = complex_gaussian(&mut r, 4, 1).column(0).clone_owned();
        let c = (&d * &x0).map(|z| z.norm());
        let op = dense_phase_operator(d).unwrap();
        let prob = build_phase_retrieval(&PhaseRetrievalProblem { d: op, c }).unwrap();
        assert!(prob.oracles.objective(&DVector::zeros(30), &x0) < 1e-20);
        let rotated = &x0 * Complex64::from_polar(1.0, 0.83);
        let v = complex_gaussian(&mut r, 4, 1).column(0).clone_owned();
        let a = prob.oracles.objective(&DVector::zeros(30), &v);
        let b = prob.oracles.objective(&DVector::zeros(30), &(&v * Complex64::from_polar(1.0, -2.1)));
        assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        assert!(prob.oracles.objective(&DVector::zeros(30), &rotated) < 1e-20);
    }

    #[test]
    fn phase_retrieval_rejects_bad_magnitudes() {
        let mut r = rng(1);
        let op = dense_phase_operator(complex_gaussian(&mut r, 6, 2)).unwrap();
        let c = DVector::from_vec(vec![1.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(build_phase_retrieval(&PhaseRetrievalProblem { d: op.clone(), c }).is_err());
        assert!(build_phase_retrieval(&PhaseRetrievalProblem { d: op, c: DVector::zeros(5) }).is_err());
    }

    #[test]
    fn eigenvector_diag_direction() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let prob = build_eigenvector(&EigProblem { d, seed: 3 }).unwrap();
        let angle_to_e1 = |v: &DVector<f64>| v[0].abs().min(1.0).acos();

        // Below 4·λmax the multiplier grows without bound, but v still locks
        // onto ±e₁.
        let cfg = SolveConfig { tau0: 10.0, eps_tol: 1e-12, max_iter: 2000, policy: PenaltyPolicy::constant(), ..Default::default() };
        let report = solve(&prob, &cfg).unwrap();
        assert_eq!(report.status, SolveStatus::Diverged);
        assert!(angle_to_e1(&report.final_v) < 1e-6);

        let cfg = SolveConfig { tau0: 24.0, ..cfg };
        let report = solve(&prob, &cfg).unwrap();
        assert_eq!(report.status, SolveStatus::Converged);
        assert!(angle_to_e1(&report.final_v) < 1e-6);
        assert!((-report.final_objective - 4.0).abs() < 4e-6);

        let mut s = SolverState::initial(&prob, 10.0);
        for _ in 0..10 {
            s = step(&s, &prob, UpdateOrder::SmoothFirst).unwrap();
            assert!((s.v.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn random_unit_vector_is_seeded() {
        let a = random_unit_vector(6, 99);
        assert_eq!(a, random_unit_vector(6, 99));
        assert_ne!(a, random_unit_vector(6, 100));
        assert!((a.norm() - 1.0).abs() < 1e-14);
    }
}
