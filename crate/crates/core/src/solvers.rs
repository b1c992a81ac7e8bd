//! Linear solves behind the smooth block updates.
//!
//! Factorizations that depend on `τ` are cached for the last `τ` seen, so a
//! constant-penalty run factors once and adaptive runs refactor only when the
//! penalty actually moves.

use std::fmt;
use std::sync::{Arc, Mutex};

use nalgebra::linalg::{Cholesky, QR, LU};
use nalgebra::{DMatrix, DVector, Dyn};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::linalg::{Field, LinearMap};
use crate::{Error, Result};

/// Condition number above which a shifted system is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressionBranch {
    /// Factor the `m×m` system `DᵀD + τI` (used when `n ≥ m`).
    Gram,
    /// Factor the `n×n` system `τI + DDᵀ` and apply Woodbury (used when `n < m`).
    Woodbury,
}

/// Solver for `(DᵀD + τI) u = τv + λ + Dᵀc` with `D` of size `n×m`.
pub struct CachedRegressionSolver {
    d: DMatrix<f64>,
    dtc: DVector<f64>,
    branch: RegressionBranch,
    gram: DMatrix<f64>,
    cache: Mutex<Option<(u64, Cholesky<f64, Dyn>)>>,
}

impl fmt::Debug for CachedRegressionSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CachedRegressionSolver")
            .field("rows", &self.d.nrows())
            .field("cols", &self.d.ncols())
            .field("branch", &self.branch)
            .finish()
    }
}

impl CachedRegressionSolver {
    pub fn new(d: DMatrix<f64>, c: &DVector<f64>) -> Result<Self> {
        let branch = if d.nrows() >= d.ncols() {
            RegressionBranch::Gram
        } else {
            RegressionBranch::Woodbury
        };
        Self::with_branch(d, c, branch)
    }

    pub fn with_branch(d: DMatrix<f64>, c: &DVector<f64>, branch: RegressionBranch) -> Result<Self> {
        if d.nrows() != c.len() {
            return Err(Error::dim(format!(
                "regression: D has {} rows but c has {} entries",
                d.nrows(),
                c.len()
            )));
        }
        let dtc = d.tr_mul(c);
        let gram = match branch {
            RegressionBranch::Gram => d.tr_mul(&d),
            RegressionBranch::Woodbury => &d * d.transpose(),
        };
        Ok(CachedRegressionSolver { d, dtc, branch, gram, cache: Mutex::new(None) })
    }

    pub fn branch(&self) -> RegressionBranch {
        self.branch
    }

    pub fn dim(&self) -> usize {
        self.d.ncols()
    }

    fn factor(&self, tau: f64) -> Result<Cholesky<f64, Dyn>> {
        let mut guard = lock(&self.cache);
        if let Some((key, chol)) = guard.as_ref() {
            if *key == tau.to_bits() {
                return Ok(chol.clone());
            }
        }
        let size = self.gram.nrows();
        let shifted = &self.gram + DMatrix::<f64>::identity(size, size) * tau;
        let chol = Cholesky::new(shifted).ok_or_else(|| {
            Error::Singular(format!("regression system is not positive definite at tau={tau}"))
        })?;
        *guard = Some((tau.to_bits(), chol.clone()));
        Ok(chol)
    }

    /// `argmin_u ½‖Du − c‖² + τ/2 ‖u − v − λ/τ‖²`.
    pub fn solve(&self, v: &DVector<f64>, lam: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        if v.len() != self.dim() || lam.len() != self.dim() {
            return Err(Error::dim("regression: v or λ has the wrong length"));
        }
        let chol = self.factor(tau)?;
        match self.branch {
            RegressionBranch::Gram => {
                let rhs = v * tau + lam + &self.dtc;
                Ok(chol.solve(&rhs))
            }
            RegressionBranch::Woodbury => {
                let w = v + lam / tau + &self.dtc / tau;
                let inner = chol.solve(&(&self.d * &w));
                Ok(w - self.d.tr_mul(&inner))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridShape {
    Line(usize),
    /// Row-major image, index `i * width + j`.
    Grid { height: usize, width: usize },
}

impl GridShape {
    pub fn len(&self) -> usize {
        match *self {
            GridShape::Line(n) => n,
            GridShape::Grid { height, width } => height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Forward and inverse plans along one axis.
type FftPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

/// Forward differences with periodic wraparound.
///
/// For images the output stacks horizontal differences followed by vertical
/// differences, so it has twice as many entries as the input.
#[derive(Clone)]
pub struct GradientOperator {
    shape: GridShape,
    multipliers: Vec<f64>,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col: Option<FftPair>,
}

impl fmt::Debug for GradientOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GradientOperator").field("shape", &self.shape).finish()
    }
}

fn stencil_power(k: usize, n: usize) -> f64 {
    2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()
}

impl GradientOperator {
    pub fn new(shape: GridShape) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::InvalidParameter("gradient grid must be nonempty".into()));
        }
        let mut planner = FftPlanner::<f64>::new();
        let (width, height) = match shape {
            GridShape::Line(n) => (n, 1),
            GridShape::Grid { height, width } => (width, height),
        };
        let row_fwd = planner.plan_fft_forward(width);
        let row_inv = planner.plan_fft_inverse(width);
        let col = match shape {
            GridShape::Line(_) => None,
            GridShape::Grid { height, .. } => {
                Some((planner.plan_fft_forward(height), planner.plan_fft_inverse(height)))
            }
        };
        let mut multipliers = Vec::with_capacity(shape.len());
        for p in 0..height {
            for q in 0..width {
                let mut m = stencil_power(q, width);
                if col.is_some() {
                    m += stencil_power(p, height);
                }
                multipliers.push(m);
            }
        }
        Ok(GradientOperator { shape, multipliers, row_fwd, row_inv, col })
    }

    pub fn line(n: usize) -> Result<Self> {
        Self::new(GridShape::Line(n))
    }

    pub fn grid(height: usize, width: usize) -> Result<Self> {
        Self::new(GridShape::Grid { height, width })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    /// Eigenvalues of `∇ᵀ∇`, in DFT order.
    pub fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }

    fn dims(&self) -> (usize, usize) {
        match self.shape {
            GridShape::Line(n) => (1, n),
            GridShape::Grid { height, width } => (height, width),
        }
    }

    fn transform(&self, buf: &mut [Complex64], inverse: bool) {
        let (h, w) = self.dims();
        let row = if inverse { &self.row_inv } else { &self.row_fwd };
        row.process(buf);
        if let Some((fwd, inv)) = &self.col {
            let col = if inverse { inv } else { fwd };
            let mut t = transpose(buf, h, w);
            col.process(&mut t);
            buf.copy_from_slice(&transpose(&t, w, h));
        }
    }

    /// `(I + τ∇ᵀ∇)⁻¹ rhs`, diagonalized by the DFT.
    pub fn solve_shifted(&self, rhs: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
        if rhs.len() != self.shape.len() {
            return Err(Error::dim(format!(
                "gradient solve: rhs has {} entries, grid has {}",
                rhs.len(),
                self.shape.len()
            )));
        }
        let mut buf: Vec<Complex64> = rhs.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut buf, false);
        for (z, m) in buf.iter_mut().zip(&self.multipliers) {
            *z /= 1.0 + tau * m;
        }
        self.transform(&mut buf, true);
        let n = buf.len() as f64;
        Ok(DVector::from_iterator(buf.len(), buf.iter().map(|z| z.re / n)))
    }

    /// `argmin_u ½‖u − c‖² + τ/2 ‖v + λ/τ − ∇u‖²`.
    pub fn denoise_solve(
        &self,
        c: &DVector<f64>,
        v: &DVector<f64>,
        lam: &DVector<f64>,
        tau: f64,
    ) -> Result<DVector<f64>> {
        if v.len() != self.out_dim() || lam.len() != self.out_dim() {
            return Err(Error::dim("denoise: v or λ does not match the gradient size"));
        }
        let rhs = c + self.adjoint(&(v * tau + lam));
        self.solve_shifted(&rhs, tau)
    }
}

pub(crate) fn transpose(buf: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); buf.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = buf[i * cols + j];
        }
    }
    out
}

impl LinearMap<f64> for GradientOperator {
    fn in_dim(&self) -> usize {
        self.shape.len()
    }

    fn out_dim(&self) -> usize {
        match self.shape {
            GridShape::Line(n) => n,
            GridShape::Grid { height, width } => 2 * height * width,
        }
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let (h, w) = self.dims();
        let n = h * w;
        let mut out = DVector::zeros(self.out_dim());
        for i in 0..h {
            for j in 0..w {
                let at = i * w + j;
                out[at] = x[i * w + (j + 1) % w] - x[at];
                if self.col.is_some() {
                    out[n + at] = x[((i + 1) % h) * w + j] - x[at];
                }
            }
        }
        out
    }

    fn adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        let (h, w) = self.dims();
        let n = h * w;
        let mut out = DVector::zeros(n);
        for i in 0..h {
            for j in 0..w {
                let at = i * w + j;
                let mut acc = y[i * w + (j + w - 1) % w] - y[at];
                if self.col.is_some() {
                    acc += y[n + ((i + h - 1) % h) * w + j] - y[n + at];
                }
                out[at] = acc;
            }
        }
        out
    }
}

/// A linear map that can also solve `argmin_x ‖Dx − y‖₂`.
pub trait LeastSquaresMap<T: Field>: LinearMap<T> {
    fn least_squares(&self, y: &DVector<T>) -> Result<DVector<T>>;
}

/// `argmin_v ‖Dv − y‖₂` through whatever structure `d` exposes.
pub fn least_squares_solve<T: Field>(d: &dyn LeastSquaresMap<T>, y: &DVector<T>) -> Result<DVector<T>> {
    if y.len() != d.out_dim() {
        return Err(Error::dim(format!(
            "least squares: y has {} entries, operator has {} rows",
            y.len(),
            d.out_dim()
        )));
    }
    d.least_squares(y)
}

/// Dense tall matrix with a cached thin QR factorization.
#[derive(Debug, Clone)]
pub struct DenseLeastSquares<T: Field> {
    matrix: DMatrix<T>,
    q: DMatrix<T>,
    r: DMatrix<T>,
}

impl<T: Field> DenseLeastSquares<T> {
    /// Fails when `matrix` is wide or numerically rank deficient.
    pub fn new(matrix: DMatrix<T>) -> Result<Self> {
        if matrix.nrows() < matrix.ncols() {
            return Err(Error::Singular(format!(
                "least squares needs full column rank; matrix is {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let qr = QR::new(matrix.clone());
        let q = qr.q();
        let r = qr.r();
        let diag: Vec<f64> = r.diagonal().iter().map(|x| x.modulus()).collect();
        let largest = diag.iter().cloned().fold(0.0, f64::max);
        let smallest = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(smallest > 1e-12 * largest) {
            return Err(Error::Singular(format!(
                "least squares matrix is rank deficient (|R| diagonal ratio {:.3e})",
                smallest / largest
            )));
        }
        Ok(DenseLeastSquares { matrix, q, r })
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }
}

impl<T: Field> LinearMap<T> for DenseLeastSquares<T> {
    fn in_dim(&self) -> usize {
        self.matrix.ncols()
    }
    fn out_dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn apply(&self, x: &DVector<T>) -> DVector<T> {
        &self.matrix * x
    }
    fn adjoint(&self, y: &DVector<T>) -> DVector<T> {
        self.matrix.ad_mul(y)
    }
}

impl<T: Field> LeastSquaresMap<T> for DenseLeastSquares<T> {
    fn least_squares(&self, y: &DVector<T>) -> Result<DVector<T>> {
        let qhy = self.q.ad_mul(y);
        self.r
            .solve_upper_triangular(&qhy)
            .ok_or_else(|| Error::Singular("triangular factor is singular".into()))
    }
}

type SharedLu = Arc<LU<f64, Dyn, Dyn>>;

/// Solver for the stationary system `(τI − 2DᵀD) u = τv + λ`.
///
/// The matrix may be indefinite; it is factored with partial-pivoting LU and
/// rejected when its 1-norm condition number exceeds [`MAX_CONDITION`].
pub struct ShiftedEigSolver {
    dtd: DMatrix<f64>,
    cache: Mutex<Option<(u64, SharedLu)>>,
}

impl fmt::Debug for ShiftedEigSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ShiftedEigSolver").field("dim", &self.dtd.nrows()).finish()
    }
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

impl ShiftedEigSolver {
    pub fn new(d: &DMatrix<f64>) -> Self {
        ShiftedEigSolver { dtd: d.tr_mul(d), cache: Mutex::new(None) }
    }

    pub fn dim(&self) -> usize {
        self.dtd.nrows()
    }

    fn factor(&self, tau: f64) -> Result<Arc<LU<f64, Dyn, Dyn>>> {
        let mut guard = lock(&self.cache);
        if let Some((key, lu)) = guard.as_ref() {
            if *key == tau.to_bits() {
                return Ok(lu.clone());
            }
        }
        let n = self.dim();
        let shifted = DMatrix::<f64>::identity(n, n) * tau - &self.dtd * 2.0;
        let lu = LU::new(shifted.clone());
        let inverse = lu.try_inverse().ok_or_else(|| {
            Error::Singular(format!("tau={tau} coincides with twice an eigenvalue of DᵀD"))
        })?;
        let cond = norm1(&shifted) * norm1(&inverse);
        if !(cond <= MAX_CONDITION) {
            return Err(Error::Singular(format!(
                "shifted eigen system at tau={tau} has condition {cond:.3e}"
            )));
        }
        let lu = Arc::new(lu);
        *guard = Some((tau.to_bits(), lu.clone()));
        Ok(lu)
    }

    pub fn solve(&self, v: &DVector<f64>, lam: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
        if v.len() != self.dim() || lam.len() != self.dim() {
            return Err(Error::dim("eigen solve: v or λ has the wrong length"));
        }
        let lu = self.factor(tau)?;
        lu.solve(&(v * tau + lam))
            .ok_or_else(|| Error::Singular(format!("shifted eigen system singular at tau={tau}")))
    }
}
