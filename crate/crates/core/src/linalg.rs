//! Scalar fields and abstract linear operators.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Real,
    Complex,
}

/// Scalars the engine works over: `f64` or `Complex64`.
pub trait Field: ComplexField<RealField = f64> + Copy {
    const KIND: FieldKind;
}

impl Field for f64 {
    const KIND: FieldKind = FieldKind::Real;
}

impl Field for Complex64 {
    const KIND: FieldKind = FieldKind::Complex;
}

/// Real part of the conjugate-linear inner product `Σ conj(x_i) y_i`.
pub fn inner<T: Field>(x: &DVector<T>, y: &DVector<T>) -> f64 {
    x.dotc(y).real()
}

pub fn norm<T: Field>(x: &DVector<T>) -> f64 {
    x.norm()
}

pub fn scale<T: Field>(x: &DVector<T>, s: f64) -> DVector<T> {
    x * <T as ComplexField>::from_real(s)
}

/// Largest absolute entry; zero for empty vectors.
pub fn max_abs<T: Field>(x: &DVector<T>) -> f64 {
    x.iter().fold(0.0, |m, z| m.max(z.modulus()))
}

pub fn all_finite<T: Field>(x: &DVector<T>) -> bool {
    x.iter().all(|z| z.modulus().is_finite())
}

/// A linear operator `F^in -> F^out` together with its adjoint.
pub trait LinearMap<T: Field>: Send + Sync + Debug {
    fn in_dim(&self) -> usize;
    fn out_dim(&self) -> usize;
    fn apply(&self, x: &DVector<T>) -> DVector<T>;
    fn adjoint(&self, y: &DVector<T>) -> DVector<T>;

    fn field(&self) -> FieldKind {
        T::KIND
    }
}

impl<T: Field, M: LinearMap<T> + ?Sized> LinearMap<T> for Arc<M> {
    fn in_dim(&self) -> usize {
        (**self).in_dim()
    }
    fn out_dim(&self) -> usize {
        (**self).out_dim()
    }
    fn apply(&self, x: &DVector<T>) -> DVector<T> {
        (**self).apply(x)
    }
    fn adjoint(&self, y: &DVector<T>) -> DVector<T> {
        (**self).adjoint(y)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Identity {
    pub dim: usize,
}

impl Identity {
    pub fn new(dim: usize) -> Self {
        Identity { dim }
    }
}

impl<T: Field> LinearMap<T> for Identity {
    fn in_dim(&self) -> usize {
        self.dim
    }
    fn out_dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &DVector<T>) -> DVector<T> {
        x.clone()
    }
    fn adjoint(&self, y: &DVector<T>) -> DVector<T> {
        y.clone()
    }
}

/// `factor · M` for a real factor.
#[derive(Debug, Clone)]
pub struct Scaled<T: Field> {
    pub factor: f64,
    pub inner: Arc<dyn LinearMap<T>>,
}

impl<T: Field> Scaled<T> {
    pub fn new(factor: f64, inner: Arc<dyn LinearMap<T>>) -> Self {
        Scaled { factor, inner }
    }

    pub fn negated(inner: Arc<dyn LinearMap<T>>) -> Self {
        Scaled::new(-1.0, inner)
    }
}

impl<T: Field> LinearMap<T> for Scaled<T> {
    fn in_dim(&self) -> usize {
        self.inner.in_dim()
    }
    fn out_dim(&self) -> usize {
        self.inner.out_dim()
    }
    fn apply(&self, x: &DVector<T>) -> DVector<T> {
        scale(&self.inner.apply(x), self.factor)
    }
    fn adjoint(&self, y: &DVector<T>) -> DVector<T> {
        scale(&self.inner.adjoint(y), self.factor)
    }
}

/// Explicit dense matrix.
#[derive(Debug, Clone)]
pub struct DenseMap<T: Field> {
    pub matrix: DMatrix<T>,
}

impl<T: Field> DenseMap<T> {
    pub fn new(matrix: DMatrix<T>) -> Self {
        DenseMap { matrix }
    }
}

impl<T: Field> LinearMap<T> for DenseMap<T> {
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

/// Assembles the dense matrix of `map` column by column.
pub fn to_dense<T: Field>(map: &dyn LinearMap<T>) -> DMatrix<T> {
    let (rows, cols) = (map.out_dim(), map.in_dim());
    let mut out = DMatrix::zeros(rows, cols);
    let mut e = DVector::zeros(cols);
    for j in 0..cols {
        e[j] = T::one();
        out.set_column(j, &map.apply(&e));
        e[j] = T::zero();
    }
    out
}
