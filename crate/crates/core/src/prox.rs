//! Closed-form proximal maps and projections used by the block updates.

use nalgebra::DVector;

use crate::linalg::Field;
use crate::{Error, Result};

/// Proximal map of `‖·‖₀` with weight `t`: keeps `z_i` when `|z_i| > √(2t)`.
///
/// Entries sitting exactly on the threshold are zeroed. `t = 0` keeps every
/// nonzero entry.
pub fn hard<T: Field>(z: &DVector<T>, t: f64) -> DVector<T> {
    debug_assert!(t >= 0.0, "hard-threshold weight must be nonnegative");
    let threshold = (2.0 * t).sqrt();
    z.map(|zi| if zi.modulus() > threshold { zi } else { T::zero() })
}

/// Unit phase of `z`, with `sign(0) = 1`.
pub fn phase<T: Field>(z: T) -> T {
    let m = z.modulus();
    if m == 0.0 {
        T::one()
    } else {
        z.unscale(m)
    }
}

/// Minimizer of `½(|x| − c)² + (t/2)|x − z|²` applied elementwise.
pub fn abs_proj<T: Field>(z: &DVector<T>, c: &DVector<f64>, t: f64) -> Result<DVector<T>> {
    if z.len() != c.len() {
        return Err(Error::dim(format!(
            "abs_proj: z has {} entries, c has {}",
            z.len(),
            c.len()
        )));
    }
    let w = t / (1.0 + t);
    let wc = 1.0 / (1.0 + t);
    Ok(z.zip_map(c, |zi, ci| phase(zi).scale(w * zi.modulus() + wc * ci)))
}

/// Projection onto the unit sphere.
pub fn sphere_project<T: Field>(z: &DVector<T>) -> Result<DVector<T>> {
    let n = z.norm();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroProjection);
    }
    Ok(z.unscale(n))
}

/// Number of entries with modulus strictly above `atol`.
pub fn l0_norm<T: Field>(z: &DVector<T>, atol: f64) -> usize {
    z.iter().filter(|zi| zi.modulus() > atol).count()
}
