//! Report metrics.

use nalgebra::DVector;

use crate::linalg::Field;

pub fn mse(x: &DVector<f64>, reference: &DVector<f64>) -> f64 {
    assert_eq!(x.len(), reference.len(), "mse: length mismatch");
    (x - reference).norm_squared() / x.len() as f64
}

/// `10·log10(peak² / MSE)` in dB; `+∞` when `x` equals `reference`.
///
/// `reference` is always the clean signal.
pub fn psnr(x: &DVector<f64>, reference: &DVector<f64>, peak: f64) -> f64 {
    let e = mse(x, reference);
    if e == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / e).log10()
    }
}

/// Peak used for synthetic signals: the largest reference magnitude.
pub fn signal_peak(reference: &DVector<f64>) -> f64 {
    reference.amax()
}

pub const IMAGE_PEAK: f64 = 255.0;

/// `|⟨x, y⟩| / (‖x‖‖y‖)`, insensitive to a global phase. Zero if either is zero.
pub fn phase_correlation<T: Field>(x: &DVector<T>, y: &DVector<T>) -> f64 {
    let denom = x.norm() * y.norm();
    if denom == 0.0 {
        0.0
    } else {
        x.dotc(y).modulus() / denom
    }
}
