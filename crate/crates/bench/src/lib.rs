//! Seeded inputs shared by the kernel benchmarks.

use ncadmm::apps::{build_l0_denoise, build_l0_regression, DenoiseProblem, RegressionProblem};
use ncadmm::datagen::{
    add_gaussian_noise, gen_octanary_masks, gen_piecewise_image, gen_regression_synthetic,
    CodedDiffractionOperator, RngSeed, IMAGE_NOISE_STD,
};
use ncadmm::solvers::GradientOperator;
use ncadmm::{Complex64, DVector, ProblemInstance};

pub const SEED: RngSeed = RngSeed(0);

/// Deterministic vector with entries in `[-scale, scale]`.
pub fn ramp(n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |i, _| scale * ((i as f64 * 0.7548776662).fract() * 2.0 - 1.0))
}

pub fn complex_ramp(n: usize) -> DVector<Complex64> {
    let re = ramp(n, 1.0);
    DVector::from_fn(n, |i, _| Complex64::new(re[i], re[(i + 1) % n]))
}

pub fn regression_instance() -> ProblemInstance<f64> {
    let data = gen_regression_synthetic(SEED);
    build_l0_regression(&RegressionProblem { d: data.d, c: data.c, rho: 1.0 }).expect("regression builds")
}

/// Noisy `side × side` piecewise image and its gradient operator.
pub fn image(side: usize) -> (DVector<f64>, GradientOperator) {
    let clean = gen_piecewise_image(SEED, side, side, 8);
    let noisy = add_gaussian_noise(&clean, IMAGE_NOISE_STD, SEED);
    (noisy, GradientOperator::grid(side, side).expect("nonempty grid"))
}

pub fn denoise_instance(side: usize) -> ProblemInstance<f64> {
    let (c, grad) = image(side);
    build_l0_denoise(&DenoiseProblem { c, rho: 500.0, grad }).expect("denoise builds")
}

pub fn diffraction(side: usize) -> CodedDiffractionOperator {
    gen_octanary_masks(side, side, SEED).expect("masks build")
}
