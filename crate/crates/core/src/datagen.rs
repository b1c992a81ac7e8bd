//! Seeded synthetic datasets and measurement operators.
//!
//! Every generator draws from ChaCha20 seeded with [`RngSeed`] through
//! `seed_from_u64`, consuming draws in the order documented on each function.
//! Normal draws use the ziggurat sampler from `rand_distr`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::linalg::LinearMap;
use crate::solvers::{transpose, LeastSquaresMap};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(self.0)
    }

    /// Independent stream under the same seed.
    pub fn stream(self, stream: u64) -> ChaCha20Rng {
        let mut rng = self.rng();
        rng.set_stream(stream);
        rng
    }
}

impl From<u64> for RngSeed {
    fn from(seed: u64) -> Self {
        RngSeed(seed)
    }
}

fn normal(rng: &mut ChaCha20Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn normal_vector(rng: &mut ChaCha20Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| normal(rng)))
}

/// Complex normal with `E|z|² = 1`: real part then imaginary part, each `N(0, ½)`.
fn complex_normal(rng: &mut ChaCha20Rng) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re = normal(rng) * s;
    let im = normal(rng) * s;
    Complex64::new(re, im)
}

pub const REGRESSION_ROWS: usize = 50;
pub const REGRESSION_COLS: usize = 40;
pub const REGRESSION_SUPPORT: usize = 15;
pub const REGRESSION_NOISE_STD: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct RegressionData {
    pub d: DMatrix<f64>,
    pub c: DVector<f64>,
    pub x_star: DVector<f64>,
}

/// 50×40 design with three correlated groups of five columns.
///
/// Draw order: the three base vectors, then the 40 columns in order (each a
/// fresh standard normal vector added to its base for the first 15), then the
/// noise vector.
pub fn gen_regression_synthetic(seed: RngSeed) -> RegressionData {
    let (n, m) = (REGRESSION_ROWS, REGRESSION_COLS);
    let mut rng = seed.rng();
    let bases: Vec<DVector<f64>> = (0..3).map(|_| normal_vector(&mut rng, n)).collect();
    let mut d = DMatrix::zeros(n, m);
    for j in 0..m {
        let mut col = normal_vector(&mut rng, n);
        if j < REGRESSION_SUPPORT {
            col += &bases[j / 5];
        }
        d.set_column(j, &col);
    }
    let x_star = DVector::from_fn(m, |j, _| if j < REGRESSION_SUPPORT { 3.0 } else { 0.0 });
    let noise = normal_vector(&mut rng, n) * REGRESSION_NOISE_STD;
    let c = &d * &x_star + noise;
    RegressionData { d, c, x_star }
}

pub const SIGNAL_LEN: usize = 100;
pub const SIGNAL_SEGMENTS: usize = 5;
pub const SIGNAL_MAX_LEVEL: f64 = 5.0;
pub const SIGNAL_PSNR: f64 = 37.8;

/// Smallest gap between neighbouring levels, wraparound included.
pub const SIGNAL_MIN_STEP: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct PiecewiseSignal {
    pub clean: DVector<f64>,
    pub noisy: DVector<f64>,
}

/// Piecewise-constant signal with levels uniform in `[0, 5]`.
///
/// Every segment is at least `n / (2·segments)` samples long; the leftover
/// length is split by `segments − 1` uniform cut points. Levels are drawn in
/// order, redrawing any level within [`SIGNAL_MIN_STEP`] of its predecessor
/// (and, for the last, of the first). Then `n` standard normal draws are
/// rescaled so the noisy signal has exactly `target_psnr` against the clean
/// one, with peak `max|clean|`. An infinite target gives a noiseless copy.
pub fn gen_piecewise_signal(seed: RngSeed, n: usize, segments: usize, target_psnr: f64) -> Result<PiecewiseSignal> {
    if segments == 0 || segments > n {
        return Err(Error::InvalidParameter(format!("need 1 ≤ segments ≤ n, got {segments} for n={n}")));
    }
    if target_psnr.is_nan() {
        return Err(Error::InvalidParameter("target PSNR is NaN".into()));
    }
    let mut rng = seed.rng();
    let min_len = (n / (2 * segments)).max(1);
    let extra = n - min_len * segments;
    let mut cuts: Vec<usize> = (0..segments - 1).map(|_| rng.random_range(0..=extra)).collect();
    cuts.sort_unstable();
    cuts.push(extra);
    let mut levels: Vec<f64> = Vec::with_capacity(segments);
    while levels.len() < segments {
        let x = rng.random_range(0.0..SIGNAL_MAX_LEVEL);
        let near = |y: &f64| (x - y).abs() < SIGNAL_MIN_STEP;
        let last = levels.len() + 1 == segments && segments > 2;
        if levels.last().is_some_and(near) || (last && near(&levels[0])) {
            continue;
        }
        levels.push(x);
    }
    let mut clean = DVector::zeros(n);
    let (mut start, mut prev_cut) = (0, 0);
    for (&cut, &level) in cuts.iter().zip(&levels) {
        let len = min_len + cut - prev_cut;
        clean.rows_mut(start, len).fill(level);
        start += len;
        prev_cut = cut;
    }
    let noisy = if target_psnr == f64::INFINITY {
        clean.clone()
    } else {
        let e = normal_vector(&mut rng, n);
        let peak = clean.amax();
        let mse = peak * peak / 10f64.powf(target_psnr / 10.0);
        let scale = (mse * n as f64).sqrt() / e.norm();
        &clean + e * scale
    };
    Ok(PiecewiseSignal { clean, noisy })
}

pub const IMAGE_NOISE_STD: f64 = 20.0;

/// Adds `N(0, σ²)` to every entry, in storage order. Values are not clamped.
pub fn add_gaussian_noise(img: &DVector<f64>, sigma: f64, seed: RngSeed) -> DVector<f64> {
    if sigma == 0.0 {
        return img.clone();
    }
    let mut rng = seed.stream(1);
    img.map(|x| x + sigma * normal(&mut rng))
}

/// Row-major grayscale image on `[0, 255]` made of axis-aligned rectangles
/// over a constant background.
///
/// Draw order: background level, then per rectangle its level, top, left,
/// height and width.
pub fn gen_piecewise_image(seed: RngSeed, height: usize, width: usize, rectangles: usize) -> DVector<f64> {
    let mut rng = seed.rng();
    let background = rng.random_range(0.0..255.0);
    let mut img = DVector::from_element(height * width, background);
    for _ in 0..rectangles {
        let level = rng.random_range(0.0..255.0);
        let top = rng.random_range(0..height);
        let left = rng.random_range(0..width);
        let h = rng.random_range(1..=height.div_ceil(2));
        let w = rng.random_range(1..=width.div_ceil(2));
        for i in top..(top + h).min(height) {
            for j in left..(left + w).min(width) {
                img[i * width + j] = level;
            }
        }
    }
    img
}

#[derive(Debug, Clone)]
pub struct PhaseRetrievalData {
    pub d: DMatrix<Complex64>,
    pub x: DVector<Complex64>,
    pub c: DVector<f64>,
}

pub const PHASE_DESK_SHAPE: (usize, usize) = (600, 50);
pub const PHASE_FULL_SHAPE: (usize, usize) = (15000, 500);

/// `c = |Dx + e|` with complex normal `D` (row-major draws), then `x`, then `e`
/// scaled by `noise_std`.
pub fn gen_phase_retrieval_synthetic(seed: RngSeed, rows: usize, cols: usize, noise_std: f64) -> PhaseRetrievalData {
    let mut rng = seed.rng();
    let mut d = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            d[(i, j)] = complex_normal(&mut rng);
        }
    }
    let x = DVector::from_iterator(cols, (0..cols).map(|_| complex_normal(&mut rng)));
    let mut y = &d * &x;
    if noise_std > 0.0 {
        for yi in y.iter_mut() {
            *yi += complex_normal(&mut rng) * noise_std;
        }
    }
    let c = y.map(|z| z.norm());
    PhaseRetrievalData { d, x, c }
}

pub const OCTANARY_MASKS: usize = 21;

/// Unitary 2-D DFT over a row-major `height × width` grid.
#[derive(Clone)]
struct Fft2 {
    height: usize,
    width: usize,
    plans: [Arc<dyn Fft<f64>>; 4],
}

impl Fft2 {
    fn new(height: usize, width: usize) -> Self {
        let mut planner = FftPlanner::new();
        let plans = [
            planner.plan_fft_forward(width),
            planner.plan_fft_inverse(width),
            planner.plan_fft_forward(height),
            planner.plan_fft_inverse(height),
        ];
        Fft2 { height, width, plans }
    }

    fn run(&self, buf: &mut [Complex64], inverse: bool) {
        let off = usize::from(inverse);
        self.plans[off].process(buf);
        let mut t = transpose(buf, self.height, self.width);
        self.plans[2 + off].process(&mut t);
        let s = 1.0 / ((self.height * self.width) as f64).sqrt();
        for (b, x) in buf.iter_mut().zip(transpose(&t, self.width, self.height)) {
            *b = x * s;
        }
    }
}

/// `D x = [F(m₁ ⊙ x); …; F(m_L ⊙ x)]` with unitary `F`.
#[derive(Clone)]
pub struct CodedDiffractionOperator {
    height: usize,
    width: usize,
    masks: Vec<DVector<Complex64>>,
    gram: DVector<f64>,
    fft: Fft2,
}

impl fmt::Debug for CodedDiffractionOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CodedDiffractionOperator")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("masks", &self.masks.len())
            .finish()
    }
}

impl CodedDiffractionOperator {
    pub fn new(height: usize, width: usize, masks: Vec<DVector<Complex64>>) -> Result<Self> {
        let n = height * width;
        if n == 0 || masks.is_empty() {
            return Err(Error::InvalidParameter("coded diffraction needs a nonempty grid and masks".into()));
        }
        if masks.iter().any(|m| m.len() != n) {
            return Err(Error::dim(format!("every mask must have {n} entries")));
        }
        let mut gram = DVector::zeros(n);
        for m in &masks {
            gram += m.map(|z| z.norm_sqr());
        }
        if gram.iter().any(|&g| !(g > 0.0)) {
            return Err(Error::Singular("masks vanish jointly at some pixel".into()));
        }
        Ok(CodedDiffractionOperator { height, width, masks, gram, fft: Fft2::new(height, width) })
    }

    pub fn masks(&self) -> &[DVector<Complex64>] {
        &self.masks
    }

    /// Diagonal of `DᴴD`.
    pub fn gram_diagonal(&self) -> &DVector<f64> {
        &self.gram
    }
}

impl LinearMap<Complex64> for CodedDiffractionOperator {
    fn in_dim(&self) -> usize {
        self.height * self.width
    }

    fn out_dim(&self) -> usize {
        self.masks.len() * self.in_dim()
    }

    fn apply(&self, x: &DVector<Complex64>) -> DVector<Complex64> {
        let n = self.in_dim();
        let mut out = DVector::zeros(self.out_dim());
        for (k, m) in self.masks.iter().enumerate() {
            let block = &mut out.as_mut_slice()[k * n..(k + 1) * n];
            for ((b, mi), xi) in block.iter_mut().zip(m.iter()).zip(x.iter()) {
                *b = mi * xi;
            }
            self.fft.run(block, false);
        }
        out
    }

    fn adjoint(&self, y: &DVector<Complex64>) -> DVector<Complex64> {
        let n = self.in_dim();
        let mut out = DVector::zeros(n);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (k, m) in self.masks.iter().enumerate() {
            buf.copy_from_slice(&y.as_slice()[k * n..(k + 1) * n]);
            self.fft.run(&mut buf, true);
            for ((o, mi), bi) in out.iter_mut().zip(m.iter()).zip(&buf) {
                *o += mi.conj() * bi;
            }
        }
        out
    }
}

impl LeastSquaresMap<Complex64> for CodedDiffractionOperator {
    fn least_squares(&self, y: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        let mut x = self.adjoint(y);
        for (xi, g) in x.iter_mut().zip(self.gram.iter()) {
            *xi /= *g;
        }
        Ok(x)
    }
}

/// Octanary masks: each entry is `b₁·b₂` with `b₁` uniform on `{1, −1, i, −i}`
/// and `b₂ = √2/2` w.p. 4/5, `√3` w.p. 1/5.
///
/// Draw order: mask by mask, pixel by pixel in row-major order, `b₁` then `b₂`.
pub fn gen_octanary_masks(height: usize, width: usize, seed: RngSeed) -> Result<CodedDiffractionOperator> {
    let mut rng = seed.rng();
    let units = [
        Complex64::new(1.0, 0.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(0.0, -1.0),
    ];
    let masks = (0..OCTANARY_MASKS)
        .map(|_| {
            DVector::from_iterator(
                height * width,
                (0..height * width).map(|_| {
                    let b1 = units[rng.random_range(0..4)];
                    let b2 = if rng.random_bool(0.2) { 3f64.sqrt() } else { std::f64::consts::FRAC_1_SQRT_2 };
                    b1 * b2
                }),
            )
        })
        .collect();
    CodedDiffractionOperator::new(height, width, masks)
}

pub const EIG_DIM: usize = 20;

/// Standard normal entries, drawn column by column.
pub fn gen_eig_matrix(seed: RngSeed, n: usize) -> DMatrix<f64> {
    let mut rng = seed.rng();
    DMatrix::from_fn(n, n, |_, _| normal(&mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::inner;
    use crate::metrics::psnr;

    #[test]
    fn regression_shape_and_truth() {
        let data = gen_regression_synthetic(RngSeed(0));
        assert_eq!(data.d.shape(), (50, 40));
        assert_eq!(data.c.len(), 50);
        let expected: Vec<f64> = (0..40).map(|i| if i < 15 { 3.0 } else { 0.0 }).collect();
        assert_eq!(data.x_star.as_slice(), expected.as_slice());
    }

    #[test]
    fn regression_noise_level() {
        // Mean squared noise over 100 seeds, each an average of 50 draws of
        // variance 0.01: the pooled mean has std 0.01·√(2/5000).
        let mut total = 0.0;
        for s in 0..100 {
            let data = gen_regression_synthetic(RngSeed(s));
            total += (&data.c - &data.d * &data.x_star).norm_squared() / 50.0;
        }
        let mean = total / 100.0;
        let band = 3.0 * 0.01 * (2.0f64 / 5000.0).sqrt();
        assert!((mean - 0.01).abs() < band, "mean {mean}");
    }

    #[test]
    fn regression_is_deterministic() {
        let a = gen_regression_synthetic(RngSeed(5));
        let b = gen_regression_synthetic(RngSeed(5));
        assert_eq!(a.d, b.d);
        assert_eq!(a.c, b.c);
        assert_ne!(a.c, gen_regression_synthetic(RngSeed(6)).c);
    }

    #[test]
    fn piecewise_signal_calibration() {
        for s in 0..10 {
            let sig = gen_piecewise_signal(RngSeed(s), SIGNAL_LEN, SIGNAL_SEGMENTS, SIGNAL_PSNR).unwrap();
            assert_eq!(sig.clean.len(), 100);
            let p = psnr(&sig.noisy, &sig.clean, sig.clean.amax());
            assert!((p - 37.8).abs() < 1e-9, "psnr {p}");
            let jumps: Vec<usize> = (1..100).filter(|&i| sig.clean[i] != sig.clean[i - 1]).collect();
            assert_eq!(jumps.len(), 4);
            let mut bounds = vec![0];
            bounds.extend(&jumps);
            bounds.push(100);
            assert!(bounds.windows(2).all(|w| w[1] - w[0] >= 10));
            for &i in &jumps {
                assert!((sig.clean[i] - sig.clean[i - 1]).abs() >= SIGNAL_MIN_STEP);
            }
            assert!((sig.clean[0] - sig.clean[99]).abs() >= SIGNAL_MIN_STEP);
            assert!(sig.clean.iter().all(|&x| (0.0..5.0).contains(&x)));
        }
        let quiet = gen_piecewise_signal(RngSeed(1), 100, 5, f64::INFINITY).unwrap();
        assert_eq!(psnr(&quiet.noisy, &quiet.clean, 5.0), f64::INFINITY);
        assert!(gen_piecewise_signal(RngSeed(1), 10, 11, 30.0).is_err());
        assert!(gen_piecewise_signal(RngSeed(1), 10, 0, 30.0).is_err());
    }

    #[test]
    fn gaussian_noise_statistics() {
        let img = DVector::from_element(512 * 512, 128.0);
        assert_eq!(add_gaussian_noise(&img, 0.0, RngSeed(3)), img);
        let noisy = add_gaussian_noise(&img, 20.0, RngSeed(3));
        let diff = &noisy - &img;
        let mean = diff.mean();
        let std = (diff.map(|x| (x - mean).powi(2)).sum() / (diff.len() - 1) as f64).sqrt();
        assert!((std - 20.0).abs() < 0.5, "std {std}");
        let p = psnr(&noisy, &img, 255.0);
        assert!((p - 22.1).abs() < 1.0, "psnr {p}");
    }

    #[test]
    fn piecewise_image_range() {
        let img = gen_piecewise_image(RngSeed(2), 64, 64, 8);
        assert_eq!(img.len(), 64 * 64);
        assert!(img.iter().all(|&x| (0.0..255.0).contains(&x)));
        assert_eq!(img, gen_piecewise_image(RngSeed(2), 64, 64, 8));
    }

    #[test]
    fn phase_retrieval_synthetic_shapes() {
        let data = gen_phase_retrieval_synthetic(RngSeed(0), 600, 50, 0.0);
        assert_eq!(data.d.shape(), (600, 50));
        assert_eq!(data.x.len(), 50);
        let exact = (&data.d * &data.x).map(|z| z.norm());
        assert_eq!(exact, data.c);
        let power = data.d.iter().map(|z| z.norm_sqr()).sum::<f64>() / data.d.len() as f64;
        assert!((power - 1.0).abs() < 0.02, "power {power}");
        let noisy = gen_phase_retrieval_synthetic(RngSeed(0), 600, 50, 0.1);
        assert_eq!(noisy.d, data.d);
        assert_ne!(noisy.c, data.c);
    }

    #[test]
    fn octanary_masks_law() {
        let op = gen_octanary_masks(8, 8, RngSeed(7)).unwrap();
        assert_eq!(op.masks().len(), 21);
        let (lo, hi) = (std::f64::consts::FRAC_1_SQRT_2, 3f64.sqrt());
        for m in op.masks() {
            for z in m.iter() {
                let r = z.norm();
                assert!((r - lo).abs() < 1e-15 || (r - hi).abs() < 1e-15);
                assert!(z.re == 0.0 || z.im == 0.0);
            }
        }
    }

    fn unit(n: usize, i: usize) -> DVector<Complex64> {
        DVector::from_fn(n, |j, _| if j == i { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) })
    }

    #[test]
    fn octanary_gram_is_diagonal() {
        let op = gen_octanary_masks(8, 8, RngSeed(11)).unwrap();
        let n = 64;
        let cols: Vec<_> = (0..n).map(|i| op.apply(&unit(n, i))).collect();
        for i in 0..n {
            for j in 0..n {
                let g = cols[i].dotc(&cols[j]);
                if i == j {
                    assert!((g.re - op.gram_diagonal()[i]).abs() < 1e-10 && g.im.abs() < 1e-10);
                } else {
                    assert!(g.norm() < 1e-10, "({i},{j}) {g}");
                }
            }
        }
    }

    #[test]
    fn octanary_adjoint_and_inversion() {
        let op = gen_octanary_masks(6, 10, RngSeed(4)).unwrap();
        let mut rng = RngSeed(99).rng();
        let x = DVector::from_iterator(60, (0..60).map(|_| complex_normal(&mut rng)));
        let y = DVector::from_iterator(op.out_dim(), (0..op.out_dim()).map(|_| complex_normal(&mut rng)));
        let lhs = inner(&op.apply(&x), &y);
        let rhs = inner(&x, &op.adjoint(&y));
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        let back = op.least_squares(&op.apply(&x)).unwrap();
        assert!((back - &x).norm() < 1e-6 * x.norm());
    }

    #[test]
    fn eig_matrix_shape() {
        let d = gen_eig_matrix(RngSeed(0), 20);
        assert_eq!(d.shape(), (20, 20));
        let top = d.tr_mul(&d).symmetric_eigenvalues().max();
        assert!(top > 0.0);
        assert_eq!(d, gen_eig_matrix(RngSeed(0), 20));
    }
}
