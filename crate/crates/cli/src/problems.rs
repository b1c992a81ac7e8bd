//! Problem specifications and the datasets behind them.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use ncadmm::apps::{
    build_eigenvector, build_l0_denoise, build_l0_regression, build_phase_retrieval,
    dense_phase_operator, DenoiseProblem, EigProblem, PhaseRetrievalProblem, RegressionProblem,
};
use ncadmm::datagen::{
    add_gaussian_noise, gen_eig_matrix, gen_octanary_masks, gen_phase_retrieval_synthetic,
    gen_piecewise_image, gen_piecewise_signal, gen_regression_synthetic, RngSeed, EIG_DIM,
    IMAGE_NOISE_STD, PHASE_DESK_SHAPE, PHASE_FULL_SHAPE, SIGNAL_LEN, SIGNAL_PSNR, SIGNAL_SEGMENTS,
};
use ncadmm::io::{read_numeric_csv, read_pgm, read_signal_csv};
use ncadmm::solvers::{GradientOperator, LeastSquaresMap};
use ncadmm::{Complex64, DMatrix, DVector, ProblemInstance};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    L0Regression,
    L0Denoise,
    PhaseRetrieval,
    Eigenvector,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 4] = [
        ProblemKind::L0Regression,
        ProblemKind::L0Denoise,
        ProblemKind::PhaseRetrieval,
        ProblemKind::Eigenvector,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemKind::L0Regression => "l0_regression",
            ProblemKind::L0Denoise => "l0_denoise",
            ProblemKind::PhaseRetrieval => "phase_retrieval",
            ProblemKind::Eigenvector => "eigenvector",
        }
    }

    pub fn default_dataset(self) -> &'static str {
        match self {
            ProblemKind::L0Denoise => SYNTHETIC_1D,
            _ => SYNTHETIC,
        }
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "l0_regression" | "regression" => Ok(ProblemKind::L0Regression),
            "l0_denoise" | "denoise" | "l0_tv" => Ok(ProblemKind::L0Denoise),
            "phase_retrieval" | "phase" => Ok(ProblemKind::PhaseRetrieval),
            "eigenvector" | "eig" => Ok(ProblemKind::Eigenvector),
            other => Err(HarnessError::Validation(format!("unknown problem `{other}`"))),
        }
    }
}

pub const SYNTHETIC: &str = "synthetic";
pub const SYNTHETIC_1D: &str = "synthetic1d";
pub const SYNTHETIC_2D: &str = "synthetic2d";
pub const SYNTHETIC_FULL: &str = "synthetic_full";

/// Side of the seeded synthetic test image.
pub const SYNTHETIC_IMAGE_SIDE: usize = 64;
pub const SYNTHETIC_IMAGE_RECTANGLES: usize = 8;

/// A problem kind plus the dataset that instantiates it.
///
/// `dataset` is a generator name or a file path: regression and eigenvector
/// read numeric CSV, denoising reads PGM/PPM images (noise is added) or a CSV
/// signal (used as given), phase retrieval reads a PGM image measured through
/// coded diffraction patterns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    #[serde(default)]
    pub dataset: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// ℓ0 weight; defaults to 1 for regression and signals, 500 for images.
    #[serde(default)]
    pub rho: Option<f64>,
    /// Gaussian noise level: pixel σ for images (default 20), complex noise
    /// std for synthetic phase retrieval (default 0).
    #[serde(default)]
    pub noise: Option<f64>,
    /// Rows × columns for synthetic phase retrieval, size for the eigenvector
    /// matrix (first entry), or height × width for the synthetic image.
    #[serde(default)]
    pub size: Option<[usize; 2]>,
}

impl ProblemSpec {
    pub fn new(kind: ProblemKind) -> Self {
        ProblemSpec { kind, dataset: None, seed: 0, rho: None, noise: None, size: None }
    }

    pub fn with_dataset(mut self, dataset: &str) -> Self {
        self.dataset = Some(dataset.to_string());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn dataset_name(&self) -> &str {
        self.dataset.as_deref().unwrap_or(self.kind.default_dataset())
    }

    /// Short dataset label used in records: the generator name or file stem.
    pub fn dataset_label(&self) -> String {
        let name = self.dataset_name();
        if is_generator(name) {
            name.to_string()
        } else {
            Path::new(name)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| name.to_string())
        }
    }
}

fn is_generator(name: &str) -> bool {
    matches!(name, SYNTHETIC | SYNTHETIC_1D | SYNTHETIC_2D | SYNTHETIC_FULL)
}

#[derive(Debug, Clone)]
pub enum Instance {
    Real(ProblemInstance<f64>),
    Complex(ProblemInstance<Complex64>),
}

/// What a recovered solution is compared against.
#[derive(Debug, Clone)]
pub enum Truth {
    None,
    Signal { clean: DVector<f64>, noisy: DVector<f64> },
    /// Raw observed signal without a reference.
    Observed { noisy: DVector<f64> },
    Image { clean: DVector<f64>, noisy: DVector<f64>, height: usize, width: usize },
    Phase { x: DVector<Complex64>, image: Option<(usize, usize)> },
}

#[derive(Debug, Clone)]
pub struct BuiltProblem {
    pub spec: ProblemSpec,
    pub dataset: String,
    pub instance: Instance,
    pub truth: Truth,
    pub default_max_iter: usize,
}

fn dataset_err(spec: &ProblemSpec, e: ncadmm::Error) -> HarnessError {
    let msg = format!("{} dataset `{}`: {e}", spec.kind, spec.dataset_name());
    match e {
        ncadmm::Error::Io(_) | ncadmm::Error::Format(_) => HarnessError::Io(msg),
        _ => HarnessError::Validation(msg),
    }
}

fn positive(name: &str, x: f64) -> Result<f64, HarnessError> {
    if x >= 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(HarnessError::Validation(format!("{name} must be a nonnegative number, got {x}")))
    }
}

fn load_matrix(path: &Path) -> ncadmm::Result<DMatrix<f64>> {
    let rows = read_numeric_csv(std::io::BufReader::new(std::fs::File::open(path)?))?;
    let width = rows.first().map_or(0, |r| r.len());
    if width == 0 || rows.iter().any(|r| r.len() != width) {
        return Err(ncadmm::Error::Format("matrix CSV must be rectangular and nonempty".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

fn is_image(path: &str) -> bool {
    let ext = Path::new(path).extension().map(|e| e.to_string_lossy().to_ascii_lowercase());
    matches!(ext.as_deref(), Some("pgm" | "ppm" | "pnm"))
}

pub fn build_problem(spec: &ProblemSpec) -> Result<BuiltProblem, HarnessError> {
    let err = |e| dataset_err(spec, e);
    let name = spec.dataset_name().to_string();
    let seed = RngSeed(spec.seed);
    if let Some(rho) = spec.rho {
        positive("rho", rho)?;
    }
    if let Some(noise) = spec.noise {
        positive("noise", noise)?;
    }
    let (instance, truth, default_max_iter) = match spec.kind {
        ProblemKind::L0Regression => {
            let (d, c) = if name == SYNTHETIC {
                let data = gen_regression_synthetic(seed);
                (data.d, data.c)
            } else if is_generator(&name) {
                return Err(unknown_dataset(spec));
            } else {
                ncadmm::io::read_regression_csv(Path::new(&name)).map_err(err)?
            };
            let p = RegressionProblem { d, c, rho: spec.rho.unwrap_or(1.0) };
            (Instance::Real(build_l0_regression(&p).map_err(err)?), Truth::None, 2000)
        }
        ProblemKind::L0Denoise => {
            let (c, grad, truth, cap, default_rho) = match name.as_str() {
                SYNTHETIC_1D | SYNTHETIC => {
                    let sig = gen_piecewise_signal(seed, SIGNAL_LEN, SIGNAL_SEGMENTS, SIGNAL_PSNR).map_err(err)?;
                    let grad = GradientOperator::line(SIGNAL_LEN).map_err(err)?;
                    (sig.noisy.clone(), grad, Truth::Signal { clean: sig.clean, noisy: sig.noisy }, 2000, 1.0)
                }
                SYNTHETIC_2D => {
                    let [h, w] = spec.size.unwrap_or([SYNTHETIC_IMAGE_SIDE; 2]);
                    let clean = gen_piecewise_image(seed, h, w, SYNTHETIC_IMAGE_RECTANGLES);
                    let noisy = add_gaussian_noise(&clean, spec.noise.unwrap_or(IMAGE_NOISE_STD), seed);
                    let grad = GradientOperator::grid(h, w).map_err(err)?;
                    (noisy.clone(), grad, Truth::Image { clean, noisy, height: h, width: w }, 200, 500.0)
                }
                SYNTHETIC_FULL => return Err(unknown_dataset(spec)),
                path if is_image(path) => {
                    let img = read_pgm(Path::new(path)).map_err(err)?;
                    let noisy = add_gaussian_noise(&img.pixels, spec.noise.unwrap_or(IMAGE_NOISE_STD), seed);
                    let grad = GradientOperator::grid(img.height, img.width).map_err(err)?;
                    let truth = Truth::Image { clean: img.pixels, noisy: noisy.clone(), height: img.height, width: img.width };
                    (noisy, grad, truth, 200, 500.0)
                }
                path => {
                    let noisy = read_signal_csv(Path::new(path)).map_err(err)?;
                    let grad = GradientOperator::line(noisy.len()).map_err(err)?;
                    (noisy.clone(), grad, Truth::Observed { noisy }, 2000, 1.0)
                }
            };
            let p = DenoiseProblem { c, rho: spec.rho.unwrap_or(default_rho), grad };
            (Instance::Real(build_l0_denoise(&p).map_err(err)?), truth, cap)
        }
        ProblemKind::PhaseRetrieval => {
            let (d, c, truth): (Arc<dyn LeastSquaresMap<Complex64>>, _, _) = match name.as_str() {
                SYNTHETIC | SYNTHETIC_FULL => {
                    let default = if name == SYNTHETIC { PHASE_DESK_SHAPE } else { PHASE_FULL_SHAPE };
                    let [m, n] = spec.size.unwrap_or([default.0, default.1]);
                    let data = gen_phase_retrieval_synthetic(seed, m, n, spec.noise.unwrap_or(0.0));
                    let op = dense_phase_operator(data.d).map_err(err)?;
                    (op, data.c, Truth::Phase { x: data.x, image: None })
                }
                path if is_image(path) => {
                    let img = read_pgm(Path::new(path)).map_err(err)?;
                    let op = gen_octanary_masks(img.height, img.width, seed).map_err(err)?;
                    let x = img.pixels.map(|p| Complex64::new(p, 0.0));
                    let c = ncadmm::LinearMap::apply(&op, &x).map(|z| z.norm());
                    (Arc::new(op), c, Truth::Phase { x, image: Some((img.height, img.width)) })
                }
                _ => return Err(unknown_dataset(spec)),
            };
            let p = PhaseRetrievalProblem { d, c };
            (Instance::Complex(build_phase_retrieval(&p).map_err(err)?), truth, 200)
        }
        ProblemKind::Eigenvector => {
            let d = match name.as_str() {
                SYNTHETIC => {
                    let n = spec.size.map_or(EIG_DIM, |s| s[0]);
                    gen_eig_matrix(seed, n)
                }
                n if is_generator(n) => return Err(unknown_dataset(spec)),
                path => load_matrix(Path::new(path)).map_err(err)?,
            };
            let p = EigProblem { d, seed: spec.seed };
            (Instance::Real(build_eigenvector(&p).map_err(err)?), Truth::None, 2000)
        }
    };
    Ok(BuiltProblem { spec: spec.clone(), dataset: spec.dataset_label(), instance, truth, default_max_iter })
}

fn unknown_dataset(spec: &ProblemSpec) -> HarnessError {
    HarnessError::Validation(format!("dataset `{}` does not apply to {}", spec.dataset_name(), spec.kind))
}

/// Real image recovered from a phase-retrieval solution: the global phase is
/// aligned to the truth, then the real part is kept.
pub fn aligned_real(v: &DVector<Complex64>, x: &DVector<Complex64>) -> DVector<f64> {
    let inner = v.dotc(x);
    let rot = if inner.norm() > 0.0 { inner / inner.norm() } else { Complex64::new(1.0, 0.0) };
    v.map(|z| (z * rot).re)
}
