//! RBF surrogate with inverse-distance-weighting exploration.
//!
//! The basis is `φ(μ·d)` where `d = ‖z − z_k‖²` is the *squared* distance, so
//! the inverse quadratic kernel decays like `1/(1 + μ²‖z − z_k‖⁴)`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::BoxDomain;
use crate::solvers::{de_minimize, DeConfig, EvalBudget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    InverseQuadratic,
    SquaredExponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub mu: f64,
    pub gamma: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, mu: f64, gamma: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::invalid(format!("kernel mu must be > 0, got {mu}")));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::invalid(format!(
                "kernel gamma must be >= 0, got {gamma}"
            )));
        }
        Ok(Self { family, mu, gamma })
    }

    /// `φ(μ·d)` for a squared distance `d`.
    #[inline]
    pub fn value(&self, d: f64) -> f64 {
        let r = self.mu * d;
        match self.family {
            KernelFamily::InverseQuadratic => 1.0 / (1.0 + r * r),
            KernelFamily::SquaredExponential => (-(r * r)).exp(),
        }
    }
}

pub fn kernel_value(kernel: &KernelSpec, d: f64) -> f64 {
    kernel.value(d)
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `f̂(z) = Σ_k β_k φ(μ‖z − z_k‖²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfSurrogate {
    centers: Vec<Vec<f64>>,
    beta: Vec<f64>,
    kernel: KernelSpec,
}

impl RbfSurrogate {
    /// Builds a surrogate from explicit coefficients.
    pub fn from_parts(centers: Vec<Vec<f64>>, beta: Vec<f64>, kernel: KernelSpec) -> Result<Self> {
        if centers.len() != beta.len() {
            return Err(Error::DimensionMismatch {
                what: "surrogate coefficients vs centers",
                expected: centers.len(),
                got: beta.len(),
            });
        }
        if centers.is_empty() {
            return Err(Error::invalid("surrogate needs at least one center"));
        }
        Ok(Self {
            centers,
            beta,
            kernel,
        })
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.centers
            .iter()
            .zip(&self.beta)
            .map(|(c, b)| b * self.kernel.value(sq_dist(z, c)))
            .sum()
    }
}

/// Ridge fit `min_β ‖f − Φβ‖² + γ‖β‖²` through the normal equations
/// `(ΦᵀΦ + γI)β = Φᵀf`, solved by Cholesky.
pub fn fit_surrogate(
    points: &[Vec<f64>],
    values: &[f64],
    kernel: KernelSpec,
) -> Result<RbfSurrogate> {
    let m = points.len();
    if m == 0 {
        return Err(Error::invalid("cannot fit a surrogate to zero points"));
    }
    if values.len() != m {
        return Err(Error::DimensionMismatch {
            what: "surrogate values vs points",
            expected: m,
            got: values.len(),
        });
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "surrogate values must be finite, got {v}"
        )));
    }
    let n = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != n) {
        return Err(Error::DimensionMismatch {
            what: "surrogate point dimension",
            expected: n,
            got: p.len(),
        });
    }

    let phi = DMatrix::from_fn(m, m, |j, k| kernel.value(sq_dist(&points[j], &points[k])));
    let f = DVector::from_column_slice(values);
    let mut normal = phi.tr_mul(&phi);
    for i in 0..m {
        normal[(i, i)] += kernel.gamma;
    }
    let rhs = phi.tr_mul(&f);
    let max_diag = (0..m).map(|i| normal[(i, i)]).fold(0.0, f64::max);
    let chol = normal.cholesky().ok_or(Error::SingularSystem)?;
    // pivots at rounding level mean the system is numerically singular
    let min_pivot = chol
        .l_dirty()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b * b));
    if min_pivot <= m as f64 * f64::EPSILON * max_diag {
        return Err(Error::SingularSystem);
    }
    let beta = chol.solve(&rhs);
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(RbfSurrogate {
        centers: points.to_vec(),
        beta: beta.iter().copied().collect(),
        kernel,
    })
}

/// Points closer than this Euclidean distance to a sample count as that sample.
pub const SAMPLE_MATCH_TOL: f64 = 1e-12;

/// IDW exploration `h(z) = (2/π)·atan(1 / Σ_i ‖z − z_i‖⁻²)`, zero on samples.
pub fn idw_exploration(samples: &[Vec<f64>], z: &[f64]) -> f64 {
    let mut inv_sum = 0.0;
    for s in samples {
        let d2 = sq_dist(z, s);
        if d2 <= SAMPLE_MATCH_TOL * SAMPLE_MATCH_TOL {
            return 0.0;
        }
        inv_sum += 1.0 / d2;
    }
    if inv_sum == 0.0 {
        return 0.0;
    }
    std::f64::consts::FRAC_2_PI * (1.0 / inv_sum).atan()
}

/// `a(z) = f̂(z) − δ·h(z)`.
pub fn acquisition(s: &RbfSurrogate, samples: &[Vec<f64>], delta: f64, z: &[f64]) -> f64 {
    let fhat = s.eval(z);
    if delta == 0.0 {
        return fhat;
    }
    fhat - delta * idw_exploration(samples, z)
}

/// Budget of the differential-evolution run that minimizes the acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquisitionBudget {
    pub pop_size: usize,
    pub generations: usize,
}

impl Default for AcquisitionBudget {
    fn default() -> Self {
        Self {
            pop_size: 20,
            generations: 50,
        }
    }
}

impl AcquisitionBudget {
    pub fn de_config(&self, dim: usize) -> DeConfig {
        DeConfig {
            pop_size: self.pop_size,
            ..DeConfig::for_dim(dim, EvalBudget::generations(self.generations))
        }
    }
}

/// Approximate global minimizer of the acquisition over `domain`.
pub fn minimize_acquisition<R: Rng + ?Sized>(
    s: &RbfSurrogate,
    samples: &[Vec<f64>],
    delta: f64,
    domain: &BoxDomain,
    budget: &AcquisitionBudget,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if domain.dim() != s.dim() {
        return Err(Error::DimensionMismatch {
            what: "acquisition domain vs surrogate",
            expected: s.dim(),
            got: domain.dim(),
        });
    }
    let best = de_minimize(
        |z| acquisition(s, samples, delta, z),
        domain,
        &budget.de_config(domain.dim()),
        rng,
    )?;
    Ok(best.x)
}

/// Candidate grids for kernel cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvGrid {
    pub mu: Vec<f64>,
    pub gamma: Vec<f64>,
    pub folds: usize,
}

impl Default for CvGrid {
    fn default() -> Self {
        Self {
            mu: vec![0.1, 0.5, 1.0, 2.0, 5.0],
            gamma: vec![1e-6, 1e-4, 1e-2, 1.0],
            folds: 5,
        }
    }
}

/// Picks `(μ, γ)` minimizing the mean K-fold held-out squared error.
///
/// Ties go to the larger `γ`, then the smaller `μ`.
pub fn cross_validate_kernel<R: Rng + ?Sized>(
    points: &[Vec<f64>],
    values: &[f64],
    family: KernelFamily,
    grid: &CvGrid,
    rng: &mut R,
) -> Result<KernelSpec> {
    if grid.mu.is_empty() || grid.gamma.is_empty() {
        return Err(Error::invalid("cross-validation grids must be nonempty"));
    }
    let m = points.len();
    if grid.folds < 2 || m < grid.folds {
        return Err(Error::invalid(format!(
            "cross-validation needs folds >= 2 and at least `folds` points (folds={}, points={m})",
            grid.folds
        )));
    }
    if values.len() != m {
        return Err(Error::DimensionMismatch {
            what: "cv values vs points",
            expected: m,
            got: values.len(),
        });
    }

    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(rng);
    let fold_of: Vec<usize> = {
        let mut f = vec![0; m];
        for (pos, &i) in perm.iter().enumerate() {
            f[i] = pos % grid.folds;
        }
        f
    };

    let mut best: Option<(f64, KernelSpec)> = None;
    for &mu in &grid.mu {
        for &gamma in &grid.gamma {
            let kernel = KernelSpec::new(family, mu, gamma)?;
            let err = cv_error(points, values, &fold_of, grid.folds, kernel);
            if !err.is_finite() {
                continue;
            }
            let replace = match &best {
                None => true,
                Some((best_err, best_k)) => {
                    let tie = (err - best_err).abs() <= 1e-12 * (1.0 + best_err.abs());
                    if tie {
                        gamma > best_k.gamma || (gamma == best_k.gamma && mu < best_k.mu)
                    } else {
                        err < *best_err
                    }
                }
            };
            if replace {
                best = Some((err, kernel));
            }
        }
    }
    best.map(|(_, k)| k)
        .ok_or_else(|| Error::invalid("every kernel candidate produced a singular fit"))
}

fn cv_error(
    points: &[Vec<f64>],
    values: &[f64],
    fold_of: &[usize],
    folds: usize,
    kernel: KernelSpec,
) -> f64 {
    let mut total = 0.0;
    for fold in 0..folds {
        let (train_x, train_f): (Vec<Vec<f64>>, Vec<f64>) = points
            .iter()
            .zip(values)
            .zip(fold_of)
            .filter(|(_, &f)| f != fold)
            .map(|((p, v), _)| (p.clone(), *v))
            .unzip();
        let model = match fit_surrogate(&train_x, &train_f, kernel) {
            Ok(s) => s,
            Err(_) => return f64::INFINITY,
        };
        let (mut sse, mut count) = (0.0, 0usize);
        for ((p, v), _) in points
            .iter()
            .zip(values)
            .zip(fold_of)
            .filter(|(_, &f)| f == fold)
        {
            let r = model.eval(p) - v;
            sse += r * r;
            count += 1;
        }
        total += sse / count as f64;
    }
    total / folds as f64
}
