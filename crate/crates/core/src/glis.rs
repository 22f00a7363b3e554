//! Surrogate-based global optimization with IDW exploration, in the decision
//! box directly or in a latent cube through a decoder.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autoencoder::Embedding;
use crate::error::{Error, Result};
use crate::problems::BoxDomain;
use crate::sampling::{latin_hypercube, RngStream};
use crate::surrogate::{
    cross_validate_kernel, fit_surrogate, minimize_acquisition, AcquisitionBudget, CvGrid,
    KernelFamily, KernelSpec, RbfSurrogate,
};

/// Proposals closer than this (∞-norm) to an existing sample are perturbed.
pub const DUPLICATE_TOL: f64 = 1e-9;
/// Half-width of the perturbation box for duplicate proposals.
pub const PERTURB_RADIUS: f64 = 1e-3;

/// Maps latent codes in `[0,1]^{n_z}` into the decision box.
pub trait Decoder: Sync {
    fn latent_dim(&self) -> usize;
    fn output_domain(&self) -> &BoxDomain;
    fn decode(&self, z: &[f64]) -> Vec<f64>;
}

impl Decoder for Embedding {
    fn latent_dim(&self) -> usize {
        self.n_z()
    }

    fn output_domain(&self) -> &BoxDomain {
        self.domain()
    }

    fn decode(&self, z: &[f64]) -> Vec<f64> {
        Embedding::decode(self, z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelChoice {
    Fixed(KernelSpec),
    CrossValidated { family: KernelFamily, grid: CvGrid },
}

impl KernelChoice {
    pub fn family(&self) -> KernelFamily {
        match self {
            KernelChoice::Fixed(k) => k.family,
            KernelChoice::CrossValidated { family, .. } => *family,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlisConfig {
    pub m_init: usize,
    pub m_max: usize,
    /// Exploration weight on the IDW term.
    pub delta: f64,
    pub kernel: KernelChoice,
    /// Re-run kernel cross-validation after this many new samples.
    pub refit_kernel_every: usize,
    pub acquisition: AcquisitionBudget,
    pub seed: RngStream,
}

impl GlisConfig {
    /// `δ = 1`, cross-validated inverse-quadratic kernel on the default grid.
    pub fn new(m_init: usize, m_max: usize, seed: RngStream) -> Self {
        Self {
            m_init,
            m_max,
            delta: 1.0,
            kernel: KernelChoice::CrossValidated {
                family: KernelFamily::InverseQuadratic,
                grid: CvGrid::default(),
            },
            refit_kernel_every: 10,
            acquisition: AcquisitionBudget::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.m_init && self.m_init <= self.m_max) {
            return Err(Error::invalid(format!(
                "need 1 <= m_init <= m_max (got m_init={}, m_max={})",
                self.m_init, self.m_max
            )));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid(format!(
                "delta must be finite and >= 0, got {}",
                self.delta
            )));
        }
        if self.refit_kernel_every == 0 {
            return Err(Error::invalid("refit_kernel_every must be >= 1"));
        }
        Ok(())
    }
}

/// One objective evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    /// Latent proposal; `None` when searching the decision box directly.
    pub z: Option<Vec<f64>>,
    pub x: Vec<f64>,
    pub f: f64,
    pub best_f: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepTimes {
    pub surrogate_fit_s: f64,
    pub acquisition_min_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub best_x: Vec<f64>,
    pub best_f: f64,
    pub best_z: Option<Vec<f64>>,
    pub trace: Vec<TraceStep>,
    /// Parallel to `trace`; zero for steps without a surrogate fit.
    pub wall_times: Vec<StepTimes>,
}

/// Equality of outcomes; wall-clock times are ignored.
impl PartialEq for RunResult {
    fn eq(&self, other: &Self) -> bool {
        self.best_x == other.best_x
            && self.best_f == other.best_f
            && self.best_z == other.best_z
            && self.trace == other.trace
    }
}

impl RunResult {
    pub(crate) fn from_steps(trace: Vec<TraceStep>, wall_times: Vec<StepTimes>) -> Result<Self> {
        let best = trace
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.f.total_cmp(&b.1.f).then(a.0.cmp(&b.0)))
            .map(|(_, s)| s)
            .ok_or_else(|| Error::invalid("empty run"))?;
        Ok(Self {
            best_x: best.x.clone(),
            best_f: best.f,
            best_z: best.z.clone(),
            trace,
            wall_times,
        })
    }

    pub fn evaluations(&self) -> usize {
        self.trace.len()
    }

    /// Mean surrogate-fit and acquisition time over steps that had one.
    pub fn mean_iteration_times(&self) -> StepTimes {
        let active: Vec<&StepTimes> = self
            .wall_times
            .iter()
            .filter(|t| t.surrogate_fit_s > 0.0 || t.acquisition_min_s > 0.0)
            .collect();
        if active.is_empty() {
            return StepTimes::default();
        }
        let n = active.len() as f64;
        StepTimes {
            surrogate_fit_s: active.iter().map(|t| t.surrogate_fit_s).sum::<f64>() / n,
            acquisition_min_s: active.iter().map(|t| t.acquisition_min_s).sum::<f64>() / n,
        }
    }
}

/// Cumulative minimum of the evaluated `f` values.
pub fn best_so_far_curve(result: &RunResult) -> Vec<f64> {
    cumulative_min(result.trace.iter().map(|s| s.f))
}

pub(crate) fn cumulative_min(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    values
        .into_iter()
        .scan(f64::INFINITY, |best, f| {
            *best = best.min(f);
            Some(*best)
        })
        .collect()
}

fn standardize(f: &[f64]) -> Vec<f64> {
    let lo = f.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span > 0.0 {
        f.iter().map(|v| (v - lo) / span).collect()
    } else {
        vec![0.0; f.len()]
    }
}

fn is_duplicate(samples: &[Vec<f64>], z: &[f64]) -> bool {
    samples
        .iter()
        .any(|s| s.iter().zip(z).all(|(a, b)| (a - b).abs() <= DUPLICATE_TOL))
}

/// Surrogate on a fixed kernel, enlarging `γ` if the system is singular.
fn fit_with_fallback(
    points: &[Vec<f64>],
    values: &[f64],
    kernel: KernelSpec,
) -> Result<RbfSurrogate> {
    let mut k = kernel;
    loop {
        match fit_surrogate(points, values, k) {
            Err(Error::SingularSystem) if k.gamma < 1.0 => {
                k = KernelSpec::new(k.family, k.mu, (k.gamma * 100.0).clamp(1e-8, 1.0))?;
            }
            other => return other,
        }
    }
}

fn select_kernel<R: Rng + ?Sized>(
    choice: &KernelChoice,
    points: &[Vec<f64>],
    values: &[f64],
    rng: &mut R,
) -> Result<KernelSpec> {
    match choice {
        KernelChoice::Fixed(k) => Ok(*k),
        KernelChoice::CrossValidated { family, grid } => {
            let folds = grid.folds.min(points.len());
            if folds < 2 {
                // too few points to hold any out
                return KernelSpec::new(*family, 1.0, 1e-6);
            }
            let grid = CvGrid {
                folds,
                ..grid.clone()
            };
            cross_validate_kernel(points, values, *family, &grid, rng)
        }
    }
}

/// Runs the loop on `objective`, searching `search_domain` directly or, with
/// a decoder, the latent cube `[0,1]^{n_z}` (which `search_domain` must be).
///
/// Exactly `m_max` evaluations are made.
pub fn run_glis<F>(
    objective: F,
    search_domain: &BoxDomain,
    decoder: Option<&dyn Decoder>,
    cfg: &GlisConfig,
) -> Result<RunResult>
where
    F: Fn(&[f64]) -> f64,
{
    cfg.validate()?;
    if let Some(d) = decoder {
        let cube = BoxDomain::unit(d.latent_dim())?;
        if *search_domain != cube {
            return Err(Error::invalid(
                "with a decoder the search domain must be [0,1]^n_z",
            ));
        }
    }
    let decode = |z: &[f64]| match decoder {
        Some(d) => d.decode(z),
        None => z.to_vec(),
    };

    let mut lhs_rng = cfg.seed.substream(0).rng();
    let mut acq_rng = cfg.seed.substream(1).rng();
    let mut perturb_rng = cfg.seed.substream(2).rng();
    let mut cv_rng = cfg.seed.substream(3).rng();

    let mut samples: Vec<Vec<f64>> = Vec::with_capacity(cfg.m_max);
    let mut values: Vec<f64> = Vec::with_capacity(cfg.m_max);
    let mut trace = Vec::with_capacity(cfg.m_max);
    let mut times = Vec::with_capacity(cfg.m_max);
    let mut best = f64::INFINITY;

    let mut record = |z: Vec<f64>,
                      t: StepTimes,
                      samples: &mut Vec<Vec<f64>>,
                      values: &mut Vec<f64>|
     -> Result<()> {
        let x = decode(&z);
        let f = objective(&x);
        if !f.is_finite() {
            return Err(Error::NonFiniteObjective { point: x, value: f });
        }
        best = best.min(f);
        trace.push(TraceStep {
            z: decoder.map(|_| z.clone()),
            x,
            f,
            best_f: best,
        });
        times.push(t);
        samples.push(z);
        values.push(f);
        Ok(())
    };

    let unit = latin_hypercube(cfg.m_init, search_domain.dim(), &mut lhs_rng)?;
    for u in unit {
        record(
            search_domain.from_unit(&u),
            StepTimes::default(),
            &mut samples,
            &mut values,
        )?;
    }

    let mut kernel: Option<KernelSpec> = None;
    let mut last_cv = 0;
    while samples.len() < cfg.m_max {
        let t0 = Instant::now();
        let fs = standardize(&values);
        if kernel.is_none() || samples.len() - last_cv >= cfg.refit_kernel_every {
            kernel = Some(select_kernel(&cfg.kernel, &samples, &fs, &mut cv_rng)?);
            last_cv = samples.len();
        }
        let surrogate = fit_with_fallback(&samples, &fs, kernel.unwrap())?;
        let t_fit = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let mut z = minimize_acquisition(
            &surrogate,
            &samples,
            cfg.delta,
            search_domain,
            &cfg.acquisition,
            &mut acq_rng,
        )?;
        let t_acq = t1.elapsed().as_secs_f64();

        let mut tries = 0;
        while is_duplicate(&samples, &z) && tries < 100 {
            let jittered: Vec<f64> = z
                .iter()
                .map(|v| v + perturb_rng.random_range(-PERTURB_RADIUS..=PERTURB_RADIUS))
                .collect();
            z = search_domain.clip(&jittered);
            tries += 1;
        }
        record(
            z,
            StepTimes {
                surrogate_fit_s: t_fit,
                acquisition_min_s: t_acq,
            },
            &mut samples,
            &mut values,
        )?;
    }
    RunResult::from_steps(trace, times)
}

/// Trace as CSV: `iter, z_1.., x_1.., f, best_f, t_fit_s, t_acq_s`.
///
/// Timing cells are left empty unless `timings` is set, so that reruns are
/// byte-identical by default.
pub fn write_trace_csv<W: Write>(
    mut w: W,
    result: &RunResult,
    timings: bool,
) -> std::io::Result<()> {
    let n_z = result
        .trace
        .first()
        .and_then(|s| s.z.as_ref())
        .map_or(0, Vec::len);
    let n_x = result.trace.first().map_or(0, |s| s.x.len());
    let mut header = vec!["iter".to_string()];
    header.extend((1..=n_z).map(|j| format!("z{j}")));
    header.extend((1..=n_x).map(|j| format!("x{j}")));
    header.extend(["f", "best_f", "t_fit_s", "t_acq_s"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for (i, (s, t)) in result.trace.iter().zip(&result.wall_times).enumerate() {
        let mut row = vec![(i + 1).to_string()];
        if let Some(z) = &s.z {
            row.extend(z.iter().map(f64::to_string));
        }
        row.extend(s.x.iter().map(f64::to_string));
        row.push(s.f.to_string());
        row.push(s.best_f.to_string());
        if timings {
            row.push(t.surrogate_fit_s.to_string());
            row.push(t.acquisition_min_s.to_string());
        } else {
            row.extend([String::new(), String::new()]);
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{AutoencoderSpec, DecoderKind};
    use crate::problems::{rosenbrock_eval, RosenbrockParams};

    fn quad(x: &[f64]) -> f64 {
        (x[0] - 0.3).powi(2)
    }

    #[test]
    fn pure_lhs_when_no_budget_left() {
        let d = BoxDomain::unit(2).unwrap();
        let cfg = GlisConfig::new(7, 7, RngStream::new(1, 0));
        let r = run_glis(|x| x[0] + x[1], &d, None, &cfg).unwrap();
        assert_eq!(r.evaluations(), 7);
        let min = r.trace.iter().map(|s| s.f).fold(f64::INFINITY, f64::min);
        assert_eq!(r.best_f, min);
        let lhs = latin_hypercube(7, 2, &mut RngStream::new(1, 0).substream(0).rng()).unwrap();
        assert_eq!(r.trace.iter().map(|s| s.x.clone()).collect::<Vec<_>>(), lhs);
    }

    #[test]
    fn convex_quadratic_1d() {
        let d = BoxDomain::unit(1).unwrap();
        let mut cfg = GlisConfig::new(3, 15, RngStream::new(2, 0));
        cfg.delta = 0.5;
        let r = run_glis(quad, &d, None, &cfg).unwrap();
        assert_eq!(r.evaluations(), 15);
        assert!(r.best_f < 1e-2, "best {}", r.best_f);
        assert_eq!(r.best_f, quad(&r.best_x));
    }

    #[test]
    fn quadratic_across_seeds_and_kernels() {
        let d = BoxDomain::unit(1).unwrap();
        for seed in 0..10 {
            for kernel in [
                KernelChoice::Fixed(
                    KernelSpec::new(KernelFamily::InverseQuadratic, 1.0, 1e-6).unwrap(),
                ),
                KernelChoice::CrossValidated {
                    family: KernelFamily::SquaredExponential,
                    grid: CvGrid::default(),
                },
            ] {
                let cfg = GlisConfig {
                    delta: 0.5,
                    kernel,
                    ..GlisConfig::new(3, 15, RngStream::new(seed, 0))
                };
                let r = run_glis(quad, &d, None, &cfg).unwrap();
                assert!(r.best_f < 1e-2, "seed {seed}: {}", r.best_f);
            }
        }
    }

    #[test]
    fn trace_invariants_and_determinism() {
        let d = BoxDomain::symmetric(3, 2.0).unwrap();
        let p = RosenbrockParams::nominal(3);
        let f = |x: &[f64]| rosenbrock_eval(x, &p).unwrap();
        let cfg = GlisConfig::new(6, 25, RngStream::new(3, 0));
        let a = run_glis(f, &d, None, &cfg).unwrap();
        let b = run_glis(f, &d, None, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.evaluations(), 25);
        let curve = best_so_far_curve(&a);
        assert!(curve.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*curve.last().unwrap(), a.best_f);
        assert!(a.trace.iter().all(|s| d.contains(&s.x)));
        for (s, c) in a.trace.iter().zip(&curve) {
            assert_eq!(s.best_f, *c);
        }
        // no two samples collide
        for i in 0..a.trace.len() {
            for j in 0..i {
                assert!(!is_duplicate(&[a.trace[j].x.clone()], &a.trace[i].x));
            }
        }
    }

    #[test]
    fn latent_runs_stay_on_the_decoded_manifold() {
        let domain = BoxDomain::symmetric(5, 2.5).unwrap();
        for kind in [DecoderKind::Mlp, DecoderKind::Linear] {
            let spec = AutoencoderSpec {
                decoder: kind,
                ..AutoencoderSpec::new(domain.clone(), 3)
            };
            let e = Embedding::init(&spec, &mut RngStream::new(4, 0).rng()).unwrap();
            let p = RosenbrockParams::nominal(5);
            let cube = BoxDomain::unit(3).unwrap();
            let cfg = GlisConfig::new(6, 20, RngStream::new(5, 0));
            let r = run_glis(|x| rosenbrock_eval(x, &p).unwrap(), &cube, Some(&e), &cfg).unwrap();
            assert_eq!(r.evaluations(), 20);
            for s in &r.trace {
                let z = s.z.as_ref().unwrap();
                assert!(cube.contains(z));
                assert!(domain.contains(&s.x));
                assert_eq!(s.x, e.decode(z));
            }
            assert_eq!(r.best_x, e.decode(r.best_z.as_ref().unwrap()));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = BoxDomain::unit(2).unwrap();
        assert!(run_glis(quad, &d, None, &GlisConfig::new(0, 5, RngStream::new(0, 0))).is_err());
        assert!(run_glis(quad, &d, None, &GlisConfig::new(6, 5, RngStream::new(0, 0))).is_err());
        let err = run_glis(
            |_| f64::NAN,
            &d,
            None,
            &GlisConfig::new(2, 5, RngStream::new(0, 0)),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteObjective { .. }));

        let e = Embedding::init(
            &AutoencoderSpec::new(d.clone(), 1),
            &mut RngStream::new(0, 0).rng(),
        )
        .unwrap();
        let wrong = BoxDomain::unit(2).unwrap();
        assert!(run_glis(
            quad,
            &wrong,
            Some(&e),
            &GlisConfig::new(2, 5, RngStream::new(0, 0))
        )
        .is_err());
    }

    #[test]
    fn constant_objective_is_handled() {
        let d = BoxDomain::unit(2).unwrap();
        let r = run_glis(
            |_| 4.0,
            &d,
            None,
            &GlisConfig::new(3, 12, RngStream::new(6, 0)),
        )
        .unwrap();
        assert_eq!(r.evaluations(), 12);
        assert_eq!(r.best_f, 4.0);
    }

    #[test]
    fn curve_examples() {
        assert_eq!(cumulative_min([3.0, 1.0, 2.0]), vec![3.0, 1.0, 1.0]);
        assert_eq!(cumulative_min([3.0, 2.0, 1.0]), vec![3.0, 2.0, 1.0]);
        assert_eq!(cumulative_min([5.0; 4]), vec![5.0; 4]);
    }

    #[test]
    fn csv_layout() {
        let d = BoxDomain::unit(2).unwrap();
        let r = run_glis(
            |x| x[0],
            &d,
            None,
            &GlisConfig::new(2, 4, RngStream::new(0, 0)),
        )
        .unwrap();
        let mut out = Vec::new();
        write_trace_csv(&mut out, &r, false).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iter,x1,x2,f,best_f,t_fit_s,t_acq_s");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("4,") && lines[4].ends_with(",,"));
        let mut timed = Vec::new();
        write_trace_csv(&mut timed, &r, true).unwrap();
        assert!(!String::from_utf8(timed)
            .unwrap()
            .lines()
            .nth(4)
            .unwrap()
            .ends_with(",,"));
    }
}
