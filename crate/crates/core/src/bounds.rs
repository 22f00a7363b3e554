//! Distribution-free bounds on the relative performance gap between a latent
//! optimizer and a full-space one.
//!
//! From `m` i.i.d. gaps, the `k*`-th order statistic with
//! `k* = ⌈m(1 − α + ε_m)⌉` and `ε_m = √(ln(2/δ)/(2m))` bounds the
//! `(1 − α)`-quantile of the gap distribution with confidence `1 − δ`
//! (DKW inequality with Massart's constant).

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal as NormalSampler;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::AlgorithmSpec;
use crate::error::{Error, Result};
use crate::glis::Decoder;
use crate::problems::ProblemClass;
use crate::sampling::{RngStream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapConfig {
    /// Guards the denominator when `f_full ≈ 0`.
    pub epsilon: f64,
}

impl Default for GapConfig {
    fn default() -> Self {
        Self { epsilon: 1e-6 }
    }
}

impl GapConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid(format!(
                "gap epsilon must be finite and > 0, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }
}

/// `(f_latent − f_full) / (|f_full| + ε)`; negative when the latent run wins.
pub fn performance_gap(f_latent: f64, f_full: f64, cfg: &GapConfig) -> f64 {
    (f_latent - f_full) / (f_full.abs() + cfg.epsilon)
}

/// Where one validation gap came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapProvenance {
    pub theta_stream: RngStream,
    pub full_stream: RngStream,
    pub latent_stream: RngStream,
    pub theta: Vec<f64>,
    pub f_full: f64,
    pub f_latent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSampleSet {
    pub gaps: Vec<f64>,
    /// Empty when gaps were supplied directly.
    pub provenance: Vec<GapProvenance>,
}

impl GapSampleSet {
    pub fn from_gaps(gaps: Vec<f64>) -> Result<Self> {
        let s = Self {
            gaps,
            provenance: Vec::new(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gaps.is_empty() {
            return Err(Error::invalid("gap sample set is empty"));
        }
        if let Some(i) = self.gaps.iter().position(|g| !g.is_finite()) {
            return Err(Error::invalid(format!(
                "gap {i} is not finite ({})",
                self.gaps[i]
            )));
        }
        if !self.provenance.is_empty() && self.provenance.len() != self.gaps.len() {
            return Err(Error::invalid(
                "gap provenance length differs from the gap count",
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapCertificate {
    pub alpha: f64,
    pub delta: f64,
    pub m: usize,
    pub epsilon_m: f64,
    pub k_star: usize,
    /// With probability ≥ 1 − δ over the validation draw,
    /// `P(gap ≤ bound) ≥ 1 − α`.
    pub bound: f64,
}

fn check_level(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::invalid(format!(
            "{name} must lie in (0, 1), got {v}"
        )));
    }
    Ok(())
}

/// `√(ln(2/δ) / (2m))`.
pub fn epsilon_m(m: usize, delta: f64) -> Result<f64> {
    check_level("delta", delta)?;
    if m == 0 {
        return Err(Error::invalid("epsilon_m needs m >= 1"));
    }
    Ok(((2.0 / delta).ln() / (2.0 * m as f64)).sqrt())
}

/// Smallest `m` with `ε_m ≤ α`.
pub fn min_samples(alpha: f64, delta: f64) -> Result<usize> {
    check_level("alpha", alpha)?;
    check_level("delta", delta)?;
    let mut m = ((2.0 / delta).ln() / (2.0 * alpha * alpha)).ceil().max(1.0) as usize;
    // guard the ceil against rounding either way
    while m > 1 && epsilon_m(m - 1, delta)? <= alpha {
        m -= 1;
    }
    while epsilon_m(m, delta)? > alpha {
        m += 1;
    }
    Ok(m)
}

/// The `k`-th smallest value, 1-indexed.
pub fn order_statistic(values: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > values.len() {
        return Err(Error::invalid(format!(
            "order statistic k={k} outside 1..={}",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[k - 1])
}

/// Order-statistic bound on the `(1 − α)`-quantile of the gap distribution.
pub fn certify(gaps: &[f64], alpha: f64, delta: f64) -> Result<GapCertificate> {
    check_level("alpha", alpha)?;
    let m = gaps.len();
    let eps = epsilon_m(m, delta)?;
    if alpha < eps {
        return Err(Error::InsufficientSamples {
            alpha,
            delta,
            m,
            epsilon_m: eps,
            min_m: min_samples(alpha, delta)?,
        });
    }
    let k_star = ((m as f64) * (1.0 - alpha + eps)).ceil() as usize;
    let k_star = k_star.clamp(1, m);
    Ok(GapCertificate {
        alpha,
        delta,
        m,
        epsilon_m: eps,
        k_star,
        bound: order_statistic(gaps, k_star)?,
    })
}

/// `(1/m) Σ 1[sample ≤ t]`.
pub fn empirical_cdf(samples: &[f64], t: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("empirical CDF of an empty sample"));
    }
    Ok(samples.iter().filter(|&&s| s <= t).count() as f64 / samples.len() as f64)
}

/// Non-interpolated empirical quantile: smallest sample with `F̂ ≥ q`.
pub fn empirical_quantile(samples: &[f64], q: f64) -> Result<f64> {
    let k = ((samples.len() as f64) * q).ceil().max(1.0) as usize;
    order_statistic(samples, k.min(samples.len()))
}

/// Step points `(t, F̂(t))` at each distinct sample value.
pub fn write_cdf_csv<W: Write>(mut w: W, samples: &[f64]) -> std::io::Result<()> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    writeln!(w, "t,ecdf")?;
    let m = sorted.len() as f64;
    for (i, t) in sorted.iter().enumerate() {
        if sorted.get(i + 1) == Some(t) {
            continue;
        }
        writeln!(w, "{},{}", t, (i + 1) as f64 / m)?;
    }
    Ok(())
}

/// `Σ (x_t − x̄)(x_{t+1} − x̄) / Σ (x_t − x̄)²`; 0 for constant input.
pub fn lag1_autocorrelation(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if var == 0.0 {
        return 0.0;
    }
    let cov: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

/// Whether the full and latent runs of one draw share a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    #[default]
    Independent,
    Common,
}

/// Draws `m` validation instances and records the gap of the latent run
/// against the full run on each. Draw `i` uses master substreams `3i`
/// (instance), `3i+1` (full run) and `3i+2` (latent run; `3i+1` under
/// [`SeedPolicy::Common`]).
#[allow(clippy::too_many_arguments)]
pub fn collect_gaps(
    problem: &ProblemClass,
    full: &AlgorithmSpec,
    latent: &AlgorithmSpec,
    decoder: Option<&dyn Decoder>,
    m: usize,
    cfg: &GapConfig,
    seed: RngStream,
    policy: SeedPolicy,
) -> Result<GapSampleSet> {
    if m == 0 {
        return Err(Error::invalid("need at least one validation draw"));
    }
    let domain = problem.domain();
    let provenance = (0..m)
        .into_par_iter()
        .map(|i| {
            let base = 3 * i as u64;
            let theta_stream = seed.substream(base);
            let full_stream = seed.substream(base + 1);
            let latent_stream = match policy {
                SeedPolicy::Independent => seed.substream(base + 2),
                SeedPolicy::Common => full_stream,
            };
            let run = || -> Result<GapProvenance> {
                let theta = problem.sample_params(&mut theta_stream.rng());
                let objective = problem.instance(&theta)?;
                let f_full = full.run(&objective, domain, None, full_stream)?.best_f;
                let f_latent = latent
                    .run(&objective, domain, decoder, latent_stream)?
                    .best_f;
                Ok(GapProvenance {
                    theta_stream,
                    full_stream,
                    latent_stream,
                    theta,
                    f_full,
                    f_latent,
                })
            };
            run().map_err(|e| e.in_instance(i))
        })
        .collect::<Result<Vec<_>>>()?;
    let gaps = provenance
        .iter()
        .map(|p| performance_gap(p.f_latent, p.f_full, cfg))
        .collect();
    let set = GapSampleSet { gaps, provenance };
    set.validate()?;
    Ok(set)
}

/// A continuous 1-D law with a closed-form CDF.
pub trait KnownDistribution: Sync {
    fn sample(&self, rng: &mut StreamRng) -> f64;
    fn cdf(&self, t: f64) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StandardNormal;

impl KnownDistribution for StandardNormal {
    fn sample(&self, rng: &mut StreamRng) -> f64 {
        rng.sample(NormalSampler)
    }

    fn cdf(&self, t: f64) -> f64 {
        0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Uniform01;

impl KnownDistribution for Uniform01 {
    fn sample(&self, rng: &mut StreamRng) -> f64 {
        rng.random()
    }

    fn cdf(&self, t: f64) -> f64 {
        t.clamp(0.0, 1.0)
    }
}

/// Fraction of trials whose certified bound reaches true CDF level `1 − α`.
pub fn coverage_monte_carlo(
    dist: &dyn KnownDistribution,
    m: usize,
    alpha: f64,
    delta: f64,
    trials: usize,
    seed: RngStream,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::invalid("coverage needs at least one trial"));
    }
    // surface precondition errors once, before fanning out
    certify(&vec![0.0; m.max(1)], alpha, delta)?;
    let hits = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<usize> {
            let mut rng = seed.substream(t as u64).rng();
            let draws: Vec<f64> = (0..m).map(|_| dist.sample(&mut rng)).collect();
            let cert = certify(&draws, alpha, delta)?;
            Ok(usize::from(dist.cdf(cert.bound) >= 1.0 - alpha))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(hits as f64 / trials as f64)
}
