//! One interface over the optimizers, in the decision box or through a decoder.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glis::{run_glis, Decoder, GlisConfig, RunResult, StepTimes, TraceStep};
use crate::problems::BoxDomain;
use crate::sampling::RngStream;
use crate::solvers::{differential_evolution, particle_swarm, DeConfig, PsoConfig, SolveTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum AlgorithmSpec {
    De(DeConfig),
    Pso(PsoConfig),
    Glis(GlisConfig),
}

impl AlgorithmSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmSpec::De(_) => "de",
            AlgorithmSpec::Pso(_) => "pso",
            AlgorithmSpec::Glis(_) => "glis",
        }
    }

    /// Minimizes `objective` over `x_domain`, or over `[0,1]^{n_z}` composed
    /// with `decoder` when one is given. `seed` overrides any seed stored in
    /// the spec.
    pub fn run<F>(
        &self,
        objective: F,
        x_domain: &BoxDomain,
        decoder: Option<&dyn Decoder>,
        seed: RngStream,
    ) -> Result<RunResult>
    where
        F: Fn(&[f64]) -> f64,
    {
        let search = match decoder {
            Some(d) => {
                if d.output_domain() != x_domain {
                    return Err(Error::invalid(
                        "decoder output box differs from the problem's decision box",
                    ));
                }
                BoxDomain::unit(d.latent_dim())?
            }
            None => x_domain.clone(),
        };
        let decode = |z: &[f64]| match decoder {
            Some(d) => d.decode(z),
            None => z.to_vec(),
        };
        let composed = |z: &[f64]| objective(&decode(z));
        let trace = match self {
            AlgorithmSpec::Glis(cfg) => {
                let cfg = GlisConfig {
                    seed,
                    ..cfg.clone()
                };
                return run_glis(&objective, &search, decoder, &cfg);
            }
            AlgorithmSpec::De(cfg) => {
                differential_evolution(composed, &search, cfg, &mut seed.rng())?
            }
            AlgorithmSpec::Pso(cfg) => particle_swarm(composed, &search, cfg, &mut seed.rng())?,
        };
        population_result(trace, decoder.is_some(), decode)
    }
}

fn population_result(
    trace: SolveTrace,
    latent: bool,
    decode: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<RunResult> {
    let steps: Vec<TraceStep> = trace
        .evaluations
        .into_iter()
        .zip(trace.best_so_far)
        .map(|(e, best_f)| {
            let x = decode(&e.x);
            if !e.f.is_finite() {
                return Err(Error::NonFiniteObjective {
                    point: x,
                    value: e.f,
                });
            }
            Ok(TraceStep {
                z: latent.then_some(e.x),
                x,
                f: e.f,
                best_f,
            })
        })
        .collect::<Result<_>>()?;
    let times = vec![StepTimes::default(); steps.len()];
    RunResult::from_steps(steps, times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{AutoencoderSpec, Embedding};
    use crate::solvers::EvalBudget;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn population_runs_match_direct_solver() {
        let d = BoxDomain::symmetric(3, 2.0).unwrap();
        let cfg = DeConfig::for_dim(3, EvalBudget::new(300, usize::MAX).unwrap());
        let r = AlgorithmSpec::De(cfg)
            .run(sphere, &d, None, RngStream::new(1, 0))
            .unwrap();
        let t = differential_evolution(sphere, &d, &cfg, &mut RngStream::new(1, 0).rng()).unwrap();
        assert_eq!(r.evaluations(), 300);
        assert_eq!(r.best_f, t.best().unwrap().f);
        assert!(r.trace.iter().all(|s| s.z.is_none()));
    }

    #[test]
    fn latent_population_runs_decode() {
        let d = BoxDomain::symmetric(4, 2.0).unwrap();
        let e = Embedding::init(
            &AutoencoderSpec::new(d.clone(), 2),
            &mut RngStream::new(0, 0).rng(),
        )
        .unwrap();
        let spec = AlgorithmSpec::Pso(PsoConfig::new(10, EvalBudget::new(50, usize::MAX).unwrap()));
        let r = spec
            .run(sphere, &d, Some(&e), RngStream::new(2, 0))
            .unwrap();
        for s in &r.trace {
            assert_eq!(s.x, e.decode(s.z.as_ref().unwrap()));
            assert_eq!(s.f, sphere(&s.x));
        }
        let other = BoxDomain::symmetric(4, 3.0).unwrap();
        assert!(spec
            .run(sphere, &other, Some(&e), RngStream::new(2, 0))
            .is_err());
    }

    #[test]
    fn glis_seed_is_overridden() {
        let d = BoxDomain::unit(2).unwrap();
        let spec = AlgorithmSpec::Glis(GlisConfig::new(3, 6, RngStream::new(0, 0)));
        let a = spec.run(sphere, &d, None, RngStream::new(9, 0)).unwrap();
        let b = run_glis(
            sphere,
            &d,
            None,
            &GlisConfig::new(3, 6, RngStream::new(9, 0)),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn serde_tagging() {
        let spec = AlgorithmSpec::De(DeConfig::for_dim(2, EvalBudget::generations(3)));
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"algorithm\":\"de\""));
        assert_eq!(serde_json::from_str::<AlgorithmSpec>(&text).unwrap(), spec);
    }
}
