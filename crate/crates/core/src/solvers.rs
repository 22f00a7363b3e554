//! Population-based baselines: differential evolution (rand/1/bin) and
//! global-best particle swarm.
//!
//! Both solvers record every evaluated candidate in a [`SolveTrace`], which is
//! where meta-dataset near-optimal sets come from.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::BoxDomain;

/// Stopping rule for population methods: whichever limit is hit first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalBudget {
    pub max_evaluations: usize,
    pub max_generations: usize,
}

impl EvalBudget {
    pub fn new(max_evaluations: usize, max_generations: usize) -> Result<Self> {
        let b = Self {
            max_evaluations,
            max_generations,
        };
        b.validate()?;
        Ok(b)
    }

    /// Only the generation count limits the run.
    pub fn generations(max_generations: usize) -> Self {
        Self {
            max_evaluations: usize::MAX,
            max_generations,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_evaluations == 0 || self.max_generations == 0 {
            return Err(Error::invalid("evaluation budget limits must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub x: Vec<f64>,
    pub f: f64,
}

/// Every evaluation of a run, in order, with the running incumbent value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub evaluations: Vec<Evaluation>,
    pub best_so_far: Vec<f64>,
    best_index: Option<usize>,
}

impl SolveTrace {
    pub fn push(&mut self, x: Vec<f64>, f: f64) {
        let improved = match self.best_index {
            None => true,
            Some(b) => better(f, self.evaluations[b].f),
        };
        if improved {
            self.best_index = Some(self.evaluations.len());
        }
        self.evaluations.push(Evaluation { x, f });
        let best = self.evaluations[self.best_index.unwrap()].f;
        self.best_so_far.push(best);
    }

    pub fn len(&self) -> usize {
        self.evaluations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.evaluations.is_empty()
    }

    pub fn best(&self) -> Option<&Evaluation> {
        self.best_index.map(|i| &self.evaluations[i])
    }
}

/// Strict improvement with NaN ranked worst.
fn better(a: f64, b: f64) -> bool {
    if a.is_nan() {
        false
    } else {
        b.is_nan() || a < b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    pub pop_size: usize,
    /// Differential weight `F`.
    pub weight: f64,
    /// Crossover rate `CR`.
    pub crossover: f64,
    pub budget: EvalBudget,
}

impl DeConfig {
    /// `F = 0.8`, `CR = 0.9`, population `10·n` capped at 100.
    pub fn for_dim(n: usize, budget: EvalBudget) -> Self {
        Self {
            pop_size: (10 * n).clamp(4, 100),
            weight: 0.8,
            crossover: 0.9,
            budget,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.pop_size < 4 {
            return Err(Error::invalid(format!(
                "differential evolution needs pop_size >= 4 (3 donors plus target), got {}",
                self.pop_size
            )));
        }
        if !(self.weight > 0.0 && self.weight <= 2.0) {
            return Err(Error::invalid(format!(
                "DE weight F must lie in (0, 2], got {}",
                self.weight
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(Error::invalid(format!(
                "DE crossover CR must lie in [0, 1], got {}",
                self.crossover
            )));
        }
        self.budget.validate()
    }
}

/// rand/1/bin core. `observe` sees every evaluated candidate in order.
fn de_core<R, F, O>(
    objective: F,
    domain: &BoxDomain,
    cfg: &DeConfig,
    rng: &mut R,
    mut observe: O,
) -> Result<()>
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> f64,
    O: FnMut(&[f64], f64),
{
    cfg.validate()?;
    let n = domain.dim();
    let np = cfg.pop_size;
    let mut evals = 0usize;
    let max_evals = cfg.budget.max_evaluations;

    let mut pop: Vec<Vec<f64>> = Vec::with_capacity(np);
    let mut fit: Vec<f64> = Vec::with_capacity(np);
    for _ in 0..np {
        if evals >= max_evals {
            return Ok(());
        }
        let x: Vec<f64> = (0..n)
            .map(|j| rng.random_range(domain.lower()[j]..=domain.upper()[j]))
            .collect();
        let f = objective(&x);
        evals += 1;
        observe(&x, f);
        pop.push(x);
        fit.push(f);
    }

    let mut trial = vec![0.0; n];
    for _gen in 0..cfg.budget.max_generations {
        for i in 0..np {
            if evals >= max_evals {
                return Ok(());
            }
            let (a, b, c) = distinct_donors(np, i, rng);
            let forced = rng.random_range(0..n);
            for j in 0..n {
                trial[j] = if j == forced || rng.random::<f64>() < cfg.crossover {
                    pop[a][j] + cfg.weight * (pop[b][j] - pop[c][j])
                } else {
                    pop[i][j]
                };
            }
            let trial_x = domain.clip(&trial);
            let f = objective(&trial_x);
            evals += 1;
            observe(&trial_x, f);
            if !better(fit[i], f) {
                pop[i] = trial_x;
                fit[i] = f;
            }
        }
    }
    Ok(())
}

fn distinct_donors<R: Rng + ?Sized>(
    np: usize,
    target: usize,
    rng: &mut R,
) -> (usize, usize, usize) {
    let mut pick = |exclude: &[usize]| loop {
        let k = rng.random_range(0..np);
        if !exclude.contains(&k) {
            return k;
        }
    };
    let a = pick(&[target]);
    let b = pick(&[target, a]);
    let c = pick(&[target, a, b]);
    (a, b, c)
}

/// Differential evolution with full trace recording.
pub fn differential_evolution<R, F>(
    objective: F,
    domain: &BoxDomain,
    cfg: &DeConfig,
    rng: &mut R,
) -> Result<SolveTrace>
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    let mut trace = SolveTrace::default();
    de_core(objective, domain, cfg, rng, |x, f| {
        trace.push(x.to_vec(), f)
    })?;
    Ok(trace)
}

/// Differential evolution returning only the incumbent.
pub fn de_minimize<R, F>(
    objective: F,
    domain: &BoxDomain,
    cfg: &DeConfig,
    rng: &mut R,
) -> Result<Evaluation>
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    let mut best: Option<Evaluation> = None;
    de_core(objective, domain, cfg, rng, |x, f| {
        if best.as_ref().is_none_or(|b| better(f, b.f)) {
            best = Some(Evaluation { x: x.to_vec(), f });
        }
    })?;
    best.ok_or_else(|| Error::invalid("empty evaluation budget"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub inertia: f64,
    /// Cognitive coefficient.
    pub c1: f64,
    /// Social coefficient.
    pub c2: f64,
    pub budget: EvalBudget,
}

impl PsoConfig {
    pub fn new(swarm_size: usize, budget: EvalBudget) -> Self {
        Self {
            swarm_size,
            inertia: 0.72,
            c1: 1.49,
            c2: 1.49,
            budget,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.swarm_size < 2 {
            return Err(Error::invalid(format!(
                "PSO needs swarm_size >= 2, got {}",
                self.swarm_size
            )));
        }
        if !(0.0..=1.2).contains(&self.inertia) {
            return Err(Error::invalid(format!(
                "PSO inertia must lie in [0, 1.2], got {}",
                self.inertia
            )));
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0) {
            return Err(Error::invalid("PSO acceleration coefficients must be >= 0"));
        }
        self.budget.validate()
    }
}

/// Global-best PSO. Velocities are clamped to 20% of each axis width and
/// positions are clipped to the domain.
pub fn particle_swarm<R, F>(
    objective: F,
    domain: &BoxDomain,
    cfg: &PsoConfig,
    rng: &mut R,
) -> Result<SolveTrace>
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    cfg.validate()?;
    let n = domain.dim();
    let vmax: Vec<f64> = (0..n).map(|j| 0.2 * domain.width(j)).collect();
    let mut trace = SolveTrace::default();
    let max_evals = cfg.budget.max_evaluations;

    let mut pos = Vec::with_capacity(cfg.swarm_size);
    let mut vel = Vec::with_capacity(cfg.swarm_size);
    let mut pbest: Vec<Evaluation> = Vec::with_capacity(cfg.swarm_size);
    let mut gbest: Option<Evaluation> = None;

    for _ in 0..cfg.swarm_size {
        if trace.len() >= max_evals {
            return Ok(trace);
        }
        let x: Vec<f64> = (0..n)
            .map(|j| rng.random_range(domain.lower()[j]..=domain.upper()[j]))
            .collect();
        let v: Vec<f64> = (0..n)
            .map(|j| rng.random_range(-vmax[j]..=vmax[j]))
            .collect();
        let f = objective(&x);
        trace.push(x.clone(), f);
        if gbest.as_ref().is_none_or(|g| better(f, g.f)) {
            gbest = Some(Evaluation { x: x.clone(), f });
        }
        pbest.push(Evaluation { x: x.clone(), f });
        pos.push(x);
        vel.push(v);
    }

    for _iter in 0..cfg.budget.max_generations {
        for i in 0..cfg.swarm_size {
            if trace.len() >= max_evals {
                return Ok(trace);
            }
            let g = gbest.as_ref().expect("swarm initialized");
            for j in 0..n {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let v = cfg.inertia * vel[i][j]
                    + cfg.c1 * r1 * (pbest[i].x[j] - pos[i][j])
                    + cfg.c2 * r2 * (g.x[j] - pos[i][j]);
                vel[i][j] = v.clamp(-vmax[j], vmax[j]);
                pos[i][j] += vel[i][j];
            }
            pos[i] = domain.clip(&pos[i]);
            let f = objective(&pos[i]);
            trace.push(pos[i].clone(), f);
            if better(f, pbest[i].f) {
                pbest[i] = Evaluation {
                    x: pos[i].clone(),
                    f,
                };
            }
            if better(f, gbest.as_ref().unwrap().f) {
                gbest = Some(Evaluation {
                    x: pos[i].clone(),
                    f,
                });
            }
        }
    }
    Ok(trace)
}

/// Default deduplication tolerance, in normalized domain coordinates.
pub const DEDUP_TOL: f64 = 1e-9;

/// The `k` best distinct candidates of a trace, sorted ascending by `f`.
///
/// Two candidates are the same point when their ∞-norm distance, measured in
/// `[0,1]`-normalized coordinates of `domain`, is at most `tol`.
pub fn top_k_distinct(
    trace: &SolveTrace,
    k: usize,
    tol: f64,
    domain: &BoxDomain,
) -> Result<Vec<Evaluation>> {
    let mut order: Vec<usize> = (0..trace.len())
        .filter(|&i| !trace.evaluations[i].f.is_nan())
        .collect();
    order.sort_by(|&a, &b| {
        trace.evaluations[a]
            .f
            .total_cmp(&trace.evaluations[b].f)
            .then(a.cmp(&b))
    });
    let mut kept: Vec<(Vec<f64>, usize)> = Vec::with_capacity(k);
    for i in order {
        if kept.len() == k {
            break;
        }
        let u = domain.to_unit(&trace.evaluations[i].x);
        let dup = kept
            .iter()
            .any(|(v, _)| u.iter().zip(v).all(|(a, b)| (a - b).abs() <= tol));
        if !dup {
            kept.push((u, i));
        }
    }
    if kept.len() < k {
        return Err(Error::InsufficientDistinct {
            requested: k,
            achievable: kept.len(),
        });
    }
    Ok(kept
        .into_iter()
        .map(|(_, i)| trace.evaluations[i].clone())
        .collect())
}

/// A serializable choice of population solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "lowercase")]
pub enum SolverSpec {
    De(DeConfig),
    Pso(PsoConfig),
}

impl SolverSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SolverSpec::De(_) => "de",
            SolverSpec::Pso(_) => "pso",
        }
    }

    pub fn budget(&self) -> EvalBudget {
        match self {
            SolverSpec::De(c) => c.budget,
            SolverSpec::Pso(c) => c.budget,
        }
    }

    pub fn solve<R, F>(&self, objective: F, domain: &BoxDomain, rng: &mut R) -> Result<SolveTrace>
    where
        R: Rng + ?Sized,
        F: Fn(&[f64]) -> f64,
    {
        match self {
            SolverSpec::De(c) => differential_evolution(objective, domain, c, rng),
            SolverSpec::Pso(c) => particle_swarm(objective, domain, c, rng),
        }
    }
}
