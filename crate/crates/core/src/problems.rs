//! Parameterized problem classes `f(x; θ)` over box domains.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::StreamRng;

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Deserialize)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawBox> for BoxDomain {
    type Error = Error;

    fn try_from(raw: RawBox) -> Result<Self> {
        BoxDomain::new(raw.lower, raw.upper)
    }
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::invalid("box domain needs dimension >= 1"));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                what: "box upper bounds",
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::invalid(format!(
                    "box axis {i}: need finite lower < upper, got [{l}, {u}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[0,1]^n`.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(vec![0.0; n], vec![1.0; n])
    }

    /// `[-h, h]^n`.
    pub fn symmetric(n: usize, halfwidth: f64) -> Result<Self> {
        Self::new(vec![-halfwidth; n], vec![halfwidth; n])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| v >= l && v <= u)
    }

    /// Componentwise projection onto the box.
    pub fn clip(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect()
    }

    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(i, ui)| self.lower[i] + ui * self.width(i))
            .collect()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, xi)| (xi - self.lower[i]) / self.width(i))
            .collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.from_unit(&vec![0.5; self.dim()])
    }
}

/// Projects `x` onto `domain`.
pub fn clip_to_domain(x: &[f64], domain: &BoxDomain) -> Result<Vec<f64>> {
    if x.len() != domain.dim() {
        return Err(Error::DimensionMismatch {
            what: "point vs domain",
            expected: domain.dim(),
            got: x.len(),
        });
    }
    Ok(domain.clip(x))
}

pub type ObjectiveFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
pub type SamplerFn = dyn Fn(&mut StreamRng) -> Vec<f64> + Send + Sync;

/// A family of objectives `f(x; θ)` on a box, with a sampler for `θ ~ p(θ)`.
///
/// The evaluator must be deterministic and safe to call from several threads.
#[derive(Clone)]
pub struct ProblemClass {
    name: String,
    domain: BoxDomain,
    param_dim: usize,
    objective: Arc<ObjectiveFn>,
    sampler: Arc<SamplerFn>,
}

impl fmt::Debug for ProblemClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemClass")
            .field("name", &self.name)
            .field("dim_x", &self.dim_x())
            .field("param_dim", &self.param_dim)
            .finish_non_exhaustive()
    }
}

impl ProblemClass {
    pub fn new(
        name: impl Into<String>,
        domain: BoxDomain,
        param_dim: usize,
        objective: Arc<ObjectiveFn>,
        sampler: Arc<SamplerFn>,
    ) -> Self {
        Self {
            name: name.into(),
            domain,
            param_dim,
            objective,
            sampler,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim_x(&self) -> usize {
        self.domain.dim()
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    /// Draws one `θ` from the class's parameter distribution.
    pub fn sample_params(&self, rng: &mut StreamRng) -> Vec<f64> {
        (self.sampler)(rng)
    }

    pub fn evaluate(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        self.check(x, theta)?;
        Ok((self.objective)(x, theta))
    }

    /// The single-instance objective `x ↦ f(x; θ)`.
    pub fn instance(&self, theta: &[f64]) -> Result<impl Fn(&[f64]) -> f64 + Send + Sync + '_> {
        if theta.len() != self.param_dim {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.param_dim,
                got: theta.len(),
            });
        }
        let theta = theta.to_vec();
        let n = self.dim_x();
        Ok(move |x: &[f64]| {
            assert_eq!(x.len(), n, "objective called with wrong dimension");
            (self.objective)(x, &theta)
        })
    }

    fn check(&self, x: &[f64], theta: &[f64]) -> Result<()> {
        if x.len() != self.dim_x() {
            return Err(Error::DimensionMismatch {
                what: "decision vector",
                expected: self.dim_x(),
                got: x.len(),
            });
        }
        if theta.len() != self.param_dim {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.param_dim,
                got: theta.len(),
            });
        }
        Ok(())
    }
}

/// Parameters of the generalized Rosenbrock function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosenbrockParams {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: Vec<f64>,
}

impl RosenbrockParams {
    /// `θ = (100, 1, 1)`, the classic banana valley with minimum at `x = 1`.
    pub fn nominal(n_x: usize) -> Self {
        Self {
            theta1: 100.0,
            theta2: 1.0,
            theta3: vec![1.0; n_x.saturating_sub(1)],
        }
    }

    /// `θ₁ ~ U[10,1000]`, `θ₂ ~ U[0.1,10]`, `θ₃,i ~ U[0.1,10]`.
    pub fn sample<R: Rng + ?Sized>(n_x: usize, rng: &mut R) -> Self {
        let theta1 = rng.random_range(10.0..=1000.0);
        let theta2 = rng.random_range(0.1..=10.0);
        let theta3 = (1..n_x).map(|_| rng.random_range(0.1..=10.0)).collect();
        Self {
            theta1,
            theta2,
            theta3,
        }
    }

    /// Flat layout `[θ₁, θ₂, θ₃,1, …, θ₃,n−1]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 + self.theta3.len());
        v.push(self.theta1);
        v.push(self.theta2);
        v.extend_from_slice(&self.theta3);
        v
    }

    pub fn from_slice(theta: &[f64]) -> Result<Self> {
        if theta.len() < 3 {
            return Err(Error::invalid(format!(
                "rosenbrock parameters need at least 3 entries, got {}",
                theta.len()
            )));
        }
        Ok(Self {
            theta1: theta[0],
            theta2: theta[1],
            theta3: theta[2..].to_vec(),
        })
    }
}

fn rosenbrock_unchecked(x: &[f64], theta1: f64, theta2: f64, theta3: &[f64]) -> f64 {
    x.windows(2)
        .zip(theta3)
        .map(|(w, t3)| {
            let valley = w[1] - w[0] * w[0];
            let offset = t3 - w[0];
            theta1 * valley * valley + theta2 * offset * offset
        })
        .sum()
}

/// `Σ θ₁(x_{i+1} − x_i²)² + θ₂(θ₃,i − x_i)²`.
pub fn rosenbrock_eval(x: &[f64], params: &RosenbrockParams) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::invalid("rosenbrock needs n_x >= 2"));
    }
    if params.theta3.len() != x.len() - 1 {
        return Err(Error::DimensionMismatch {
            what: "theta3 length (n_x - 1)",
            expected: x.len() - 1,
            got: params.theta3.len(),
        });
    }
    Ok(rosenbrock_unchecked(
        x,
        params.theta1,
        params.theta2,
        &params.theta3,
    ))
}

/// The parameterized Rosenbrock class on `[-h, h]^{n_x}`; `θ` has `n_x + 1` entries.
pub fn rosenbrock_class(n_x: usize, domain_halfwidth: f64) -> Result<ProblemClass> {
    if n_x < 2 {
        return Err(Error::invalid(format!(
            "rosenbrock needs n_x >= 2, got {n_x}"
        )));
    }
    if !(domain_halfwidth > 0.0) {
        return Err(Error::invalid("domain half-width must be positive"));
    }
    let domain = BoxDomain::symmetric(n_x, domain_halfwidth)?;
    Ok(ProblemClass::new(
        "rosenbrock",
        domain,
        n_x + 1,
        Arc::new(|x: &[f64], theta: &[f64]| {
            rosenbrock_unchecked(x, theta[0], theta[1], &theta[2..])
        }),
        Arc::new(move |rng: &mut StreamRng| RosenbrockParams::sample(n_x, rng).to_vec()),
    ))
}

/// Options shared by every registered problem builder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemOptions {
    pub n_x: usize,
    pub domain_halfwidth: f64,
}

pub type ProblemBuilder = Arc<dyn Fn(&ProblemOptions) -> Result<ProblemClass> + Send + Sync>;

/// Problem classes addressable by name.
#[derive(Clone)]
pub struct ProblemRegistry {
    builders: BTreeMap<String, ProblemBuilder>,
}

impl Default for ProblemRegistry {
    fn default() -> Self {
        let mut reg = Self {
            builders: BTreeMap::new(),
        };
        reg.register(
            "rosenbrock",
            Arc::new(|o: &ProblemOptions| rosenbrock_class(o.n_x, o.domain_halfwidth)),
        );
        reg
    }
}

impl ProblemRegistry {
    pub fn register(&mut self, name: impl Into<String>, builder: ProblemBuilder) {
        self.builders.insert(name.into(), builder);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, options: &ProblemOptions) -> Result<ProblemClass> {
        let builder = self
            .builders
            .get(name)
            .ok_or_else(|| Error::UnknownProblem(name.to_string()))?;
        builder(options)
    }
}
