//! `meta-bbo` command-line workflow: dataset generation, autoencoder
//! training, optimization runs, gap certification and plots.

pub mod svg;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::AlgorithmSpec;
use crate::autoencoder::{
    gradient_check_params, rank_weights, train, Activation, AutoencoderSpec, DecoderKind,
    Embedding, TrainConfig, WeightedSample,
};
use crate::bounds::{
    certify, collect_gaps, empirical_quantile, performance_gap, write_cdf_csv, GapCertificate,
    GapConfig, GapProvenance, GapSampleSet, SeedPolicy,
};
use crate::error::Error;
use crate::glis::{
    cumulative_min, write_trace_csv, Decoder, GlisConfig, KernelChoice, RunResult, StepTimes,
};
use crate::metadataset::{build_meta_dataset, MetaDataset};
use crate::problems::{ProblemClass, ProblemOptions, ProblemRegistry};
use crate::sampling::RngStream;
use crate::solvers::{DeConfig, EvalBudget, PsoConfig, SolverSpec, DEDUP_TOL};
use crate::surrogate::{CvGrid, KernelFamily, KernelSpec};

pub const SUMMARY_FORMAT: &str = "meta-bbo-run-v1";
pub const THREADS_ENV: &str = "META_BBO_THREADS";

/// A failed command and its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InsufficientSamples { .. } => 3,
            Error::Divergence { .. } | Error::NonFiniteObjective { .. } | Error::SingularSystem => {
                1
            }
            Error::Instance { source, .. }
                if matches!(**source, Error::NonFiniteObjective { .. }) =>
            {
                1
            }
            _ => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

#[derive(Debug, Parser)]
#[command(
    name = "meta-bbo",
    version,
    about = "Latent-space surrogate optimization with gap certificates"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample instances and store each one's best distinct solver points.
    GenMeta(GenMetaArgs),
    /// Train the autoencoder on a meta-dataset.
    TrainAe(TrainAeArgs),
    /// Optimize fresh test instances and write traces plus a summary.
    Run(RunArgs),
    /// Bound the performance gap from gaps, run summaries or live runs.
    Certify(CertifyArgs),
    /// Render convergence and CDF charts as SVG.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, Args)]
struct SeedArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
}

impl SeedArgs {
    fn stream(&self) -> RngStream {
        RngStream::new(self.seed, self.stream)
    }
}

#[derive(Debug, Clone, Args)]
struct ProblemArgs {
    #[arg(long, default_value = "rosenbrock")]
    problem: String,
    #[arg(long, default_value_t = 10)]
    nx: usize,
    /// Decision box is [-h, h]^nx.
    #[arg(long, default_value_t = 2.5)]
    halfwidth: f64,
}

impl ProblemArgs {
    fn build(&self) -> std::result::Result<ProblemClass, Failure> {
        let registry = ProblemRegistry::default();
        registry
            .build(
                &self.problem,
                &ProblemOptions {
                    n_x: self.nx,
                    domain_halfwidth: self.halfwidth,
                },
            )
            .map_err(|e| match e {
                Error::UnknownProblem(name) => Failure::usage(format!(
                    "unknown problem {name:?}; available: {}",
                    registry.names().collect::<Vec<_>>().join(", ")
                )),
                other => other.into(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverName {
    De,
    Pso,
}

#[derive(Debug, Args)]
struct GenMetaArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long = "N", default_value_t = 50)]
    n: usize,
    #[arg(long = "K", default_value_t = 200)]
    k: usize,
    #[arg(long, value_enum, default_value_t = SolverName::De)]
    solver: SolverName,
    #[arg(long, default_value_t = 200)]
    generations: usize,
    /// Population / swarm size (default: 10·nx capped at 100, swarm 40).
    #[arg(long)]
    pop: Option<usize>,
    #[arg(long, default_value_t = DEDUP_TOL)]
    dedup_tol: f64,
    #[command(flatten)]
    seed: SeedArgs,
    #[arg(long, default_value = "meta-dataset.json")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ActivationName {
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DecoderName {
    Mlp,
    Linear,
}

#[derive(Debug, Args)]
struct TrainAeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 3)]
    nz: usize,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    #[arg(long, default_value_t = 256)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Encoder hidden sizes; the decoder mirrors them.
    #[arg(long, value_delimiter = ',', default_value = "128,64")]
    hidden: Vec<usize>,
    #[arg(long, value_enum, default_value_t = ActivationName::Tanh)]
    activation: ActivationName,
    #[arg(long, value_enum, default_value_t = DecoderName::Mlp)]
    decoder: DecoderName,
    /// Parameters sampled for the finite-difference check.
    #[arg(long, default_value_t = 200)]
    grad_check_params: usize,
    #[command(flatten)]
    seed: SeedArgs,
    #[arg(long, default_value = "embedding.json")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Glis,
    MetaGlis,
    De,
    Pso,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelName {
    Invquad,
    Sqexp,
}

impl From<KernelName> for KernelFamily {
    fn from(k: KernelName) -> Self {
        match k {
            KernelName::Invquad => KernelFamily::InverseQuadratic,
            KernelName::Sqexp => KernelFamily::SquaredExponential,
        }
    }
}

#[derive(Debug, Clone, Args)]
struct SurrogateArgs {
    /// Weight of the IDW exploration term.
    #[arg(long, default_value_t = 1.0)]
    exploration: f64,
    #[arg(long, value_enum, default_value_t = KernelName::Invquad)]
    kernel: KernelName,
    /// Fix μ instead of cross-validating (needs --gamma too).
    #[arg(long, requires = "gamma")]
    mu: Option<f64>,
    #[arg(long, requires = "mu")]
    gamma: Option<f64>,
}

impl SurrogateArgs {
    fn glis(
        &self,
        m_init: usize,
        m_max: usize,
        seed: RngStream,
    ) -> std::result::Result<GlisConfig, Failure> {
        let kernel = match (self.mu, self.gamma) {
            (Some(mu), Some(gamma)) => {
                KernelChoice::Fixed(KernelSpec::new(self.kernel.into(), mu, gamma)?)
            }
            _ => KernelChoice::CrossValidated {
                family: self.kernel.into(),
                grid: CvGrid::default(),
            },
        };
        let cfg = GlisConfig {
            delta: self.exploration,
            kernel,
            ..GlisConfig::new(m_init, m_max, seed)
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    #[command(flatten)]
    problem: ProblemArgs,
    /// Required for meta-glis; makes de/pso search the latent cube too.
    #[arg(long)]
    embedding: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    instances: usize,
    #[arg(long)]
    minit: Option<usize>,
    #[arg(long, default_value_t = 100)]
    mmax: usize,
    #[command(flatten)]
    surrogate: SurrogateArgs,
    /// Population / swarm size for de and pso.
    #[arg(long)]
    pop: Option<usize>,
    /// Fill the timing columns (makes outputs machine-dependent).
    #[arg(long)]
    timings: bool,
    #[command(flatten)]
    seed: SeedArgs,
    #[arg(long, default_value = "run-out")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    /// Gap sample file (GapSampleSet JSON or a JSON array).
    #[arg(long, conflicts_with_all = ["full", "latent", "live"])]
    gaps: Option<PathBuf>,
    /// Full-space run summary, paired with --latent.
    #[arg(long, requires = "latent")]
    full: Option<PathBuf>,
    #[arg(long, requires = "full")]
    latent: Option<PathBuf>,
    /// Draw validation instances and run both optimizers now.
    #[arg(long)]
    live: bool,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Confidence parameter: the bound holds with probability >= 1 - delta.
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[command(flatten)]
    live_args: LiveArgs,
    #[arg(long, default_value = "certify-out")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct LiveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    embedding: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    m: usize,
    #[arg(long, value_enum, default_value_t = Mode::Pso)]
    full_mode: Mode,
    #[arg(long, default_value_t = 100)]
    full_evals: usize,
    #[arg(long, value_enum, default_value_t = Mode::MetaGlis)]
    latent_mode: Mode,
    #[arg(long, default_value_t = 30)]
    latent_evals: usize,
    #[command(flatten)]
    surrogate: SurrogateArgs,
    #[command(flatten)]
    seed: SeedArgs,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Run summaries to overlay (one band each).
    #[arg(long)]
    summary: Vec<PathBuf>,
    #[arg(long, requires = "gaps")]
    certificate: Option<PathBuf>,
    #[arg(long, requires = "certificate")]
    gaps: Option<PathBuf>,
    #[arg(long, default_value = "report-out")]
    out_dir: PathBuf,
}

/// Per-instance outcome inside a [`RunSummary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSummary {
    pub index: usize,
    pub theta: Vec<f64>,
    pub best_f: f64,
    pub best_x: Vec<f64>,
    pub best_z: Option<Vec<f64>>,
    pub evaluations: usize,
}

/// Output of `run`: outcomes plus mean / population-std best-so-far curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub format: String,
    pub mode: String,
    pub problem: String,
    pub n_x: usize,
    pub latent_dim: Option<usize>,
    pub seed: RngStream,
    pub algorithm: AlgorithmSpec,
    pub instances: Vec<InstanceSummary>,
    pub curve_mean: Vec<f64>,
    pub curve_std: Vec<f64>,
    /// Only with `--timings`.
    pub mean_times: Option<StepTimes>,
}

/// Mean and population standard deviation of the best-so-far curves,
/// truncated to the shortest run.
pub fn curve_statistics(curves: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    let n = curves.len() as f64;
    (0..len)
        .map(|i| {
            let mean = curves.iter().map(|c| c[i]).sum::<f64>() / n;
            let var = curves.iter().map(|c| (c[i] - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .unzip()
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Errors go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    configure_threads();
    let outcome = match cli.command {
        Command::GenMeta(a) => cmd_gen_meta(&a),
        Command::TrainAe(a) => cmd_train_ae(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Certify(a) => cmd_certify(&a),
        Command::Report(a) => cmd_report(&a),
    };
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
    {
        if n > 0 {
            // a second call (tests running several commands) just keeps the first pool
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
    .into()
}

fn ensure_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CmdResult {
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> std::result::Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    serde_json::from_str(&text).map_err(|source| {
        Error::Parse {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn to_json_pretty<T: Serialize>(v: &T) -> std::result::Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v).map_err(Error::from)?;
    s.push('\n');
    Ok(s)
}

fn cmd_gen_meta(a: &GenMetaArgs) -> CmdResult {
    let class = a.problem.build()?;
    let budget = EvalBudget::generations(a.generations.max(1));
    let solver = match a.solver {
        SolverName::De => {
            let mut cfg = DeConfig::for_dim(class.dim_x(), budget);
            if let Some(p) = a.pop {
                cfg.pop_size = p;
            }
            SolverSpec::De(cfg)
        }
        SolverName::Pso => SolverSpec::Pso(PsoConfig::new(a.pop.unwrap_or(40), budget)),
    };
    let t0 = Instant::now();
    let ds = build_meta_dataset(&class, a.n, a.k, &solver, a.seed.stream(), a.dedup_tol)?;
    ds.save(&a.out)?;
    println!(
        "wrote {}: N={} K={} n_x={} solver={} ({:.2} s)",
        a.out.display(),
        ds.n,
        ds.k,
        ds.n_x,
        solver.name(),
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}

fn cmd_train_ae(a: &TrainAeArgs) -> CmdResult {
    let ds = MetaDataset::load(&a.data)?;
    let spec = AutoencoderSpec {
        domain: ds.domain().clone(),
        n_z: a.nz,
        hidden: a.hidden.clone(),
        activation: match a.activation {
            ActivationName::Tanh => Activation::Tanh,
            ActivationName::Relu => Activation::Relu,
        },
        decoder: match a.decoder {
            DecoderName::Mlp => DecoderKind::Mlp,
            DecoderName::Linear => DecoderKind::Linear,
        },
    };
    let cfg = TrainConfig {
        lambda: a.lambda,
        epochs: a.epochs,
        batch_size: a.batch,
        learning_rate: a.lr,
        seed: a.seed.stream(),
    };
    let t0 = Instant::now();
    let (embedding, history) = train(&spec, &ds, &cfg)?;
    embedding.save(&a.out)?;

    // gradient check on the best points of the first instance
    let inst = &ds.instances[0];
    let f: Vec<f64> = inst.points.iter().map(|p| p.f).collect();
    let samples: Vec<WeightedSample> = inst
        .points
        .iter()
        .zip(rank_weights(&f, a.lambda))
        .take(12)
        .map(|(p, w)| WeightedSample {
            x: p.x.clone(),
            weight: w,
        })
        .collect();
    let n_params = embedding.num_params();
    let mut indices: Vec<usize> = if n_params <= a.grad_check_params {
        (0..n_params).collect()
    } else {
        sample_indices(
            &mut cfg.seed.substream(2).rng(),
            n_params,
            a.grad_check_params,
        )
        .into_vec()
    };
    indices.sort_unstable();
    let grad_err = gradient_check_params(&embedding, &samples, &indices, None)?;

    println!(
        "wrote {}: n_x={} n_z={} params={} epochs={} ({:.2} s)",
        a.out.display(),
        embedding.n_x(),
        embedding.n_z(),
        n_params,
        a.epochs,
        t0.elapsed().as_secs_f64()
    );
    println!(
        "loss: initial={:.6e} final={:.6e} (best epoch {})",
        history.initial_loss(),
        history.final_loss(),
        history.best_epoch
    );
    println!(
        "gradient check: max relative error {grad_err:.3e} over {} parameters",
        indices.len()
    );
    Ok(())
}

fn load_embedding_for(
    path: &Path,
    class: &ProblemClass,
) -> std::result::Result<Embedding, Failure> {
    let e = Embedding::load(path)?;
    if e.n_x() != class.dim_x() {
        return Err(Error::DimensionMismatch {
            what: "embedding input vs problem dimension",
            expected: class.dim_x(),
            got: e.n_x(),
        }
        .into());
    }
    if e.domain() != class.domain() {
        return Err(Failure::usage(
            "embedding decision box differs from the problem's (check --halfwidth)",
        ));
    }
    Ok(e)
}

fn algorithm_for(
    mode: Mode,
    search_dim: usize,
    m_init: Option<usize>,
    m_max: usize,
    pop: Option<usize>,
    surrogate: &SurrogateArgs,
    seed: RngStream,
) -> std::result::Result<AlgorithmSpec, Failure> {
    let budget = EvalBudget::new(m_max, usize::MAX)?;
    Ok(match mode {
        Mode::Glis | Mode::MetaGlis => {
            let m_init = m_init.unwrap_or((2 * search_dim).min(m_max));
            AlgorithmSpec::Glis(surrogate.glis(m_init, m_max, seed)?)
        }
        Mode::De => {
            let mut cfg = DeConfig::for_dim(search_dim, budget);
            if let Some(p) = pop {
                cfg.pop_size = p;
            }
            AlgorithmSpec::De(cfg)
        }
        Mode::Pso => AlgorithmSpec::Pso(PsoConfig::new(pop.unwrap_or(20), budget)),
    })
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Glis => "glis",
        Mode::MetaGlis => "meta-glis",
        Mode::De => "de",
        Mode::Pso => "pso",
    }
}

/// Instance `i` of a run or certification: parameters from substream
/// `(i, 0)`, optimizer randomness from `(i, 1)`.
fn instance_streams(master: RngStream, i: usize) -> (RngStream, RngStream) {
    let s = master.substream(i as u64);
    (s.substream(0), s.substream(1))
}

fn cmd_run(a: &RunArgs) -> CmdResult {
    let class = a.problem.build()?;
    if a.instances == 0 {
        return Err(Failure::usage("--instances must be >= 1"));
    }
    let embedding = match (&a.embedding, a.mode) {
        (None, Mode::MetaGlis) => {
            return Err(Failure::usage("--mode meta-glis requires --embedding"))
        }
        (Some(_), Mode::Glis) => {
            return Err(Failure::usage("--embedding is not used by --mode glis"))
        }
        (Some(p), _) => Some(load_embedding_for(p, &class)?),
        (None, _) => None,
    };
    let decoder: Option<&dyn Decoder> = embedding.as_ref().map(|e| e as &dyn Decoder);
    let search_dim = decoder.map_or(class.dim_x(), |d| d.latent_dim());
    let master = a.seed.stream();
    let algorithm = algorithm_for(
        a.mode,
        search_dim,
        a.minit,
        a.mmax,
        a.pop,
        &a.surrogate,
        master,
    )?;

    let results: Vec<(Vec<f64>, RunResult)> = (0..a.instances)
        .into_par_iter()
        .map(|i| {
            let (theta_s, run_s) = instance_streams(master, i);
            let theta = class.sample_params(&mut theta_s.rng());
            let objective = class.instance(&theta)?;
            let r = algorithm.run(&objective, class.domain(), decoder, run_s);
            r.map(|r| (theta, r)).map_err(|e| e.in_instance(i))
        })
        .collect::<crate::Result<_>>()?;

    ensure_dir(&a.out_dir)?;
    for (i, (_, r)) in results.iter().enumerate() {
        let path = a.out_dir.join(format!("trace_{i:03}.csv"));
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, r, a.timings).map_err(|e| io_failure(&path, e))?;
        write_file(&path, buf)?;
    }
    let curves: Vec<Vec<f64>> = results
        .iter()
        .map(|(_, r)| cumulative_min(r.trace.iter().map(|s| s.f)))
        .collect();
    let (curve_mean, curve_std) = curve_statistics(&curves);
    let mean_times = a.timings.then(|| {
        let n = results.len() as f64;
        let per: Vec<StepTimes> = results
            .iter()
            .map(|(_, r)| r.mean_iteration_times())
            .collect();
        StepTimes {
            surrogate_fit_s: per.iter().map(|t| t.surrogate_fit_s).sum::<f64>() / n,
            acquisition_min_s: per.iter().map(|t| t.acquisition_min_s).sum::<f64>() / n,
        }
    });
    let summary = RunSummary {
        format: SUMMARY_FORMAT.to_string(),
        mode: mode_name(a.mode).to_string(),
        problem: class.name().to_string(),
        n_x: class.dim_x(),
        latent_dim: decoder.map(|d| d.latent_dim()),
        seed: master,
        algorithm,
        instances: results
            .iter()
            .enumerate()
            .map(|(index, (theta, r))| InstanceSummary {
                index,
                theta: theta.clone(),
                best_f: r.best_f,
                best_x: r.best_x.clone(),
                best_z: r.best_z.clone(),
                evaluations: r.evaluations(),
            })
            .collect(),
        curve_mean,
        curve_std,
        mean_times,
    };
    let path = a.out_dir.join("summary.json");
    write_file(&path, to_json_pretty(&summary)?)?;

    let mut bests: Vec<f64> = summary.instances.iter().map(|s| s.best_f).collect();
    bests.sort_by(f64::total_cmp);
    println!(
        "{}: {} instance(s), {} evaluations each; median best f = {:.6e}; wrote {}",
        summary.mode,
        bests.len(),
        a.mmax,
        bests[bests.len() / 2],
        path.display()
    );
    if let Some(t) = mean_times {
        println!(
            "mean per-iteration time: fit {:.4} s, acquisition {:.4} s",
            t.surrogate_fit_s, t.acquisition_min_s
        );
    }
    Ok(())
}

fn load_summary(path: &Path) -> std::result::Result<RunSummary, Failure> {
    let s: RunSummary = read_json(path)?;
    if s.format != SUMMARY_FORMAT {
        return Err(Error::FormatVersion {
            expected: SUMMARY_FORMAT.to_string(),
            found: s.format,
        }
        .into());
    }
    if s.instances.is_empty() {
        return Err(Failure::usage(format!(
            "{}: summary has no instances",
            path.display()
        )));
    }
    Ok(s)
}

fn load_gaps(path: &Path) -> std::result::Result<GapSampleSet, Failure> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum GapFile {
        Set(GapSampleSet),
        Plain(Vec<f64>),
    }
    let set = match read_json::<GapFile>(path)? {
        GapFile::Set(s) => s,
        GapFile::Plain(g) => GapSampleSet {
            gaps: g,
            provenance: Vec::new(),
        },
    };
    set.validate()
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    Ok(set)
}

fn gaps_from_summaries(
    full: &RunSummary,
    latent: &RunSummary,
    cfg: &GapConfig,
) -> std::result::Result<GapSampleSet, Failure> {
    if full.instances.len() != latent.instances.len() {
        return Err(Failure::usage(format!(
            "summaries cover different instance counts ({} vs {})",
            full.instances.len(),
            latent.instances.len()
        )));
    }
    let mut gaps = Vec::new();
    let mut provenance = Vec::new();
    for (f, l) in full.instances.iter().zip(&latent.instances) {
        if f.theta != l.theta {
            return Err(Failure::usage(format!(
                "instance {} has different parameters in the two summaries (use the same --seed/--stream)",
                f.index
            )));
        }
        gaps.push(performance_gap(l.best_f, f.best_f, cfg));
        let (theta_stream, full_stream) = instance_streams(full.seed, f.index);
        provenance.push(GapProvenance {
            theta_stream,
            full_stream,
            latent_stream: instance_streams(latent.seed, l.index).1,
            theta: f.theta.clone(),
            f_full: f.best_f,
            f_latent: l.best_f,
        });
    }
    Ok(GapSampleSet { gaps, provenance })
}

fn gaps_live(a: &LiveArgs, cfg: &GapConfig) -> std::result::Result<GapSampleSet, Failure> {
    let class = a.problem.build()?;
    let needs_embedding = a.latent_mode == Mode::MetaGlis || a.full_mode == Mode::MetaGlis;
    if a.full_mode == Mode::MetaGlis {
        return Err(Failure::usage(
            "--full-mode must search the full space (glis, de or pso)",
        ));
    }
    let embedding = match &a.embedding {
        Some(p) => Some(load_embedding_for(p, &class)?),
        None if needs_embedding => {
            return Err(Failure::usage(
                "--latent-mode meta-glis requires --embedding",
            ))
        }
        None => None,
    };
    let decoder: Option<&dyn Decoder> = embedding.as_ref().map(|e| e as &dyn Decoder);
    let latent_dim = decoder.map_or(class.dim_x(), |d| d.latent_dim());
    let master = a.seed.stream();
    let full = algorithm_for(
        a.full_mode,
        class.dim_x(),
        None,
        a.full_evals,
        None,
        &a.surrogate,
        master,
    )?;
    let latent = algorithm_for(
        a.latent_mode,
        latent_dim,
        None,
        a.latent_evals,
        None,
        &a.surrogate,
        master,
    )?;
    Ok(collect_gaps(
        &class,
        &full,
        &latent,
        decoder,
        a.m,
        cfg,
        master,
        SeedPolicy::Independent,
    )?)
}

fn cmd_certify(a: &CertifyArgs) -> CmdResult {
    let cfg = GapConfig::new(a.epsilon)?;
    let set = match (&a.gaps, &a.full, &a.latent, a.live) {
        (Some(p), _, _, _) => load_gaps(p)?,
        (None, Some(f), Some(l), false) => {
            gaps_from_summaries(&load_summary(f)?, &load_summary(l)?, &cfg)?
        }
        (None, None, None, true) => gaps_live(&a.live_args, &cfg)?,
        _ => {
            return Err(Failure::usage(
                "give exactly one of --gaps, --full/--latent, or --live",
            ))
        }
    };
    ensure_dir(&a.out_dir)?;
    write_file(&a.out_dir.join("gaps.json"), to_json_pretty(&set)?)?;
    let cert = certify(&set.gaps, a.alpha, a.delta)?;

    write_file(&a.out_dir.join("certificate.json"), to_json_pretty(&cert)?)?;
    let mut csv = Vec::new();
    let cdf_path = a.out_dir.join("cdf.csv");
    write_cdf_csv(&mut csv, &set.gaps).map_err(|e| io_failure(&cdf_path, e))?;
    write_file(&cdf_path, csv)?;
    println!(
        "m={} epsilon_m={:.6} k*={} bound={:.6e} (P(gap <= bound) >= {} with confidence {})",
        cert.m,
        cert.epsilon_m,
        cert.k_star,
        cert.bound,
        1.0 - cert.alpha,
        1.0 - cert.delta
    );
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> CmdResult {
    if a.summary.is_empty() && a.certificate.is_none() {
        return Err(Failure::usage(
            "nothing to plot: give --summary and/or --certificate with --gaps",
        ));
    }
    ensure_dir(&a.out_dir)?;
    if !a.summary.is_empty() {
        let bands = a
            .summary
            .iter()
            .map(|p| {
                let s = load_summary(p)?;
                Ok(svg::Band {
                    label: s.mode,
                    mean: s.curve_mean,
                    std: s.curve_std,
                })
            })
            .collect::<std::result::Result<Vec<_>, Failure>>()?;
        let path = a.out_dir.join("convergence.svg");
        write_file(
            &path,
            svg::convergence_svg(&bands).map_err(|e| Failure::usage(e.to_string()))?,
        )?;
        println!("wrote {}", path.display());
    }
    if let (Some(c), Some(g)) = (&a.certificate, &a.gaps) {
        let cert: GapCertificate = read_json(c)?;
        let set = load_gaps(g)?;
        let q = empirical_quantile(&set.gaps, 1.0 - cert.alpha)?;
        let path = a.out_dir.join("cdf.svg");
        write_file(
            &path,
            svg::cdf_svg(&set.gaps, cert.bound, q, cert.alpha)
                .map_err(|e| Failure::usage(e.to_string()))?,
        )?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
