//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.
//!
//! `cargo test --test acceptance` runs everything; trailing numeric arguments
//! (e.g. `-- 3 8`) restrict the run to those criteria.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use meta_bbo::algorithms::AlgorithmSpec;
use meta_bbo::autoencoder::{
    gradient_check, rank_weights, train, Activation, AutoencoderSpec, Embedding, FlipLayerSign,
    TrainConfig, WeightedSample,
};
use meta_bbo::bounds::{
    certify, coverage_monte_carlo, empirical_cdf, epsilon_m, order_statistic, StandardNormal,
};
use meta_bbo::glis::GlisConfig;
use meta_bbo::metadataset::build_meta_dataset;
use meta_bbo::problems::{rosenbrock_class, rosenbrock_eval, BoxDomain, RosenbrockParams};
use meta_bbo::sampling::RngStream;
use meta_bbo::solvers::{de_minimize, DeConfig, EvalBudget, SolverSpec, DEDUP_TOL};
use meta_bbo::surrogate::{acquisition, fit_surrogate, idw_exploration, KernelFamily, KernelSpec};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Outcome);

fn check(pass: bool, detail: String) -> Outcome {
    if pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn lib<T>(r: meta_bbo::Result<T>) -> Result<T, String> {
    r.map_err(|e| format!("error: {e}"))
}

// --- 1: coverage of the certified bound on a known distribution --------------

fn coverage() -> Outcome {
    let gaps: Vec<f64> = (0..1000).map(f64::from).collect();
    let cert = lib(certify(&gaps, 0.1, 0.05))?;
    let cov = lib(coverage_monte_carlo(
        &StandardNormal,
        1000,
        0.1,
        0.05,
        500,
        RngStream::new(1, 0),
    ))?;
    check(
        cov >= 0.93 && cert.k_star == 943,
        format!(
            "coverage {cov:.3} (need >= 0.93), k* = {} (need 943)",
            cert.k_star
        ),
    )
}

// --- 2: DKW-Massart radius and the sample-size guard --------------------------

fn radius_and_guard() -> Outcome {
    let eps = lib(epsilon_m(1000, 0.05))?;
    let small = certify(&vec![0.0; 100], 0.1, 0.1);
    check(
        (eps - 0.042947).abs() <= 1e-6 && small.is_err(),
        format!(
            "eps_m(1000, 0.05) = {eps:.7} (want 0.042947 +- 1e-6); m=100, alpha=0.1, delta=0.1 rejected: {}",
            small.is_err()
        ),
    )
}

// --- 3: near-interpolation of the ridge RBF fit -----------------------------

fn interpolation() -> Outcome {
    let mut rng = RngStream::new(3, 0).rng();
    let points: Vec<Vec<f64>> = (0..10)
        .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
        .collect();
    let values: Vec<f64> = (0..10).map(|_| rng.random::<f64>()).collect();
    let scale = 1.0 + values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-6 * scale;
    let mut pass = true;
    let mut parts = Vec::new();
    for family in [
        KernelFamily::InverseQuadratic,
        KernelFamily::SquaredExponential,
    ] {
        let kernel = lib(KernelSpec::new(family, 1.0, 1e-8))?;
        let s = lib(fit_surrogate(&points, &values, kernel))?;
        let resid = points
            .iter()
            .zip(&values)
            .map(|(p, v)| (s.eval(p) - v).abs())
            .fold(0.0, f64::max);
        pass &= resid <= tol;
        parts.push(format!("{family:?} max residual {resid:.2e}"));
    }
    check(pass, format!("{} (tol {tol:.2e})", parts.join(", ")))
}

// --- 4: autoencoder gradient check + negative control -----------------------

fn tiny_check(seed: u64) -> meta_bbo::Result<(f64, f64)> {
    let domain = BoxDomain::symmetric(4, 1.0)?;
    let mut spec = AutoencoderSpec::new(domain, 2);
    spec.hidden = vec![8];
    spec.activation = Activation::Tanh;
    let e = Embedding::init(&spec, &mut RngStream::new(seed, 0).rng())?;
    let mut rng = RngStream::new(seed, 1).rng();
    let xs: Vec<Vec<f64>> = (0..12)
        .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let f: Vec<f64> = xs.iter().map(|x| x.iter().map(|v| v * v).sum()).collect();
    let samples: Vec<WeightedSample> = xs
        .into_iter()
        .zip(rank_weights(&f, 0.5))
        .map(|(x, weight)| WeightedSample { x, weight })
        .collect();
    Ok((
        gradient_check(&e, &samples, None)?,
        gradient_check(&e, &samples, Some(FlipLayerSign(0)))?,
    ))
}

fn gradients() -> Outcome {
    let (err, flipped) = lib(tiny_check(0))?;
    let passing = (0..100)
        .map(tiny_check)
        .collect::<meta_bbo::Result<Vec<_>>>()
        .map_err(|e| format!("error: {e}"))?
        .into_iter()
        .filter(|(e, _)| *e < 1e-5)
        .count();
    check(
        err < 1e-5 && flipped > 0.1,
        format!("max rel err {err:.2e} (need < 1e-5), sign-flipped {flipped:.2e} (need > 0.1); {passing}/100 inits pass"),
    )
}

// --- 5: Rosenbrock evaluator and DE sanity ----------------------------------

fn rosenbrock_sanity() -> Outcome {
    let one = lib(rosenbrock_eval(&[1.0; 10], &RosenbrockParams::nominal(10)))?;
    let domain = lib(BoxDomain::symmetric(2, 2.5))?;
    let params = RosenbrockParams::nominal(2);
    let cfg = DeConfig {
        pop_size: 40,
        ..DeConfig::for_dim(2, EvalBudget::generations(200))
    };
    let mut best = Vec::new();
    for seed in 0..10 {
        let e = lib(de_minimize(
            |x| rosenbrock_eval(x, &params).unwrap(),
            &domain,
            &cfg,
            &mut RngStream::new(seed, 0).rng(),
        ))?;
        best.push(e.f);
    }
    let hits = best.iter().filter(|&&f| f < 1e-3).count();
    let worst = best.iter().cloned().fold(0.0, f64::max);
    check(
        one == 0.0 && hits >= 9,
        format!("f(1; nominal) = {one}; DE below 1e-3 on {hits}/10 seeds (worst {worst:.2e})"),
    )
}

// --- 6 & 7: Meta-GLIS vs GLIS in 10-D, and decoder containment ---------------

// Default is 2000; 300 gives the same verdict at a seventh of the cost.
const AE_EPOCHS: usize = 300;

struct Comparison {
    meta: Vec<f64>,
    glis: Vec<f64>,
    contained: usize,
    consistent: usize,
    steps: usize,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

fn compare() -> meta_bbo::Result<Comparison> {
    let class = rosenbrock_class(10, 2.5)?;
    let domain = class.domain().clone();
    let solver = SolverSpec::De(DeConfig::for_dim(10, EvalBudget::generations(200)));
    let ds = build_meta_dataset(&class, 50, 200, &solver, RngStream::new(6, 0), DEDUP_TOL)?;
    let spec = AutoencoderSpec::new(domain.clone(), 3);
    let cfg = TrainConfig {
        lambda: 0.5,
        epochs: AE_EPOCHS,
        ..TrainConfig::new(RngStream::new(6, 1))
    };
    let (emb, _) = train(&spec, &ds, &cfg)?;

    let meta_spec = AlgorithmSpec::Glis(GlisConfig::new(6, 30, RngStream::new(0, 0)));
    let glis_spec = AlgorithmSpec::Glis(GlisConfig::new(20, 100, RngStream::new(0, 0)));
    let master = RngStream::new(6, 2);
    let mut out = Comparison {
        meta: Vec::new(),
        glis: Vec::new(),
        contained: 0,
        consistent: 0,
        steps: 0,
    };
    for i in 0..20 {
        let inst = master.substream(i);
        let theta = class.sample_params(&mut inst.substream(0).rng());
        let f = class.instance(&theta)?;
        let m = meta_spec.run(&f, &domain, Some(&emb), inst.substream(1))?;
        let g = glis_spec.run(&f, &domain, None, inst.substream(2))?;
        for s in &m.trace {
            out.steps += 1;
            out.contained += usize::from(domain.contains(&s.x));
            out.consistent += usize::from(s.z.as_ref().is_some_and(|z| emb.decode(z) == s.x));
        }
        out.meta.push(m.best_f);
        out.glis.push(g.best_f);
    }
    Ok(out)
}

fn meta_vs_glis(c: &Comparison) -> Outcome {
    let (mm, gm) = (median(&c.meta), median(&c.glis));
    let wins = c.meta.iter().zip(&c.glis).filter(|(m, g)| m < g).count();
    let n = c.meta.len();
    check(
        mm < gm && wins * 10 >= n * 7,
        format!("median best f: meta-glis(30) {mm:.4e} vs glis(100) {gm:.4e}; meta-glis wins {wins}/{n} (need >= 70%)"),
    )
}

fn containment(c: &Comparison) -> Outcome {
    check(
        c.contained == c.steps && c.consistent == c.steps,
        format!(
            "{}/{} latent evaluations inside the box, {}/{} equal decode(z)",
            c.contained, c.steps, c.consistent, c.steps
        ),
    )
}

// --- 8: exploration and acquisition values -----------------------------------

fn exploration() -> Outcome {
    let lone = vec![vec![0.5, 0.5]];
    let h_at = idw_exploration(&lone, &[0.5, 0.5]);
    let h_unit = idw_exploration(&lone, &[1.5, 0.5]);
    let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
    let s = lib(fit_surrogate(
        &pts,
        &[1.0, 2.0, 3.0],
        lib(KernelSpec::new(KernelFamily::InverseQuadratic, 1.0, 1e-6))?,
    ))?;
    let z = [0.3, 0.4];
    let a0 = acquisition(&s, &pts, 0.0, &z);
    let gap = (a0 - s.eval(&z)).abs();
    check(
        h_at == 0.0 && (h_unit - 0.5).abs() <= 1e-12 && gap <= 1e-12,
        format!("h(sample) = {h_at}, h(unit distance) = {h_unit:.15}, |a - f_hat| at delta=0: {gap:.1e}"),
    )
}

// --- 9: byte-identical reruns through the CLI --------------------------------

fn cli_pipeline(dir: &Path) -> Result<(), String> {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let steps: Vec<Vec<String>> = vec![
        vec![
            "gen-meta",
            "--nx",
            "4",
            "--N",
            "4",
            "--K",
            "10",
            "--generations",
            "20",
            "--seed",
            "9",
            "--out",
        ]
        .into_iter()
        .map(String::from)
        .chain([p("ds.json")])
        .collect(),
        [
            "train-ae",
            "--nz",
            "2",
            "--epochs",
            "20",
            "--hidden",
            "8",
            "--grad-check-params",
            "10",
            "--seed",
            "9",
        ]
        .into_iter()
        .map(String::from)
        .chain(["--data".into(), p("ds.json"), "--out".into(), p("ae.json")])
        .collect(),
        [
            "run",
            "--mode",
            "meta-glis",
            "--nx",
            "4",
            "--instances",
            "2",
            "--mmax",
            "10",
            "--seed",
            "9",
        ]
        .into_iter()
        .map(String::from)
        .chain([
            "--embedding".into(),
            p("ae.json"),
            "--out-dir".into(),
            p("run"),
        ])
        .collect(),
        [
            "certify",
            "--live",
            "--nx",
            "4",
            "--m",
            "30",
            "--alpha",
            "0.3",
            "--full-evals",
            "40",
            "--latent-evals",
            "10",
            "--seed",
            "9",
        ]
        .into_iter()
        .map(String::from)
        .chain([
            "--embedding".into(),
            p("ae.json"),
            "--out-dir".into(),
            p("cert"),
        ])
        .collect(),
    ];
    for args in steps {
        let code =
            meta_bbo::cli::run(std::iter::once("meta-bbo".to_string()).chain(args.iter().cloned()));
        if code != 0 {
            return Err(format!("`{}` exited {code}", args[0]));
        }
    }
    Ok(())
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap().map(|e| e.unwrap().path()) {
            if entry.is_dir() {
                stack.push(entry);
            } else {
                let rel = entry
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.push((rel, std::fs::read(&entry).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    cli_pipeline(a.path())?;
    cli_pipeline(b.path())?;
    let (fa, fb) = (files(a.path()), files(b.path()));
    let differing: Vec<&str> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    check(
        fa.len() == fb.len() && differing.is_empty() && fa.len() >= 6,
        format!(
            "{} output files compared, {} differ {:?}",
            fa.len(),
            differing.len(),
            differing
        ),
    )
}

// --- 10: empirical CDF and order statistic -----------------------------------

fn ecdf() -> Outcome {
    let g = [0.5, -0.2, 0.9, 0.1];
    let got = [
        lib(empirical_cdf(&g, -0.3))?,
        lib(empirical_cdf(&g, 0.1))?,
        lib(empirical_cdf(&g, 0.5))?,
        lib(empirical_cdf(&g, 1.0))?,
    ];
    let kth = lib(order_statistic(&g, 3))?;
    check(
        got == [0.0, 0.5, 0.75, 1.0] && kth == 0.5,
        format!("F_m at -0.3, 0.1, 0.5, 1.0 = {got:?}; 3rd order statistic = {kth}"),
    )
}

fn report(id: usize, name: &str, started: Instant, outcome: &Outcome) -> bool {
    let secs = started.elapsed().as_secs_f64();
    let (tag, detail) = match outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("{tag} [{id:2}] {name}: {detail} ({secs:.1}s)");
    outcome.is_ok()
}

fn main() -> ExitCode {
    let wanted: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let on = |id: usize| wanted.is_empty() || wanted.contains(&id);
    let simple: [Criterion; 8] = [
        (1, "bound coverage", coverage),
        (2, "DKW radius and guard", radius_and_guard),
        (3, "surrogate interpolation", interpolation),
        (4, "autoencoder gradients", gradients),
        (5, "rosenbrock and DE", rosenbrock_sanity),
        (8, "exploration term", exploration),
        (9, "deterministic reruns", determinism),
        (10, "empirical CDF", ecdf),
    ];
    let mut all_ok = true;
    for (id, name, f) in simple.iter().filter(|(id, ..)| on(*id) && *id < 6) {
        let t = Instant::now();
        all_ok &= report(*id, name, t, &f());
    }
    if on(6) || on(7) {
        let t = Instant::now();
        match compare() {
            Ok(c) => {
                if on(6) {
                    all_ok &= report(6, "meta-glis beats glis", t, &meta_vs_glis(&c));
                }
                if on(7) {
                    all_ok &= report(7, "decoder containment", t, &containment(&c));
                }
            }
            Err(e) => {
                for (id, name) in [(6, "meta-glis beats glis"), (7, "decoder containment")] {
                    if on(id) {
                        all_ok &= report(id, name, t, &Err(format!("error: {e}")));
                    }
                }
            }
        }
    }
    for (id, name, f) in simple.iter().filter(|(id, ..)| on(*id) && *id > 7) {
        let t = Instant::now();
        all_ok &= report(*id, name, t, &f());
    }
    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
