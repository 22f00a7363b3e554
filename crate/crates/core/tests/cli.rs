use std::path::Path;

use meta_bbo::bounds::GapSampleSet;
use meta_bbo::metadataset::MetaDataset;

fn run(args: &[&str]) -> i32 {
    meta_bbo::cli::run(std::iter::once("meta-bbo").chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&[]), 2);
    assert_eq!(run(&["frobnicate"]), 2);
    assert_eq!(
        run(&["gen-meta", "--problem", "nope", "--out", "/dev/null"]),
        2
    );
    assert_eq!(run(&["train-ae", "--data", "/definitely/missing.json"]), 2);
    // nothing to plot
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["report", "--out-dir", s(dir.path())]), 2);
}

#[test]
fn too_few_gaps_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let gaps = dir.path().join("g.json");
    std::fs::write(&gaps, serde_json::to_string(&vec![0.0; 100]).unwrap()).unwrap();
    let out = dir.path().join("out");
    let code = run(&[
        "certify",
        "--gaps",
        s(&gaps),
        "--alpha",
        "0.1",
        "--delta",
        "0.1",
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(code, 3);
    assert!(!out.join("certificate.json").exists());
}

#[test]
fn certify_from_gap_file_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let gaps = dir.path().join("g.json");
    let values: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
    std::fs::write(&gaps, serde_json::to_string(&values).unwrap()).unwrap();
    let out = dir.path().join("out");
    assert_eq!(
        run(&["certify", "--gaps", s(&gaps), "--out-dir", s(&out)]),
        0
    );
    let cert: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("certificate.json")).unwrap())
            .unwrap();
    assert_eq!(cert["k_star"], 943);
    assert!((cert["bound"].as_f64().unwrap() - 0.942).abs() < 1e-12);
    let set: GapSampleSet =
        serde_json::from_str(&std::fs::read_to_string(out.join("gaps.json")).unwrap()).unwrap();
    assert_eq!(set.gaps, values);
    let csv = std::fs::read_to_string(out.join("cdf.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,ecdf"));
    assert_eq!(csv.lines().count(), 1001);

    let plots = dir.path().join("plots");
    let code = run(&[
        "report",
        "--certificate",
        s(&out.join("certificate.json")),
        "--gaps",
        s(&out.join("gaps.json")),
        "--out-dir",
        s(&plots),
    ]);
    assert_eq!(code, 0);
    assert!(std::fs::read_to_string(plots.join("cdf.svg"))
        .unwrap()
        .starts_with("<svg"));
}

#[test]
fn gzipped_dataset_and_glis_run() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds.json.gz");
    let code = run(&[
        "gen-meta",
        "--nx",
        "3",
        "--N",
        "3",
        "--K",
        "5",
        "--generations",
        "10",
        "--solver",
        "pso",
        "--out",
        s(&ds),
    ]);
    assert_eq!(code, 0);
    assert_eq!(&std::fs::read(&ds).unwrap()[..2], &[0x1f, 0x8b]);
    let loaded = MetaDataset::load(&ds).unwrap();
    assert_eq!((loaded.n, loaded.k, loaded.n_x), (3, 5, 3));

    let out = dir.path().join("glis");
    let code = run(&[
        "run",
        "--mode",
        "glis",
        "--nx",
        "3",
        "--instances",
        "2",
        "--mmax",
        "12",
        "--timings",
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(code, 0);
    let trace = std::fs::read_to_string(out.join("trace_001.csv")).unwrap();
    assert_eq!(
        trace.lines().next(),
        Some("iter,x1,x2,x3,f,best_f,t_fit_s,t_acq_s")
    );
    assert_eq!(trace.lines().count(), 13);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["instances"].as_array().unwrap().len(), 2);
    assert_eq!(summary["curve_mean"].as_array().unwrap().len(), 12);
}

#[test]
fn meta_glis_without_embedding_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(&["run", "--mode", "meta-glis", "--out-dir", s(dir.path())]),
        2
    );
}
