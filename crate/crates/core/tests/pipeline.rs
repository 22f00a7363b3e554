use meta_bbo::algorithms::AlgorithmSpec;
use meta_bbo::autoencoder::{
    train, weighted_loss, AutoencoderSpec, DecoderKind, Embedding, TrainConfig,
};
use meta_bbo::bounds::{certify, collect_gaps, GapConfig, SeedPolicy};
use meta_bbo::glis::GlisConfig;
use meta_bbo::metadataset::{build_meta_dataset, split_meta_dataset, MetaDataset};
use meta_bbo::problems::rosenbrock_class;
use meta_bbo::sampling::RngStream;
use meta_bbo::solvers::{DeConfig, EvalBudget, SolverSpec, DEDUP_TOL};

fn small_dataset() -> MetaDataset {
    let class = rosenbrock_class(4, 2.5).unwrap();
    let solver = SolverSpec::De(DeConfig::for_dim(4, EvalBudget::generations(30)));
    build_meta_dataset(&class, 6, 20, &solver, RngStream::new(11, 0), DEDUP_TOL).unwrap()
}

#[test]
fn dataset_embedding_round_trip() {
    let ds = small_dataset();
    let dir = tempfile::tempdir().unwrap();
    for name in ["ds.json", "ds.json.gz"] {
        let p = dir.path().join(name);
        ds.save(&p).unwrap();
        assert_eq!(MetaDataset::load(&p).unwrap(), ds);
    }
    let (train_ds, test_ds) = split_meta_dataset(&ds, 0.5, RngStream::new(1, 0)).unwrap();
    assert_eq!(
        train_ds.instances.len() + test_ds.instances.len(),
        ds.instances.len()
    );

    for decoder in [DecoderKind::Mlp, DecoderKind::Linear] {
        let spec = AutoencoderSpec {
            hidden: vec![16],
            decoder,
            ..AutoencoderSpec::new(ds.domain().clone(), 2)
        };
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 32,
            ..TrainConfig::new(RngStream::new(2, 0))
        };
        let (e, hist) = train(&spec, &train_ds, &cfg).unwrap();
        assert!(hist.losses.last().unwrap() <= &hist.losses[0]);
        let p = dir.path().join("ae.json");
        e.save(&p).unwrap();
        let back = Embedding::load(&p).unwrap();
        assert_eq!(back, e);
        assert_eq!(
            weighted_loss(&back, &train_ds, 0.5).unwrap(),
            weighted_loss(&e, &train_ds, 0.5).unwrap()
        );
    }
}

#[test]
fn common_seeds_give_zero_gaps() {
    let class = rosenbrock_class(3, 2.0).unwrap();
    let spec = AlgorithmSpec::Glis(GlisConfig::new(4, 8, RngStream::new(0, 0)));
    let cfg = GapConfig::default();
    let set = collect_gaps(
        &class,
        &spec,
        &spec,
        None,
        200,
        &cfg,
        RngStream::new(5, 0),
        SeedPolicy::Common,
    )
    .unwrap();
    assert!(set.gaps.iter().all(|&g| g == 0.0));
    let cert = certify(&set.gaps, 0.1, 0.05).unwrap();
    assert_eq!(cert.bound, 0.0);

    let indep = collect_gaps(
        &class,
        &spec,
        &spec,
        None,
        20,
        &cfg,
        RngStream::new(5, 0),
        SeedPolicy::Independent,
    )
    .unwrap();
    assert!(indep.gaps.iter().any(|&g| g != 0.0));
    assert_eq!(indep.provenance.len(), 20);
}
