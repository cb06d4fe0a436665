use std::fs;

use gnnstat::bench::config::{ExperimentConfig, RegimePoint, SketchDim, SplitRegime};
use gnnstat::bench::output::{read_summary, summary_rows, write_results};
use gnnstat::bench::runner::{curves, run_trial_models, sweep_features, sweep_fraction};
use gnnstat::bench::{ci95, run_experiment, run_experiment_on, run_trial, PreparedDataset, RunOptions, Sweep};
use gnnstat::data::{generate_synthetic, save_dataset, SyntheticSpec};
use gnnstat::models::{ModelKind, ModelSpec};
use gnnstat::nn::TrainConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn prepared() -> PreparedDataset {
    let spec = SyntheticSpec {
        n_per_class: 40,
        ..SyntheticSpec::default()
    };
    PreparedDataset::new(generate_synthetic(&spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap())
}

fn quick_train() -> TrainConfig {
    TrainConfig {
        max_epochs: 60,
        patience: 20,
        ..TrainConfig::default()
    }
}

fn config(models: &[ModelKind], n_trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        datasets: vec![],
        models: models.iter().map(|&k| ModelSpec::new(k)).collect(),
        regime: SplitRegime::fraction(vec![0.5]),
        sketch_dims: vec![SketchDim::Raw, SketchDim::Dim(8)],
        n_trials,
        base_seed: 100,
        train: quick_train(),
    }
}

const POINT: RegimePoint = RegimePoint::Fraction {
    frac_observed: 0.5,
    val_frac_of_observed: 0.2,
};

#[test]
fn ci95_hand_cases() {
    assert_eq!(ci95(&[1.0, 1.0, 1.0, 1.0]), (1.0, Some(0.0)));
    let (m, h) = ci95(&[0.0, 2.0]);
    assert_eq!(m, 1.0);
    assert!((h.unwrap() - 1.96).abs() < 1e-12);
    assert_eq!(ci95(&[0.7]), (0.7, None));
}

#[test]
fn run_trial_is_deterministic_and_reuses_split() {
    let p = prepared();
    let spec = ModelSpec::new(ModelKind::Sgc);
    let a = run_trial(&p, &spec, POINT, SketchDim::Dim(8), 7, 3, &quick_train()).unwrap();
    let b = run_trial(&p, &spec, POINT, SketchDim::Dim(8), 7, 3, &quick_train()).unwrap();
    assert_eq!(a, b);

    let models: Vec<ModelSpec> = ModelKind::ALL.iter().map(|&k| ModelSpec::new(k)).collect();
    let recs = run_trial_models(&p, &models, POINT, SketchDim::Dim(8), 7, 3, &quick_train());
    assert_eq!(recs.len(), 5);
    assert!(recs.iter().all(|r| r.n_observed == recs[0].n_observed && r.seed == 10));
    assert_eq!(recs[1].accuracy, Ok(a));
    assert!((recs[0].ratio - 60.0 / 8.0).abs() < 1e-12);
}

#[test]
fn sgc_k0_matches_logistic_regression_trial() {
    let p = prepared();
    let sgc0 = ModelSpec {
        k_hops: 0,
        ..ModelSpec::new(ModelKind::Sgc)
    };
    let appnp1 = ModelSpec {
        alpha: 1.0,
        ..ModelSpec::new(ModelKind::Appnp)
    };
    let a = run_trial(&p, &sgc0, POINT, SketchDim::Raw, 1, 0, &quick_train()).unwrap();
    let b = run_trial(&p, &appnp1, POINT, SketchDim::Raw, 1, 0, &quick_train()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn experiment_counts_and_isolation() {
    let p = [prepared()];
    let cfg = config(&[ModelKind::Sgc, ModelKind::Gcn], 4);
    let res = run_experiment_on(&p, &cfg, RunOptions::default()).unwrap();
    assert_eq!(res.summaries.len(), 4);
    assert_eq!(res.trials.len(), 16);
    for (_, s) in &res.summaries {
        assert_eq!(s.n + s.failures, 4);
        assert!(s.ci95.is_some());
    }
    let keys: Vec<_> = res.summaries.iter().map(|(k, _)| k.clone()).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);

    // Extra trials never change the earlier ones.
    let more = run_experiment_on(&p, &config(&[ModelKind::Sgc, ModelKind::Gcn], 6), RunOptions::default()).unwrap();
    for t in &res.trials {
        assert!(more.trials.contains(t));
    }

    let single = run_experiment_on(&p, &config(&[ModelKind::Sgc], 1), RunOptions::default()).unwrap();
    assert!(single.summaries.iter().all(|(_, s)| s.ci95.is_none()));
}

#[test]
fn thread_count_does_not_change_results() {
    let p = [prepared()];
    let cfg = config(&[ModelKind::Appnp, ModelKind::SgcMlp], 3);
    let one = run_experiment_on(
        &p,
        &cfg,
        RunOptions {
            threads: 1,
            ..RunOptions::default()
        },
    )
    .unwrap();
    let four = run_experiment_on(
        &p,
        &cfg,
        RunOptions {
            threads: 4,
            ..RunOptions::default()
        },
    )
    .unwrap();
    assert_eq!(one, four);
}

#[test]
fn failed_trials_are_recorded() {
    let p = [prepared()];
    let mut cfg = config(&[ModelKind::Sgc], 2);
    cfg.regime = SplitRegime::per_class(45);
    let err = run_experiment_on(&p, &cfg, RunOptions::default()).unwrap_err();
    assert!(matches!(err, gnnstat::Error::AllTrialsFailed(_)), "{err}");
}

#[test]
fn results_write_and_parse_back() {
    let p = [prepared()];
    let res = run_experiment_on(&p, &config(&[ModelKind::Sgc], 2), RunOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_results(&res, dir.path()).unwrap();
    let rows = read_summary(dir.path().join("summary.csv")).unwrap();
    let expected = summary_rows(&res);
    assert_eq!(rows.len(), expected.len());
    for (r, e) in rows.iter().zip(&expected) {
        assert_eq!(
            (&r.dataset, &r.model, r.sketch_dim, r.frac_observed),
            (&e.dataset, &e.model, e.sketch_dim, e.frac_observed)
        );
        assert!((r.mean_acc - e.mean_acc).abs() <= 5e-5);
    }
    let raw = fs::read_to_string(dir.path().join("raw_trials.csv")).unwrap();
    assert_eq!(raw.lines().count(), 1 + res.trials.len());
    assert!(raw.lines().nth(1).unwrap().starts_with("synthetic,SGC,8,0.5,,0,100,"));
}

#[test]
fn sweeps_produce_curves() {
    let p = [prepared()];
    let cfg = config(&[ModelKind::Sgc, ModelKind::Gcn], 2);
    let f = sweep_features(&p, &cfg, &[4, 8, 32], 0.5, 0).unwrap();
    let c = curves(&f, Sweep::Features);
    let pts = &c["synthetic"];
    // 32 exceeds the 16 raw features and is skipped.
    assert_eq!(
        pts.iter().map(|p| p.sweep_value).collect::<Vec<_>>(),
        vec![4.0, 4.0, 8.0, 8.0]
    );

    let single = run_experiment_on(
        &p,
        &ExperimentConfig {
            sketch_dims: vec![SketchDim::Dim(8)],
            ..cfg.clone()
        },
        RunOptions::default(),
    )
    .unwrap();
    for (key, stat) in &single.summaries {
        assert_eq!(f.get(key), Some(stat));
    }

    let r = sweep_fraction(&p, &cfg, &[0.2, 0.5], SketchDim::Dim(8), 0).unwrap();
    let c = curves(&r, Sweep::Fraction);
    assert_eq!(c["synthetic"].len(), 4);
}

#[test]
fn config_files_resolve_and_reject_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate_synthetic(&SyntheticSpec::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    save_dataset(&ds, dir.path().join("syn")).unwrap();
    let body = r#"{
        "datasets": ["syn"],
        "models": [{"kind": "SGC"}, {"kind": "APPNP_MLP", "hidden_dim": 16}],
        "regime": {"per_class": {"n_per_class": 5, "n_val": 30}},
        "sketch_dims": ["raw", 8],
        "n_trials": 2,
        "train": {"max_epochs": 30}
    }"#;
    fs::write(dir.path().join("cfg.json"), body).unwrap();
    let cfg = ExperimentConfig::from_file(dir.path().join("cfg.json")).unwrap();
    assert_eq!(cfg.datasets[0], dir.path().join("syn"));
    assert_eq!(cfg.train.learning_rate, 0.01);
    let res = run_experiment(&cfg, RunOptions::default()).unwrap();
    assert_eq!(res.summaries.len(), 4);
    assert!(res.trials.iter().all(|t| t.n_observed == 45));

    let bad = body.replace("\"n_trials\"", "\"trials\"");
    assert!(ExperimentConfig::from_json(&bad).is_err());
    let zero = body.replace("\"n_trials\": 2", "\"n_trials\": 0");
    assert!(ExperimentConfig::from_json(&zero).is_err());
}
