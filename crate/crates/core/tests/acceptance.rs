//! End-to-end acceptance checks, one line per criterion.
//!
//! Citation datasets are read from `$GNNSTAT_DATA/{cora,citeseer,pubmed}`
//! (default: `data/` at the workspace root) in the plain-text layout that
//! `load_dataset` reads.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use gnnstat::bench::config::{ExperimentConfig, SketchDim, SplitRegime};
use gnnstat::bench::runner::{load_datasets, run_experiment_on, ExperimentResult, PreparedDataset, RunOptions};
use gnnstat::bench::SummaryStat;
use gnnstat::data::{generate_synthetic, save_dataset, SyntheticSpec};
use gnnstat::models::{ModelKind, ModelSpec};
use gnnstat::nn::TrainConfig;
use gnnstat::selftest::run_selftest;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TRIALS: usize = 40;

type Outcome = Result<String, String>;

fn data_root() -> PathBuf {
    std::env::var_os("GNNSTAT_DATA").map(PathBuf::from).unwrap_or_else(|| {
        let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
        manifest.ancestors().nth(2).unwrap_or(manifest).join("data")
    })
}

fn load(name: &str) -> Result<PreparedDataset, String> {
    let dir = data_root().join(name);
    if !dir.join("meta.json").exists() {
        return Err(format!("dataset not found at {}", dir.display()));
    }
    let cfg = ExperimentConfig {
        datasets: vec![dir],
        ..base_config(&[ModelKind::Sgc])
    };
    let mut v = load_datasets(&cfg).map_err(|e| e.to_string())?;
    Ok(v.remove(0))
}

fn base_config(models: &[ModelKind]) -> ExperimentConfig {
    ExperimentConfig {
        datasets: vec![PathBuf::from("unused")],
        models: models.iter().map(|&k| ModelSpec::new(k)).collect(),
        regime: SplitRegime::fraction(vec![0.5]),
        sketch_dims: vec![SketchDim::Dim(300)],
        n_trials: TRIALS,
        base_seed: 0,
        train: TrainConfig::default(),
    }
}

fn run(ds: &PreparedDataset, cfg: &ExperimentConfig) -> Result<ExperimentResult, String> {
    run_experiment_on(std::slice::from_ref(ds), cfg, RunOptions::default()).map_err(|e| e.to_string())
}

fn cell<'a>(
    r: &'a ExperimentResult,
    ds: &PreparedDataset,
    kind: ModelKind,
    dim: SketchDim,
    frac: Option<f64>,
) -> Result<&'a SummaryStat, String> {
    r.find(ds.name(), kind.as_str(), dim, frac)
        .ok_or_else(|| format!("no cell for {} {kind} {dim}", ds.name()))
}

fn pct(s: &SummaryStat) -> String {
    format!("{:.1}±{:.1}", 100.0 * s.mean, 100.0 * s.ci95.unwrap_or(f64::NAN))
}

fn within(s: &SummaryStat, target: f64, tol: f64) -> bool {
    (100.0 * s.mean - target).abs() <= tol
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// D'=300, half the nodes observed.
fn sketched_half() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    let d300 = SketchDim::Dim(300);

    let pubmed = load("pubmed")?;
    let r = run(&pubmed, &base_config(&[ModelKind::Sgc, ModelKind::AppnpMlp]))?;
    let sgc = cell(&r, &pubmed, ModelKind::Sgc, d300, Some(0.5))?;
    let am = cell(&r, &pubmed, ModelKind::AppnpMlp, d300, Some(0.5))?;
    ok &= within(sgc, 76.3, 3.0) && within(am, 84.0, 3.0) && am.mean - sgc.mean >= 0.04;
    details.push(format!("pubmed SGC {} APPNP_MLP {}", pct(sgc), pct(am)));

    let cora = load("cora")?;
    let r = run(&cora, &base_config(&[ModelKind::Gcn, ModelKind::Sgc, ModelKind::Appnp]))?;
    let gcn = cell(&r, &cora, ModelKind::Gcn, d300, Some(0.5))?;
    let sgc = cell(&r, &cora, ModelKind::Sgc, d300, Some(0.5))?;
    let appnp = cell(&r, &cora, ModelKind::Appnp, d300, Some(0.5))?;
    ok &= gcn.mean - sgc.mean >= 0.06 && within(appnp, 82.3, 3.0);
    details.push(format!("cora GCN {} SGC {} APPNP {}", pct(gcn), pct(sgc), pct(appnp)));

    let citeseer = load("citeseer")?;
    let r = run(&citeseer, &base_config(&ModelKind::ALL))?;
    let appnp = cell(&r, &citeseer, ModelKind::Appnp, d300, Some(0.5))?;
    let best = r
        .summaries
        .iter()
        .map(|(_, s)| s)
        .max_by(|a, b| a.mean.total_cmp(&b.mean))
        .ok_or("no citeseer cells")?;
    ok &= appnp.mean >= best.mean || appnp.overlaps(best);
    details.push(format!("citeseer APPNP {} best {}", pct(appnp), pct(best)));
    verdict(ok, details.join("; "))
}

/// 20 observed nodes per class on raw features.
fn label_scarce() -> Outcome {
    let cora = load("cora")?;
    let cfg = ExperimentConfig {
        regime: SplitRegime::per_class(20),
        sketch_dims: vec![SketchDim::Raw],
        ..base_config(&[ModelKind::Gcn, ModelKind::Sgc])
    };
    let r = run(&cora, &cfg)?;
    let gcn = cell(&r, &cora, ModelKind::Gcn, SketchDim::Raw, None)?;
    let sgc = cell(&r, &cora, ModelKind::Sgc, SketchDim::Raw, None)?;
    verdict(
        within(gcn, 79.4, 2.0) && within(sgc, 80.2, 2.0) && (gcn.mean - sgc.mean).abs() <= 0.02,
        format!("cora GCN {} SGC {}", pct(gcn), pct(sgc)),
    )
}

/// The GCN advantage shrinks as the sketch dimension grows.
fn feature_trend() -> Outcome {
    let cora = load("cora")?;
    let (small, large) = (SketchDim::Dim(100), SketchDim::Dim(3000));
    let cfg = ExperimentConfig {
        sketch_dims: vec![small, large],
        ..base_config(&[ModelKind::Gcn, ModelKind::Sgc])
    };
    let r = run(&cora, &cfg)?;
    let gap = |d| -> Result<(f64, bool), String> {
        let g = cell(&r, &cora, ModelKind::Gcn, d, Some(0.5))?;
        let s = cell(&r, &cora, ModelKind::Sgc, d, Some(0.5))?;
        Ok((g.mean - s.mean, !g.overlaps(s)))
    };
    let (gap_small, separated) = gap(small)?;
    let (gap_large, _) = gap(large)?;
    verdict(
        gap_small - gap_large >= 0.03 && separated,
        format!(
            "gap at D'=100 {:.1} (CIs disjoint: {separated}), at D'=3000 {:.1}",
            100.0 * gap_small,
            100.0 * gap_large
        ),
    )
}

/// The GCN advantage grows with the observed fraction.
fn fraction_trend() -> Outcome {
    let cora = load("cora")?;
    let cfg = ExperimentConfig {
        regime: SplitRegime::fraction(vec![0.05, 0.5]),
        ..base_config(&[ModelKind::Gcn, ModelKind::Sgc])
    };
    let r = run(&cora, &cfg)?;
    let d = SketchDim::Dim(300);
    let gap = |f| -> Result<f64, String> {
        Ok(cell(&r, &cora, ModelKind::Gcn, d, Some(f))?.mean - cell(&r, &cora, ModelKind::Sgc, d, Some(f))?.mean)
    };
    let (lo, hi) = (gap(0.05)?, gap(0.5)?);
    verdict(
        hi > lo,
        format!("gap at frac=0.05 {:.1}, at frac=0.5 {:.1}", 100.0 * lo, 100.0 * hi),
    )
}

fn oracle_suite() -> Outcome {
    let start = Instant::now();
    let reports = run_selftest(0);
    let elapsed = start.elapsed();
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{}: {}", r.name, r.detail))
        .collect();
    verdict(
        failed.is_empty() && elapsed < Duration::from_secs(300),
        if failed.is_empty() {
            format!("{} checks in {:.1}s", reports.len(), elapsed.as_secs_f64())
        } else {
            failed.join("; ")
        },
    )
}

fn synthetic_dir(root: &Path) -> Result<PathBuf, String> {
    let ds =
        generate_synthetic(&SyntheticSpec::default(), &mut ChaCha8Rng::seed_from_u64(0)).map_err(|e| e.to_string())?;
    let dir = root.join("synthetic");
    save_dataset(&ds, &dir).map_err(|e| e.to_string())?;
    Ok(dir)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    synthetic_dir(tmp.path())?;
    let cfg = r#"{
        "datasets": ["synthetic"],
        "models": [{"kind": "GCN"}, {"kind": "SGC"}, {"kind": "APPNP"}, {"kind": "SGC_MLP"}, {"kind": "APPNP_MLP"}],
        "regime": {"fraction": {"frac_observed": [0.1, 0.5]}},
        "sketch_dims": [8, "raw"],
        "n_trials": 3,
        "base_seed": 11,
        "train": {"max_epochs": 100}
    }"#;
    let cfg_path = tmp.path().join("config.json");
    fs::write(&cfg_path, cfg).map_err(|e| e.to_string())?;
    let run_once = |out: &Path| -> Result<(), String> {
        let status = Command::new(env!("CARGO_BIN_EXE_bench"))
            .args(["run", "--threads", "1", "--seed", "11", "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        Ok(())
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_once(&a)?;
    run_once(&b)?;
    for f in ["summary.csv", "raw_trials.csv"] {
        let x = fs::read(a.join(f)).map_err(|e| e.to_string())?;
        let y = fs::read(b.join(f)).map_err(|e| e.to_string())?;
        if x != y {
            return Err(format!("{f} differs between runs"));
        }
    }
    Ok("summary.csv and raw_trials.csv byte-identical".into())
}

fn synthetic_end_to_end() -> Outcome {
    let ds =
        generate_synthetic(&SyntheticSpec::default(), &mut ChaCha8Rng::seed_from_u64(0)).map_err(|e| e.to_string())?;
    let ds = PreparedDataset::new(ds);
    let cfg = ExperimentConfig {
        sketch_dims: vec![SketchDim::Raw],
        n_trials: 10,
        ..base_config(&ModelKind::ALL)
    };
    let r = run(&ds, &cfg)?;
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in ModelKind::ALL {
        let s = cell(&r, &ds, kind, SketchDim::Raw, Some(0.5))?;
        ok &= s.mean > 0.95;
        parts.push(format!("{kind} {:.3}", s.mean));
    }
    verdict(ok, parts.join(", "))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 7] = [
        ("1 sketched half-observed benchmark", sketched_half),
        ("2 label-scarce sanity", label_scarce),
        ("3 feature-sweep trend", feature_trend),
        ("4 fraction-sweep trend", fraction_trend),
        ("5 oracle suite", oracle_suite),
        ("6 determinism", determinism),
        ("7 synthetic end-to-end", synthetic_end_to_end),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS criterion {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {name}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
