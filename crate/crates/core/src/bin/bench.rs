use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gnnstat::bench::config::{DEFAULT_FEATURE_GRID, DEFAULT_FRACTION_GRID};
use gnnstat::bench::output::{write_curves, write_raw_trials, write_results};
use gnnstat::bench::runner::{load_datasets, sweep_features, sweep_fraction};
use gnnstat::bench::{run_experiment_on, ExperimentConfig, RunOptions, SketchDim, Sweep};
use gnnstat::data::{generate_synthetic, load_dataset, reference_stat_warnings, save_dataset, SyntheticSpec};
use gnnstat::selftest::run_selftest;
use gnnstat::Result;

#[derive(Parser)]
#[command(name = "bench", about = "Node-classification benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Overrides `base_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::from_file(&self.config)?;
        if let Some(s) = self.seed {
            cfg.base_seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell of a config and write summary.csv and raw_trials.csv.
    Run(Common),
    /// Vary the sketch dimension at a fixed observed fraction.
    SweepFeatures {
        #[command(flatten)]
        common: Common,
        /// Sketch dimensions; capped at each dataset's raw feature count.
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        #[arg(long, default_value_t = 0.5)]
        frac: f64,
    },
    /// Vary the observed fraction at a fixed sketch dimension.
    SweepFraction {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        fracs: Option<Vec<f64>>,
        /// Sketch dimension, or `raw`.
        #[arg(long, default_value = "300")]
        sketch_dim: SketchDim,
    },
    /// Load a dataset directory and report its statistics.
    ValidateDataset { dir: PathBuf },
    /// Run the invariant and oracle checks on synthetic data.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a stochastic-block-model dataset.
    GenerateSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        n_per_class: Option<usize>,
        #[arg(long)]
        n_classes: Option<usize>,
        #[arg(long)]
        feature_dim: Option<usize>,
    },
}

fn sweep(
    common: &Common,
    sweep: Sweep,
    run: impl FnOnce(&ExperimentConfig) -> Result<gnnstat::bench::ExperimentResult>,
) -> Result<()> {
    let cfg = common.load()?;
    let result = run(&cfg)?;
    write_raw_trials(&result, common.out.join(format!("raw_trials_{}.csv", sweep.name())))?;
    for p in write_curves(&result, sweep, &common.out)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn validate_dataset(dir: &Path) -> Result<()> {
    let ds = load_dataset(dir)?;
    let edges = ds.graph.nnz() / 2;
    println!(
        "{}: {} nodes, {} edges, {} features, {} classes",
        ds.name,
        ds.n_nodes(),
        edges,
        ds.n_features(),
        ds.n_classes
    );
    for w in reference_stat_warnings(&ds) {
        println!("warning: {w}");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(common) => common.load().and_then(|cfg| {
            let datasets = load_datasets(&cfg)?;
            let result = run_experiment_on(
                &datasets,
                &cfg,
                RunOptions {
                    threads: common.threads,
                    cap_sketch_at_raw: false,
                },
            )?;
            write_results(&result, &common.out)?;
            println!("wrote {} cells to {}", result.summaries.len(), common.out.display());
            Ok(())
        }),
        Command::SweepFeatures { common, dims, frac } => sweep(common, Sweep::Features, |cfg| {
            let dims = dims.clone().unwrap_or_else(|| DEFAULT_FEATURE_GRID.to_vec());
            sweep_features(&load_datasets(cfg)?, cfg, &dims, *frac, common.threads)
        }),
        Command::SweepFraction {
            common,
            fracs,
            sketch_dim,
        } => sweep(common, Sweep::Fraction, |cfg| {
            let fracs = fracs.clone().unwrap_or_else(|| DEFAULT_FRACTION_GRID.to_vec());
            sweep_fraction(&load_datasets(cfg)?, cfg, &fracs, *sketch_dim, common.threads)
        }),
        Command::ValidateDataset { dir } => validate_dataset(dir),
        Command::Selftest { seed } => {
            let reports = run_selftest(*seed);
            let failed = reports.iter().filter(|r| !r.passed).count();
            for r in &reports {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            if failed > 0 {
                eprintln!("{failed} check(s) failed");
                return ExitCode::FAILURE;
            }
            Ok(())
        }
        Command::GenerateSynthetic {
            out,
            seed,
            n_per_class,
            n_classes,
            feature_dim,
        } => {
            let d = SyntheticSpec::default();
            let spec = SyntheticSpec {
                n_per_class: n_per_class.unwrap_or(d.n_per_class),
                n_classes: n_classes.unwrap_or(d.n_classes),
                feature_dim: feature_dim.unwrap_or(d.feature_dim),
                ..d
            };
            generate_synthetic(&spec, &mut ChaCha8Rng::seed_from_u64(*seed)).and_then(|ds| save_dataset(&ds, out))
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
