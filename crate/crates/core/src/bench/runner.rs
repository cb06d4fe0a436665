use std::borrow::Cow;
use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;

use super::config::{ExperimentConfig, RegimePoint, SketchDim, SplitRegime};
use super::seeds::{stream_rng, INIT, SKETCH, SPLIT};
use super::stats::SummaryStat;
use crate::data::{
    load_dataset, reference_stat_warnings, sketch_features_with_rng, split_fraction, split_per_class, Dataset, Split,
};
use crate::error::{Error, Result};
use crate::graph::{normalize_with_self_loops, NormalizedAdjacency};
use crate::models::{evaluate_accuracy, predict, train_on, GraphInputs, ModelSpec, PropagationCache, PropagationMode};
use crate::nn::TrainConfig;

/// A dataset with its normalized adjacency computed once.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub dataset: Dataset,
    pub adj: NormalizedAdjacency,
}

impl PreparedDataset {
    pub fn new(dataset: Dataset) -> Self {
        let adj = normalize_with_self_loops(&dataset.graph);
        Self { dataset, adj }
    }

    pub fn name(&self) -> &str {
        &self.dataset.name
    }
}

/// Identifies one summary cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellKey {
    pub dataset: String,
    pub model: String,
    pub sketch_dim: SketchDim,
    pub frac_observed: Option<f64>,
    pub n_per_class: Option<usize>,
}

impl Eq for CellKey {}

impl Ord for CellKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dataset
            .cmp(&other.dataset)
            .then_with(|| self.model.cmp(&other.model))
            .then_with(|| self.sketch_dim.cmp(&other.sketch_dim))
            .then_with(|| match (self.frac_observed, other.frac_observed) {
                (Some(a), Some(b)) => a.total_cmp(&b),
                (a, b) => a.is_some().cmp(&b.is_some()),
            })
            .then_with(|| self.n_per_class.cmp(&other.n_per_class))
    }
}

impl PartialOrd for CellKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Outcome of one model on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub key: CellKey,
    pub trial_index: u64,
    /// `base_seed + trial_index`.
    pub seed: u64,
    /// Training plus validation nodes.
    pub n_observed: usize,
    /// `n_observed / feature dimension` after sketching.
    pub ratio: f64,
    pub accuracy: std::result::Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    /// Sorted by key.
    pub summaries: Vec<(CellKey, SummaryStat)>,
    /// Sorted by key, then trial index.
    pub trials: Vec<TrialRecord>,
}

impl ExperimentResult {
    pub fn get(&self, key: &CellKey) -> Option<&SummaryStat> {
        self.summaries
            .binary_search_by(|(k, _)| k.cmp(key))
            .ok()
            .map(|i| &self.summaries[i].1)
    }

    /// First cell matching dataset, model and sweep coordinates.
    pub fn find(
        &self,
        dataset: &str,
        model: &str,
        sketch_dim: SketchDim,
        frac_observed: Option<f64>,
    ) -> Option<&SummaryStat> {
        self.summaries
            .iter()
            .find(|(k, _)| {
                k.dataset == dataset
                    && k.model == model
                    && k.sketch_dim == sketch_dim
                    && k.frac_observed == frac_observed
            })
            .map(|(_, s)| s)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses the rayon default.
    pub threads: usize,
    /// Skip sketch dimensions above a dataset's raw feature count.
    pub cap_sketch_at_raw: bool,
}

fn make_split<R: rand::Rng + ?Sized>(labels: &[usize], point: RegimePoint, rng: &mut R) -> Result<Split> {
    match point {
        RegimePoint::PerClass { n_per_class, n_val } => split_per_class(labels, n_per_class, n_val, rng),
        RegimePoint::Fraction {
            frac_observed,
            val_frac_of_observed,
        } => split_fraction(labels, frac_observed, val_frac_of_observed, rng),
    }
}

/// Runs every model on one trial. The sketch and split are drawn once and
/// shared by all models; each model initializes from the same `init`
/// stream.
pub fn run_trial_models(
    prepared: &PreparedDataset,
    models: &[ModelSpec],
    point: RegimePoint,
    sketch_dim: SketchDim,
    base_seed: u64,
    trial_index: u64,
    train_cfg: &TrainConfig,
) -> Vec<TrialRecord> {
    let ds = &prepared.dataset;
    let key_for = |m: &ModelSpec| CellKey {
        dataset: ds.name.clone(),
        model: m.name(),
        sketch_dim,
        frac_observed: point.frac_observed(),
        n_per_class: point.n_per_class(),
    };
    let dim = sketch_dim.effective(ds.n_features());

    let features: Result<Cow<'_, _>> = match sketch_dim {
        SketchDim::Raw => Ok(Cow::Borrowed(&ds.features)),
        SketchDim::Dim(d) => {
            sketch_features_with_rng(&ds.features, d, &mut stream_rng(base_seed, trial_index, SKETCH)).map(Cow::Owned)
        }
    };
    let split = make_split(&ds.labels, point, &mut stream_rng(base_seed, trial_index, SPLIT));
    let n_observed = split.as_ref().map_or(0, Split::n_observed);

    let mut cache = PropagationCache::new();
    models
        .iter()
        .map(|m| {
            let accuracy = match (&features, &split) {
                (Err(e), _) | (_, Err(e)) => Err(e.to_string()),
                (Ok(x), Ok(split)) => {
                    let inputs = GraphInputs {
                        adj: &prepared.adj,
                        features: x,
                        labels: &ds.labels,
                        n_classes: ds.n_classes,
                    };
                    let mut rng = stream_rng(base_seed, trial_index, INIT);
                    train_on(
                        m,
                        &inputs,
                        split,
                        train_cfg,
                        &mut rng,
                        &mut cache,
                        PropagationMode::Precomputed,
                    )
                    .and_then(|out| predict(m, &inputs, &out.params, &mut cache))
                    .and_then(|pred| evaluate_accuracy(&pred, &ds.labels, &split.test))
                    .map_err(|e| e.to_string())
                }
            };
            TrialRecord {
                key: key_for(m),
                trial_index,
                seed: base_seed.wrapping_add(trial_index),
                n_observed,
                ratio: n_observed as f64 / dim as f64,
                accuracy,
            }
        })
        .collect()
}

/// Test accuracy of a single model on one trial.
pub fn run_trial(
    prepared: &PreparedDataset,
    model: &ModelSpec,
    point: RegimePoint,
    sketch_dim: SketchDim,
    base_seed: u64,
    trial_index: u64,
    train_cfg: &TrainConfig,
) -> Result<f64> {
    let rec = run_trial_models(
        prepared,
        std::slice::from_ref(model),
        point,
        sketch_dim,
        base_seed,
        trial_index,
        train_cfg,
    )
    .pop()
    .expect("one record per model");
    rec.accuracy.map_err(Error::InvalidParameter)
}

/// Loads every dataset named in the config.
pub fn load_datasets(cfg: &ExperimentConfig) -> Result<Vec<PreparedDataset>> {
    let mut out: Vec<PreparedDataset> = Vec::with_capacity(cfg.datasets.len());
    for path in &cfg.datasets {
        let ds = load_dataset(path)?;
        for w in reference_stat_warnings(&ds) {
            log::warn!("{w}");
        }
        if out.iter().any(|p| p.name() == ds.name) {
            return Err(Error::Config(format!("dataset name {:?} appears twice", ds.name)));
        }
        out.push(PreparedDataset::new(ds));
    }
    Ok(out)
}

pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentResult> {
    cfg.validate()?;
    let datasets = load_datasets(cfg)?;
    run_experiment_on(&datasets, cfg, opts)
}

/// Runs the full trial plan on already-loaded datasets. Trials are
/// independent, so the result does not depend on the thread count.
pub fn run_experiment_on(
    datasets: &[PreparedDataset],
    cfg: &ExperimentConfig,
    opts: RunOptions,
) -> Result<ExperimentResult> {
    cfg.validate_plan()?;
    if datasets.is_empty() {
        return Err(Error::Config("no datasets to run".into()));
    }
    let points = cfg.regime.points();
    let mut tasks = Vec::new();
    for (di, p) in datasets.iter().enumerate() {
        for &point in &points {
            for &dim in &cfg.sketch_dims {
                if opts.cap_sketch_at_raw && dim.effective(p.dataset.n_features()) > p.dataset.n_features() {
                    continue;
                }
                for t in 0..cfg.n_trials as u64 {
                    tasks.push((di, point, dim, t));
                }
            }
        }
    }
    let run = || -> Vec<TrialRecord> {
        tasks
            .par_iter()
            .flat_map_iter(|&(di, point, dim, t)| {
                run_trial_models(&datasets[di], &cfg.models, point, dim, cfg.base_seed, t, &cfg.train)
            })
            .collect()
    };
    let mut trials = if opts.threads == 0 {
        run()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run)
    };
    trials.sort_by(|a, b| a.key.cmp(&b.key).then(a.trial_index.cmp(&b.trial_index)));

    let mut cells: BTreeMap<CellKey, (Vec<f64>, usize)> = BTreeMap::new();
    for t in &trials {
        let cell = cells.entry(t.key.clone()).or_default();
        match &t.accuracy {
            Ok(a) => cell.0.push(*a),
            Err(e) => {
                log::warn!(
                    "{} / {} trial {} failed: {e}",
                    t.key.dataset,
                    t.key.model,
                    t.trial_index
                );
                cell.1 += 1;
            }
        }
    }
    let mut summaries = Vec::with_capacity(cells.len());
    for (key, (accs, failures)) in cells {
        if accs.is_empty() {
            let first_error = trials
                .iter()
                .find_map(|t| (t.key == key).then(|| t.accuracy.clone().err()).flatten())
                .unwrap_or_default();
            return Err(Error::AllTrialsFailed(format!(
                "{} / {} / sketch {} ({first_error})",
                key.dataset, key.model, key.sketch_dim
            )));
        }
        summaries.push((key, SummaryStat::from_accuracies(accs, failures)));
    }
    Ok(ExperimentResult { summaries, trials })
}

/// Which axis a figure sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    Features,
    Fraction,
}

impl Sweep {
    pub fn name(self) -> &'static str {
        match self {
            Sweep::Features => "features",
            Sweep::Fraction => "fraction",
        }
    }
}

/// Varies the sketch dimension at a fixed observed fraction. Dimensions
/// above a dataset's raw feature count are skipped.
pub fn sweep_features(
    datasets: &[PreparedDataset],
    base: &ExperimentConfig,
    dims: &[usize],
    frac_observed: f64,
    threads: usize,
) -> Result<ExperimentResult> {
    let val_frac = match &base.regime {
        SplitRegime::Fraction {
            val_frac_of_observed, ..
        } => *val_frac_of_observed,
        SplitRegime::PerClass { .. } => 0.2,
    };
    let cfg = ExperimentConfig {
        regime: SplitRegime::Fraction {
            frac_observed: vec![frac_observed],
            val_frac_of_observed: val_frac,
        },
        sketch_dims: dims.iter().map(|&d| SketchDim::Dim(d)).collect(),
        ..base.clone()
    };
    run_experiment_on(
        datasets,
        &cfg,
        RunOptions {
            threads,
            cap_sketch_at_raw: true,
        },
    )
}

/// Varies the observed fraction at a fixed sketch dimension.
pub fn sweep_fraction(
    datasets: &[PreparedDataset],
    base: &ExperimentConfig,
    fracs: &[f64],
    sketch_dim: SketchDim,
    threads: usize,
) -> Result<ExperimentResult> {
    let val_frac = match &base.regime {
        SplitRegime::Fraction {
            val_frac_of_observed, ..
        } => *val_frac_of_observed,
        SplitRegime::PerClass { .. } => 0.2,
    };
    let cfg = ExperimentConfig {
        regime: SplitRegime::Fraction {
            frac_observed: fracs.to_vec(),
            val_frac_of_observed: val_frac,
        },
        sketch_dims: vec![sketch_dim],
        ..base.clone()
    };
    run_experiment_on(
        datasets,
        &cfg,
        RunOptions {
            threads,
            cap_sketch_at_raw: false,
        },
    )
}

/// One point of a sweep curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub sweep_value: f64,
    pub model: String,
    pub stat: SummaryStat,
}

/// Curve points per dataset, ordered by sweep value then model.
pub fn curves(result: &ExperimentResult, sweep: Sweep) -> BTreeMap<String, Vec<CurvePoint>> {
    let mut out: BTreeMap<String, Vec<CurvePoint>> = BTreeMap::new();
    for (key, stat) in &result.summaries {
        let sweep_value = match sweep {
            Sweep::Features => match key.sketch_dim {
                SketchDim::Dim(d) => d as f64,
                SketchDim::Raw => continue,
            },
            Sweep::Fraction => match key.frac_observed {
                Some(f) => f,
                None => continue,
            },
        };
        out.entry(key.dataset.clone()).or_default().push(CurvePoint {
            sweep_value,
            model: key.model.clone(),
            stat: stat.clone(),
        });
    }
    for points in out.values_mut() {
        points.sort_by(|a, b| {
            a.sweep_value
                .total_cmp(&b.sweep_value)
                .then_with(|| a.model.cmp(&b.model))
        });
    }
    out
}
