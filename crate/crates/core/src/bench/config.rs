use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::nn::TrainConfig;

/// Target dimension of the random feature sketch, or the raw features.
/// Serialized as an integer or the string `"raw"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SketchDim {
    Dim(usize),
    Raw,
}

impl SketchDim {
    /// Feature dimension after sketching a `raw_dim`-wide matrix.
    pub fn effective(&self, raw_dim: usize) -> usize {
        match *self {
            SketchDim::Dim(d) => d,
            SketchDim::Raw => raw_dim,
        }
    }
}

impl Serialize for SketchDim {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SketchDim::Dim(d) => s.serialize_u64(*d as u64),
            SketchDim::Raw => s.serialize_str("raw"),
        }
    }
}

impl<'de> Deserialize<'de> for SketchDim {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Dim(usize),
            Name(String),
        }
        match Repr::deserialize(d)? {
            Repr::Dim(n) => Ok(SketchDim::Dim(n)),
            Repr::Name(s) if s == "raw" => Ok(SketchDim::Raw),
            Repr::Name(s) => Err(serde::de::Error::custom(format!(
                "expected \"raw\" or an integer, got {s:?}"
            ))),
        }
    }
}

impl fmt::Display for SketchDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SketchDim::Dim(d) => write!(f, "{d}"),
            SketchDim::Raw => f.write_str("raw"),
        }
    }
}

impl std::str::FromStr for SketchDim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "raw" => Ok(SketchDim::Raw),
            t => t
                .parse()
                .map(SketchDim::Dim)
                .map_err(|_| Error::Config(format!("invalid sketch dimension {s:?}"))),
        }
    }
}

/// How observed nodes are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitRegime {
    /// A fixed number of training nodes per class plus `n_val` validation
    /// nodes.
    PerClass {
        n_per_class: usize,
        #[serde(default = "default_n_val")]
        n_val: usize,
    },
    /// A fraction of all nodes observed; one sweep point per entry.
    Fraction {
        frac_observed: Vec<f64>,
        #[serde(default = "default_val_frac")]
        val_frac_of_observed: f64,
    },
}

fn default_n_val() -> usize {
    500
}

fn default_val_frac() -> f64 {
    0.2
}

/// One concrete split setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegimePoint {
    PerClass {
        n_per_class: usize,
        n_val: usize,
    },
    Fraction {
        frac_observed: f64,
        val_frac_of_observed: f64,
    },
}

impl RegimePoint {
    pub fn frac_observed(&self) -> Option<f64> {
        match *self {
            RegimePoint::Fraction { frac_observed, .. } => Some(frac_observed),
            RegimePoint::PerClass { .. } => None,
        }
    }

    pub fn n_per_class(&self) -> Option<usize> {
        match *self {
            RegimePoint::PerClass { n_per_class, .. } => Some(n_per_class),
            RegimePoint::Fraction { .. } => None,
        }
    }
}

impl SplitRegime {
    pub fn points(&self) -> Vec<RegimePoint> {
        match self {
            SplitRegime::PerClass { n_per_class, n_val } => vec![RegimePoint::PerClass {
                n_per_class: *n_per_class,
                n_val: *n_val,
            }],
            SplitRegime::Fraction {
                frac_observed,
                val_frac_of_observed,
            } => frac_observed
                .iter()
                .map(|&f| RegimePoint::Fraction {
                    frac_observed: f,
                    val_frac_of_observed: *val_frac_of_observed,
                })
                .collect(),
        }
    }

    pub fn fraction(frac_observed: Vec<f64>) -> Self {
        SplitRegime::Fraction {
            frac_observed,
            val_frac_of_observed: default_val_frac(),
        }
    }

    pub fn per_class(n_per_class: usize) -> Self {
        SplitRegime::PerClass {
            n_per_class,
            n_val: default_n_val(),
        }
    }
}

/// A seeded trial plan: datasets × regime points × sketch dims × models,
/// each cell repeated `n_trials` times with seeds `base_seed + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub datasets: Vec<PathBuf>,
    pub models: Vec<ModelSpec>,
    pub regime: SplitRegime,
    #[serde(default = "default_sketch_dims")]
    pub sketch_dims: Vec<SketchDim>,
    #[serde(default = "default_n_trials")]
    pub n_trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Optimizer settings; omitted fields keep their defaults.
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_sketch_dims() -> Vec<SketchDim> {
    vec![SketchDim::Raw]
}

fn default_n_trials() -> usize {
    40
}

/// Sketch dimensions of the feature sweep.
pub const DEFAULT_FEATURE_GRID: [usize; 8] = [50, 100, 200, 300, 500, 1000, 2000, 3000];
/// Observed fractions of the fraction sweep.
pub const DEFAULT_FRACTION_GRID: [f64; 7] = [0.025, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7];

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a JSON config; relative dataset paths resolve against the
    /// config file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for d in &mut cfg.datasets {
            if d.is_relative() {
                *d = base.join(&*d);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Config("datasets must not be empty".into()));
        }
        self.validate_plan()
    }

    /// Checks everything except the dataset list.
    pub fn validate_plan(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.models.is_empty() {
            return bad("models must not be empty");
        }
        if self.sketch_dims.is_empty() {
            return bad("sketch_dims must not be empty");
        }
        if self.sketch_dims.contains(&SketchDim::Dim(0)) {
            return bad("sketch dimensions must be at least 1");
        }
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1");
        }
        match &self.regime {
            SplitRegime::PerClass { n_per_class, .. } if *n_per_class == 0 => {
                return bad("n_per_class must be at least 1")
            }
            SplitRegime::Fraction {
                frac_observed,
                val_frac_of_observed,
            } => {
                if frac_observed.is_empty() {
                    return bad("frac_observed must not be empty");
                }
                if frac_observed.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
                    return bad("frac_observed entries must lie in (0, 1)");
                }
                if !(0.0..1.0).contains(val_frac_of_observed) {
                    return bad("val_frac_of_observed must lie in [0, 1)");
                }
            }
            _ => {}
        }
        let mut names: Vec<String> = self.models.iter().map(ModelSpec::name).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("model names must be unique; set `label` to tell specs apart");
        }
        for m in &self.models {
            m.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        self.train.validate().map_err(|e| Error::Config(e.to_string()))
    }
}
