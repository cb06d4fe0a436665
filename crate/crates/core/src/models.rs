//! The five node classifiers, built from a propagation operator φ and a
//! feature extractor f:
//!
//! | kind        | φ                  | f                          | φ inside training |
//! |-------------|--------------------|----------------------------|-------------------|
//! | `GCN`       | `Ã` per layer      | `relu(· W)` per layer      | interleaved       |
//! | `SGC`       | `Ã^K`              | logistic regression        | precomputed       |
//! | `APPNP`     | personalized PR    | logistic regression        | precomputed       |
//! | `SGC_MLP`   | `Ã^K`              | two-layer MLP              | precomputed       |
//! | `APPNP_MLP` | personalized PR    | two-layer MLP              | precomputed       |

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{
    normalize_with_self_loops, propagate_power, propagate_ppr, spmm, NormalizedAdjacency, DEFAULT_PPR_ITERS,
    DEFAULT_PPR_TOL,
};
use crate::nn::{
    adam_step, apply_mask, dropout_with_mask, glorot_init, linear, linear_backward, linear_backward_weights,
    masked_cross_entropy_grad, mlp_backward, mlp_forward, relu, relu_backward, softmax_rows, AdamState, Parameter,
    TrainConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "GCN")]
    Gcn,
    #[serde(rename = "SGC")]
    Sgc,
    #[serde(rename = "APPNP")]
    Appnp,
    #[serde(rename = "SGC_MLP")]
    SgcMlp,
    #[serde(rename = "APPNP_MLP")]
    AppnpMlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Gcn,
        ModelKind::Sgc,
        ModelKind::Appnp,
        ModelKind::SgcMlp,
        ModelKind::AppnpMlp,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gcn => "GCN",
            ModelKind::Sgc => "SGC",
            ModelKind::Appnp => "APPNP",
            ModelKind::SgcMlp => "SGC_MLP",
            ModelKind::AppnpMlp => "APPNP_MLP",
        }
    }

    fn uses_mlp(self) -> bool {
        matches!(self, ModelKind::SgcMlp | ModelKind::AppnpMlp)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Architecture and its fixed hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Optional display name; distinguishes several specs of one kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Propagation depth `K` (GCN layers, SGC power).
    #[serde(default = "default_k_hops")]
    pub k_hops: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_ppr_iters")]
    pub ppr_iters: usize,
    #[serde(default = "default_ppr_tol")]
    pub ppr_tol: f64,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_dropout_p")]
    pub dropout_p: f64,
}

fn default_k_hops() -> usize {
    2
}
fn default_alpha() -> f64 {
    0.1
}
fn default_ppr_iters() -> usize {
    DEFAULT_PPR_ITERS
}
fn default_ppr_tol() -> f64 {
    DEFAULT_PPR_TOL
}
fn default_hidden_dim() -> usize {
    64
}
fn default_dropout_p() -> f64 {
    0.5
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            label: None,
            k_hops: default_k_hops(),
            alpha: default_alpha(),
            ppr_iters: default_ppr_iters(),
            ppr_tol: default_ppr_tol(),
            hidden_dim: default_hidden_dim(),
            dropout_p: default_dropout_p(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Name used in result tables.
    pub fn name(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.to_string())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.kind == ModelKind::Gcn && self.k_hops == 0 {
            return bad("GCN needs k_hops >= 1".into());
        }
        if matches!(self.kind, ModelKind::Appnp | ModelKind::AppnpMlp) {
            if !(self.alpha > 0.0 && self.alpha <= 1.0) {
                return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
            }
            if self.ppr_iters == 0 {
                return bad("ppr_iters must be at least 1".into());
            }
        }
        if matches!(self.kind, ModelKind::Gcn | ModelKind::SgcMlp | ModelKind::AppnpMlp) && self.hidden_dim == 0 {
            return bad("hidden_dim must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout_p must lie in [0, 1), got {}", self.dropout_p));
        }
        Ok(())
    }

    /// Dropout rate actually used; the logistic heads never drop.
    fn effective_dropout(&self) -> f64 {
        match self.kind {
            ModelKind::Sgc | ModelKind::Appnp => 0.0,
            _ => self.dropout_p,
        }
    }

    fn propagation(&self) -> Option<Propagation> {
        match self.kind {
            ModelKind::Gcn => None,
            ModelKind::Sgc | ModelKind::SgcMlp => Some(Propagation::Power(self.k_hops)),
            ModelKind::Appnp | ModelKind::AppnpMlp => Some(Propagation::Ppr {
                alpha: self.alpha,
                iters: self.ppr_iters,
                tol: self.ppr_tol,
            }),
        }
    }
}

/// Learned weights. Weight matrices chain `D → … → C`; the MLP variants
/// also carry a hidden-layer bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub weights: Vec<Parameter>,
    pub hidden_bias: Option<Parameter>,
}

impl ModelParams {
    /// Glorot-initialized parameters; weight decay goes on the first
    /// weight matrix only.
    pub fn init<R: Rng + ?Sized>(
        spec: &ModelSpec,
        in_dim: usize,
        n_classes: usize,
        weight_decay: f64,
        rng: &mut R,
    ) -> Self {
        let dims: Vec<usize> = match spec.kind {
            ModelKind::Gcn => {
                let mut d = vec![in_dim];
                d.extend(std::iter::repeat_n(spec.hidden_dim, spec.k_hops - 1));
                d.push(n_classes);
                d
            }
            ModelKind::Sgc | ModelKind::Appnp => vec![in_dim, n_classes],
            ModelKind::SgcMlp | ModelKind::AppnpMlp => vec![in_dim, spec.hidden_dim, n_classes],
        };
        let weights = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let wd = if l == 0 { weight_decay } else { 0.0 };
                Parameter::new(glorot_init(w[0], w[1], rng), wd)
            })
            .collect();
        let hidden_bias = spec
            .kind
            .uses_mlp()
            .then(|| Parameter::new(DenseMatrix::zeros(1, spec.hidden_dim), 0.0));
        Self { weights, hidden_bias }
    }

    fn zero_grad(&mut self) {
        self.weights.iter_mut().for_each(Parameter::zero_grad);
        if let Some(b) = self.hidden_bias.as_mut() {
            b.zero_grad();
        }
    }

    fn all_mut(&mut self) -> Vec<&mut Parameter> {
        let mut v: Vec<&mut Parameter> = self.weights.iter_mut().collect();
        if let Some(b) = self.hidden_bias.as_mut() {
            v.push(b);
        }
        v
    }

    fn expect_single(&self) -> Result<&Parameter> {
        match self.weights.as_slice() {
            [w] => Ok(w),
            ws => Err(Error::DimensionMismatch(format!(
                "logistic head needs one weight matrix, got {}",
                ws.len()
            ))),
        }
    }

    fn expect_mlp(&self) -> Result<(&Parameter, &Parameter, &Parameter)> {
        match (self.weights.as_slice(), self.hidden_bias.as_ref()) {
            ([w1, w2], Some(b1)) => Ok((w1, b1, w2)),
            (ws, _) => Err(Error::DimensionMismatch(format!(
                "MLP needs two weight matrices and a hidden bias, got {} matrices",
                ws.len()
            ))),
        }
    }
}

/// Class probabilities and argmax labels (ties go to the lowest class).
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: DenseMatrix,
    pub labels: Vec<usize>,
}

impl Prediction {
    pub fn from_logits(logits: &DenseMatrix) -> Self {
        let probabilities = softmax_rows(logits);
        let labels = (0..probabilities.rows())
            .map(|r| {
                let row = probabilities.row(r);
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect();
        Self { probabilities, labels }
    }
}

/// Fraction of `index_set` whose predicted label matches.
pub fn evaluate_accuracy(prediction: &Prediction, labels: &[usize], index_set: &[usize]) -> Result<f64> {
    if index_set.is_empty() {
        return Err(Error::EmptyIndexSet("accuracy index set"));
    }
    let mut correct = 0usize;
    for &i in index_set {
        if i >= labels.len() || i >= prediction.labels.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                n_nodes: labels.len().min(prediction.labels.len()),
            });
        }
        if prediction.labels[i] == labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / index_set.len() as f64)
}

/// Hidden nonlinearity of the GCN. `Identity` exists to check that a
/// linear GCN collapses onto SGC.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Saved activations of one GCN forward pass.
#[derive(Debug, Clone)]
struct GcnTape {
    /// Dropped-out input of every layer.
    inputs: Vec<DenseMatrix>,
    masks: Vec<Option<DenseMatrix>>,
    /// `Ã · input · W` of every layer; the last one is the logits.
    propagated: Vec<DenseMatrix>,
}

fn gcn_tape<R: Rng + ?Sized>(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    params: &ModelParams,
    activation: Activation,
    dropout_p: f64,
    training: bool,
    rng: &mut R,
) -> Result<GcnTape> {
    if params.weights.is_empty() {
        return Err(Error::DimensionMismatch("GCN needs at least one weight matrix".into()));
    }
    let k = params.weights.len();
    let mut tape = GcnTape {
        inputs: Vec::with_capacity(k),
        masks: Vec::with_capacity(k),
        propagated: Vec::with_capacity(k),
    };
    let mut h = x.clone();
    for (l, w) in params.weights.iter().enumerate() {
        let (hd, mask) = dropout_with_mask(&h, dropout_p, training, rng)?;
        // Ã (H W) equals (Ã H) W and is cheaper when W narrows the width.
        let z = spmm(adj, &linear(&hd, w)?)?;
        if l + 1 < k {
            h = match activation {
                Activation::Relu => relu(&z),
                Activation::Identity => z.clone(),
            };
        }
        tape.inputs.push(hd);
        tape.masks.push(mask);
        tape.propagated.push(z);
    }
    Ok(tape)
}

fn gcn_backward(
    adj: &NormalizedAdjacency,
    tape: &GcnTape,
    d_logits: &DenseMatrix,
    params: &mut ModelParams,
    activation: Activation,
) -> Result<()> {
    let mut dz = d_logits.clone();
    for l in (0..params.weights.len()).rev() {
        // Ã is symmetric, so Ãᵀ dz = Ã dz.
        let dp = spmm(adj, &dz)?;
        if l == 0 {
            linear_backward_weights(&tape.inputs[0], &mut params.weights[0], &dp)?;
            break;
        }
        let dh = linear_backward(&tape.inputs[l], &mut params.weights[l], &dp)?;
        let dh = apply_mask(&dh, tape.masks[l].as_ref());
        dz = match activation {
            Activation::Relu => relu_backward(&tape.propagated[l - 1], &dh)?,
            Activation::Identity => dh,
        };
    }
    Ok(())
}

/// `softmax(Ã · relu(Ã · drop(x) · W₁) · W₂)` for two layers, generalizing
/// to any number of weight matrices. Dropout is active only in training.
pub fn gcn_forward<R: Rng + ?Sized>(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    params: &ModelParams,
    dropout_p: f64,
    training: bool,
    rng: &mut R,
) -> Result<Prediction> {
    gcn_forward_with_activation(adj, x, params, Activation::Relu, dropout_p, training, rng)
}

pub fn gcn_forward_with_activation<R: Rng + ?Sized>(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    params: &ModelParams,
    activation: Activation,
    dropout_p: f64,
    training: bool,
    rng: &mut R,
) -> Result<Prediction> {
    let tape = gcn_tape(adj, x, params, activation, dropout_p, training, rng)?;
    Ok(Prediction::from_logits(tape.propagated.last().unwrap()))
}

/// Logistic regression on already-propagated features.
pub fn logistic_forward(features: &DenseMatrix, params: &ModelParams) -> Result<Prediction> {
    Ok(Prediction::from_logits(&linear(features, params.expect_single()?)?))
}

/// `softmax(Ã^k · x · W)`.
pub fn sgc_forward(adj: &NormalizedAdjacency, x: &DenseMatrix, params: &ModelParams, k: usize) -> Result<Prediction> {
    logistic_forward(&propagate_power(adj, x, k)?, params)
}

/// `softmax(α (I - (1-α) Ã)^{-1} · x · W)` with the inverse approximated
/// by fixed-point iteration.
pub fn appnp_forward(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    params: &ModelParams,
    alpha: f64,
    iters: usize,
    tol: f64,
) -> Result<Prediction> {
    let ppr = propagate_ppr(adj, x, alpha, iters, tol)?;
    logistic_forward(&ppr.features, params)
}

/// Two-layer MLP on already-propagated features.
pub fn mlp_on_features<R: Rng + ?Sized>(
    features: &DenseMatrix,
    params: &ModelParams,
    dropout_p: f64,
    training: bool,
    rng: &mut R,
) -> Result<Prediction> {
    let (w1, b1, w2) = params.expect_mlp()?;
    let tape = mlp_forward(features, w1, b1, w2, dropout_p, training, rng)?;
    Ok(Prediction::from_logits(&tape.logits))
}

pub fn sgc_mlp_forward<R: Rng + ?Sized>(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    params: &ModelParams,
    k: usize,
    dropout_p: f64,
    training: bool,
    rng: &mut R,
) -> Result<Prediction> {
    mlp_on_features(&propagate_power(adj, x, k)?, params, dropout_p, training, rng)
}

#[allow(clippy::too_many_arguments)]
pub fn appnp_mlp_forward<R: Rng + ?Sized>(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    params: &ModelParams,
    alpha: f64,
    iters: usize,
    tol: f64,
    dropout_p: f64,
    training: bool,
    rng: &mut R,
) -> Result<Prediction> {
    let ppr = propagate_ppr(adj, x, alpha, iters, tol)?;
    mlp_on_features(&ppr.features, params, dropout_p, training, rng)
}

/// A parameter-free propagation operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Propagation {
    Power(usize),
    Ppr { alpha: f64, iters: usize, tol: f64 },
}

impl Propagation {
    pub fn apply(&self, adj: &NormalizedAdjacency, x: &DenseMatrix) -> Result<DenseMatrix> {
        match *self {
            Propagation::Power(k) => propagate_power(adj, x, k),
            Propagation::Ppr { alpha, iters, tol } => {
                let r = propagate_ppr(adj, x, alpha, iters, tol)?;
                if !r.converged {
                    log::debug!(
                        "PPR stopped after {} iterations with residual {:.3e}",
                        r.iterations,
                        r.residual
                    );
                }
                Ok(r.features)
            }
        }
    }

    fn key(&self) -> (u8, u64, u64, u64) {
        match *self {
            Propagation::Power(k) => (0, k as u64, 0, 0),
            Propagation::Ppr { alpha, iters, tol } => (1, alpha.to_bits(), iters as u64, tol.to_bits()),
        }
    }
}

/// Memoized φ(X) for one fixed graph and feature matrix.
#[derive(Debug, Default)]
pub struct PropagationCache {
    entries: HashMap<(u8, u64, u64, u64), Arc<DenseMatrix>>,
}

impl PropagationCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_compute(
        &mut self,
        prop: Propagation,
        adj: &NormalizedAdjacency,
        x: &DenseMatrix,
    ) -> Result<Arc<DenseMatrix>> {
        if let Some(hit) = self.entries.get(&prop.key()) {
            return Ok(Arc::clone(hit));
        }
        let out = Arc::new(prop.apply(adj, x)?);
        self.entries.insert(prop.key(), Arc::clone(&out));
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Whether decoupled models reuse a precomputed φ(X) or recompute it at
/// every use. Both give bitwise-identical results; `Inline` exists to
/// check that.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PropagationMode {
    #[default]
    Precomputed,
    Inline,
}

/// Graph, features and labels a model is trained on.
#[derive(Debug, Clone, Copy)]
pub struct GraphInputs<'a> {
    pub adj: &'a NormalizedAdjacency,
    pub features: &'a DenseMatrix,
    pub labels: &'a [usize],
    pub n_classes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch (earliest on ties).
    pub params: ModelParams,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Trains `spec` on a dataset, normalizing its graph first.
pub fn train_model<R: Rng + ?Sized>(
    spec: &ModelSpec,
    dataset: &Dataset,
    split: &Split,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainOutcome> {
    let adj = normalize_with_self_loops(&dataset.graph);
    let inputs = GraphInputs {
        adj: &adj,
        features: &dataset.features,
        labels: &dataset.labels,
        n_classes: dataset.n_classes,
    };
    train_on(
        spec,
        &inputs,
        split,
        cfg,
        rng,
        &mut PropagationCache::new(),
        PropagationMode::Precomputed,
    )
}

/// A model bound to its inputs; hides the per-kind forward/backward paths.
struct Trainer<'a> {
    spec: &'a ModelSpec,
    inputs: &'a GraphInputs<'a>,
    propagated: Option<Arc<DenseMatrix>>,
    mode: PropagationMode,
    dropout_p: f64,
}

impl Trainer<'_> {
    fn features(&self) -> Result<Arc<DenseMatrix>> {
        let prop = self.spec.propagation().expect("decoupled model");
        match self.mode {
            PropagationMode::Precomputed => Ok(Arc::clone(self.propagated.as_ref().unwrap())),
            PropagationMode::Inline => Ok(Arc::new(prop.apply(self.inputs.adj, self.inputs.features)?)),
        }
    }

    /// One training step's forward + backward; returns the loss.
    fn step<R: Rng + ?Sized>(&self, params: &mut ModelParams, train: &[usize], rng: &mut R) -> Result<f64> {
        let labels = self.inputs.labels;
        match self.spec.kind {
            ModelKind::Gcn => {
                let tape = gcn_tape(
                    self.inputs.adj,
                    self.inputs.features,
                    params,
                    Activation::Relu,
                    self.dropout_p,
                    true,
                    rng,
                )?;
                let (loss, d) = masked_cross_entropy_grad(tape.propagated.last().unwrap(), labels, train)?;
                gcn_backward(self.inputs.adj, &tape, &d, params, Activation::Relu)?;
                Ok(loss)
            }
            ModelKind::Sgc | ModelKind::Appnp => {
                let feats = self.features()?;
                let logits = linear(&feats, params.expect_single()?)?;
                let (loss, d) = masked_cross_entropy_grad(&logits, labels, train)?;
                linear_backward_weights(&feats, &mut params.weights[0], &d)?;
                Ok(loss)
            }
            ModelKind::SgcMlp | ModelKind::AppnpMlp => {
                let feats = self.features()?;
                let (w1, b1, w2) = params.expect_mlp()?;
                let tape = mlp_forward(&feats, w1, b1, w2, self.dropout_p, true, rng)?;
                let (loss, d) = masked_cross_entropy_grad(&tape.logits, labels, train)?;
                let (ws, b) = (&mut params.weights, params.hidden_bias.as_mut().unwrap());
                let (first, second) = ws.split_at_mut(1);
                mlp_backward(&tape, &d, &mut first[0], b, &mut second[0])?;
                Ok(loss)
            }
        }
    }

    fn predict(&self, params: &ModelParams) -> Result<Prediction> {
        // Inference never draws from the generator.
        let mut no_rng = rand::rngs::mock::StepRng::new(0, 0);
        match self.spec.kind {
            ModelKind::Gcn => gcn_forward(self.inputs.adj, self.inputs.features, params, 0.0, false, &mut no_rng),
            ModelKind::Sgc | ModelKind::Appnp => logistic_forward(&*self.features()?, params),
            ModelKind::SgcMlp | ModelKind::AppnpMlp => {
                mlp_on_features(&*self.features()?, params, 0.0, false, &mut no_rng)
            }
        }
    }
}

/// Training loss on `train` with dropout off. Gradients of the loss (without
/// weight decay) overwrite `params[..].grad`.
pub fn loss_and_gradients(
    spec: &ModelSpec,
    inputs: &GraphInputs<'_>,
    params: &mut ModelParams,
    train: &[usize],
) -> Result<f64> {
    let propagated = match spec.propagation() {
        Some(p) => Some(Arc::new(p.apply(inputs.adj, inputs.features)?)),
        None => None,
    };
    let trainer = Trainer {
        spec,
        inputs,
        propagated,
        mode: PropagationMode::Precomputed,
        dropout_p: 0.0,
    };
    params.zero_grad();
    trainer.step(params, train, &mut rand::rngs::mock::StepRng::new(0, 0))
}

/// Predicts with trained parameters (inference mode, no dropout).
pub fn predict(
    spec: &ModelSpec,
    inputs: &GraphInputs<'_>,
    params: &ModelParams,
    cache: &mut PropagationCache,
) -> Result<Prediction> {
    let propagated = match spec.propagation() {
        Some(p) => Some(cache.get_or_compute(p, inputs.adj, inputs.features)?),
        None => None,
    };
    Trainer {
        spec,
        inputs,
        propagated,
        mode: PropagationMode::Precomputed,
        dropout_p: 0.0,
    }
    .predict(params)
}

/// Full-batch training with Adam and early stopping on validation accuracy.
///
/// Parameters are initialized from `rng`, which also drives dropout.
/// Training stops after `cfg.patience` epochs without a strict improvement
/// in validation accuracy (`patience == 0` disables early stopping). When
/// the split has no validation nodes, training accuracy is used instead.
pub fn train_on<R: Rng + ?Sized>(
    spec: &ModelSpec,
    inputs: &GraphInputs<'_>,
    split: &Split,
    cfg: &TrainConfig,
    rng: &mut R,
    cache: &mut PropagationCache,
    mode: PropagationMode,
) -> Result<TrainOutcome> {
    spec.validate()?;
    cfg.validate()?;
    split.validate(inputs.labels.len())?;
    if inputs.features.rows() != inputs.adj.n_nodes() || inputs.labels.len() != inputs.adj.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "graph has {} nodes, features {} rows, labels {} entries",
            inputs.adj.n_nodes(),
            inputs.features.rows(),
            inputs.labels.len()
        )));
    }
    let mut seen = vec![false; inputs.n_classes];
    for &i in &split.train {
        if inputs.labels[i] >= inputs.n_classes {
            return Err(Error::InvalidParameter(format!(
                "label {} out of range",
                inputs.labels[i]
            )));
        }
        seen[inputs.labels[i]] = true;
    }
    if let Some(c) = seen.iter().position(|s| !s) {
        log::warn!("class {c} has no training nodes for {}", spec.name());
    }

    let propagated = match (spec.propagation(), mode) {
        (Some(p), PropagationMode::Precomputed) => Some(cache.get_or_compute(p, inputs.adj, inputs.features)?),
        _ => None,
    };
    let trainer = Trainer {
        spec,
        inputs,
        propagated,
        mode,
        dropout_p: spec.effective_dropout(),
    };

    let mut params = ModelParams::init(spec, inputs.features.cols(), inputs.n_classes, cfg.weight_decay, rng);
    let selection: &[usize] = if split.val.is_empty() { &split.train } else { &split.val };
    let mut adam = AdamState::new();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut since_best = 0usize;

    for epoch in 0..cfg.max_epochs {
        params.zero_grad();
        let loss = trainer.step(&mut params, &split.train, rng)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        adam_step(&mut params.all_mut(), &mut adam, cfg).map_err(|_| Error::Diverged { epoch, loss })?;

        let val_accuracy = evaluate_accuracy(&trainer.predict(&params)?, inputs.labels, selection)?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss,
            val_accuracy,
        });
        match &best {
            Some((acc, _, _)) if val_accuracy <= *acc => since_best += 1,
            _ => {
                best = Some((val_accuracy, epoch, params.clone()));
                since_best = 0;
            }
        }
        if cfg.patience > 0 && since_best >= cfg.patience {
            break;
        }
    }

    let (best_epoch, params) = match best {
        Some((_, e, p)) => (e, p),
        None => (0, params),
    };
    Ok(TrainOutcome {
        params,
        best_epoch,
        history,
    })
}
