//! Dense layers with hand-written backward passes, masked cross-entropy,
//! inverted dropout, Adam, and a central-difference gradient oracle.
//!
//! Only the fixed compositions the models need are supported; there is no
//! general autodiff tape.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// A learnable matrix with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub value: DenseMatrix,
    pub grad: DenseMatrix,
    /// L2 coefficient added to the gradient by [`adam_step`].
    pub weight_decay: f64,
}

impl Parameter {
    pub fn new(value: DenseMatrix, weight_decay: f64) -> Self {
        let grad = DenseMatrix::zeros(value.rows(), value.cols());
        Self {
            value,
            grad,
            weight_decay,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
    }

    fn accumulate(&mut self, g: &DenseMatrix) -> Result<()> {
        self.grad.check_same_shape(g)?;
        for (a, b) in self.grad.data_mut().iter_mut().zip(g.data()) {
            *a += b;
        }
        Ok(())
    }
}

/// Shape of the two-weight-matrix MLP used as a feature extractor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub dropout_p: f64,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.hidden_dim == 0 || self.out_dim == 0 {
            return Err(Error::InvalidParameter("MLP dimensions must be at least 1".into()));
        }
        check_dropout(self.dropout_p)
    }
}

/// Optimizer and stopping settings shared by every model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            weight_decay: 5e-4,
            max_epochs: 500,
            patience: 50,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be nonnegative, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be nonnegative, got {}", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("Adam betas must lie in [0,1) and eps must be positive".into());
        }
        Ok(())
    }
}

/// Glorot/Xavier uniform initialization of a `fan_in × fan_out` matrix.
pub fn glorot_init<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> DenseMatrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)).collect();
    DenseMatrix::from_vec(fan_in, fan_out, data).expect("shape is consistent")
}

/// `x · w`.
pub fn linear(x: &DenseMatrix, w: &Parameter) -> Result<DenseMatrix> {
    x.matmul(&w.value)
}

/// Backward of [`linear`]: accumulates `xᵀ · grad_out` into `w.grad` and
/// returns `grad_out · wᵀ`.
pub fn linear_backward(x: &DenseMatrix, w: &mut Parameter, grad_out: &DenseMatrix) -> Result<DenseMatrix> {
    let gw = x.t_matmul(grad_out)?;
    w.accumulate(&gw)?;
    grad_out.matmul_t(&w.value)
}

/// Like [`linear_backward`] but skips the input gradient.
pub fn linear_backward_weights(x: &DenseMatrix, w: &mut Parameter, grad_out: &DenseMatrix) -> Result<()> {
    let gw = x.t_matmul(grad_out)?;
    w.accumulate(&gw)
}

pub fn relu(x: &DenseMatrix) -> DenseMatrix {
    x.map(|v| v.max(0.0))
}

/// Gradient through ReLU given its input; the subgradient at 0 is 0.
pub fn relu_backward(pre: &DenseMatrix, grad_out: &DenseMatrix) -> Result<DenseMatrix> {
    pre.check_same_shape(grad_out)?;
    let data = pre
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&p, &g)| if p > 0.0 { g } else { 0.0 })
        .collect();
    DenseMatrix::from_vec(pre.rows(), pre.cols(), data)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

fn check_ce_inputs(logits: &DenseMatrix, labels: &[usize], mask: &[usize]) -> Result<()> {
    if mask.is_empty() {
        return Err(Error::EmptyIndexSet("cross-entropy mask"));
    }
    if labels.len() != logits.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} logit rows",
            labels.len(),
            logits.rows()
        )));
    }
    for &i in mask {
        if i >= logits.rows() {
            return Err(Error::IndexOutOfRange {
                index: i,
                n_nodes: logits.rows(),
            });
        }
        if labels[i] >= logits.cols() {
            return Err(Error::InvalidParameter(format!(
                "label {} of node {i} outside {} classes",
                labels[i],
                logits.cols()
            )));
        }
    }
    Ok(())
}

fn log_softmax_row(row: &[f64]) -> impl Iterator<Item = f64> + '_ {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row.iter().map(move |v| v - lse)
}

/// Mean over `mask` of `-log softmax(logits)[i, labels[i]]`.
pub fn masked_cross_entropy(logits: &DenseMatrix, labels: &[usize], mask: &[usize]) -> Result<f64> {
    check_ce_inputs(logits, labels, mask)?;
    let total: f64 = mask
        .iter()
        .map(|&i| -log_softmax_row(logits.row(i)).nth(labels[i]).unwrap())
        .sum();
    Ok(total / mask.len() as f64)
}

/// Loss and its gradient with respect to the logits. Rows outside the mask
/// get zero gradient.
pub fn masked_cross_entropy_grad(logits: &DenseMatrix, labels: &[usize], mask: &[usize]) -> Result<(f64, DenseMatrix)> {
    check_ce_inputs(logits, labels, mask)?;
    let scale = 1.0 / mask.len() as f64;
    let mut grad = DenseMatrix::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    for &i in mask {
        let logp: Vec<f64> = log_softmax_row(logits.row(i)).collect();
        total -= logp[labels[i]];
        let g = grad.row_mut(i);
        for (c, lp) in logp.iter().enumerate() {
            g[c] += scale * lp.exp();
        }
        g[labels[i]] -= scale;
    }
    Ok((total * scale, grad))
}

fn check_dropout(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "dropout probability must lie in [0,1), got {p}"
        )));
    }
    Ok(())
}

/// Inverted dropout. Identity when `p == 0` or outside training.
pub fn dropout<R: Rng + ?Sized>(x: &DenseMatrix, p: f64, training: bool, rng: &mut R) -> Result<DenseMatrix> {
    Ok(dropout_with_mask(x, p, training, rng)?.0)
}

/// Inverted dropout that also returns the scaling mask (entries 0 or
/// `1/(1-p)`) for the backward pass; `None` when dropout is inactive.
pub fn dropout_with_mask<R: Rng + ?Sized>(
    x: &DenseMatrix,
    p: f64,
    training: bool,
    rng: &mut R,
) -> Result<(DenseMatrix, Option<DenseMatrix>)> {
    check_dropout(p)?;
    if !training || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep_scale = 1.0 / (1.0 - p);
    let mask_data: Vec<f64> = (0..x.data().len())
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep_scale })
        .collect();
    let mask = DenseMatrix::from_vec(x.rows(), x.cols(), mask_data)?;
    let out = apply_mask(x, Some(&mask));
    Ok((out, Some(mask)))
}

/// Elementwise product with a dropout mask; identity for `None`.
pub fn apply_mask(x: &DenseMatrix, mask: Option<&DenseMatrix>) -> DenseMatrix {
    match mask {
        None => x.clone(),
        Some(m) => {
            let mut out = x.clone();
            for (v, s) in out.data_mut().iter_mut().zip(m.data()) {
                *v *= s;
            }
            out
        }
    }
}

/// Per-parameter first and second moment estimates.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    step: u64,
    moments: Vec<(DenseMatrix, DenseMatrix)>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update with bias correction. Weight decay is folded into the
/// gradient before the moment update (L2 style, not decoupled).
pub fn adam_step(params: &mut [&mut Parameter], state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    if state.moments.is_empty() {
        state.moments = params
            .iter()
            .map(|p| {
                let (r, c) = p.value.shape();
                (DenseMatrix::zeros(r, c), DenseMatrix::zeros(r, c))
            })
            .collect();
    }
    if state.moments.len() != params.len() {
        return Err(Error::DimensionMismatch(format!(
            "Adam state tracks {} parameters, got {}",
            state.moments.len(),
            params.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    for (p, (m, v)) in params.iter_mut().zip(state.moments.iter_mut()) {
        p.value.check_same_shape(m)?;
        let wd = p.weight_decay;
        let Parameter { value, grad, .. } = &mut **p;
        for (((w, &g), mi), vi) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            let g = g + wd * *w;
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
            let m_hat = *mi / bias1;
            let v_hat = *vi / bias2;
            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        if !value.is_finite() {
            return Err(Error::InvalidParameter("non-finite parameter after Adam update".into()));
        }
    }
    Ok(())
}

pub const DEFAULT_FD_EPS: f64 = 1e-5;

/// Central differences `(f(w+ε) - f(w-ε)) / 2ε` for every entry of `param`.
pub fn finite_diff_grad<F>(mut loss_fn: F, param: &DenseMatrix, eps: f64) -> DenseMatrix
where
    F: FnMut(&DenseMatrix) -> f64,
{
    let mut probe = param.clone();
    let mut grad = DenseMatrix::zeros(param.rows(), param.cols());
    for k in 0..param.data().len() {
        let orig = probe.data()[k];
        probe.data_mut()[k] = orig + eps;
        let up = loss_fn(&probe);
        probe.data_mut()[k] = orig - eps;
        let down = loss_fn(&probe);
        probe.data_mut()[k] = orig;
        grad.data_mut()[k] = (up - down) / (2.0 * eps);
    }
    grad
}

/// Relative error `‖a - b‖ / max(‖a‖, ‖b‖, floor)` in Frobenius norm.
pub fn relative_error(a: &DenseMatrix, b: &DenseMatrix, floor: f64) -> f64 {
    let diff = a.sub(b).map(|d| d.frobenius_norm()).unwrap_or(f64::INFINITY);
    diff / a.frobenius_norm().max(b.frobenius_norm()).max(floor)
}

/// Activations saved by [`mlp_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTape {
    input: DenseMatrix,
    pre_hidden: DenseMatrix,
    hidden: DenseMatrix,
    hidden_mask: Option<DenseMatrix>,
    pub logits: DenseMatrix,
}

/// `drop(relu(drop(x) · w1 + b1)) · w2`, returning logits and a tape.
pub fn mlp_forward<R: Rng + ?Sized>(
    x: &DenseMatrix,
    w1: &Parameter,
    b1: &Parameter,
    w2: &Parameter,
    dropout_p: f64,
    training: bool,
    rng: &mut R,
) -> Result<MlpTape> {
    let (input, _) = dropout_with_mask(x, dropout_p, training, rng)?;
    let mut pre_hidden = linear(&input, w1)?;
    pre_hidden.add_row_broadcast(&b1.value)?;
    let (hidden, hidden_mask) = dropout_with_mask(&relu(&pre_hidden), dropout_p, training, rng)?;
    let logits = linear(&hidden, w2)?;
    Ok(MlpTape {
        input,
        pre_hidden,
        hidden,
        hidden_mask,
        logits,
    })
}

/// Accumulates gradients of all three MLP parameters from `d_logits`.
pub fn mlp_backward(
    tape: &MlpTape,
    d_logits: &DenseMatrix,
    w1: &mut Parameter,
    b1: &mut Parameter,
    w2: &mut Parameter,
) -> Result<()> {
    let d_hidden = linear_backward(&tape.hidden, w2, d_logits)?;
    let d_hidden = apply_mask(&d_hidden, tape.hidden_mask.as_ref());
    let d_pre = relu_backward(&tape.pre_hidden, &d_hidden)?;
    b1.accumulate(&d_pre.column_sums())?;
    linear_backward_weights(&tape.input, w1, &d_pre)
}
