//! Invariant and oracle checks that need no external data.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Split;
use crate::dense::DenseMatrix;
use crate::error::Result;
use crate::graph::{normalize_with_self_loops, ppr_exact_dense, propagate_ppr, NormalizedAdjacency, SparseGraph};
use crate::models::{
    gcn_forward_with_activation, loss_and_gradients, predict, sgc_forward, train_on, Activation, GraphInputs,
    ModelKind, ModelParams, ModelSpec, Prediction, PropagationCache, PropagationMode,
};
use crate::nn::{finite_diff_grad, relative_error, Parameter, TrainConfig, DEFAULT_FD_EPS};

pub const PPR_GRAPHS: usize = 100;
pub const PPR_MAX_NODES: usize = 200;
pub const GRAD_TOL: f64 = 1e-4;
pub const COLLAPSE_TOL: f64 = 1e-8;
pub const EQUIVARIANCE_TOL: f64 = 1e-10;
pub const EIGEN_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed error, or a failure description.
    pub detail: String,
}

impl CheckReport {
    fn bound(name: &'static str, worst: f64, tol: f64) -> Self {
        Self {
            name,
            passed: worst <= tol,
            detail: format!("worst {worst:.3e} (tolerance {tol:.0e})"),
        }
    }

    fn error(name: &'static str, e: impl std::fmt::Display) -> Self {
        Self {
            name,
            passed: false,
            detail: format!("error: {e}"),
        }
    }
}

/// Erdős–Rényi graph with expected degree `mean_degree`; edge weights are
/// uniform in [0.5, 2) when `weighted`.
pub fn random_graph<R: Rng + ?Sized>(n: usize, mean_degree: f64, weighted: bool, rng: &mut R) -> SparseGraph {
    let p = if n > 1 {
        (mean_degree / (n - 1) as f64).min(1.0)
    } else {
        0.0
    };
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < p {
                let w = weighted.then(|| rng.gen_range(0.5..2.0));
                edges.push((i, j, w));
            }
        }
    }
    SparseGraph::from_edge_list(&edges, n).expect("generated edges are valid")
}

pub fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    DenseMatrix::from_vec(rows, cols, data).expect("finite samples")
}

/// Runs every check with generators seeded from `seed`.
pub fn run_selftest(seed: u64) -> Vec<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graphs: Vec<SparseGraph> = (0..PPR_GRAPHS)
        .map(|i| {
            let n = rng.gen_range(1..=PPR_MAX_NODES);
            random_graph(n, rng.gen_range(1.0..6.0), i % 2 == 1, &mut rng)
        })
        .collect();
    vec![
        check_ppr(&graphs, &mut rng),
        check_eigenvalues(&graphs),
        check_gradients(&mut rng),
        check_collapse(&mut rng),
        check_decoupling(&mut rng),
        check_equivariance(&mut rng),
    ]
}

/// Fixed-point PPR against the dense solve, `α` = 0.1 and the default `tol`.
fn check_ppr(graphs: &[SparseGraph], rng: &mut ChaCha8Rng) -> CheckReport {
    const NAME: &str = "ppr_matches_dense_solve";
    let (alpha, tol) = (0.1, crate::graph::DEFAULT_PPR_TOL);
    let mut worst = 0.0f64;
    for g in graphs {
        let adj = normalize_with_self_loops(g);
        let x = random_matrix(g.n_nodes(), 3, rng);
        let approx = match propagate_ppr(&adj, &x, alpha, 10_000, tol) {
            Ok(r) if r.converged && r.residual <= tol => r.features,
            Ok(r) => {
                return CheckReport::error(
                    NAME,
                    format!("no convergence on n={} (residual {:.3e})", g.n_nodes(), r.residual),
                )
            }
            Err(e) => return CheckReport::error(NAME, e),
        };
        match ppr_exact_dense(&adj, &x, alpha) {
            Ok(exact) => worst = worst.max(approx.max_abs_diff(&exact)),
            Err(e) => return CheckReport::error(NAME, e),
        }
    }
    CheckReport::bound(NAME, worst, 10.0 * tol)
}

fn check_eigenvalues(graphs: &[SparseGraph]) -> CheckReport {
    let mut worst = 0.0f64;
    for g in graphs {
        for ev in normalize_with_self_loops(g).dense_eigenvalues() {
            worst = worst.max(ev.abs() - 1.0);
        }
    }
    CheckReport {
        name: "eigenvalues_in_unit_interval",
        passed: worst <= EIGEN_SLACK,
        detail: format!("max |λ| - 1 = {worst:.3e}"),
    }
}

struct Instance {
    adj: NormalizedAdjacency,
    graph: SparseGraph,
    x: DenseMatrix,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Instance {
    fn random(rng: &mut ChaCha8Rng, n: usize, d: usize, c: usize) -> Self {
        let graph = random_graph(n, 3.0, true, rng);
        Self {
            adj: normalize_with_self_loops(&graph),
            graph,
            x: random_matrix(n, d, rng),
            labels: (0..n).map(|_| rng.gen_range(0..c)).collect(),
            n_classes: c,
        }
    }

    fn inputs(&self) -> GraphInputs<'_> {
        GraphInputs {
            adj: &self.adj,
            features: &self.x,
            labels: &self.labels,
            n_classes: self.n_classes,
        }
    }
}

fn small_spec(kind: ModelKind) -> ModelSpec {
    ModelSpec {
        hidden_dim: 5,
        ppr_iters: 50,
        ..ModelSpec::new(kind)
    }
}

fn gcn_spec(layers: usize) -> ModelSpec {
    ModelSpec {
        k_hops: layers,
        ..small_spec(ModelKind::Gcn)
    }
}

fn all_specs() -> Vec<ModelSpec> {
    let mut specs: Vec<ModelSpec> = ModelKind::ALL.iter().map(|&k| small_spec(k)).collect();
    specs.push(gcn_spec(3));
    specs
}

fn params_mut(p: &mut ModelParams, i: usize) -> &mut Parameter {
    if i < p.weights.len() {
        &mut p.weights[i]
    } else {
        p.hidden_bias.as_mut().expect("index within parameter count")
    }
}

fn n_params(p: &ModelParams) -> usize {
    p.weights.len() + usize::from(p.hidden_bias.is_some())
}

fn model_gradient_error(spec: &ModelSpec, inst: &Instance, rng: &mut ChaCha8Rng) -> Result<f64> {
    let inputs = inst.inputs();
    let mut params = ModelParams::init(spec, inst.x.cols(), inst.n_classes, 0.0, rng);
    if let Some(b) = params.hidden_bias.as_mut() {
        b.value = random_matrix(1, b.value.cols(), rng).scale(0.1);
    }
    let train: Vec<usize> = (0..inst.labels.len()).step_by(2).collect();
    loss_and_gradients(spec, &inputs, &mut params, &train)?;
    let mut worst = 0.0f64;
    for i in 0..n_params(&params) {
        let analytic = params_mut(&mut params, i).grad.clone();
        let value = params_mut(&mut params, i).value.clone();
        let mut probe = params.clone();
        let numeric = finite_diff_grad(
            |v| {
                params_mut(&mut probe, i).value = v.clone();
                loss_and_gradients(spec, &inputs, &mut probe, &train).unwrap_or(f64::NAN)
            },
            &value,
            DEFAULT_FD_EPS,
        );
        worst = worst.max(relative_error(&analytic, &numeric, 1e-8));
    }
    Ok(worst)
}

/// Analytic gradients of every model kind against central differences.
fn check_gradients(rng: &mut ChaCha8Rng) -> CheckReport {
    const NAME: &str = "gradients_match_finite_differences";
    let mut worst = 0.0f64;
    for trial in 0..3 {
        let inst = Instance::random(rng, 12 + trial, 4, 3);
        for spec in all_specs() {
            match model_gradient_error(&spec, &inst, rng) {
                Ok(e) if e.is_finite() => worst = worst.max(e),
                Ok(e) => return CheckReport::error(NAME, format!("{}: non-finite error {e}", spec.name())),
                Err(e) => return CheckReport::error(NAME, e),
            }
        }
    }
    CheckReport::bound(NAME, worst, GRAD_TOL)
}

/// A GCN without nonlinearity equals SGC with the product of its weights.
fn check_collapse(rng: &mut ChaCha8Rng) -> CheckReport {
    const NAME: &str = "gcn_linear_collapse";
    let mut worst = 0.0f64;
    let mut no_rng = rand::rngs::mock::StepRng::new(0, 0);
    for layers in [2usize, 3] {
        for _ in 0..5 {
            let inst = Instance::random(rng, 30, 6, 4);
            let gcn = ModelParams::init(&gcn_spec(layers), 6, 4, 0.0, rng);
            let mut product = gcn.weights[0].value.clone();
            for w in &gcn.weights[1..] {
                product = product.matmul(&w.value).expect("chained shapes");
            }
            let sgc = ModelParams {
                weights: vec![Parameter::new(product, 0.0)],
                hidden_bias: None,
            };
            let a =
                gcn_forward_with_activation(&inst.adj, &inst.x, &gcn, Activation::Identity, 0.0, false, &mut no_rng);
            let b = sgc_forward(&inst.adj, &inst.x, &sgc, layers);
            match (a, b) {
                (Ok(a), Ok(b)) => worst = worst.max(a.probabilities.max_abs_diff(&b.probabilities)),
                (Err(e), _) | (_, Err(e)) => return CheckReport::error(NAME, e),
            }
        }
    }
    CheckReport::bound(NAME, worst, COLLAPSE_TOL)
}

/// Precomputed and inline propagation must train to identical bits.
fn check_decoupling(rng: &mut ChaCha8Rng) -> CheckReport {
    const NAME: &str = "decoupled_equals_inline";
    let inst = Instance::random(rng, 40, 6, 3);
    let split = Split {
        train: (0..40).step_by(3).collect(),
        val: (1..40).step_by(3).collect(),
        test: (2..40).step_by(3).collect(),
    };
    let cfg = TrainConfig {
        max_epochs: 25,
        patience: 0,
        ..TrainConfig::default()
    };
    let inputs = inst.inputs();
    for kind in [ModelKind::Sgc, ModelKind::SgcMlp, ModelKind::Appnp, ModelKind::AppnpMlp] {
        let spec = small_spec(kind);
        let run = |mode| -> Result<(ModelParams, Vec<crate::models::EpochRecord>, Prediction)> {
            let mut cache = PropagationCache::new();
            let mut r = ChaCha8Rng::seed_from_u64(11);
            let out = train_on(&spec, &inputs, &split, &cfg, &mut r, &mut cache, mode)?;
            let pred = predict(&spec, &inputs, &out.params, &mut cache)?;
            Ok((out.params, out.history, pred))
        };
        match (run(PropagationMode::Precomputed), run(PropagationMode::Inline)) {
            (Ok(a), Ok(b)) => {
                let same = a.0 == b.0
                    && a.1.len() == b.1.len()
                    && a.1
                        .iter()
                        .zip(&b.1)
                        .all(|(x, y)| x.train_loss.to_bits() == y.train_loss.to_bits())
                    && a.2 == b.2;
                if !same {
                    return CheckReport::error(NAME, format!("{kind} differs between modes"));
                }
            }
            (Err(e), _) | (_, Err(e)) => return CheckReport::error(NAME, e),
        }
    }
    CheckReport {
        name: NAME,
        passed: true,
        detail: "bitwise identical for SGC, SGC_MLP, APPNP, APPNP_MLP".into(),
    }
}

/// Relabeling nodes permutes every model's output rows the same way.
fn check_equivariance(rng: &mut ChaCha8Rng) -> CheckReport {
    const NAME: &str = "permutation_equivariance";
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let n = 35;
        let inst = Instance::random(rng, n, 5, 3);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(rng);
        let graph_p = match inst.graph.permute(&perm) {
            Ok(g) => g,
            Err(e) => return CheckReport::error(NAME, e),
        };
        let adj_p = normalize_with_self_loops(&graph_p);
        let mut x_p = DenseMatrix::zeros(n, inst.x.cols());
        let mut labels_p = vec![0; n];
        for (i, &p) in perm.iter().enumerate() {
            x_p.row_mut(p).copy_from_slice(inst.x.row(i));
            labels_p[p] = inst.labels[i];
        }
        let inputs_p = GraphInputs {
            adj: &adj_p,
            features: &x_p,
            labels: &labels_p,
            n_classes: inst.n_classes,
        };
        for spec in all_specs() {
            let params = ModelParams::init(&spec, inst.x.cols(), inst.n_classes, 0.0, rng);
            let a = predict(&spec, &inst.inputs(), &params, &mut PropagationCache::new());
            let b = predict(&spec, &inputs_p, &params, &mut PropagationCache::new());
            let (a, b) = match (a, b) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => return CheckReport::error(NAME, e),
            };
            for (i, &p) in perm.iter().enumerate() {
                for (u, v) in a.probabilities.row(i).iter().zip(b.probabilities.row(p)) {
                    worst = worst.max((u - v).abs());
                }
            }
        }
    }
    CheckReport::bound(NAME, worst, EQUIVARIANCE_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_graph_is_reproducible() {
        let a = random_graph(30, 3.0, true, &mut ChaCha8Rng::seed_from_u64(1));
        let b = random_graph(30, 3.0, true, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        assert_eq!(random_graph(1, 3.0, false, &mut ChaCha8Rng::seed_from_u64(1)).nnz(), 0);
    }

    #[test]
    fn gradient_check_passes_for_every_kind() {
        let r = check_gradients(&mut ChaCha8Rng::seed_from_u64(3));
        assert!(r.passed, "{}", r.detail);
    }

    #[test]
    fn collapse_and_equivariance_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for r in [check_collapse(&mut rng), check_equivariance(&mut rng)] {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
