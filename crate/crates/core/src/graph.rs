//! Sparse adjacency storage and the parameter-free propagation operators.
//!
//! Graphs are undirected and stored in CSR form with both directions of
//! every edge materialized. [`NormalizedAdjacency`] is the symmetric
//! normalization `(D+I)^{-1/2} (A+I) (D+I)^{-1/2}` with its self-loops stored
//! explicitly, so a single SpMM kernel serves every propagation operator.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Default node-count bound for [`ppr_exact_dense`].
pub const DEFAULT_DENSE_LIMIT: usize = 2000;
pub const DEFAULT_PPR_ITERS: usize = 10;
pub const DEFAULT_PPR_TOL: f64 = 1e-6;

/// One input edge: `(src, dst, weight)`; a missing weight means 1.
pub type Edge = (usize, usize, Option<f64>);

/// Symmetric weighted adjacency in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    n_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseGraph {
    /// Builds a graph from an undirected edge list.
    ///
    /// Each edge is mirrored, self-loops are dropped, and repeated entries
    /// for the same unordered pair are summed. Listing `(0,1)` and `(1,0)`
    /// therefore yields weight 2 in both directions.
    pub fn from_edge_list(edges: &[Edge], n_nodes: usize) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut canon: Vec<(usize, usize, f64)> = Vec::with_capacity(edges.len());
        for &(src, dst, weight) in edges {
            for index in [src, dst] {
                if index >= n_nodes {
                    return Err(Error::IndexOutOfRange { index, n_nodes });
                }
            }
            let w = weight.unwrap_or(1.0);
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::NonPositiveWeight(w));
            }
            if src != dst {
                canon.push((src.min(dst), src.max(dst), w));
            }
        }
        // Stable sort keeps input order among duplicates so the summed
        // weight is identical for (i,j) and (j,i).
        canon.sort_by_key(|&(i, j, _)| (i, j));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(canon.len());
        for (i, j, w) in canon {
            match merged.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += w,
                _ => merged.push((i, j, w)),
            }
        }

        let mut entries: Vec<(usize, usize, f64)> = merged.iter().map(|&(i, j, w)| (j, i, w)).collect();
        entries.extend(merged);
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; n_nodes + 1];
        for &(r, _, _) in &entries {
            row_ptr[r + 1] += 1;
        }
        for i in 0..n_nodes {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = entries.iter().map(|e| e.1).collect();
        let values = entries.iter().map(|e| e.2).collect();
        Ok(Self {
            n_nodes,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds a graph from raw CSR arrays, validating every invariant.
    pub fn from_csr(n_nodes: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::EmptyGraph);
        }
        let bad = |msg: &str| Error::InvalidParameter(format!("CSR: {msg}"));
        if row_ptr.len() != n_nodes + 1 || row_ptr[0] != 0 {
            return Err(bad("row_ptr must have n_nodes+1 entries starting at 0"));
        }
        if row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err(bad("row_ptr must be nondecreasing"));
        }
        if *row_ptr.last().unwrap() != col_idx.len() || col_idx.len() != values.len() {
            return Err(bad("row_ptr, col_idx and values lengths disagree"));
        }
        let g = Self {
            n_nodes,
            row_ptr,
            col_idx,
            values,
        };
        for i in 0..n_nodes {
            let (cols, vals) = g.row(i);
            for (k, (&j, &w)) in cols.iter().zip(vals).enumerate() {
                if j >= n_nodes {
                    return Err(Error::IndexOutOfRange { index: j, n_nodes });
                }
                if j == i {
                    return Err(bad("self-loops are not stored"));
                }
                if k > 0 && cols[k - 1] >= j {
                    return Err(bad("columns must be strictly increasing within a row"));
                }
                if !(w > 0.0 && w.is_finite()) {
                    return Err(Error::NonPositiveWeight(w));
                }
                if g.weight(j, i) != Some(w) {
                    return Err(bad("adjacency is not symmetric"));
                }
            }
        }
        Ok(g)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Number of stored (directed) entries, i.e. twice the edge count.
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and weights of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[s..e], &self.values[s..e])
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).ok().map(|k| vals[k])
    }

    /// Upper-triangle edges `(i, j, w)` with `i < j`, in CSR order.
    pub fn undirected_edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_nodes).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter()
                .zip(vals)
                .filter(move |(&j, _)| j > i)
                .map(move |(&j, &w)| (i, j, w))
        })
    }

    /// Applies a node relabeling: node `i` becomes `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_nodes {
            return Err(Error::DimensionMismatch(format!(
                "permutation of length {} for {} nodes",
                perm.len(),
                self.n_nodes
            )));
        }
        let edges: Vec<Edge> = self
            .undirected_edges()
            .map(|(i, j, w)| (perm[i], perm[j], Some(w)))
            .collect();
        Self::from_edge_list(&edges, self.n_nodes)
    }
}

/// Weighted degree of every node; isolated nodes get 0.
pub fn degrees(g: &SparseGraph) -> Vec<f64> {
    (0..g.n_nodes()).map(|i| g.row(i).1.iter().sum()).collect()
}

/// `(D+I)^{-1/2} (A+I) (D+I)^{-1/2}` in CSR form with explicit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    n_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

pub fn normalize_with_self_loops(g: &SparseGraph) -> NormalizedAdjacency {
    let n = g.n_nodes();
    let deg_plus_one: Vec<f64> = degrees(g).iter().map(|d| d + 1.0).collect();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(g.nnz() + n);
    let mut values = Vec::with_capacity(g.nnz() + n);
    row_ptr.push(0);
    for i in 0..n {
        let (cols, vals) = g.row(i);
        let mut diag_done = false;
        for (&j, &w) in cols.iter().zip(vals) {
            if !diag_done && j > i {
                col_idx.push(i);
                values.push(1.0 / deg_plus_one[i]);
                diag_done = true;
            }
            // The product under the root is commutative in floating point,
            // so (i,j) and (j,i) get bitwise-identical values.
            col_idx.push(j);
            values.push(w / (deg_plus_one[i] * deg_plus_one[j]).sqrt());
        }
        if !diag_done {
            col_idx.push(i);
            values.push(1.0 / deg_plus_one[i]);
        }
        row_ptr.push(col_idx.len());
    }
    NormalizedAdjacency {
        n_nodes: n,
        row_ptr,
        col_idx,
        values,
    }
}

impl NormalizedAdjacency {
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.col_idx[s..e], &self.values[s..e])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_nodes, self.n_nodes);
        for i in 0..self.n_nodes {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out.set(i, j, v);
            }
        }
        out
    }

    /// Exact mirrored-entry check.
    pub fn is_symmetric(&self) -> bool {
        (0..self.n_nodes).all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).all(|(&j, &v)| {
                let (cj, vj) = self.row(j);
                cj.binary_search(&i).is_ok_and(|k| vj[k] == v)
            })
        })
    }

    /// Eigenvalues of the dense form, ascending. Intended for small graphs.
    pub fn dense_eigenvalues(&self) -> Vec<f64> {
        let d = self.to_dense();
        let m = DMatrix::from_row_slice(self.n_nodes, self.n_nodes, d.data());
        let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

fn check_rows(adj: &NormalizedAdjacency, x: &DenseMatrix) -> Result<()> {
    if x.rows() != adj.n_nodes {
        return Err(Error::DimensionMismatch(format!(
            "feature matrix has {} rows, graph has {} nodes",
            x.rows(),
            adj.n_nodes
        )));
    }
    Ok(())
}

/// `Ã · x`.
pub fn spmm(adj: &NormalizedAdjacency, x: &DenseMatrix) -> Result<DenseMatrix> {
    check_rows(adj, x)?;
    let mut out = DenseMatrix::zeros(x.rows(), x.cols());
    spmm_into(adj, x, &mut out);
    Ok(out)
}

fn spmm_into(adj: &NormalizedAdjacency, x: &DenseMatrix, out: &mut DenseMatrix) {
    for i in 0..adj.n_nodes {
        let (cols, vals) = adj.row(i);
        let dst = out.row_mut(i);
        dst.iter_mut().for_each(|v| *v = 0.0);
        for (&j, &a) in cols.iter().zip(vals) {
            for (d, s) in dst.iter_mut().zip(x.row(j)) {
                *d += a * s;
            }
        }
    }
}

/// `Ã^k · x`; `k = 0` returns a copy of `x`.
pub fn propagate_power(adj: &NormalizedAdjacency, x: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    check_rows(adj, x)?;
    let mut cur = x.clone();
    let mut next = DenseMatrix::zeros(x.rows(), x.cols());
    for _ in 0..k {
        spmm_into(adj, &cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

/// Outcome of the personalized-PageRank fixed-point iteration.
#[derive(Debug, Clone)]
pub struct PprResult {
    pub features: DenseMatrix,
    /// Max-norm of the last update `Z^{t+1} - Z^t`.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Approximates `α (I - (1-α) Ã)^{-1} x` by iterating
/// `Z ← (1-α) Ã Z + α x` from `Z = x`.
///
/// Stops once the max-norm update falls to `tol` or after `iters` steps.
/// Running out of iterations is reported through `converged`, not as an
/// error.
pub fn propagate_ppr(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    alpha: f64,
    iters: usize,
    tol: f64,
) -> Result<PprResult> {
    check_rows(adj, x)?;
    check_alpha(alpha)?;
    if iters == 0 {
        return Err(Error::InvalidParameter("PPR needs at least one iteration".into()));
    }
    let teleport = x.scale(alpha);
    let mut z = x.clone();
    let mut az = DenseMatrix::zeros(x.rows(), x.cols());
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..iters {
        iterations += 1;
        spmm_into(adj, &z, &mut az);
        residual = 0.0;
        for ((zv, &av), &tv) in z.data_mut().iter_mut().zip(az.data()).zip(teleport.data()) {
            let next = (1.0 - alpha) * av + tv;
            residual = f64::max(residual, (next - *zv).abs());
            *zv = next;
        }
        if residual <= tol {
            converged = true;
            break;
        }
    }
    Ok(PprResult {
        features: z,
        residual,
        iterations,
        converged,
    })
}

/// Solves `(I - (1-α) Ã) Z = α x` densely. Refuses graphs above
/// [`DEFAULT_DENSE_LIMIT`] nodes.
pub fn ppr_exact_dense(adj: &NormalizedAdjacency, x: &DenseMatrix, alpha: f64) -> Result<DenseMatrix> {
    ppr_exact_dense_with_limit(adj, x, alpha, DEFAULT_DENSE_LIMIT)
}

pub fn ppr_exact_dense_with_limit(
    adj: &NormalizedAdjacency,
    x: &DenseMatrix,
    alpha: f64,
    max_nodes: usize,
) -> Result<DenseMatrix> {
    check_rows(adj, x)?;
    check_alpha(alpha)?;
    let n = adj.n_nodes;
    if n > max_nodes {
        return Err(Error::InvalidParameter(format!(
            "dense PPR limited to {max_nodes} nodes, graph has {n}"
        )));
    }
    let mut system = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        let (cols, vals) = adj.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            system[(i, j)] -= (1.0 - alpha) * v;
        }
    }
    let rhs = DMatrix::from_row_slice(n, x.cols(), x.data()) * alpha;
    let sol = system.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    let mut out = DenseMatrix::zeros(n, x.cols());
    for i in 0..n {
        for c in 0..x.cols() {
            out.set(i, c, sol[(i, c)]);
        }
    }
    if !out.is_finite() {
        return Err(Error::SingularSystem);
    }
    Ok(out)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> NormalizedAdjacency {
        normalize_with_self_loops(&SparseGraph::from_edge_list(&[(0, 1, None)], 2).unwrap())
    }

    #[test]
    fn empty_graph_has_flat_row_ptr() {
        let g = SparseGraph::from_edge_list(&[], 3).unwrap();
        assert_eq!(g.row_ptr(), &[0, 0, 0, 0]);
        assert_eq!(degrees(&g), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_edge_is_mirrored() {
        let g = SparseGraph::from_edge_list(&[(0, 1, None)], 2).unwrap();
        assert_eq!(g.weight(0, 1), Some(1.0));
        assert_eq!(g.weight(1, 0), Some(1.0));
        assert_eq!(degrees(&g), vec![1.0, 1.0]);
    }

    #[test]
    fn duplicate_entries_are_summed() {
        let g = SparseGraph::from_edge_list(&[(0, 1, None), (1, 0, None)], 2).unwrap();
        assert_eq!(g.nnz(), 2);
        assert_eq!(g.weight(0, 1), Some(2.0));
        assert_eq!(g.weight(1, 0), Some(2.0));
    }

    #[test]
    fn self_loops_dropped_and_columns_sorted() {
        let g = SparseGraph::from_edge_list(&[(2, 0, None), (1, 1, None), (2, 1, Some(0.5)), (0, 1, None)], 3).unwrap();
        for i in 0..3 {
            let (cols, _) = g.row(i);
            assert!(!cols.contains(&i));
            assert!(cols.windows(2).all(|w| w[0] < w[1]));
        }
        assert_eq!(degrees(&g), vec![2.0, 1.5, 1.5]);
    }

    #[test]
    fn triangle_degrees() {
        let g = SparseGraph::from_edge_list(&[(0, 1, None), (1, 2, None), (2, 0, None)], 3).unwrap();
        assert_eq!(degrees(&g), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn edge_list_errors() {
        assert!(matches!(SparseGraph::from_edge_list(&[], 0), Err(Error::EmptyGraph)));
        assert!(matches!(
            SparseGraph::from_edge_list(&[(0, 3, None)], 3),
            Err(Error::IndexOutOfRange { index: 3, .. })
        ));
        assert!(matches!(
            SparseGraph::from_edge_list(&[(0, 1, Some(0.0))], 3),
            Err(Error::NonPositiveWeight(_))
        ));
        assert!(SparseGraph::from_edge_list(&[(0, 1, Some(-1.0))], 3).is_err());
    }

    #[test]
    fn from_csr_validates() {
        let g = SparseGraph::from_edge_list(&[(0, 1, None), (1, 2, Some(3.0))], 3).unwrap();
        let rebuilt =
            SparseGraph::from_csr(3, g.row_ptr().to_vec(), g.col_idx().to_vec(), g.values().to_vec()).unwrap();
        assert_eq!(rebuilt, g);
        // asymmetric
        assert!(SparseGraph::from_csr(2, vec![0, 1, 1], vec![1], vec![1.0]).is_err());
        // self loop
        assert!(SparseGraph::from_csr(1, vec![0, 1], vec![0], vec![1.0]).is_err());
    }

    #[test]
    fn normalization_small_cases() {
        let single = normalize_with_self_loops(&SparseGraph::from_edge_list(&[], 1).unwrap());
        assert_eq!(single.to_dense(), DenseMatrix::from_rows(&[[1.0]]));
        assert_eq!(pair().to_dense(), DenseMatrix::from_rows(&[[0.5, 0.5], [0.5, 0.5]]));
    }

    #[test]
    fn spmm_small_cases() {
        let single = normalize_with_self_loops(&SparseGraph::from_edge_list(&[], 1).unwrap());
        let x = DenseMatrix::from_rows(&[[3.0]]);
        assert_eq!(spmm(&single, &x).unwrap(), x);
        let x = DenseMatrix::from_rows(&[[1.0], [0.0]]);
        assert_eq!(spmm(&pair(), &x).unwrap(), DenseMatrix::from_rows(&[[0.5], [0.5]]));
        assert_eq!(
            spmm(&pair(), &DenseMatrix::zeros(2, 3)).unwrap(),
            DenseMatrix::zeros(2, 3)
        );
        assert!(spmm(&pair(), &DenseMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn power_small_cases() {
        let x = DenseMatrix::from_rows(&[[1.0], [0.0]]);
        assert_eq!(propagate_power(&pair(), &x, 0).unwrap(), x);
        assert_eq!(
            propagate_power(&pair(), &x, 2).unwrap(),
            DenseMatrix::from_rows(&[[0.5], [0.5]])
        );
    }

    #[test]
    fn ppr_small_cases() {
        let x = DenseMatrix::from_rows(&[[1.0], [0.0]]);
        let r = propagate_ppr(&pair(), &x, 1.0, 10, 1e-6).unwrap();
        assert_eq!(r.features, x);
        assert!(r.converged);

        let r = propagate_ppr(&pair(), &x, 0.5, 200, 1e-12).unwrap();
        assert!(r.converged);
        let expected = DenseMatrix::from_rows(&[[0.75], [0.25]]);
        assert!(r.features.max_abs_diff(&expected) < 1e-11);
        let exact = ppr_exact_dense(&pair(), &x, 0.5).unwrap();
        assert!(exact.max_abs_diff(&expected) < 1e-12);

        let zero = DenseMatrix::zeros(2, 2);
        assert_eq!(propagate_ppr(&pair(), &zero, 0.3, 5, 1e-6).unwrap().features, zero);
    }

    #[test]
    fn ppr_reports_non_convergence() {
        let x = DenseMatrix::from_rows(&[[1.0], [0.0]]);
        let r = propagate_ppr(&pair(), &x, 0.1, 1, 1e-12).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 1);
        assert!(r.residual > 1e-12);
    }

    #[test]
    fn ppr_parameter_errors() {
        let x = DenseMatrix::from_rows(&[[1.0], [0.0]]);
        assert!(propagate_ppr(&pair(), &x, 0.0, 10, 1e-6).is_err());
        assert!(propagate_ppr(&pair(), &x, 1.5, 10, 1e-6).is_err());
        assert!(propagate_ppr(&pair(), &x, 0.5, 0, 1e-6).is_err());
        assert!(ppr_exact_dense_with_limit(&pair(), &x, 0.5, 1).is_err());
    }

    #[test]
    fn exact_ppr_trivial_cases() {
        let single = normalize_with_self_loops(&SparseGraph::from_edge_list(&[], 1).unwrap());
        let x = DenseMatrix::from_rows(&[[2.5, -1.0]]);
        for alpha in [0.05, 0.5, 1.0] {
            assert!(ppr_exact_dense(&single, &x, alpha).unwrap().max_abs_diff(&x) < 1e-14);
        }
        let x = DenseMatrix::from_rows(&[[1.0], [-2.0]]);
        assert!(ppr_exact_dense(&pair(), &x, 1.0).unwrap().max_abs_diff(&x) < 1e-14);
    }
}
