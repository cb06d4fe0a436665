//! Datasets, their on-disk text format, random feature sketching, split
//! generation, and a stochastic-block-model generator for tests.
//!
//! A dataset directory holds four UTF-8 files:
//!
//! - `meta.json`: `{"name", "n_nodes", "n_features", "n_classes"}`
//! - `graph.tsv`: one undirected edge per line, `src<TAB>dst[<TAB>weight]`,
//!   0-indexed, no self-loops
//! - `features.tsv`: one line per node, space-separated reals
//! - `labels.tsv`: one integer class per line

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::{Edge, SparseGraph};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub graph: SparseGraph,
    pub features: DenseMatrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        graph: SparseGraph,
        features: DenseMatrix,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            graph,
            features,
            labels,
            n_classes,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.graph.n_nodes();
        if self.features.rows() != n || self.labels.len() != n {
            return Err(Error::InvalidDataset(format!(
                "graph has {n} nodes, features {} rows, labels {} entries",
                self.features.rows(),
                self.labels.len()
            )));
        }
        let mut seen = vec![false; self.n_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            if y >= self.n_classes {
                return Err(Error::InvalidDataset(format!(
                    "label {y} of node {i} outside {} classes",
                    self.n_classes
                )));
            }
            seen[y] = true;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidDataset(format!("class {c} has no nodes")));
        }
        if !self.features.is_finite() {
            return Err(Error::InvalidDataset("non-finite feature value".into()));
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            name: self.name.clone(),
            n_nodes: self.n_nodes(),
            n_features: self.n_features(),
            n_classes: self.n_classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub name: String,
    pub n_nodes: usize,
    pub n_features: usize,
    pub n_classes: usize,
}

/// Train (observed, labeled), validation and test node sets. Each set is
/// sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Observed nodes: training plus validation.
    pub fn n_observed(&self) -> usize {
        self.train.len() + self.val.len()
    }

    /// Checks disjointness, bounds and a nonempty training set.
    pub fn validate(&self, n_nodes: usize) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::EmptyIndexSet("training set"));
        }
        let mut owner = vec![false; n_nodes];
        for set in [&self.train, &self.val, &self.test] {
            for &i in set {
                if i >= n_nodes {
                    return Err(Error::IndexOutOfRange { index: i, n_nodes });
                }
                if owner[i] {
                    return Err(Error::InvalidParameter(format!("node {i} appears in two split sets")));
                }
                owner[i] = true;
            }
        }
        Ok(())
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Non-empty lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Reads and validates a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta: DatasetMeta =
        serde_json::from_str(&read_text(&meta_path)?).map_err(|e| parse_err(&meta_path, e.line(), e.to_string()))?;
    if meta.n_nodes == 0 || meta.n_classes == 0 {
        return Err(Error::InvalidDataset("meta.json declares zero nodes or classes".into()));
    }

    let features = parse_features(&dir.join("features.tsv"), meta.n_nodes, meta.n_features)?;
    let labels = parse_labels(&dir.join("labels.tsv"), meta.n_nodes, meta.n_classes)?;
    let edges = parse_edges(&dir.join("graph.tsv"), meta.n_nodes)?;
    let graph = SparseGraph::from_edge_list(&edges, meta.n_nodes)?;
    Dataset::new(meta.name, graph, features, labels, meta.n_classes)
}

fn parse_features(path: &Path, n_nodes: usize, n_features: usize) -> Result<DenseMatrix> {
    let text = read_text(path)?;
    let mut data = Vec::with_capacity(n_nodes * n_features);
    let mut rows = 0usize;
    for (line_no, line) in content_lines(&text) {
        let before = data.len();
        for tok in line.split_ascii_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("invalid real {tok:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line_no, format!("non-finite value {tok:?}")));
            }
            data.push(v);
        }
        let got = data.len() - before;
        if got != n_features {
            return Err(parse_err(
                path,
                line_no,
                format!("expected {n_features} values, found {got}"),
            ));
        }
        rows += 1;
    }
    if rows != n_nodes {
        return Err(Error::InvalidDataset(format!(
            "{}: {rows} feature rows but meta.json declares {n_nodes} nodes",
            path.display()
        )));
    }
    DenseMatrix::from_vec(n_nodes, n_features, data)
}

fn parse_labels(path: &Path, n_nodes: usize, n_classes: usize) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    let mut labels = Vec::with_capacity(n_nodes);
    for (line_no, line) in content_lines(&text) {
        let tok = line.trim();
        let y: usize = tok
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("invalid label {tok:?}")))?;
        if y >= n_classes {
            return Err(parse_err(
                path,
                line_no,
                format!("label {y} out of range for {n_classes} classes"),
            ));
        }
        labels.push(y);
    }
    if labels.len() != n_nodes {
        return Err(Error::InvalidDataset(format!(
            "{}: {} labels but meta.json declares {n_nodes} nodes",
            path.display(),
            labels.len()
        )));
    }
    Ok(labels)
}

fn parse_edges(path: &Path, n_nodes: usize) -> Result<Vec<Edge>> {
    let text = read_text(path)?;
    let mut edges = Vec::new();
    for (line_no, line) in content_lines(&text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 2 or 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let index = |s: &str| -> Result<usize> {
            let i: usize = s
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line_no, format!("invalid node index {s:?}")))?;
            if i >= n_nodes {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("node {i} out of range for {n_nodes} nodes"),
                ));
            }
            Ok(i)
        };
        let (src, dst) = (index(fields[0])?, index(fields[1])?);
        if src == dst {
            return Err(parse_err(path, line_no, format!("self-loop on node {src}")));
        }
        let weight = match fields.get(2) {
            Some(s) => {
                let w: f64 = s
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(path, line_no, format!("invalid weight {s:?}")))?;
                if !(w > 0.0 && w.is_finite()) {
                    return Err(parse_err(path, line_no, format!("weight must be positive, got {w}")));
                }
                Some(w)
            }
            None => None,
        };
        edges.push((src, dst, weight));
    }
    Ok(edges)
}

/// Writes a dataset in the directory format read by [`load_dataset`].
/// Reals are printed in shortest round-trip form, so a reload is
/// bit-identical.
pub fn save_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    use std::fmt::Write as _;
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| -> Result<()> {
        let p: PathBuf = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };

    let meta = serde_json::to_string_pretty(&ds.meta()).expect("meta serializes");
    write("meta.json", meta + "\n")?;

    let mut graph = String::new();
    for (i, j, w) in ds.graph.undirected_edges() {
        if w == 1.0 {
            writeln!(graph, "{i}\t{j}").unwrap();
        } else {
            writeln!(graph, "{i}\t{j}\t{w}").unwrap();
        }
    }
    write("graph.tsv", graph)?;

    let mut feats = String::new();
    for r in 0..ds.features.rows() {
        for (c, v) in ds.features.row(r).iter().enumerate() {
            if c > 0 {
                feats.push(' ');
            }
            write!(feats, "{v}").unwrap();
        }
        feats.push('\n');
    }
    write("features.tsv", feats)?;

    let mut labels = String::new();
    for y in &ds.labels {
        writeln!(labels, "{y}").unwrap();
    }
    write("labels.tsv", labels)
}

/// Node, feature and class counts of the public citation benchmarks
/// (largest connected component).
pub const REFERENCE_STATS: [(&str, usize, usize, usize); 3] = [
    ("cora", 2485, 1433, 7),
    ("citeseer", 2110, 3703, 6),
    ("pubmed", 19717, 500, 3),
];

/// Mismatches between a dataset and the reference statistics for its name.
/// Empty for unknown names. These are warnings, not errors.
pub fn reference_stat_warnings(ds: &Dataset) -> Vec<String> {
    let name = ds.name.to_ascii_lowercase();
    let Some(&(_, n, d, c)) = REFERENCE_STATS.iter().find(|s| s.0 == name) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (what, got, want) in [
        ("nodes", ds.n_nodes(), n),
        ("features", ds.n_features(), d),
        ("classes", ds.n_classes, c),
    ] {
        if got != want {
            out.push(format!("{}: {got} {what}, reference has {want}", ds.name));
        }
    }
    out
}

/// Gaussian random projection target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SketchConfig {
    pub target_dim: usize,
    pub seed: u64,
}

/// `X' = X · W_r / √D'` with `W_r` a `D × D'` standard normal matrix
/// drawn from a generator seeded with `cfg.seed`.
pub fn sketch_features(x: &DenseMatrix, cfg: &SketchConfig) -> Result<DenseMatrix> {
    sketch_features_with_rng(x, cfg.target_dim, &mut ChaCha8Rng::seed_from_u64(cfg.seed))
}

pub fn sketch_features_with_rng<R: Rng + ?Sized>(
    x: &DenseMatrix,
    target_dim: usize,
    rng: &mut R,
) -> Result<DenseMatrix> {
    if target_dim == 0 {
        return Err(Error::InvalidParameter("sketch dimension must be at least 1".into()));
    }
    let projection_data: Vec<f64> = (0..x.cols() * target_dim).map(|_| rng.sample(StandardNormal)).collect();
    let projection = DenseMatrix::from_vec(x.cols(), target_dim, projection_data)?;
    Ok(x.matmul(&projection)?.scale(1.0 / (target_dim as f64).sqrt()))
}

/// `n_per_class` training nodes per class, `n_val` validation nodes from
/// the remainder, everything else for testing.
pub fn split_per_class<R: Rng + ?Sized>(
    labels: &[usize],
    n_per_class: usize,
    n_val: usize,
    rng: &mut R,
) -> Result<Split> {
    if labels.is_empty() {
        return Err(Error::EmptyIndexSet("labels"));
    }
    if n_per_class == 0 {
        return Err(Error::InvalidParameter("n_per_class must be at least 1".into()));
    }
    let n_classes = labels.iter().max().unwrap() + 1;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut in_train = vec![false; labels.len()];
    let mut train = Vec::with_capacity(n_per_class * n_classes);
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.len() < n_per_class {
            return Err(Error::ClassTooSmall {
                class,
                available: members.len(),
                required: n_per_class,
            });
        }
        let (chosen, _) = members.partial_shuffle(rng, n_per_class);
        for &i in chosen.iter() {
            in_train[i] = true;
            train.push(i);
        }
    }
    let mut rest: Vec<usize> = (0..labels.len()).filter(|&i| !in_train[i]).collect();
    if rest.len() < n_val {
        return Err(Error::InvalidParameter(format!(
            "{n_val} validation nodes requested but only {} remain after training selection",
            rest.len()
        )));
    }
    let (val, remaining) = rest.partial_shuffle(rng, n_val);
    let mut val = val.to_vec();
    let mut test = remaining.to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, val, test })
}

/// Observes `⌊frac_observed · N⌋` uniformly chosen nodes, holds out
/// `⌊val_frac_of_observed · N_obs⌋` of them for validation, and tests on
/// the unobserved rest.
pub fn split_fraction<R: Rng + ?Sized>(
    labels: &[usize],
    frac_observed: f64,
    val_frac_of_observed: f64,
    rng: &mut R,
) -> Result<Split> {
    if !(frac_observed > 0.0 && frac_observed < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "frac_observed must lie in (0, 1), got {frac_observed}"
        )));
    }
    if !(0.0..1.0).contains(&val_frac_of_observed) {
        return Err(Error::InvalidParameter(format!(
            "val_frac_of_observed must lie in [0, 1), got {val_frac_of_observed}"
        )));
    }
    let n = labels.len();
    let n_obs = (frac_observed * n as f64).floor() as usize;
    let n_val = (val_frac_of_observed * n_obs as f64).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut val = order[..n_val].to_vec();
    let mut train = order[n_val..n_obs].to_vec();
    let mut test = order[n_obs..].to_vec();
    if train.is_empty() {
        return Err(Error::EmptyIndexSet("training set"));
    }
    if test.is_empty() {
        return Err(Error::EmptyIndexSet("test set"));
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, val, test })
}

/// Parameters of [`generate_synthetic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_per_class: usize,
    pub n_classes: usize,
    pub feature_dim: usize,
    pub intra_p: f64,
    pub inter_p: f64,
    pub feature_separation: f64,
}

impl Default for SyntheticSpec {
    /// A small, nearly separable problem.
    fn default() -> Self {
        Self {
            n_per_class: 100,
            n_classes: 3,
            feature_dim: 16,
            intra_p: 0.05,
            inter_p: 0.001,
            feature_separation: 10.0,
        }
    }
}

/// Stochastic-block-model graph with Gaussian class-mean features.
///
/// Nodes are laid out class by class. Each class mean is a random direction
/// scaled to norm `feature_separation`; every node adds unit Gaussian noise.
pub fn generate_synthetic<R: Rng + ?Sized>(spec: &SyntheticSpec, rng: &mut R) -> Result<Dataset> {
    let SyntheticSpec {
        n_per_class,
        n_classes,
        feature_dim,
        intra_p,
        inter_p,
        feature_separation,
    } = *spec;
    let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
    if !prob_ok(intra_p) || !prob_ok(inter_p) || intra_p <= inter_p {
        return Err(Error::InvalidParameter(format!(
            "need 0 <= inter_p < intra_p <= 1, got intra_p={intra_p} inter_p={inter_p}"
        )));
    }
    if n_per_class == 0 || n_classes == 0 || feature_dim == 0 {
        return Err(Error::InvalidParameter("synthetic sizes must be at least 1".into()));
    }
    if !(feature_separation >= 0.0 && feature_separation.is_finite()) {
        return Err(Error::InvalidParameter("feature_separation must be nonnegative".into()));
    }
    let n = n_per_class * n_classes;
    let labels: Vec<usize> = (0..n).map(|i| i / n_per_class).collect();

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] { intra_p } else { inter_p };
            if rng.gen::<f64>() < p {
                edges.push((i, j, None));
            }
        }
    }
    let graph = SparseGraph::from_edge_list(&edges, n)?;

    let means: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| {
            let dir: Vec<f64> = (0..feature_dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            dir.into_iter().map(|v| v / norm * feature_separation).collect()
        })
        .collect();
    let mut data = Vec::with_capacity(n * feature_dim);
    for &y in &labels {
        for mu in &means[y] {
            let noise: f64 = rng.sample(StandardNormal);
            data.push(mu + noise);
        }
    }
    let features = DenseMatrix::from_vec(n, feature_dim, data)?;
    Dataset::new("synthetic", graph, features, labels, n_classes)
}
