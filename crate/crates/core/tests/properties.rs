use gnnstat::data::{
    generate_synthetic, load_dataset, save_dataset, sketch_features, split_fraction, split_per_class, SketchConfig,
    Split, SyntheticSpec,
};
use gnnstat::graph::{normalize_with_self_loops, propagate_power, propagate_ppr, SparseGraph};
use gnnstat::selftest::{random_graph, random_matrix};
use gnnstat::DenseMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn graph_and_features(seed: u64, n: usize, d: usize) -> (SparseGraph, DenseMatrix, DenseMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_graph(n, rng.gen_range(0.5..5.0), seed.is_multiple_of(2), &mut rng);
    let x = random_matrix(n, d, &mut rng);
    let y = random_matrix(n, d, &mut rng);
    (g, x, y)
}

fn check_partition(split: &Split, n: usize) {
    let mut seen = vec![false; n];
    for &i in split.train.iter().chain(&split.val).chain(&split.test) {
        assert!(i < n);
        assert!(!seen[i], "index {i} appears twice");
        seen[i] = true;
    }
    assert!(!split.train.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_composes(seed in any::<u64>(), n in 1usize..40, a in 0usize..4, b in 0usize..4) {
        let (g, x, _) = graph_and_features(seed, n, 3);
        let adj = normalize_with_self_loops(&g);
        let direct = propagate_power(&adj, &x, a + b).unwrap();
        let chained = propagate_power(&adj, &propagate_power(&adj, &x, a).unwrap(), b).unwrap();
        prop_assert!(direct.max_abs_diff(&chained) <= 1e-10);
    }

    #[test]
    fn propagation_is_linear(seed in any::<u64>(), n in 1usize..40, ca in -3.0f64..3.0, cb in -3.0f64..3.0) {
        let (g, x, y) = graph_and_features(seed, n, 2);
        let adj = normalize_with_self_loops(&g);
        let mix = x.axpby(ca, &y, cb).unwrap();
        let ops: [&dyn Fn(&DenseMatrix) -> DenseMatrix; 2] = [
            &|m| propagate_power(&adj, m, 3).unwrap(),
            &|m| propagate_ppr(&adj, m, 0.1, 10, 0.0).unwrap().features,
        ];
        for op in ops {
            let lhs = op(&mix);
            let rhs = op(&x).axpby(ca, &op(&y), cb).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-10);
        }
    }

    #[test]
    fn normalized_adjacency_is_symmetric(seed in any::<u64>(), n in 1usize..60) {
        let (g, _, _) = graph_and_features(seed, n, 1);
        prop_assert!(normalize_with_self_loops(&g).is_symmetric());
    }

    #[test]
    fn sketch_is_linear(seed in any::<u64>(), d_out in 1usize..30, ca in -3.0f64..3.0, cb in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(7, 9, &mut rng);
        let y = random_matrix(7, 9, &mut rng);
        let cfg = SketchConfig { target_dim: d_out, seed };
        let lhs = sketch_features(&x.axpby(ca, &y, cb).unwrap(), &cfg).unwrap();
        let rhs = sketch_features(&x, &cfg).unwrap().axpby(ca, &sketch_features(&y, &cfg).unwrap(), cb).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-10);
    }

    #[test]
    fn fraction_splits_partition(seed in any::<u64>(), n in 4usize..300, frac in 0.05f64..0.95, val in 0.0f64..0.5) {
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        if let Ok(split) = split_fraction(&labels, frac, val, &mut ChaCha8Rng::seed_from_u64(seed)) {
            check_partition(&split, n);
            let n_obs = (frac * n as f64).floor() as usize;
            prop_assert_eq!(split.n_observed(), n_obs);
            prop_assert_eq!(split.val.len(), (val * n_obs as f64).floor() as usize);
            prop_assert_eq!(split.test.len(), n - n_obs);
        }
    }
}

#[test]
fn per_class_splits_are_disjoint_for_1000_seeds() {
    let labels: Vec<usize> = (0..90).map(|i| i % 3).collect();
    for seed in 0..1000 {
        let split = split_per_class(&labels, 5, 20, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        check_partition(&split, 90);
        assert_eq!(split.train.len(), 15);
        assert_eq!(split.val.len(), 20);
        assert_eq!(split.test.len(), 55);
        for c in 0..3 {
            assert_eq!(split.train.iter().filter(|&&i| labels[i] == c).count(), 5);
        }
    }
}

#[test]
fn sketch_preserves_gram_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = random_matrix(50, 100, &mut rng);
    let sx = sketch_features(
        &x,
        &SketchConfig {
            target_dim: 2000,
            seed: 3,
        },
    )
    .unwrap();
    let exact = x.matmul_t(&x).unwrap();
    let approx = sx.matmul_t(&sx).unwrap();
    let rel = approx.sub(&exact).unwrap().frobenius_norm() / exact.frobenius_norm();
    assert!(rel < 0.15, "relative Gram error {rel}");
}

#[test]
fn sketch_of_zero_is_zero_and_seeded() {
    let cfg = SketchConfig { target_dim: 5, seed: 1 };
    assert_eq!(
        sketch_features(&DenseMatrix::zeros(3, 4), &cfg).unwrap(),
        DenseMatrix::zeros(3, 5)
    );
    let x = random_matrix(3, 4, &mut ChaCha8Rng::seed_from_u64(0));
    assert_eq!(sketch_features(&x, &cfg).unwrap(), sketch_features(&x, &cfg).unwrap());
    assert!(sketch_features(&x, &SketchConfig { target_dim: 0, seed: 1 }).is_err());
}

#[test]
fn planetoid_observed_to_feature_ratios() {
    for (n, expected) in [(19717usize, 32.9), (2110, 3.5), (2485, 4.1)] {
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let split = split_fraction(&labels, 0.5, 0.2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let ratio = split.n_observed() as f64 / 300.0;
        assert!((ratio - expected).abs() <= 0.1, "n={n}: ratio {ratio}");
    }
}

#[test]
fn dataset_round_trips_bit_exactly() {
    let ds = generate_synthetic(&SyntheticSpec::default(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back, ds);
    let again = tempfile::tempdir().unwrap();
    save_dataset(&back, again.path()).unwrap();
    for f in ["meta.json", "graph.tsv", "features.tsv", "labels.tsv"] {
        assert_eq!(
            std::fs::read(dir.path().join(f)).unwrap(),
            std::fs::read(again.path().join(f)).unwrap(),
            "{f}"
        );
    }
}
