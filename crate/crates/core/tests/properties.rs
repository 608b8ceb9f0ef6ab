use proptest::prelude::*;

use qcad::dataset::{Column, Dataset, Feature, FeatureSchema, Kind, Role};
use qcad::eval::roc_auc;
use qcad::gower::{contextual_ranges, distance_matrix, gower, reference_group};
use qcad::qrf::{fit_forest, ForestParams, Predictors};

fn mixed_dataset(numeric: Vec<f64>, codes: Vec<u32>, behavioral: Vec<f64>) -> Dataset {
    let schema = FeatureSchema::new(vec![
        Feature::new("x", Role::Contextual, Kind::Numeric),
        Feature::new("c", Role::Contextual, Kind::Categorical),
        Feature::new("b", Role::Behavioral, Kind::Numeric),
    ])
    .unwrap();
    let columns = vec![
        Column::Numeric(numeric),
        Column::Categorical {
            codes,
            labels: (0..3).map(|l| l.to_string()).collect(),
        },
        Column::Numeric(behavioral),
    ];
    Dataset::new(schema, columns, None).unwrap()
}

fn rows(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<f64>, Vec<u32>, Vec<f64>)> {
    n.prop_flat_map(|n| {
        (
            prop::collection::vec(-100.0..100.0f64, n),
            prop::collection::vec(0u32..3, n),
            prop::collection::vec(-50.0..50.0f64, n),
        )
    })
}

fn forest_input() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, usize, u64, f64)> {
    (2usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0..1.0f64, n),
            prop::collection::vec(-5.0..5.0f64, n),
            2usize..8,
            any::<u64>(),
            -0.5..1.5f64,
        )
    })
}

proptest! {
    #[test]
    fn normalization_maps_into_unit_interval_and_is_idempotent((x, c, b) in rows(2..40)) {
        let ds = mixed_dataset(x, c, b.clone());
        let (norm, _) = ds.minmax_normalize();
        let col = norm.behavioral_column(0);
        prop_assert!(col.iter().all(|v| (0.0..=1.0).contains(v)));
        let back = norm.denormalize(0, col).unwrap();
        for (orig, rec) in b.iter().zip(&back) {
            prop_assert!((orig - rec).abs() <= 1e-9 * (1.0 + orig.abs()));
        }
        let (twice, _) = norm.minmax_normalize();
        for (a, z) in col.iter().zip(twice.behavioral_column(0)) {
            prop_assert!((a - z).abs() <= 1e-12);
        }
    }

    #[test]
    fn gower_is_a_bounded_symmetric_dissimilarity((x, c, b) in rows(2..30)) {
        let ds = mixed_dataset(x, c, b);
        let ranges = contextual_ranges(&ds);
        let m = distance_matrix(&ds);
        for i in 0..ds.len() {
            prop_assert_eq!(m.get(i, i), 0.0);
            for j in 0..ds.len() {
                let d = m.get(i, j);
                prop_assert!((0.0..=1.0).contains(&d));
                prop_assert_eq!(d, m.get(j, i));
                prop_assert_eq!(d, gower(&ds.contextual_row(i), &ds.contextual_row(j), &ranges));
            }
        }
    }

    #[test]
    fn smaller_reference_groups_are_prefixes((x, c, b) in rows(3..30), i in 0usize..30) {
        let ds = mixed_dataset(x, c, b);
        let m = distance_matrix(&ds);
        let i = i % ds.len();
        let full = reference_group(&m, i, ds.len() - 1).unwrap();
        prop_assert!(!full.members.contains(&i));
        for k in 1..ds.len() {
            let g = reference_group(&m, i, k).unwrap();
            prop_assert_eq!(&g.members[..], &full.members[..k]);
        }
    }

    #[test]
    fn weights_form_a_distribution((x, y, ns, seed, u) in forest_input()) {
        let params = ForestParams { min_samples_split: ns, ..ForestParams::default() };
        let forest = fit_forest(Predictors::new(x, 1).unwrap(), y, &params, seed).unwrap();
        let w = forest.leaf_weights(&[u]);
        prop_assert!(w.as_slice().iter().all(|&v| v >= 0.0));
        prop_assert!((w.sum() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn cdf_is_monotone_and_quantiles_invert_it((x, y, ns, seed, u) in forest_input(), alpha in 0.0..=1.0f64) {
        let params = ForestParams { min_samples_split: ns, ..ForestParams::default() };
        let forest = fit_forest(Predictors::new(x, 1).unwrap(), y.clone(), &params, seed).unwrap();
        let mut sorted = y.clone();
        sorted.sort_by(f64::total_cmp);
        let mut last = 0.0;
        for &v in &sorted {
            let f = forest.conditional_cdf(&[u], v);
            prop_assert!(f >= last && f <= 1.0 + 1e-12);
            last = f;
        }
        prop_assert!((last - 1.0).abs() <= 1e-12);
        let q = forest.conditional_quantiles(&[u], &[alpha])[0];
        prop_assert!(forest.conditional_cdf(&[u], q) >= alpha - 1e-9);
        // no smaller training response reaches alpha
        for &v in sorted.iter().filter(|&&v| v < q) {
            prop_assert!(forest.conditional_cdf(&[u], v) < alpha + 1e-9);
        }
    }

    #[test]
    fn roc_ignores_monotone_transforms(
        scores in prop::collection::vec(-10.0..10.0f64, 2..40),
        seed in any::<u64>(),
    ) {
        let labels: Vec<bool> = (0..scores.len()).map(|i| (seed >> (i % 64)) & 1 == 1 || i == 0).collect();
        let mut labels = labels;
        labels[1] = false;
        let transformed: Vec<f64> = scores.iter().map(|s| (s * 0.3).exp() + 7.0).collect();
        prop_assert_eq!(roc_auc(&scores, &labels).unwrap(), roc_auc(&transformed, &labels).unwrap());
    }
}
