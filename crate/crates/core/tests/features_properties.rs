use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use prefill_router::features::{build_features, fit_pca};
use prefill_router::geometry::{LayerChoice, LayerSelection, SelectionCriterion};
use prefill_router::ingest::{ActivationStore, MatrixKey, Pooling};
use proptest::prelude::*;

fn matrix(n: usize, d: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-2.0f64..2.0, n * d).prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn components_are_orthonormal(x in (3usize..30, 1usize..10).prop_flat_map(|(n, d)| matrix(n, d)), k in 1usize..10) {
        let (n, d) = x.dim();
        let k = k.min(d).min(n - 1);
        let pca = fit_pca(x.view(), k, 0).unwrap();
        let c = pca.components();
        let gram = c.dot(&c.t());
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((gram[[i, j]] - want).abs() <= 1e-6);
            }
        }
        let again = fit_pca(x.view(), k, 99).unwrap();
        prop_assert_eq!(pca, again);
    }

    #[test]
    fn projection_keeps_distances_in_span(
        (z, basis) in (4usize..30, 1usize..4, 4usize..9)
            .prop_flat_map(|(n, r, d)| (matrix(n, r), matrix(r, d))),
    ) {
        let x = z.dot(&basis);
        let (n, d) = x.dim();
        let rank = basis.nrows().min(n - 1).min(d);
        prop_assume!(rank == basis.nrows());
        let pca = fit_pca(x.view(), rank, 0).unwrap();
        // a near-singular basis makes the spanned subspace ill-defined
        prop_assume!(pca.explained_variance()[rank - 1] > 1e-6);
        let p = pca.project(x.view()).unwrap();
        for i in 0..n {
            for j in i + 1..n {
                let a = (&x.row(i) - &x.row(j)).mapv(|v| v * v).sum().sqrt();
                let b = (&p.row(i) - &p.row(j)).mapv(|v| v * v).sum().sqrt();
                prop_assert!((a - b).abs() <= 1e-6 * a.max(1.0), "{} vs {}", a, b);
            }
        }
    }

    #[test]
    fn full_rank_keeps_total_variance(x in (8usize..40, 1usize..6).prop_flat_map(|(n, d)| matrix(n, d))) {
        let d = x.ncols();
        let pca = fit_pca(x.view(), d, 0).unwrap();
        let total: f64 = x.var_axis(Axis(0), 1.0).sum();
        prop_assert!((pca.explained_variance().sum() - total).abs() <= 1e-6 * total.max(1.0));
    }

    #[test]
    fn features_follow_query_order(perm in Just((0..12).collect::<Vec<usize>>()).prop_shuffle()) {
        let n = 12;
        let ids: Vec<String> = (0..n).map(|i| format!("q{i}")).collect();
        let mut matrices = BTreeMap::new();
        for layer in [3u16, 4] {
            let m = Array2::from_shape_fn((n, 5), |(i, j)| ((i * 7 + j * 3 + layer as usize) % 11) as f32 - 5.0);
            matrices.insert(MatrixKey::new(layer, Pooling::LastToken), m);
        }
        let store = ActivationStore::from_matrices("enc", 4, ids.clone(), matrices).unwrap();
        let targets = vec!["a".to_string(), "b".to_string()];
        let selection = LayerSelection {
            choices: targets
                .iter()
                .zip([3u16, 4])
                .map(|(t, layer)| LayerChoice {
                    model_id: t.clone(),
                    encoder_id: "enc".into(),
                    layer,
                    pooling: Pooling::LastToken,
                    score: 1.0,
                    criterion: SelectionCriterion::FisherJ,
                })
                .collect(),
        };
        let mut pcas = BTreeMap::new();
        for c in &selection.choices {
            let x = store.rows(c.key(), &ids).unwrap();
            pcas.insert(c.model_id.clone(), fit_pca(x.view(), 3, 0).unwrap());
        }
        let stores = BTreeMap::from([("enc".to_string(), store)]);
        let full = build_features(&stores, &selection, &pcas, &targets, &ids).unwrap();
        let shuffled: Vec<String> = perm.iter().map(|&i| ids[i].clone()).collect();
        let part = build_features(&stores, &selection, &pcas, &targets, &shuffled).unwrap();
        prop_assert_eq!(full.dim(), 6);
        for (row, &i) in perm.iter().enumerate() {
            prop_assert_eq!(part.data.row(row), full.data.row(i));
        }
    }
}
