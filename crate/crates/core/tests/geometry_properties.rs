use ndarray::{Array1, Array2};
use prefill_router::geometry::{
    anisotropy, anisotropy_gram, effective_dimensionality, fisher_j, select_layers, FisherStats,
    LayerDiagnostics, SelectionCriterion, TargetSeparation,
};
use prefill_router::ingest::{upper_half_start, MatrixKey, Pooling};
use prefill_router::synth::{generate, SynthSpec};
use proptest::prelude::*;

fn matrix(n: std::ops::Range<usize>, d: std::ops::Range<usize>) -> impl Strategy<Value = Array2<f64>> {
    (n, d).prop_flat_map(|(n, d)| {
        prop::collection::vec(-3.0f64..3.0, n * d)
            .prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
    })
}

fn labelled(n: std::ops::Range<usize>, d: std::ops::Range<usize>) -> impl Strategy<Value = (Array2<f64>, Vec<bool>)> {
    matrix(n, d).prop_flat_map(|x| {
        let n = x.nrows();
        prop::collection::vec(any::<bool>(), n).prop_map(move |mut y| {
            y[0] = true;
            y[1] = false;
            (x.clone(), y)
        })
    })
}

/// `I − 2vvᵀ/‖v‖²`
fn reflection(v: &[f64]) -> Array2<f64> {
    let d = v.len();
    let nn: f64 = v.iter().map(|a| a * a).sum();
    Array2::from_shape_fn((d, d), |(i, j)| f64::from(u8::from(i == j)) - 2.0 * v[i] * v[j] / nn)
}

fn stats(j: f64) -> FisherStats {
    FisherStats {
        j,
        n0: 1,
        n1: 1,
        mean0: Array1::zeros(1),
        mean1: Array1::zeros(1),
        trace0: 1.0,
        trace1: 1.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deff_is_scale_invariant(x in matrix(3..40, 1..8), c in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0]) {
        if let Ok(a) = effective_dimensionality(x.view()) {
            let b = effective_dimensionality((&x * c).view()).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{} vs {}", a, b);
        }
    }

    #[test]
    fn anisotropy_ignores_row_scale(
        x in matrix(2..60, 1..8),
        scales in prop::collection::vec(0.01f64..100.0, 60),
    ) {
        prop_assume!(x.rows().into_iter().all(|r| r.dot(&r) > 1e-6));
        let mut y = x.clone();
        for (i, mut row) in y.rows_mut().into_iter().enumerate() {
            row *= scales[i];
        }
        let a = anisotropy(x.view()).unwrap();
        let b = anisotropy(y.view()).unwrap();
        prop_assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn gram_identity_matches_pairs(x in matrix(2..200, 1..6), shift in 0.0f64..2.0) {
        let x = x + shift;
        prop_assume!(x.rows().into_iter().all(|r| r.dot(&r) > 1e-6));
        let n = x.nrows();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let (a, b) = (x.row(i), x.row(j));
                    total += a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt());
                }
            }
        }
        let brute = total / (n * (n - 1)) as f64;
        prop_assert!((anisotropy_gram(x.view()).unwrap() - brute).abs() <= 1e-6);
    }

    #[test]
    fn fisher_is_rotation_invariant(
        (x, y) in labelled(4..60, 2..7),
        v in prop::collection::vec(-1.0f64..1.0, 7),
        w in prop::collection::vec(-1.0f64..1.0, 7),
    ) {
        let d = x.ncols();
        prop_assume!(v[..d].iter().map(|a| a * a).sum::<f64>() > 1e-3);
        prop_assume!(w[..d].iter().map(|a| a * a).sum::<f64>() > 1e-3);
        let q = reflection(&v[..d]).dot(&reflection(&w[..d]));
        if let Ok(a) = fisher_j(x.view(), &y) {
            let b = fisher_j(x.dot(&q).view(), &y).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{} vs {}", a, b);
        }
    }

    #[test]
    fn fisher_is_scale_invariant((x, y) in labelled(4..60, 1..7), c in 0.1f64..10.0) {
        if let Ok(a) = fisher_j(x.view(), &y) {
            let b = fisher_j((&x * c).view(), &y).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }
    }

    #[test]
    fn selection_stays_in_upper_half(
        num_layers in 2u16..20,
        scores in prop::collection::vec(0.0f64..5.0, 40),
    ) {
        let mut diags = Vec::new();
        for layer in 1..=num_layers {
            for (p, pooling) in [Pooling::LastToken, Pooling::Mean].into_iter().enumerate() {
                let s = scores[(2 * layer as usize + p) % scores.len()];
                diags.push(LayerDiagnostics {
                    encoder_id: "enc".into(),
                    num_layers,
                    layer,
                    pooling,
                    sample_count: 10,
                    pca_dim: 1,
                    d_eff: 1.0,
                    anisotropy: 0.0,
                    targets: vec![TargetSeparation { model_id: "m".into(), stats: stats(s) }],
                });
            }
        }
        let sel = select_layers(&diags, SelectionCriterion::FisherJ, None).unwrap();
        let c = sel.choice("m").unwrap();
        prop_assert!(c.layer >= upper_half_start(num_layers) && c.layer <= num_layers);
        let best = diags
            .iter()
            .filter(|d| d.layer >= upper_half_start(num_layers))
            .map(|d| d.fisher("m").unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(c.score, best);
    }
}

#[test]
fn signal_layer_dominates_fisher() {
    let mut spec = SynthSpec::planted(2.0);
    spec.n_queries = 2000;
    let data = generate(&spec).unwrap();
    let store = data.store("enc0").unwrap();
    let ids: Vec<String> = store.query_ids().to_vec();
    for model in data.labels.model_ids() {
        let y: Vec<bool> = ids.iter().map(|id| data.labels.is_correct(id, model).unwrap()).collect();
        let j = |layer| {
            let x = store.rows(MatrixKey::new(layer, Pooling::LastToken), &ids).unwrap();
            fisher_j(x.view(), &y).unwrap()
        };
        let signal = j(spec.signal_layer);
        let other = (1..=spec.num_layers)
            .filter(|&l| l != spec.signal_layer)
            .map(j)
            .fold(0.0, f64::max);
        assert!(signal >= 2.0 * other, "{model}: J {signal} vs {other}");
    }
}
