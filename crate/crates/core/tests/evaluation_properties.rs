use prefill_router::evaluation::{
    brier, mdp_auccc, oracle_accuracy, oracle_distance, p_auccc, pareto_filter, roc_auc, CurvePoint, ORACLE_CORNER,
};
use prefill_router::ingest::{LabelRow, LabelTable, Regime};
use proptest::prelude::*;

fn point(x: f64, y: f64) -> CurvePoint {
    CurvePoint {
        invcost_norm: x,
        acc_norm: y,
        mean_cost: 1.0,
        accuracy: y,
        lambda: None,
    }
}

fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    prop::collection::vec((0u8..20, any::<bool>()), 2..200).prop_map(|v| {
        let s: Vec<f64> = v.iter().map(|(a, _)| f64::from(*a) / 7.0 - 1.0).collect();
        let mut y: Vec<bool> = v.iter().map(|(_, b)| *b).collect();
        y[0] = true;
        y[1] = false;
        (s, y)
    })
}

fn curve() -> impl Strategy<Value = Vec<CurvePoint>> {
    prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..12)
        .prop_map(|v| v.into_iter().map(|(x, y)| point(x, y)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn auc_is_pair_counting((s, y) in scored()) {
        let (mut half, mut p, mut q) = (0u64, 0u64, 0u64);
        for i in 0..s.len() {
            if y[i] { p += 1 } else { q += 1 }
            for j in 0..s.len() {
                if y[i] && !y[j] {
                    half += if s[i] > s[j] { 2 } else if s[i] == s[j] { 1 } else { 0 };
                }
            }
        }
        prop_assert_eq!(roc_auc(&s, &y).unwrap(), (half as f64 / 2.0) / (p as f64 * q as f64));
    }

    #[test]
    fn auc_ignores_monotone_transforms((s, y) in scored()) {
        let t: Vec<f64> = s.iter().map(|v| v.exp() * 3.0 + v.powi(3)).collect();
        prop_assert_eq!(roc_auc(&s, &y).unwrap(), roc_auc(&t, &y).unwrap());
    }

    #[test]
    fn brier_flip_symmetry(v in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..100)) {
        let p: Vec<f64> = v.iter().map(|x| x.0).collect();
        let y: Vec<bool> = v.iter().map(|x| x.1).collect();
        let fp: Vec<f64> = p.iter().map(|x| 1.0 - x).collect();
        let fy: Vec<bool> = y.iter().map(|x| !x).collect();
        prop_assert!((brier(&p, &y) - brier(&fp, &fy)).abs() <= 1e-12);
    }

    #[test]
    fn p_auccc_is_bounded(pts in prop::collection::vec((-0.5f64..1.5, -0.5f64..1.5), 1..12)) {
        let pts: Vec<CurvePoint> = pts.into_iter().map(|(x, y)| point(x.max(0.0), y)).collect();
        let a = p_auccc(&pts).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn points_under_the_envelope_leave_area_unchanged(pts in curve(), pick in any::<prop::sample::Index>(), drop in 0.0f64..1.0) {
        let base = p_auccc(&pts).unwrap();
        let host = pts[pick.index(pts.len())];
        let mut more = pts.clone();
        more.push(point(host.invcost_norm, host.acc_norm - drop));
        prop_assert_eq!(p_auccc(&more).unwrap(), base);
    }

    #[test]
    fn router_on_the_model_frontier_scores_zero(models in curve()) {
        let frontier = pareto_filter(&models);
        prop_assert_eq!(mdp_auccc(&frontier, &models).unwrap(), 0.0);
    }

    #[test]
    fn oracle_distance_vanishes_only_at_the_corner(pts in curve(), at_corner in any::<bool>()) {
        let pts: Vec<CurvePoint> = if at_corner {
            pts.iter().map(|_| point(ORACLE_CORNER.0, ORACLE_CORNER.1)).collect()
        } else {
            pts
        };
        let d = oracle_distance(&pts, ORACLE_CORNER).unwrap();
        let all_at = pts.iter().all(|p| (p.invcost_norm, p.acc_norm) == ORACLE_CORNER);
        prop_assert_eq!(d == 0.0, all_at);
    }

    #[test]
    fn oracle_accuracy_counts_all_incorrect(rows in prop::collection::vec(prop::collection::vec(any::<bool>(), 3), 1..200)) {
        let n = rows.len();
        let table = LabelTable::new(
            vec!["a".into(), "b".into(), "c".into()],
            rows.iter()
                .enumerate()
                .map(|(i, c)| LabelRow {
                    query_id: i.to_string(),
                    benchmark: "b".into(),
                    input_tokens: 10,
                    correct: c.clone(),
                })
                .collect(),
        )
        .unwrap();
        let fails = table.regime_counts()[&Regime::AllIncorrect];
        // the correctly rounded value of 1 − fails/n
        prop_assert_eq!(oracle_accuracy(&table), (n - fails) as f64 / n as f64);
    }
}
