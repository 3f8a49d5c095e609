use ndarray::Array2;
use prefill_router::routing::{route_indices, sweep_lambda, CostMatrix};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Case {
    p: Array2<f64>,
    c: Array2<f64>,
    lo: f64,
    hi: f64,
}

impl Case {
    fn costs(&self) -> CostMatrix {
        self.costs_with(self.c.clone())
    }

    fn costs_with(&self, c: Array2<f64>) -> CostMatrix {
        let (n, k) = c.dim();
        CostMatrix::new(
            (0..n).map(|i| format!("q{i}")).collect(),
            (0..k).map(|j| format!("m{j}")).collect(),
            c,
            self.lo,
            self.hi,
        )
        .unwrap()
    }
}

fn case() -> impl Strategy<Value = Case> {
    (1usize..15, 1usize..6).prop_flat_map(|(n, k)| {
        (
            prop::collection::vec(0u8..6, n * k),
            prop::collection::vec(1u8..8, n * k),
            0.0f64..4e-3,
            0.0f64..5e-3,
        )
            .prop_map(move |(p, c, lo, w)| Case {
                p: Array2::from_shape_vec((n, k), p.into_iter().map(|v| f64::from(v) / 5.0).collect()).unwrap(),
                c: Array2::from_shape_vec((n, k), c.into_iter().map(|v| f64::from(v) * 1e-3).collect()).unwrap(),
                lo,
                hi: lo + w,
            })
    })
}

fn argmin_cost(c: &Array2<f64>, q: usize) -> usize {
    (1..c.ncols()).fold(0, |b, j| if c[[q, j]] < c[[q, b]] { j } else { b })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn endpoints(case in case()) {
        let costs = case.costs();
        let greedy = route_indices(case.p.view(), &costs, 1.0).unwrap();
        let cheap = route_indices(case.p.view(), &costs, 0.0).unwrap();
        for q in 0..case.p.nrows() {
            let top = case.p.row(q).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tied: Vec<usize> = (0..case.p.ncols()).filter(|&j| case.p[[q, j]] == top).collect();
            let want = tied.iter().copied().fold(tied[0], |b, j| if case.c[[q, j]] < case.c[[q, b]] { j } else { b });
            prop_assert_eq!(greedy[q], want);
            prop_assert_eq!(cheap[q], argmin_cost(&case.c, q));
        }
    }

    #[test]
    fn raising_a_probability_keeps_the_choice(case in case(), lambda in 0.0f64..=1.0, q in 0usize..15, bump in 0.0f64..1.0) {
        let costs = case.costs();
        let q = q % case.p.nrows();
        let before = route_indices(case.p.view(), &costs, lambda).unwrap();
        let k = before[q];
        let mut p = case.p.clone();
        p[[q, k]] += bump;
        let after = route_indices(p.view(), &costs, lambda).unwrap();
        prop_assert_eq!(after[q], k);
    }

    #[test]
    fn shifting_a_query_cost_keeps_the_cheapest(case in case(), shift in 0.0f64..5e-3) {
        let base = route_indices(case.p.view(), &case.costs(), 0.0).unwrap();
        let shifted = route_indices(case.p.view(), &case.costs_with(&case.c + shift), 0.0).unwrap();
        prop_assert_eq!(base, shifted);
    }

    #[test]
    fn operating_points_are_bounded(case in case(), seed in any::<u64>()) {
        let (n, k) = case.p.dim();
        let y = Array2::from_shape_fn((n, k), |(i, j)| f64::from(u8::from((seed >> ((i * k + j) % 64)) & 1 == 1)));
        let sweep = sweep_lambda(case.p.view(), &case.costs(), y.view(), 0.05).unwrap();
        let realizable = case
            .c
            .rows()
            .into_iter()
            .map(|r| r.iter().copied().fold(0.0, f64::max))
            .sum::<f64>()
            / n as f64;
        prop_assert_eq!(sweep.raw_points, 21);
        for p in &sweep.points {
            prop_assert!((0.0..=1.0).contains(&p.accuracy));
            prop_assert!(p.mean_cost >= 0.0 && p.mean_cost <= realizable + 1e-15);
        }
    }
}
