//! Acceptance checks. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero when any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};
use prefill_router::evaluation::{
    brier, headroom_and_savings, mdp_auccc, p_auccc, roc_auc, CurvePoint, NormalizationAnchors, RawPoint,
};
use prefill_router::geometry::{anisotropy_gram, SelectionCriterion};
use prefill_router::pipeline::{run_pipeline, RunConfig, RunOutput};
use prefill_router::predictors::{gradient_check, TrunkNetConfig};
use prefill_router::routing::{lambda_grid, route_indices, sweep_lambda, CostMatrix};
use prefill_router::synth::{generate, SynthSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (pass, detail) = match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        }
    };
    let out = Outcome {
        name,
        pass,
        detail: format!("{detail} [{:.1?}]", start.elapsed()),
    };
    println!("{} {}: {}", if out.pass { "PASS" } else { "FAIL" }, out.name, out.detail);
    out
}

fn auc_by_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let mut half_units = 0u64;
    let (mut p, mut q) = (0u64, 0u64);
    for (i, &yi) in labels.iter().enumerate() {
        if yi {
            p += 1;
        } else {
            q += 1;
        }
        if !yi {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj {
                continue;
            }
            half_units += if scores[i] > scores[j] {
                2
            } else if scores[i] == scores[j] {
                1
            } else {
                0
            };
        }
    }
    (half_units as f64 / 2.0) / (p as f64 * q as f64)
}

fn anisotropy_pairs(x: ArrayView2<f64>) -> f64 {
    let n = x.nrows();
    let unit: Vec<Vec<f64>> = x
        .rows()
        .into_iter()
        .map(|r| {
            let norm = r.dot(&r).sqrt();
            r.iter().map(|v| v / norm).collect()
        })
        .collect();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                total += unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    total / (n * (n - 1)) as f64
}

fn curve_point(x: f64, y: f64) -> CurvePoint {
    CurvePoint {
        invcost_norm: x,
        acc_norm: y,
        mean_cost: 1.0,
        accuracy: y,
        lambda: None,
    }
}

/// Midpoint Riemann sum of the piecewise-linear padded curve.
fn riemann_area(points: &[(f64, f64)], samples: usize) -> f64 {
    let mut best: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for &(x, y) in points {
        let e = best.entry(x.to_bits()).or_insert((x, y));
        e.1 = e.1.max(y);
    }
    let mut xy: Vec<(f64, f64)> = best.into_values().collect();
    xy.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut curve = vec![(0.0, xy[0].1)];
    curve.extend(xy.iter().copied().filter(|p| p.0 > 0.0));
    let right = curve.last().unwrap().0;
    let h = right / samples as f64;
    let mut seg = 0;
    let mut total = 0.0;
    for s in 0..samples {
        let x = (s as f64 + 0.5) * h;
        while seg + 2 < curve.len() && x > curve[seg + 1].0 {
            seg += 1;
        }
        let (a, b) = (curve[seg], curve[seg + 1]);
        total += a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0);
    }
    (total * h).clamp(0.0, 1.0)
}

fn metric_oracles() -> (bool, String) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut auc_mismatch = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=200);
        let levels = rng.random_range(2..=50);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        if roc_auc(&scores, &labels).unwrap() != auc_by_pairs(&scores, &labels) {
            auc_mismatch += 1;
        }
    }
    let mut aniso_err: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(2..=200);
        let d = rng.random_range(1..=32);
        let shift = rng.random_range(0.0..3.0);
        let x = Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0) + shift);
        aniso_err = aniso_err.max((anisotropy_gram(x.view()).unwrap() - anisotropy_pairs(x.view())).abs());
    }
    let mut area_err: f64 = 0.0;
    for _ in 0..20 {
        let pts: Vec<(f64, f64)> = (0..5)
            .map(|_| (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
            .collect();
        let cps: Vec<CurvePoint> = pts.iter().map(|&(x, y)| curve_point(x, y)).collect();
        area_err = area_err.max((p_auccc(&cps).unwrap() - riemann_area(&pts, 2_000_000)).abs());
    }
    let elapsed = start.elapsed();
    (
        auc_mismatch == 0 && aniso_err <= 1e-6 && area_err <= 1e-9 && elapsed < Duration::from_secs(10),
        format!(
            "auc mismatches {auc_mismatch}/1000, anisotropy err {aniso_err:.2e}, p_auccc err {area_err:.2e}, {elapsed:.1?}"
        ),
    )
}

fn trivial_anchors() -> (bool, String) {
    let labels = [true, false, true, true, false];
    let b = brier(&[0.5; 5], &labels);
    let auc = roc_auc(&[0.3; 5], &labels).unwrap();
    let rect = p_auccc(&[curve_point(1.0, 0.5)]).unwrap();
    let anchors = NormalizationAnchors::new(0.002, 0.01, 0.4, 0.9).unwrap();
    let (hi, lo) = (anchors.invcost(0.002), anchors.invcost(0.01));
    (
        b == 0.25 && auc == 0.5 && rect == 0.5 && hi == 1.0 && lo == 0.0,
        format!("brier {b}, tied auc {auc}, rectangle {rect}, invcost(C_min) {hi}, invcost(C_max) {lo}"),
    )
}

fn gradient() -> (bool, String) {
    let start = Instant::now();
    let cfg = TrunkNetConfig {
        trunk_hidden_sizes: vec![6, 4],
        ..Default::default()
    };
    let worst = (0..5).map(|s| gradient_check(&cfg, s)).fold(0.0, f64::max);
    let elapsed = start.elapsed();
    (
        worst <= 1e-3 && elapsed < Duration::from_secs(5),
        format!("max relative error {worst:.2e} over 5 seeds, {elapsed:.1?}"),
    )
}

fn write_dataset(spec: &SynthSpec, root: &Path) -> f64 {
    let data = generate(spec).expect("synth");
    data.write(&root.join("data")).expect("write dataset");
    data.metadata.mean_bayes_auc()
}

fn config(root: &Path, run: &str) -> RunConfig {
    let encoders = [("enc0".to_string(), root.join("data/activations/enc0"))].into();
    RunConfig::new(
        root.join(run),
        root.join("data/labels.csv"),
        root.join("data/pool.toml"),
        encoders,
    )
}

fn single_threaded(cfg: &RunConfig) -> (RunOutput, Duration) {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let out = pool.install(|| run_pipeline(cfg)).expect("pipeline");
    (out, start.elapsed())
}

fn layers(out: &RunOutput) -> Vec<u16> {
    out.selection.choices.iter().map(|c| c.layer).collect()
}

fn routing_semantics() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=20);
        let k = rng.random_range(1..=6);
        // coarse grids make ties common
        let p = Array2::from_shape_simple_fn((n, k), || rng.random_range(0..5) as f64 / 4.0);
        let c = Array2::from_shape_simple_fn((n, k), || rng.random_range(1..6) as f64 * 1e-3);
        let lo = rng.random_range(0.0..3e-3);
        let hi = lo + rng.random_range(0.0..4e-3);
        let ids: Vec<String> = (0..n).map(|i| format!("q{i}")).collect();
        let models: Vec<String> = (0..k).map(|j| format!("m{j}")).collect();
        let costs = CostMatrix::new(ids, models, c.clone(), lo, hi).unwrap();
        let greedy = route_indices(p.view(), &costs, 1.0).unwrap();
        let cheap = route_indices(p.view(), &costs, 0.0).unwrap();
        for q in 0..n {
            let mut want_greedy = 0;
            let mut want_cheap = 0;
            for j in 1..k {
                let (pj, pb, cj, cb) = (p[[q, j]], p[[q, want_greedy]], c[[q, j]], c[[q, want_greedy]]);
                if pj > pb || (pj == pb && cj < cb) {
                    want_greedy = j;
                }
                if c[[q, j]] < c[[q, want_cheap]] {
                    want_cheap = j;
                }
            }
            if greedy[q] != want_greedy || cheap[q] != want_cheap {
                bad += 1;
            }
        }
    }
    (bad == 0, format!("{bad} mismatched decisions over 1000 instances"))
}

fn sweep_grid() -> (bool, String) {
    let grid = lambda_grid(1e-2).unwrap();
    let n = 50;
    let p = Array2::from_shape_fn((n, 3), |(q, k)| ((q * 7 + k * 3) % 10) as f64 / 10.0);
    let c = Array2::from_shape_fn((n, 3), |(q, k)| (k + 1) as f64 * 1e-3 + q as f64 * 1e-5);
    let y = Array2::from_shape_fn((n, 3), |(q, k)| ((q + k) % 2) as f64);
    let ids: Vec<String> = (0..n).map(|i| format!("q{i}")).collect();
    let models: Vec<String> = (0..3).map(|j| format!("m{j}")).collect();
    let costs = CostMatrix::new(ids, models, c, 1e-3, 3.5e-3).unwrap();
    let sweep = sweep_lambda(p.view(), &costs, y.view(), 1e-2).unwrap();
    (
        grid.len() == 101 && sweep.raw_points == 101,
        format!("grid {} points, sweep {} raw points", grid.len(), sweep.raw_points),
    )
}

fn dominating_router() -> (bool, String) {
    let models = [curve_point(0.0, 0.6), curve_point(0.4, 0.35), curve_point(1.0, 0.0)];
    let router = [
        curve_point(0.05, 0.7),
        curve_point(0.45, 0.45),
        curve_point(1.0, 0.1),
    ];
    let mdp = mdp_auccc(&router, &models).unwrap();
    let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let accs = [0.62, 0.70, 0.78];
    let costs = [0.001, 0.003, 0.008];
    let oracle = 0.9;
    let router_point = RawPoint {
        lambda: Some(1.0),
        mean_cost: 0.005,
        accuracy: 0.84,
    };
    let h = headroom_and_savings(router_point, &ids, &accs, &costs, oracle).unwrap();
    let replay = RawPoint {
        lambda: Some(1.0),
        mean_cost: 0.004,
        accuracy: oracle,
    };
    let h1 = headroom_and_savings(replay, &ids, &accs, &costs, oracle).unwrap();
    (
        mdp > 0.0 && h.headroom_captured > 0.0 && h.headroom_captured <= 1.0 && h1.headroom_captured == 1.0,
        format!(
            "mdp {mdp:.4}, headroom {:.4}, oracle replay headroom {}",
            h.headroom_captured, h1.headroom_captured
        ),
    )
}

fn main() {
    let mut outcomes = vec![
        check("metric oracles", metric_oracles),
        check("trivial anchors", trivial_anchors),
        check("gradient check", gradient),
        check("routing semantics", routing_semantics),
        check("sweep grid counts", sweep_grid),
        check("dominating router", dominating_router),
    ];

    let planted_dir = tempfile::tempdir().unwrap();
    let planted_root = planted_dir.path();
    let bayes = write_dataset(&SynthSpec::planted(4.0), planted_root);
    let mut planted: Option<RunOutput> = None;
    outcomes.push(check("planted signal end-to-end", || {
        let (fisher, elapsed) = single_threaded(&config(planted_root, "fisher"));
        let mut cv_cfg = config(planted_root, "cv");
        cv_cfg.layer_criterion = SelectionCriterion::CvAuc;
        let cv = run_pipeline(&cv_cfg).expect("cv pipeline");
        let auc = fisher.report.mean_auc;
        let a = layers(&fisher).iter().all(|&l| l == 6);
        let b = auc >= 0.85 && (auc - bayes).abs() <= 0.05;
        let c = layers(&cv) == layers(&fisher);
        let t = elapsed < Duration::from_secs(180);
        let detail = format!(
            "fisher layers {:?}, cv layers {:?}, test auc {auc:.4} vs bayes {bayes:.4}, single-threaded {elapsed:.1?}",
            layers(&fisher),
            layers(&cv)
        );
        planted = Some(fisher);
        (a && b && c && t, detail)
    }));

    outcomes.push(check("null control", || {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&SynthSpec::planted(0.0), dir.path());
        let out = run_pipeline(&config(dir.path(), "run")).expect("pipeline");
        let auc = out.report.mean_auc;
        let mdp = out.report.mdp_auccc;
        (
            (0.45..=0.55).contains(&auc) && mdp.abs() <= 0.03,
            format!("test auc {auc:.4}, mdp_auccc {mdp:.4}"),
        )
    }));

    outcomes.push(check("determinism", || {
        let first = planted.as_ref().expect("planted run finished");
        let again = run_pipeline(&config(planted_root, "again")).expect("pipeline");
        let diff = first.report.max_abs_diff(&again.report);
        (diff <= 1e-7, format!("max report difference {diff:.2e}"))
    }));

    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.name).collect();
    println!(
        "acceptance: {} passed, {} failed",
        outcomes.len() - failed.len(),
        failed.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
