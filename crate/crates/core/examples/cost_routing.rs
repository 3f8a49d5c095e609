//! Routing a handful of queries by hand: per-query cost estimates, the
//! λ-weighted score, and how the choice moves as λ goes from cost to
//! accuracy.

use ndarray::array;
use prefill_router::ingest::{ModelPool, ModelSpec};
use prefill_router::predictors::PredictionMatrix;
use prefill_router::routing::{estimate_cost, route, sweep_lambda, CostMatrix};

fn main() -> prefill_router::Result<()> {
    let model = |id: &str, rate_in, rate_out| ModelSpec {
        model_id: id.into(),
        rate_in,
        rate_out,
        median_out_tokens: 400,
    };
    let pool = ModelPool::new(vec![
        model("small", 0.2, 0.8),
        model("medium", 0.5, 2.0),
        model("large", 1.0, 4.0),
    ])?;

    let tokens = [120, 800, 2000];
    let ids: Vec<String> = ["q0", "q1", "q2"].map(String::from).to_vec();
    for (id, n) in ids.iter().zip(tokens) {
        let c = estimate_cost(&pool, n);
        println!("{id}: {n:>5} input tokens → cost {c:.6?}");
    }

    let all: Vec<f64> = tokens.iter().flat_map(|&n| estimate_cost(&pool, n)).collect();
    let c_min = all.iter().copied().fold(f64::INFINITY, f64::min);
    let c_max = all.iter().copied().fold(0.0, f64::max);
    let costs = CostMatrix::from_tokens(&pool, ids.clone(), &tokens, c_min, c_max)?;

    let p_hat = PredictionMatrix::new(
        ids.clone(),
        pool.model_ids(),
        array![[0.90, 0.92, 0.95], [0.30, 0.70, 0.90], [0.10, 0.20, 0.25]],
    )?;
    for lambda in [0.0, 0.5, 0.8, 0.95, 1.0] {
        let chosen: Vec<String> = route(&p_hat, &costs, lambda)?
            .into_iter()
            .map(|d| d.chosen_model)
            .collect();
        println!("λ = {lambda:<4} → {chosen:?}");
    }

    let correct = array![[1.0, 1.0, 1.0], [0.0, 1.0, 1.0], [0.0, 0.0, 1.0]];
    let sweep = sweep_lambda(p_hat.probs.view(), &costs, correct.view(), 0.05)?;
    println!("{} grid points, {} distinct", sweep.raw_points, sweep.points.len());
    for p in &sweep.points {
        println!("  λ {:.2}  mean cost {:.6}  accuracy {:.3}", p.lambda, p.mean_cost, p.accuracy);
    }
    Ok(())
}
