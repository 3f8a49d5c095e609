//! Normalized accuracy/inverse-cost curve metrics on a small hand-built
//! router and model pool.

use prefill_router::evaluation::{
    headroom_and_savings, mdp_auccc, normalize_points, oracle_distance, p_auccc, padded_curve,
    pareto_filter, NormalizationAnchors, RawPoint, ORACLE_CORNER,
};

fn main() -> prefill_router::Result<()> {
    let model_costs = [0.4e-3, 1.0e-3, 2.0e-3];
    let model_accs = [0.55, 0.65, 0.72];
    let oracle = 0.93;
    let anchors = NormalizationAnchors::from_pool(&model_costs, &model_accs, oracle)?;

    let raw = |lambda: Option<f64>, mean_cost, accuracy| RawPoint {
        lambda,
        mean_cost,
        accuracy,
    };
    let models: Vec<RawPoint> = model_costs
        .iter()
        .zip(model_accs)
        .map(|(&c, a)| raw(None, c, a))
        .collect();
    let router = [
        raw(Some(1.0), 1.3e-3, 0.86),
        raw(Some(0.8), 1.0e-3, 0.84),
        raw(Some(0.6), 0.8e-3, 0.79),
        raw(Some(0.4), 0.6e-3, 0.70),
        raw(Some(0.2), 0.5e-3, 0.62),
        raw(Some(0.0), 0.4e-3, 0.55),
    ];
    let models = normalize_points(&models, &anchors)?;
    let router = normalize_points(&router, &anchors)?;

    println!("router curve:");
    for (x, y) in padded_curve(&router)? {
        println!("  {x:.3} {y:.3}");
    }
    println!("model frontier: {} of {} points", pareto_filter(&models).len(), models.len());
    println!("P-AUCCC router  {:.4}", p_auccc(&router)?);
    println!("P-AUCCC models  {:.4}", p_auccc(&pareto_filter(&models))?);
    println!("MDP-AUCCC       {:.4}", mdp_auccc(&router, &models)?);
    println!("oracle distance {:.4}", oracle_distance(&router, ORACLE_CORNER)?);

    let ids = ["small", "medium", "large"].map(String::from);
    let h = headroom_and_savings(raw(Some(1.0), 1.3e-3, 0.86), &ids, &model_accs, &model_costs, oracle)?;
    println!(
        "gain {:.1} pp over {}, {:.0}% of headroom, {:.0}% cheaper",
        h.acc_gain_pp,
        h.best_model_id,
        100.0 * h.headroom_captured,
        100.0 * h.cost_savings
    );
    Ok(())
}
