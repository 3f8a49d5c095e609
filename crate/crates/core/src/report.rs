//! Plain-text rendering of an [`EvalReport`].
//!
//! Four tables: per-target metrics, consensus regimes, headroom summary and
//! global curve metrics. Numbers are printed with [`DISPLAY_DECIMALS`]
//! decimals so parsing a cell back recovers the field to half a unit in the
//! last place.

use std::fmt::Write;

use crate::evaluation::EvalReport;
use crate::ingest::Regime;

pub const DISPLAY_DECIMALS: usize = 6;

fn num(v: f64) -> String {
    format!("{v:.DISPLAY_DECIMALS$}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| "-".into())
}

pub fn report_render(report: &EvalReport) -> String {
    let mut s = String::new();
    let width = report
        .targets
        .iter()
        .map(|t| t.model_id.len())
        .max()
        .unwrap_or(0)
        .max(8);

    let _ = writeln!(s, "Per-target metrics ({} queries)", report.n_queries);
    let _ = writeln!(
        s,
        "{:<width$} {:>10} {:>10} {:>10} {:>12} {:>6} {:>10} {:>10}",
        "model", "auc", "brier", "accuracy", "mean_cost", "n_to", "acc_to", "acc_away"
    );
    for (t, d) in report.targets.iter().zip(&report.routing_delta) {
        let _ = writeln!(
            s,
            "{:<width$} {:>10} {:>10} {:>10} {:>12} {:>6} {:>10} {:>10}",
            t.model_id,
            opt(t.auc),
            num(t.brier),
            num(t.accuracy),
            num(t.mean_cost),
            d.n_to,
            opt(d.acc_to),
            opt(d.acc_away)
        );
    }
    let _ = writeln!(
        s,
        "{:<width$} {:>10} {:>10}",
        "mean",
        num(report.mean_auc),
        num(report.mean_brier)
    );
    let _ = writeln!(s, "weighted_acc_to {}", num(report.weighted_acc_to));
    s.push('\n');

    let _ = writeln!(s, "Consensus regimes");
    let _ = writeln!(s, "{:<14} {:>8} {:>10}", "regime", "count", "share");
    for r in Regime::ALL {
        let c = report.regime_counts.get(&r).copied().unwrap_or(0);
        let share = if report.n_queries > 0 {
            c as f64 / report.n_queries as f64
        } else {
            0.0
        };
        let _ = writeln!(s, "{:<14} {:>8} {:>10}", r.as_str(), c, num(share));
    }
    s.push('\n');

    let h = &report.headroom;
    let _ = writeln!(s, "Headroom ({:?})", report.headroom_point);
    for (k, v) in [
        ("router_accuracy", h.router_accuracy),
        ("router_mean_cost", h.router_mean_cost),
        ("best_model_accuracy", h.best_model_accuracy),
        ("oracle_accuracy", h.oracle_accuracy),
        ("acc_gain_pp", h.acc_gain_pp),
        ("headroom_captured", h.headroom_captured),
        ("cost_savings", h.cost_savings),
    ] {
        let _ = writeln!(s, "{k:<20} {}", num(v));
    }
    let _ = writeln!(s, "{:<20} {}", "best_model", h.best_model_id);
    s.push('\n');

    let _ = writeln!(s, "Curve metrics");
    for (k, v) in [
        ("p_auccc_router", report.p_auccc_router),
        ("p_auccc_models", report.p_auccc_models),
        ("mdp_auccc", report.mdp_auccc),
        ("oracle_distance", report.oracle_distance),
        ("grid_step", report.grid_step),
    ] {
        let _ = writeln!(s, "{k:<20} {}", num(v));
    }
    let _ = writeln!(s, "{:<20} {:?}", "oracle_points", report.oracle_points);
    let _ = writeln!(s, "{:<20} {}", "raw_grid_points", report.raw_grid_points);
    let _ = writeln!(s, "{:<20} {}", "operating_points", report.operating_points.len());
    s
}
