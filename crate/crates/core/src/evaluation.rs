//! Router evaluation: per-target metrics, consensus-regime accounting and the
//! normalized accuracy–cost curve suite.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::ingest::{LabelTable, Regime};
use crate::predictors::PredictionMatrix;
use crate::routing::{route_indices, sweep_lambda, CostMatrix};
use crate::{Error, Result};

/// Mann–Whitney ROC-AUC with average ranks for tied scores.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::data("scores and labels differ in length"));
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::data("roc_auc needs both classes"));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::numeric(format!("score {s} is not a number")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        let pos_in_run = order[i..=j].iter().filter(|&&k| labels[k]).count();
        rank_sum_pos += avg * pos_in_run as f64;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * q))
}

/// Mean squared error between probabilities and 0/1 outcomes.
pub fn brier(probs: &[f64], labels: &[bool]) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| (p - if y { 1.0 } else { 0.0 }).powi(2))
        .sum();
    total / probs.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub model_id: String,
    /// Absent when the evaluation labels of this target are single-class.
    pub auc: Option<f64>,
    pub brier: f64,
    /// Accuracy of always answering with this model.
    pub accuracy: f64,
    pub mean_cost: f64,
}

/// AUC and Brier per target column of `probs` against `correct`.
pub fn target_metrics(
    probs: ArrayView2<f64>,
    correct: ArrayView2<f64>,
    costs: ArrayView2<f64>,
    model_ids: &[String],
) -> Result<Vec<TargetMetrics>> {
    if probs.dim() != correct.dim() || costs.dim() != correct.dim() {
        return Err(Error::data("prediction, label and cost shapes differ"));
    }
    if model_ids.len() != correct.ncols() {
        return Err(Error::data("model ids do not match matrix columns"));
    }
    let n = correct.nrows() as f64;
    model_ids
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let p: Vec<f64> = probs.column(k).to_vec();
            let y: Vec<bool> = correct.column(k).iter().map(|&v| v > 0.5).collect();
            let auc = if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
                log::warn!("target `{m}` has single-class evaluation labels; AUC omitted");
                None
            } else {
                Some(roc_auc(&p, &y)?)
            };
            Ok(TargetMetrics {
                model_id: m.clone(),
                auc,
                brier: brier(&p, &y),
                accuracy: correct.column(k).sum() / n,
                mean_cost: costs.column(k).sum() / n,
            })
        })
        .collect()
}

/// Accuracy and cost on queries routed to versus away from one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDelta {
    pub model_id: String,
    pub n_to: usize,
    /// This model's accuracy on the queries routed to it.
    pub acc_to: Option<f64>,
    /// This model's accuracy on the queries routed elsewhere.
    pub acc_away: Option<f64>,
    pub cost_to: Option<f64>,
    pub cost_away: Option<f64>,
}

/// `chosen[q]` is the column index of the model query `q` was routed to.
pub fn routing_delta(
    chosen: &[usize],
    correct: ArrayView2<f64>,
    costs: ArrayView2<f64>,
    model_ids: &[String],
) -> Result<Vec<RoutingDelta>> {
    if chosen.len() != correct.nrows() || costs.dim() != correct.dim() {
        return Err(Error::data("decisions, labels and costs disagree in shape"));
    }
    if model_ids.len() != correct.ncols() {
        return Err(Error::data("model ids do not match matrix columns"));
    }
    if let Some(&c) = chosen.iter().find(|&&c| c >= model_ids.len()) {
        return Err(Error::data(format!("decision index {c} outside the pool")));
    }
    let mean = |sum: f64, n: usize| (n > 0).then(|| sum / n as f64);
    Ok(model_ids
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let (mut n_to, mut acc_to, mut acc_away, mut cost_to, mut cost_away) =
                (0, 0.0, 0.0, 0.0, 0.0);
            for (q, &c) in chosen.iter().enumerate() {
                if c == k {
                    n_to += 1;
                    acc_to += correct[[q, k]];
                    cost_to += costs[[q, k]];
                } else {
                    acc_away += correct[[q, k]];
                    cost_away += costs[[q, k]];
                }
            }
            let n_away = chosen.len() - n_to;
            RoutingDelta {
                model_id: m.clone(),
                n_to,
                acc_to: mean(acc_to, n_to),
                acc_away: mean(acc_away, n_away),
                cost_to: mean(cost_to, n_to),
                cost_away: mean(cost_away, n_away),
            }
        })
        .collect())
}

/// Routed-to accuracy averaged over models, weighted by query volume.
pub fn weighted_acc_to(deltas: &[RoutingDelta]) -> Option<f64> {
    let n: usize = deltas.iter().map(|d| d.n_to).sum();
    if n == 0 {
        return None;
    }
    let total: f64 = deltas
        .iter()
        .filter_map(|d| d.acc_to.map(|a| a * d.n_to as f64))
        .sum();
    Some(total / n as f64)
}

/// Fraction of queries answered correctly by at least one pool model.
pub fn oracle_accuracy(labels: &LabelTable) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let all_incorrect = labels
        .rows()
        .iter()
        .filter(|r| Regime::of(r.correct.iter().copied()) == Regime::AllIncorrect)
        .count();
    (labels.len() - all_incorrect) as f64 / labels.len() as f64
}

/// Oracle accuracy of a `[queries × models]` 0/1 matrix.
pub fn oracle_accuracy_matrix(correct: ArrayView2<f64>) -> f64 {
    let n = correct.nrows();
    if n == 0 {
        return 0.0;
    }
    let hit = correct
        .rows()
        .into_iter()
        .filter(|r| r.iter().any(|&v| v > 0.5))
        .count();
    hit as f64 / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationAnchors {
    pub c_min: f64,
    pub c_max: f64,
    pub acc_floor: f64,
    pub acc_ceil: f64,
}

impl NormalizationAnchors {
    pub fn new(c_min: f64, c_max: f64, acc_floor: f64, acc_ceil: f64) -> Result<Self> {
        let a = Self {
            c_min,
            c_max,
            acc_floor,
            acc_ceil,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_min > 0.0 && self.c_min < self.c_max) {
            return Err(Error::data(format!(
                "cost anchors need 0 < c_min < c_max, got {} and {}",
                self.c_min, self.c_max
            )));
        }
        if !(self.acc_floor < self.acc_ceil) {
            return Err(Error::data(format!(
                "accuracy anchors need floor < ceil, got {} and {}",
                self.acc_floor, self.acc_ceil
            )));
        }
        Ok(())
    }

    /// Cheapest and most expensive model mean cost; worst model accuracy as
    /// the floor and the pool oracle accuracy as the ceiling.
    pub fn from_pool(model_costs: &[f64], model_accs: &[f64], oracle_acc: f64) -> Result<Self> {
        let c_min = model_costs.iter().copied().fold(f64::INFINITY, f64::min);
        let c_max = model_costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let floor = model_accs.iter().copied().fold(f64::INFINITY, f64::min);
        Self::new(c_min, c_max, floor, oracle_acc)
    }

    pub fn invcost(&self, mean_cost: f64) -> f64 {
        (1.0 / mean_cost - 1.0 / self.c_max) / (1.0 / self.c_min - 1.0 / self.c_max)
    }

    pub fn acc(&self, accuracy: f64) -> f64 {
        (accuracy - self.acc_floor) / (self.acc_ceil - self.acc_floor)
    }
}

/// A raw (mean cost, accuracy) operating point, optionally tagged with λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawPoint {
    pub lambda: Option<f64>,
    pub mean_cost: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub invcost_norm: f64,
    pub acc_norm: f64,
    pub mean_cost: f64,
    pub accuracy: f64,
    pub lambda: Option<f64>,
}

/// Normalizes raw points and sorts them by ascending normalized inverse cost.
pub fn normalize_points(points: &[RawPoint], anchors: &NormalizationAnchors) -> Result<Vec<CurvePoint>> {
    anchors.validate()?;
    let mut out = points
        .iter()
        .map(|p| {
            if !(p.mean_cost > 0.0) {
                return Err(Error::data(format!(
                    "mean cost must be positive to normalize, got {}",
                    p.mean_cost
                )));
            }
            Ok(CurvePoint {
                invcost_norm: anchors.invcost(p.mean_cost),
                acc_norm: anchors.acc(p.accuracy),
                mean_cost: p.mean_cost,
                accuracy: p.accuracy,
                lambda: p.lambda,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| {
        a.invcost_norm
            .total_cmp(&b.invcost_norm)
            .then(a.acc_norm.total_cmp(&b.acc_norm))
    });
    Ok(out)
}

/// The padded curve that P-AUCCC integrates: one vertex per distinct
/// inverse cost carrying the best accuracy there, preceded by `(0, leftmost)`.
pub fn padded_curve(points: &[CurvePoint]) -> Result<Vec<(f64, f64)>> {
    if points.is_empty() {
        return Err(Error::data("curve needs at least one point"));
    }
    let mut xy: Vec<(f64, f64)> = points.iter().map(|p| (p.invcost_norm, p.acc_norm)).collect();
    xy.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut env: Vec<(f64, f64)> = Vec::with_capacity(xy.len() + 1);
    env.push((0.0, xy[0].1));
    for (x, y) in xy {
        match env.last_mut() {
            Some(last) if last.0 == x => last.1 = last.1.max(y),
            _ => env.push((x, y)),
        }
    }
    Ok(env)
}

/// Trapezoidal area under the padded curve, clamped to `[0, 1]`.
pub fn p_auccc(points: &[CurvePoint]) -> Result<f64> {
    let env = padded_curve(points)?;
    let area: f64 = env
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();
    Ok(area.clamp(0.0, 1.0))
}

/// Removes points dominated in (inverse cost, accuracy): another point is at
/// least as good on both axes and strictly better on one.
pub fn pareto_filter(points: &[CurvePoint]) -> Vec<CurvePoint> {
    points
        .iter()
        .filter(|p| {
            !points.iter().any(|o| {
                o.invcost_norm >= p.invcost_norm
                    && o.acc_norm >= p.acc_norm
                    && (o.invcost_norm > p.invcost_norm || o.acc_norm > p.acc_norm)
            })
        })
        .copied()
        .collect()
}

/// Router P-AUCCC minus the P-AUCCC of the Pareto-filtered model points.
pub fn mdp_auccc(router: &[CurvePoint], models: &[CurvePoint]) -> Result<f64> {
    if models.is_empty() {
        return Err(Error::data("model curve needs at least one point"));
    }
    Ok(p_auccc(router)? - p_auccc(&pareto_filter(models))?)
}

/// Default oracle corner: cheapest cost at oracle accuracy.
pub const ORACLE_CORNER: (f64, f64) = (1.0, 1.0);

/// Mean Euclidean distance from the points to `corner` in normalized space.
pub fn oracle_distance(points: &[CurvePoint], corner: (f64, f64)) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::data("oracle distance needs at least one point"));
    }
    let total: f64 = points
        .iter()
        .map(|p| (p.invcost_norm - corner.0).hypot(p.acc_norm - corner.1))
        .sum();
    Ok(total / points.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadroomSummary {
    pub router_accuracy: f64,
    pub router_mean_cost: f64,
    pub best_model_id: String,
    pub best_model_accuracy: f64,
    pub oracle_accuracy: f64,
    pub acc_gain_pp: f64,
    pub headroom_captured: f64,
    pub cost_savings: f64,
}

/// Gain over the best single model, the fraction of the best-model→oracle gap
/// closed, and savings relative to the most expensive model.
pub fn headroom_and_savings(
    router: RawPoint,
    model_ids: &[String],
    model_accs: &[f64],
    model_costs: &[f64],
    oracle_acc: f64,
) -> Result<HeadroomSummary> {
    if model_ids.is_empty() || model_ids.len() != model_accs.len() || model_accs.len() != model_costs.len() {
        return Err(Error::data("model ids, accuracies and costs must align"));
    }
    // first model wins accuracy ties
    let best = (0..model_accs.len()).fold(0, |b, k| if model_accs[k] > model_accs[b] { k } else { b });
    let best_acc = model_accs[best];
    let gap = oracle_acc - best_acc;
    if !(gap > 0.0) {
        return Err(Error::numeric(format!(
            "headroom undefined: oracle accuracy {oracle_acc} does not exceed best model accuracy {best_acc}"
        )));
    }
    let max_cost = model_costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max_cost > 0.0) {
        return Err(Error::numeric("cost savings undefined: every model is free"));
    }
    Ok(HeadroomSummary {
        router_accuracy: router.accuracy,
        router_mean_cost: router.mean_cost,
        best_model_id: model_ids[best].clone(),
        best_model_accuracy: best_acc,
        oracle_accuracy: oracle_acc,
        acc_gain_pp: (router.accuracy - best_acc) * 100.0,
        headroom_captured: (router.accuracy - best_acc) / gap,
        cost_savings: 1.0 - router.mean_cost / max_cost,
    })
}

/// Counts of each consensus regime among `ids`.
pub fn regime_counts(labels: &LabelTable, ids: &[String]) -> Result<BTreeMap<Regime, usize>> {
    let mut counts: BTreeMap<Regime, usize> = Regime::ALL.iter().map(|&r| (r, 0)).collect();
    for id in ids {
        *counts.get_mut(&labels.regime_of(id)?).unwrap() += 1;
    }
    Ok(counts)
}

/// Which sweep point stands in for "the router" in headroom accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadroomPoint {
    /// The λ = 1 operating point.
    #[default]
    LambdaOne,
    /// The most accurate sweep point (cheapest among equals).
    MaxAccuracy,
}

/// Which sweep points the oracle distance averages over.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OraclePoints {
    /// Operating points after collapsing consecutive duplicates.
    #[default]
    Distinct,
    /// Every grid λ, duplicates included.
    Raw,
}

impl std::str::FromStr for OraclePoints {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "distinct" => Ok(Self::Distinct),
            "raw" => Ok(Self::Raw),
            other => Err(Error::config(format!("unknown oracle point set `{other}` (distinct, raw)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub grid_step: f64,
    pub headroom_point: HeadroomPoint,
    pub oracle_points: OraclePoints,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            grid_step: 1e-2,
            headroom_point: HeadroomPoint::default(),
            oracle_points: OraclePoints::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_queries: usize,
    pub targets: Vec<TargetMetrics>,
    pub mean_auc: f64,
    pub mean_brier: f64,
    pub routing_delta: Vec<RoutingDelta>,
    pub weighted_acc_to: f64,
    pub regime_counts: BTreeMap<Regime, usize>,
    pub anchors: NormalizationAnchors,
    pub grid_step: f64,
    pub raw_grid_points: usize,
    pub operating_points: Vec<CurvePoint>,
    pub model_points: Vec<CurvePoint>,
    pub p_auccc_router: f64,
    pub p_auccc_models: f64,
    pub mdp_auccc: f64,
    pub oracle_distance: f64,
    #[serde(default)]
    pub oracle_points: OraclePoints,
    pub headroom_point: HeadroomPoint,
    pub headroom: HeadroomSummary,
}

impl EvalReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Operating points as CSV for plotting tools.
    pub fn write_operating_points(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        w.write_record(["lambda", "mean_cost", "accuracy", "invcost_norm", "acc_norm"])?;
        for p in &self.operating_points {
            w.write_record([
                p.lambda.map(|l| format!("{l}")).unwrap_or_default(),
                format!("{:e}", p.mean_cost),
                format!("{:e}", p.accuracy),
                format!("{:e}", p.invcost_norm),
                format!("{:e}", p.acc_norm),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Largest absolute difference over every numeric report field.
    pub fn max_abs_diff(&self, other: &EvalReport) -> f64 {
        fn numbers(v: &serde_json::Value, out: &mut Vec<f64>) {
            match v {
                serde_json::Value::Number(n) => out.push(n.as_f64().unwrap_or(f64::NAN)),
                serde_json::Value::Array(a) => a.iter().for_each(|x| numbers(x, out)),
                serde_json::Value::Object(o) => o.values().for_each(|x| numbers(x, out)),
                _ => {}
            }
        }
        let (mut a, mut b) = (Vec::new(), Vec::new());
        numbers(&serde_json::to_value(self).unwrap_or_default(), &mut a);
        numbers(&serde_json::to_value(other).unwrap_or_default(), &mut b);
        if a.len() != b.len() {
            return f64::INFINITY;
        }
        a.iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, |m, d| if d.is_nan() { f64::INFINITY } else { m.max(d) })
    }
}

/// Sweeps λ over the evaluation queries and assembles the full report.
///
/// `correct` is `[queries × models]` in `p_hat` target order; `costs` carries
/// the training-set anchors used by the routing score.
pub fn evaluate_router(
    p_hat: &PredictionMatrix,
    costs: &CostMatrix,
    correct: ArrayView2<f64>,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let EvalOptions {
        grid_step,
        headroom_point,
        oracle_points,
    } = *opts;
    let model_ids = &p_hat.target_order;
    if *model_ids != costs.model_ids {
        return Err(Error::data("prediction targets and cost models are in different orders"));
    }
    let n = correct.nrows();
    if n == 0 {
        return Err(Error::data("evaluation set is empty"));
    }
    let targets = target_metrics(p_hat.probs.view(), correct, costs.costs.view(), model_ids)?;
    let aucs: Vec<f64> = targets.iter().filter_map(|t| t.auc).collect();
    if aucs.is_empty() {
        return Err(Error::data("no target has two-class evaluation labels"));
    }
    let mean_auc = aucs.iter().sum::<f64>() / aucs.len() as f64;
    let mean_brier = targets.iter().map(|t| t.brier).sum::<f64>() / targets.len() as f64;

    let greedy = route_indices(p_hat.probs.view(), costs, 1.0)?;
    let deltas = routing_delta(&greedy, correct, costs.costs.view(), model_ids)?;
    let weighted = weighted_acc_to(&deltas).unwrap_or(0.0);

    let mut regimes: BTreeMap<Regime, usize> = Regime::ALL.iter().map(|&r| (r, 0)).collect();
    for row in correct.rows() {
        *regimes.get_mut(&Regime::of(row.iter().map(|&v| v > 0.5))).unwrap() += 1;
    }

    let oracle_acc = oracle_accuracy_matrix(correct);
    let model_costs: Vec<f64> = targets.iter().map(|t| t.mean_cost).collect();
    let model_accs: Vec<f64> = targets.iter().map(|t| t.accuracy).collect();
    let anchors = NormalizationAnchors::from_pool(&model_costs, &model_accs, oracle_acc)?;

    let sweep = sweep_lambda(p_hat.probs.view(), costs, correct, grid_step)?;
    let raw: Vec<RawPoint> = sweep.points.iter().map(|&p| p.into()).collect();
    let operating_points = normalize_points(&raw, &anchors)?;
    let model_raw: Vec<RawPoint> = model_costs
        .iter()
        .zip(&model_accs)
        .map(|(&c, &a)| RawPoint {
            lambda: None,
            mean_cost: c,
            accuracy: a,
        })
        .collect();
    let model_points = normalize_points(&model_raw, &anchors)?;
    let distance = match oracle_points {
        OraclePoints::Distinct => oracle_distance(&operating_points, ORACLE_CORNER)?,
        OraclePoints::Raw => {
            let grid: Vec<RawPoint> = sweep.grid_points.iter().map(|&p| p.into()).collect();
            oracle_distance(&normalize_points(&grid, &anchors)?, ORACLE_CORNER)?
        }
    };
    let p_router = p_auccc(&operating_points)?;
    let p_models = p_auccc(&pareto_filter(&model_points))?;

    let router_point = match headroom_point {
        HeadroomPoint::LambdaOne => *raw.last().expect("sweep is nonempty"),
        HeadroomPoint::MaxAccuracy => *raw
            .iter()
            .reduce(|best, p| {
                if p.accuracy > best.accuracy
                    || (p.accuracy == best.accuracy && p.mean_cost < best.mean_cost)
                {
                    p
                } else {
                    best
                }
            })
            .expect("sweep is nonempty"),
    };
    let headroom = headroom_and_savings(router_point, model_ids, &model_accs, &model_costs, oracle_acc)?;

    Ok(EvalReport {
        n_queries: n,
        targets,
        mean_auc,
        mean_brier,
        routing_delta: deltas,
        weighted_acc_to: weighted,
        regime_counts: regimes,
        anchors,
        grid_step,
        raw_grid_points: sweep.raw_points,
        oracle_distance: distance,
        oracle_points,
        operating_points,
        model_points,
        p_auccc_router: p_router,
        p_auccc_models: p_models,
        mdp_auccc: p_router - p_models,
        headroom_point,
        headroom,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::routing::OperatingPoint;
    use ndarray::array;

    fn pt(x: f64, y: f64) -> CurvePoint {
        CurvePoint {
            invcost_norm: x,
            acc_norm: y,
            mean_cost: 1.0,
            accuracy: y,
            lambda: None,
        }
    }

    #[test]
    fn auc_basics() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 4], &[false, true, false, true]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.9, 0.1], &[false, true]).unwrap(), 0.0);
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn brier_hand_case() {
        assert!((brier(&[0.8, 0.3], &[true, false]) - 0.065).abs() < 1e-15);
        assert_eq!(brier(&[0.5; 3], &[true, false, true]), 0.25);
        assert_eq!(brier(&[1.0, 0.0], &[true, false]), 0.0);
    }

    #[test]
    fn routing_delta_hand_case() {
        let correct = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0]];
        let costs = array![[1.0, 4.0], [2.0, 4.0], [1.0, 8.0], [2.0, 8.0]];
        let ids = vec!["a".to_string(), "b".to_string()];
        let d = routing_delta(&[0, 1, 1, 0], correct.view(), costs.view(), &ids).unwrap();
        assert_eq!(d[0].n_to + d[1].n_to, 4);
        assert_eq!(d[0].acc_to, Some(0.5));
        assert_eq!(d[0].acc_away, Some(0.5));
        assert_eq!(d[0].cost_to, Some(1.5));
        assert_eq!(d[1].acc_to, Some(1.0));
        assert_eq!(d[1].acc_away, Some(0.0));
        assert_eq!(d[1].cost_away, Some(6.0));
        assert_eq!(weighted_acc_to(&d), Some(0.75));

        let all_a = routing_delta(&[0; 4], correct.view(), costs.view(), &ids).unwrap();
        assert_eq!(all_a[0].acc_to, Some(0.5));
        assert_eq!(all_a[1].acc_to, None);
    }

    #[test]
    fn anchors_map_extremes() {
        let a = NormalizationAnchors::new(2.0, 10.0, 0.4, 0.9).unwrap();
        assert_eq!(a.invcost(2.0), 1.0);
        assert_eq!(a.invcost(10.0), 0.0);
        assert_eq!(a.acc(0.9), 1.0);
        assert_eq!(a.acc(0.4), 0.0);
        assert!(NormalizationAnchors::new(3.0, 3.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn p_auccc_shapes() {
        assert_eq!(p_auccc(&[pt(1.0, 0.5)]).unwrap(), 0.5);
        assert_eq!(p_auccc(&[pt(0.0, 0.0), pt(1.0, 1.0)]).unwrap(), 0.5);
        // padding at the leftmost accuracy
        assert!((p_auccc(&[pt(0.5, 0.2), pt(1.0, 0.2)]).unwrap() - 0.2).abs() < 1e-15);
        assert!(p_auccc(&[]).is_err());
    }

    #[test]
    fn mdp_hand_case() {
        // models at (0.2, 0.8) and (1.0, 0.2); router adds (0.6, 0.7)
        let models = [pt(0.2, 0.8), pt(1.0, 0.2)];
        let router = [pt(0.2, 0.8), pt(0.6, 0.7), pt(1.0, 0.2)];
        let model_area = 0.2 * 0.8 + 0.8 * 0.5;
        let router_area = 0.2 * 0.8 + 0.4 * 0.75 + 0.4 * 0.45;
        assert!((p_auccc(&models).unwrap() - model_area).abs() < 1e-12);
        assert!((mdp_auccc(&router, &models).unwrap() - (router_area - model_area)).abs() < 1e-12);
        assert_eq!(mdp_auccc(&models, &models).unwrap(), 0.0);
    }

    #[test]
    fn pareto_drops_dominated() {
        let kept = pareto_filter(&[pt(0.2, 0.8), pt(0.1, 0.5), pt(1.0, 0.2), pt(0.5, 0.1)]);
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn oracle_distance_cases() {
        assert_eq!(oracle_distance(&[pt(1.0, 1.0)], ORACLE_CORNER).unwrap(), 0.0);
        assert!((oracle_distance(&[pt(0.7, 0.6)], ORACLE_CORNER).unwrap() - 0.5).abs() < 1e-12);
        let three = [pt(1.0, 1.0), pt(0.7, 0.6), pt(0.0, 1.0)];
        assert!((oracle_distance(&three, ORACLE_CORNER).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn headroom_cases() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let raw = |acc, cost| RawPoint {
            lambda: Some(1.0),
            mean_cost: cost,
            accuracy: acc,
        };
        let h = headroom_and_savings(raw(0.9, 4.0), &ids, &[0.6, 0.7], &[1.0, 4.0], 0.9).unwrap();
        assert_eq!(h.headroom_captured, 1.0);
        assert_eq!(h.cost_savings, 0.0);
        let h = headroom_and_savings(raw(0.7, 2.0), &ids, &[0.6, 0.7], &[1.0, 4.0], 0.9).unwrap();
        assert_eq!(h.headroom_captured, 0.0);
        assert_eq!(h.acc_gain_pp, 0.0);
        assert_eq!(h.cost_savings, 0.5);
        assert!(headroom_and_savings(raw(0.7, 2.0), &ids, &[0.6, 0.7], &[1.0, 4.0], 0.7).is_err());
    }

    #[test]
    fn oracle_accuracy_from_shares() {
        let m = array![[1.0, 1.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0], [1.0, 1.0], [1.0, 1.0]];
        assert_eq!(oracle_accuracy_matrix(m.view()), 0.9);
    }

    #[test]
    fn oracle_distance_over_raw_grid_weights_repeats() {
        let ids: Vec<String> = ["q0", "q1", "q2"].map(String::from).to_vec();
        let models: Vec<String> = ["a", "b"].map(String::from).to_vec();
        let costs = CostMatrix::new(
            ids.clone(),
            models.clone(),
            array![[1e-3, 4e-3], [1e-3, 4e-3], [2e-3, 5e-3]],
            1e-3,
            5e-3,
        )
        .unwrap();
        let p = PredictionMatrix::new(ids, models, array![[0.2, 0.9], [0.6, 0.7], [0.5, 0.55]]).unwrap();
        let correct = array![[0.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        let run = |oracle_points| {
            let opts = EvalOptions {
                grid_step: 0.25,
                oracle_points,
                ..Default::default()
            };
            evaluate_router(&p, &costs, correct.view(), &opts).unwrap()
        };
        let distinct = run(OraclePoints::Distinct);
        let raw = run(OraclePoints::Raw);
        assert_eq!(distinct.operating_points, raw.operating_points);
        assert_eq!(raw.raw_grid_points, 5);
        assert!(distinct.operating_points.len() < 5);

        let sweep = sweep_lambda(p.probs.view(), &costs, correct.view(), 0.25).unwrap();
        let dist = |pts: &[OperatingPoint]| {
            pts.iter()
                .map(|q| {
                    let x = raw.anchors.invcost(q.mean_cost);
                    let y = raw.anchors.acc(q.accuracy);
                    (x - 1.0).hypot(y - 1.0)
                })
                .sum::<f64>()
                / pts.len() as f64
        };
        assert!((raw.oracle_distance - dist(&sweep.grid_points)).abs() < 1e-12);
        assert!((distinct.oracle_distance - dist(&sweep.points)).abs() < 1e-12);
        assert_ne!(raw.oracle_distance, distinct.oracle_distance);
    }
}
