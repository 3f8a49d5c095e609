//! Cost estimation, the λ-weighted routing score and λ sweeps.
//!
//! A query `q` sent to model `k` scores `λ·p̂ − (1−λ)·C̃` where `C̃` is the
//! query's cost rescaled by the training-set cost range and clipped to
//! `[0, 1]`. The argmax wins; ties go to the lower raw cost, then to pool
//! order.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evaluation::RawPoint;
use crate::ingest::{LabelTable, ModelPool, ModelSpec};
use crate::predictors::PredictionMatrix;
use crate::{Error, Result};

const PER_MILLION: f64 = 1e6;

pub fn model_cost(model: &ModelSpec, input_tokens: u64) -> f64 {
    input_tokens as f64 / PER_MILLION * model.rate_in
        + model.median_out_tokens as f64 / PER_MILLION * model.rate_out
}

/// Estimated cost of sending one query to every pool model.
pub fn estimate_cost(pool: &ModelPool, input_tokens: u64) -> Vec<f64> {
    pool.models.iter().map(|m| model_cost(m, input_tokens)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub query_ids: Vec<String>,
    pub model_ids: Vec<String>,
    /// `[queries × models]`
    pub costs: Array2<f64>,
    /// Training-set anchors used to rescale costs into `[0, 1]`.
    pub c_min: f64,
    pub c_max: f64,
}

impl CostMatrix {
    /// Costs for `ids`, anchored on the cost range over `anchor_ids` (the
    /// training queries).
    pub fn from_labels(
        pool: &ModelPool,
        labels: &LabelTable,
        ids: &[String],
        anchor_ids: &[String],
    ) -> Result<Self> {
        let (c_min, c_max) = training_range(pool, labels, anchor_ids)?;
        let tokens = ids
            .iter()
            .map(|id| labels.row(id).map(|r| r.input_tokens))
            .collect::<Result<Vec<_>>>()?;
        Self::from_tokens(pool, ids.to_vec(), &tokens, c_min, c_max)
    }

    pub fn from_tokens(
        pool: &ModelPool,
        query_ids: Vec<String>,
        input_tokens: &[u64],
        c_min: f64,
        c_max: f64,
    ) -> Result<Self> {
        if query_ids.len() != input_tokens.len() {
            return Err(Error::data("query ids and token counts differ in length"));
        }
        let k = pool.len();
        let mut costs = Array2::zeros((query_ids.len(), k));
        for (q, &n) in input_tokens.iter().enumerate() {
            for (j, c) in estimate_cost(pool, n).into_iter().enumerate() {
                costs[[q, j]] = c;
            }
        }
        Self::new(query_ids, pool.model_ids(), costs, c_min, c_max)
    }

    pub fn new(
        query_ids: Vec<String>,
        model_ids: Vec<String>,
        costs: Array2<f64>,
        c_min: f64,
        c_max: f64,
    ) -> Result<Self> {
        if costs.dim() != (query_ids.len(), model_ids.len()) {
            return Err(Error::data("cost matrix shape does not match ids"));
        }
        if let Some(c) = costs.iter().find(|c| !(**c >= 0.0 && c.is_finite())) {
            return Err(Error::data(format!("cost {c} is negative or non-finite")));
        }
        if !(c_min >= 0.0 && c_min <= c_max && c_max.is_finite()) {
            return Err(Error::data(format!(
                "cost anchors need 0 <= c_min <= c_max, got {c_min} and {c_max}"
            )));
        }
        Ok(Self {
            query_ids,
            model_ids,
            costs,
            c_min,
            c_max,
        })
    }

    /// `(C − C_min)/(C_max − C_min)` clipped to `[0, 1]`; zero when the
    /// anchors coincide.
    pub fn normalized(&self, cost: f64) -> f64 {
        normalized_cost(cost, self.c_min, self.c_max)
    }
}

pub fn normalized_cost(cost: f64, c_min: f64, c_max: f64) -> f64 {
    if c_max > c_min {
        ((cost - c_min) / (c_max - c_min)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Smallest and largest per-(query, model) cost over `ids`.
pub fn training_range(pool: &ModelPool, labels: &LabelTable, ids: &[String]) -> Result<(f64, f64)> {
    if ids.is_empty() {
        return Err(Error::data("cost anchors need at least one training query"));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for id in ids {
        for c in estimate_cost(pool, labels.row(id)?.input_tokens) {
            lo = lo.min(c);
            hi = hi.max(c);
        }
    }
    Ok((lo, hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub query_id: String,
    pub chosen: usize,
    pub chosen_model: String,
    pub lambda: f64,
    pub scores: Vec<f64>,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::config(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(())
}

fn check_shapes(p: ArrayView2<f64>, costs: &CostMatrix) -> Result<()> {
    if p.dim() != costs.costs.dim() {
        return Err(Error::data(format!(
            "prediction shape {:?} does not match cost shape {:?}",
            p.dim(),
            costs.costs.dim()
        )));
    }
    Ok(())
}

/// Index of the winning model for one query under the tie rule.
fn pick(scores: &[f64], raw: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..scores.len() {
        if scores[k] > scores[best] || (scores[k] == scores[best] && raw[k] < raw[best]) {
            best = k;
        }
    }
    best
}

fn score_row(p: &[f64], raw: &[f64], costs: &CostMatrix, lambda: f64) -> Vec<f64> {
    p.iter()
        .zip(raw)
        .map(|(&p, &c)| lambda * p - (1.0 - lambda) * costs.normalized(c))
        .collect()
}

/// Chosen model index per query, without materializing score vectors.
pub fn route_indices(p: ArrayView2<f64>, costs: &CostMatrix, lambda: f64) -> Result<Vec<usize>> {
    check_lambda(lambda)?;
    check_shapes(p, costs)?;
    Ok(p.rows()
        .into_iter()
        .zip(costs.costs.rows())
        .map(|(p, c)| {
            let (p, c) = (p.to_vec(), c.to_vec());
            pick(&score_row(&p, &c, costs, lambda), &c)
        })
        .collect())
}

pub fn route(p_hat: &PredictionMatrix, costs: &CostMatrix, lambda: f64) -> Result<Vec<RoutingDecision>> {
    check_lambda(lambda)?;
    check_shapes(p_hat.probs.view(), costs)?;
    if p_hat.target_order != costs.model_ids {
        return Err(Error::data("prediction targets and cost models are in different orders"));
    }
    if p_hat.query_ids != costs.query_ids {
        return Err(Error::data("prediction and cost query ids differ"));
    }
    Ok(p_hat
        .probs
        .rows()
        .into_iter()
        .zip(costs.costs.rows())
        .zip(&p_hat.query_ids)
        .map(|((p, c), id)| {
            let (p, c) = (p.to_vec(), c.to_vec());
            let scores = score_row(&p, &c, costs, lambda);
            let chosen = pick(&scores, &c);
            RoutingDecision {
                query_id: id.clone(),
                chosen,
                chosen_model: costs.model_ids[chosen].clone(),
                lambda,
                scores,
            }
        })
        .collect())
}

/// One line-delimited JSON record per decision.
pub fn write_decisions(decisions: &[RoutingDecision], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for d in decisions {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub lambda: f64,
    pub mean_cost: f64,
    pub accuracy: f64,
}

impl From<OperatingPoint> for RawPoint {
    fn from(p: OperatingPoint) -> Self {
        RawPoint {
            lambda: Some(p.lambda),
            mean_cost: p.mean_cost,
            accuracy: p.accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub grid_step: f64,
    /// Grid size before collapsing duplicate consecutive points.
    pub raw_points: usize,
    pub points: Vec<OperatingPoint>,
    /// One point per grid λ, duplicates kept.
    pub grid_points: Vec<OperatingPoint>,
}

/// The inclusive grid `{0, step, 2·step, …, 1}`; `1` is appended when the
/// step does not divide it.
pub fn lambda_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::config(format!("grid step {step} must lie in (0, 1]")));
    }
    let n = (1.0 / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| (i as f64 * step).min(1.0)).collect();
    if 1.0 - grid[n] > 1e-12 {
        grid.push(1.0);
    } else {
        grid[n] = 1.0;
    }
    Ok(grid)
}

/// Realized (mean cost, accuracy) of routing decisions.
pub fn operating_point(
    chosen: &[usize],
    correct: ArrayView2<f64>,
    costs: ArrayView2<f64>,
    lambda: f64,
) -> OperatingPoint {
    let n = chosen.len().max(1) as f64;
    let (mut cost, mut acc) = (0.0, 0.0);
    for (q, &k) in chosen.iter().enumerate() {
        cost += costs[[q, k]];
        acc += correct[[q, k]];
    }
    OperatingPoint {
        lambda,
        mean_cost: cost / n,
        accuracy: acc / n,
    }
}

/// Routes at every grid λ and records realized cost and accuracy.
///
/// `correct` is the `[queries × models]` 0/1 matrix in cost-matrix order.
pub fn sweep_lambda(
    p_hat: ArrayView2<f64>,
    costs: &CostMatrix,
    correct: ArrayView2<f64>,
    grid_step: f64,
) -> Result<Sweep> {
    check_shapes(p_hat, costs)?;
    if correct.dim() != costs.costs.dim() {
        return Err(Error::data("label matrix shape does not match costs"));
    }
    let grid = lambda_grid(grid_step)?;
    let raw = grid
        .par_iter()
        .map(|&lambda| {
            let chosen = route_indices(p_hat, costs, lambda)?;
            Ok(operating_point(&chosen, correct, costs.costs.view(), lambda))
        })
        .collect::<Result<Vec<_>>>()?;
    let raw_points = raw.len();
    let mut points: Vec<OperatingPoint> = Vec::with_capacity(raw_points);
    for &p in &raw {
        match points.last() {
            Some(last) if last.mean_cost == p.mean_cost && last.accuracy == p.accuracy => {}
            _ => points.push(p),
        }
    }
    Ok(Sweep {
        grid_step,
        raw_points,
        points,
        grid_points: raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn spec(id: &str, rate_in: f64, rate_out: f64, out: u64) -> ModelSpec {
        ModelSpec {
            model_id: id.into(),
            rate_in,
            rate_out,
            median_out_tokens: out,
        }
    }

    #[test]
    fn cost_arithmetic() {
        assert_eq!(model_cost(&spec("a", 3.0, 15.0, 0), 0), 0.0);
        assert_eq!(model_cost(&spec("a", 3.0, 15.0, 500_000), 1_000_000), 10.5);
        assert_eq!(
            model_cost(&spec("a", 6.0, 30.0, 500_000), 1_000_000),
            2.0 * model_cost(&spec("a", 3.0, 15.0, 500_000), 1_000_000)
        );
    }

    fn costs(c: Array2<f64>, lo: f64, hi: f64) -> CostMatrix {
        let q = (0..c.nrows()).map(|i| format!("q{i}")).collect();
        let m = (0..c.ncols()).map(|i| format!("m{i}")).collect();
        CostMatrix::new(q, m, c, lo, hi).unwrap()
    }

    #[test]
    fn hand_scored_decision() {
        let c = costs(array![[1.0, 0.0]], 0.0, 1.0);
        let p = PredictionMatrix::new(vec!["q0".into()], c.model_ids.clone(), array![[0.9, 0.8]]).unwrap();
        let d = route(&p, &c, 0.5).unwrap();
        assert!((d[0].scores[0] + 0.05).abs() < 1e-15);
        assert!((d[0].scores[1] - 0.4).abs() < 1e-15);
        assert_eq!(d[0].chosen, 1);
    }

    #[test]
    fn ties_prefer_cheaper_then_pool_order() {
        let c = costs(array![[2.0, 1.0, 1.0]], 0.0, 0.0);
        let p = array![[0.5, 0.5, 0.5]];
        assert_eq!(route_indices(p.view(), &c, 0.3).unwrap(), vec![1]);
    }

    #[test]
    fn clipping_and_degenerate_range() {
        assert_eq!(normalized_cost(5.0, 1.0, 3.0), 1.0);
        assert_eq!(normalized_cost(0.5, 1.0, 3.0), 0.0);
        assert_eq!(normalized_cost(2.0, 2.0, 2.0), 0.0);
    }

    #[test]
    fn lambda_outside_unit_interval() {
        let c = costs(array![[1.0, 2.0]], 1.0, 2.0);
        assert!(route_indices(array![[0.1, 0.2]].view(), &c, 1.5).is_err());
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(lambda_grid(1e-2).unwrap().len(), 101);
        assert_eq!(lambda_grid(1e-3).unwrap().len(), 1001);
        assert_eq!(lambda_grid(0.3).unwrap(), vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
        assert_eq!(*lambda_grid(0.1).unwrap().last().unwrap(), 1.0);
    }

    #[test]
    fn single_model_sweep_collapses() {
        let c = costs(array![[1.0], [2.0]], 1.0, 2.0);
        let s = sweep_lambda(array![[0.3], [0.9]].view(), &c, array![[1.0], [0.0]].view(), 1e-2).unwrap();
        assert_eq!(s.raw_points, 101);
        assert_eq!(s.points.len(), 1);
    }
}
