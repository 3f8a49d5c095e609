//! Exact flat nearest-neighbour routers over squared Euclidean distance.

use std::cmp::Ordering;

use ndarray::{Array2, ArrayView1, ArrayView2};

use super::PredictionMatrix;
use crate::{Error, Result};

/// Added to neighbour distances before inverting them.
pub const INV_DISTANCE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnnMode {
    /// Fraction of the k neighbours labelled correct.
    Majority,
    /// `Σ wᵢ yᵢ / Σ wᵢ` with `wᵢ = 1 / (dᵢ + ε)`.
    InverseDistance,
}

#[derive(Debug, Clone)]
pub struct KnnIndex {
    vectors: Array2<f64>,
    /// `[n × K]` 0/1 labels.
    labels: Array2<f64>,
    target_order: Vec<String>,
}

impl KnnIndex {
    pub fn new(vectors: Array2<f64>, labels: Array2<f64>, target_order: Vec<String>) -> Result<Self> {
        if vectors.nrows() != labels.nrows() || labels.ncols() != target_order.len() {
            return Err(Error::data("kNN index: vectors, labels and targets disagree in shape"));
        }
        Ok(Self {
            vectors,
            labels,
            target_order,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    /// The `k` nearest rows as `(index, squared distance)`, closest first;
    /// equal distances resolve to the earlier-inserted row.
    pub fn neighbors(&self, query: ArrayView1<f64>, k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = self
            .vectors
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                let d: f64 = row.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
                (i, d)
            })
            .collect();
        let cmp = |a: &(usize, f64), b: &(usize, f64)| -> Ordering {
            a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))
        };
        let k = k.min(all.len());
        if k < all.len() {
            all.select_nth_unstable_by(k, cmp);
            all.truncate(k);
        }
        all.sort_by(cmp);
        all
    }
}

pub fn knn_predict(
    index: &KnnIndex,
    x_query: ArrayView2<f64>,
    query_ids: &[String],
    k: usize,
    mode: KnnMode,
) -> Result<PredictionMatrix> {
    if index.is_empty() {
        return Err(Error::data("kNN index is empty"));
    }
    if k == 0 || k > index.len() {
        return Err(Error::config(format!(
            "k = {k} must lie in [1, {}]",
            index.len()
        )));
    }
    if x_query.ncols() != index.vectors.ncols() || x_query.nrows() != query_ids.len() {
        return Err(Error::data("kNN query shape does not match the index"));
    }
    let kt = index.target_order.len();
    let mut probs = Array2::zeros((x_query.nrows(), kt));
    for (q, row) in x_query.rows().into_iter().enumerate() {
        let nn = index.neighbors(row, k);
        let weights: Vec<f64> = match mode {
            KnnMode::Majority => vec![1.0; nn.len()],
            KnnMode::InverseDistance => nn.iter().map(|(_, d)| 1.0 / (d + INV_DISTANCE_EPS)).collect(),
        };
        let total: f64 = weights.iter().sum();
        for t in 0..kt {
            let s: f64 = nn
                .iter()
                .zip(&weights)
                .map(|((i, _), w)| w * index.labels[[*i, t]])
                .sum();
            probs[[q, t]] = (s / total).clamp(0.0, 1.0);
        }
    }
    PredictionMatrix::new(query_ids.to_vec(), index.target_order.clone(), probs)
}
