//! Correctness predictors.
//!
//! [`trunk`] holds the shared-trunk network used as the router's signal
//! capture model; [`logistic`] and [`cv`] provide the L2 logistic probe used
//! during layer search; [`knn`] provides exact nearest-neighbour baselines.

pub mod cv;
pub mod knn;
pub mod logistic;
pub mod trunk;

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ndarray::Array2;

use crate::{Error, Result};

pub use cv::{cv_auc_for_layer, stratified_folds, CvConfig};
pub use knn::{knn_predict, KnnIndex, KnnMode};
pub use logistic::{fit_logistic_l2, LogisticModel};
pub use trunk::{
    gradient_check, predict, train_shared_trunk, EnsembleMember, TrunkNet, TrunkNetConfig,
    TrunkNetEnsemble,
};

/// Predicted probability of correctness, `[queries × targets]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    pub query_ids: Vec<String>,
    pub target_order: Vec<String>,
    pub probs: Array2<f64>,
}

impl PredictionMatrix {
    pub fn new(query_ids: Vec<String>, target_order: Vec<String>, probs: Array2<f64>) -> Result<Self> {
        if probs.dim() != (query_ids.len(), target_order.len()) {
            return Err(Error::data(format!(
                "prediction shape {:?} does not match {} queries × {} targets",
                probs.dim(),
                query_ids.len(),
                target_order.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::numeric(format!("probability {p} outside [0, 1]")));
        }
        Ok(Self {
            query_ids,
            target_order,
            probs,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let mut header = vec!["query_id".to_string()];
        header.extend(self.target_order.iter().cloned());
        w.write_record(&header)?;
        for (id, row) in self.query_ids.iter().zip(self.probs.rows()) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|p| format!("{p:.17e}")));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = csv::Reader::from_reader(file);
        let target_order: Vec<String> = r.headers()?.iter().skip(1).map(String::from).collect();
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            ids.push(rec[0].to_string());
            for cell in rec.iter().skip(1) {
                values.push(
                    cell.parse::<f64>()
                        .map_err(|_| Error::format(format!("bad probability `{cell}`")))?,
                );
            }
        }
        let probs = Array2::from_shape_vec((ids.len(), target_order.len()), values)
            .map_err(|e| Error::format(format!("ragged prediction table: {e}")))?;
        Self::new(ids, target_order, probs)
    }
}
