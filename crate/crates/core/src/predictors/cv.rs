//! Stratified k-fold cross-validation of the logistic layer probe.

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fit_logistic_l2;
use crate::evaluation::roc_auc;
use crate::features::fit_pca;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub lambda_l2: f64,
    /// PCA dimension fit inside each training fold; `None` skips PCA.
    /// Clamped to the fold's rank bound `min(n_train − 1, d)`.
    pub pca_dim: Option<usize>,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            lambda_l2: 1e-3,
            pca_dim: Some(crate::features::DEFAULT_PCA_DIM),
            seed: 0,
        }
    }
}

/// Fold index per row. Each class is shuffled and dealt round-robin, so
/// every fold receives `⌊m/k⌋` or `⌈m/k⌉` members of each class.
pub fn stratified_folds(y: &[bool], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::config("need at least 2 folds"));
    }
    let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i]).collect();
    let neg: Vec<usize> = (0..y.len()).filter(|&i| !y[i]).collect();
    let minority = pos.len().min(neg.len());
    if minority < folds {
        return Err(Error::data(format!(
            "minority class has {minority} samples, fewer than {folds} folds"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; y.len()];
    let mut next = 0;
    for mut class in [pos, neg] {
        class.shuffle(&mut rng);
        for i in class {
            fold_of[i] = next % folds;
            next += 1;
        }
    }
    Ok(fold_of)
}

fn standardize(train: &mut ndarray::Array2<f64>, test: &mut ndarray::Array2<f64>) {
    let mean = train.mean_axis(Axis(0)).unwrap();
    let std = train.std_axis(Axis(0), 0.0).mapv(|s| if s > 0.0 { s } else { 1.0 });
    *train = (&*train - &mean) / &std;
    *test = (&*test - &mean) / &std;
}

/// Mean held-out AUC over stratified folds. PCA and standardization are fit
/// on each training fold only.
pub fn cv_auc_for_layer(x: ArrayView2<f64>, y: &[bool], cfg: &CvConfig) -> Result<f64> {
    if x.nrows() != y.len() {
        return Err(Error::data("cv: row and label counts differ"));
    }
    let fold_of = stratified_folds(y, cfg.folds, cfg.seed)?;
    let mut total = 0.0;
    for fold in 0..cfg.folds {
        let train_idx: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] != fold).collect();
        let test_idx: Vec<usize> = (0..y.len()).filter(|&i| fold_of[i] == fold).collect();
        let mut x_train = x.select(Axis(0), &train_idx);
        let mut x_test = x.select(Axis(0), &test_idx);
        if let Some(dim) = cfg.pca_dim {
            let dim = dim.min(train_idx.len() - 1).min(x.ncols());
            let pca = fit_pca(x_train.view(), dim, cfg.seed)?;
            x_train = pca.project(x_train.view())?;
            x_test = pca.project(x_test.view())?;
        }
        standardize(&mut x_train, &mut x_test);
        let y_train: Vec<bool> = train_idx.iter().map(|&i| y[i]).collect();
        let y_test: Vec<bool> = test_idx.iter().map(|&i| y[i]).collect();
        let model = fit_logistic_l2(x_train.view(), &y_train, cfg.lambda_l2)?;
        let scores = model.decision(x_test.view());
        total += roc_auc(scores.as_slice().unwrap(), &y_test)?;
    }
    Ok(total / cfg.folds as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_and_stratify() {
        let y: Vec<bool> = (0..53).map(|i| i % 4 == 0).collect();
        let f = stratified_folds(&y, 5, 1).unwrap();
        assert_eq!(f.len(), 53);
        for k in 0..5 {
            let members: Vec<usize> = (0..53).filter(|&i| f[i] == k).collect();
            let pos = members.iter().filter(|&&i| y[i]).count();
            assert!(pos == 2 || pos == 3, "fold {k} has {pos} positives");
            assert!(members.len() == 10 || members.len() == 11);
        }
    }

    #[test]
    fn minority_smaller_than_folds() {
        let y = [true, true, false, false, false, false];
        assert!(stratified_folds(&y, 5, 0).is_err());
    }
}
