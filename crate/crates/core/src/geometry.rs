//! Layerwise geometric probes and routing-layer selection.
//!
//! Three diagnostics are computed per (encoder, layer, pooling) on training
//! queries only:
//!
//! - effective dimensionality, the participation ratio `(Σσ)² / Σσ²` of the
//!   sample covariance spectrum;
//! - anisotropy, the mean pairwise cosine similarity of hidden states;
//! - Fisher separability `‖μ₁ − μ₀‖² / (tr Σ₀ + tr Σ₁)` per target, on
//!   PCA-reduced features.
//!
//! [`select_layers`] then picks one (encoder, layer, pooling) per target,
//! either by Fisher J or by cross-validated logistic-probe AUC.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use ndarray::{Array1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::fit_pca;
use crate::ingest::{
    upper_half_start, ActivationStore, LabelTable, MatrixKey, ModelPool, Pooling, SplitAssignment,
};
use crate::linalg::{centered, sym_eigen_desc};
use crate::predictors::{cv_auc_for_layer, CvConfig};
use crate::{Error, Result};

/// Relative floor below which covariance eigenvalues count as zero.
const EIGEN_NOISE_FLOOR: f64 = 1e-12;
/// Row count above which anisotropy is computed on a seeded subsample.
pub const ANISOTROPY_MAX_ROWS: usize = 20_000;
const ANISOTROPY_SUBSAMPLE_SEED: u64 = 0x5eed_a15e;
/// Up to this many rows the pairwise cosine mean is summed directly.
const ANISOTROPY_PAIRWISE_MAX_ROWS: usize = 64;

/// Participation ratio of the sample covariance eigenvalues.
pub fn effective_dimensionality(x: ArrayView2<f64>) -> Result<f64> {
    let (n, d) = x.dim();
    if n < 2 {
        return Err(Error::data("effective dimensionality needs at least 2 rows"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("non-finite value in input"));
    }
    let (xc, _) = centered(x);
    // The nonzero spectrum is shared by XcᵀXc and XcXcᵀ; use the smaller.
    let scatter = if d <= n {
        xc.t().dot(&xc)
    } else {
        xc.dot(&xc.t())
    } / (n - 1) as f64;
    let (vals, _) = sym_eigen_desc(&scatter);
    let max = vals.first().copied().unwrap_or(0.0);
    if !(max > 0.0) {
        return Err(Error::numeric("degenerate sample: covariance is zero"));
    }
    let floor = EIGEN_NOISE_FLOOR * max;
    let (sum, sum_sq) = vals
        .iter()
        .map(|&v| if v < floor { 0.0 } else { v })
        .fold((0.0, 0.0), |(s, s2), v| (s + v, s2 + v * v));
    Ok(sum * sum / sum_sq)
}

fn unit_rows(x: ArrayView2<f64>) -> Result<ndarray::Array2<f64>> {
    let mut out = x.to_owned();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if !(norm > 0.0) {
            return Err(Error::data(format!("zero-norm row {i} in anisotropy input")));
        }
        row /= norm;
    }
    Ok(out)
}

/// Mean pairwise cosine similarity via `(‖Σ ĥᵢ‖² − n) / (n(n − 1))`.
pub fn anisotropy_gram(x: ArrayView2<f64>) -> Result<f64> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::data("anisotropy needs at least 2 rows"));
    }
    let u = unit_rows(x)?;
    let s = u.sum_axis(Axis(0));
    let nf = n as f64;
    Ok((s.dot(&s) - nf) / (nf * (nf - 1.0)))
}

/// Mean cosine similarity over all pairs `i < j`.
///
/// Small inputs are summed pair by pair; larger ones use the exact Gram
/// identity. Inputs above [`ANISOTROPY_MAX_ROWS`] rows are reduced to a
/// fixed-seed subsample of that size first.
pub fn anisotropy(x: ArrayView2<f64>) -> Result<f64> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::data("anisotropy needs at least 2 rows"));
    }
    if n > ANISOTROPY_MAX_ROWS {
        let mut rng = ChaCha8Rng::seed_from_u64(ANISOTROPY_SUBSAMPLE_SEED);
        let mut idx = rand::seq::index::sample(&mut rng, n, ANISOTROPY_MAX_ROWS).into_vec();
        idx.sort_unstable();
        return anisotropy_gram(x.select(Axis(0), &idx).view());
    }
    if n > ANISOTROPY_PAIRWISE_MAX_ROWS {
        return anisotropy_gram(x);
    }
    let u = unit_rows(x)?;
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += u.row(i).dot(&u.row(j));
        }
    }
    Ok(2.0 * total / (n * (n - 1)) as f64)
}

/// Class statistics behind a Fisher separability score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherStats {
    pub j: f64,
    pub n0: usize,
    pub n1: usize,
    pub mean0: Array1<f64>,
    pub mean1: Array1<f64>,
    pub trace0: f64,
    pub trace1: f64,
}

/// Trace of the unbiased class covariance; zero for a single sample.
fn class_stats(x: ArrayView2<f64>, rows: &[usize]) -> (Array1<f64>, f64) {
    let sub = x.select(Axis(0), rows);
    let (xc, mean) = centered(sub.view());
    let trace = if rows.len() > 1 {
        xc.iter().map(|v| v * v).sum::<f64>() / (rows.len() - 1) as f64
    } else {
        0.0
    };
    (mean, trace)
}

/// Fisher criterion with class 1 = correct, class 0 = incorrect.
pub fn fisher_separation(x: ArrayView2<f64>, y: &[bool]) -> Result<FisherStats> {
    if x.nrows() != y.len() {
        return Err(Error::data(format!(
            "fisher: {} rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    let ones: Vec<usize> = (0..y.len()).filter(|&i| y[i]).collect();
    let zeros: Vec<usize> = (0..y.len()).filter(|&i| !y[i]).collect();
    if ones.is_empty() || zeros.is_empty() {
        return Err(Error::data("fisher requires both classes"));
    }
    let (mean0, trace0) = class_stats(x, &zeros);
    let (mean1, trace1) = class_stats(x, &ones);
    let denom = trace0 + trace1;
    if !(denom > 0.0) {
        return Err(Error::numeric("degenerate classes: both class covariances are zero"));
    }
    let diff = &mean1 - &mean0;
    Ok(FisherStats {
        j: diff.dot(&diff) / denom,
        n0: zeros.len(),
        n1: ones.len(),
        mean0,
        mean1,
        trace0,
        trace1,
    })
}

pub fn fisher_j(x: ArrayView2<f64>, y: &[bool]) -> Result<f64> {
    fisher_separation(x, y).map(|s| s.j)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSeparation {
    pub model_id: String,
    #[serde(flatten)]
    pub stats: FisherStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDiagnostics {
    pub encoder_id: String,
    pub num_layers: u16,
    pub layer: u16,
    pub pooling: Pooling,
    pub sample_count: usize,
    pub pca_dim: usize,
    pub d_eff: f64,
    pub anisotropy: f64,
    pub targets: Vec<TargetSeparation>,
}

impl LayerDiagnostics {
    pub fn key(&self) -> MatrixKey {
        MatrixKey::new(self.layer, self.pooling)
    }

    pub fn fisher(&self, model_id: &str) -> Option<f64> {
        self.targets
            .iter()
            .find(|t| t.model_id == model_id)
            .map(|t| t.stats.j)
    }
}

fn bool_labels(labels: &LabelTable, ids: &[String], model_id: &str) -> Result<Vec<bool>> {
    ids.iter()
        .map(|id| labels.is_correct(id, model_id))
        .collect()
}

/// Probes every upper-half (layer, pooling) of `store` on the training ids.
///
/// Fisher J uses a PCA of dimension `pca_dim` fit on the same rows.
pub fn probe_layers(
    store: &ActivationStore,
    labels: &LabelTable,
    pool: &ModelPool,
    split: &SplitAssignment,
    pca_dim: usize,
) -> Result<Vec<LayerDiagnostics>> {
    let train = &split.train_ids;
    if train.is_empty() {
        return Err(Error::data("probe needs a nonempty training split"));
    }
    let targets = pool.model_ids();
    let ys = targets
        .iter()
        .map(|m| bool_labels(labels, train, m))
        .collect::<Result<Vec<_>>>()?;

    store
        .upper_half_keys()
        .into_par_iter()
        .map(|key| {
            probe_one(store, key, train, &targets, &ys, pca_dim)
                .map_err(|e| e.context(format!("layer {} {}", key.layer, key.pooling)))
        })
        .collect()
}

fn probe_one(
    store: &ActivationStore,
    key: MatrixKey,
    train: &[String],
    targets: &[String],
    ys: &[Vec<bool>],
    pca_dim: usize,
) -> Result<LayerDiagnostics> {
    let x = store.rows(key, train)?;
    let d_eff = effective_dimensionality(x.view())?;
    let anisotropy = anisotropy(x.view())?;
    let pca = fit_pca(x.view(), pca_dim, 0)?;
    let reduced = pca.project(x.view())?;
    let targets = targets
        .iter()
        .zip(ys)
        .map(|(m, y)| {
            fisher_separation(reduced.view(), y)
                .map(|stats| TargetSeparation {
                    model_id: m.clone(),
                    stats,
                })
                .map_err(|e| e.context(format!("target `{m}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LayerDiagnostics {
        encoder_id: store.encoder_id().to_string(),
        num_layers: store.num_layers(),
        layer: key.layer,
        pooling: key.pooling,
        sample_count: train.len(),
        pca_dim,
        d_eff,
        anisotropy,
        targets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionCriterion {
    FisherJ,
    CvAuc,
}

impl std::str::FromStr for SelectionCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fisher_j" => Ok(Self::FisherJ),
            "cv_auc" => Ok(Self::CvAuc),
            other => Err(Error::config(format!("unknown layer criterion `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CandidateKey {
    pub encoder_id: String,
    pub layer: u16,
    pub pooling: Pooling,
    pub model_id: String,
}

/// Cross-validated probe AUC per (encoder, layer, pooling, target).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CvScores {
    pub scores: BTreeMap<CandidateKey, f64>,
}

impl CvScores {
    pub fn get(&self, encoder_id: &str, key: MatrixKey, model_id: &str) -> Option<f64> {
        self.scores
            .get(&CandidateKey {
                encoder_id: encoder_id.to_string(),
                layer: key.layer,
                pooling: key.pooling,
                model_id: model_id.to_string(),
            })
            .copied()
    }
}

/// Runs the k-fold logistic probe for every diagnosed candidate and target.
pub fn cv_scores(
    stores: &BTreeMap<String, ActivationStore>,
    labels: &LabelTable,
    train_ids: &[String],
    diags: &[LayerDiagnostics],
    cfg: &CvConfig,
) -> Result<CvScores> {
    let jobs: Vec<(&LayerDiagnostics, &str)> = diags
        .iter()
        .flat_map(|d| d.targets.iter().map(move |t| (d, t.model_id.as_str())))
        .collect();
    let mut ys: HashMap<&str, Vec<bool>> = HashMap::new();
    for (_, m) in &jobs {
        if !ys.contains_key(m) {
            ys.insert(m, bool_labels(labels, train_ids, m)?);
        }
    }
    let scores = jobs
        .into_par_iter()
        .map(|(d, m)| {
            let store = stores
                .get(&d.encoder_id)
                .ok_or_else(|| Error::data(format!("unknown encoder `{}`", d.encoder_id)))?;
            let x = store.rows(d.key(), train_ids)?;
            let auc = cv_auc_for_layer(x.view(), &ys[m], cfg).map_err(|e| {
                e.context(format!(
                    "cv for `{}` layer {} {} target `{m}`",
                    d.encoder_id, d.layer, d.pooling
                ))
            })?;
            Ok((
                CandidateKey {
                    encoder_id: d.encoder_id.clone(),
                    layer: d.layer,
                    pooling: d.pooling,
                    model_id: m.to_string(),
                },
                auc,
            ))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(CvScores { scores })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerChoice {
    pub model_id: String,
    pub encoder_id: String,
    pub layer: u16,
    pub pooling: Pooling,
    pub score: f64,
    pub criterion: SelectionCriterion,
}

impl LayerChoice {
    pub fn key(&self) -> MatrixKey {
        MatrixKey::new(self.layer, self.pooling)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSelection {
    pub choices: Vec<LayerChoice>,
}

impl LayerSelection {
    pub fn choice(&self, model_id: &str) -> Option<&LayerChoice> {
        self.choices.iter().find(|c| c.model_id == model_id)
    }
}

/// Picks, per target, the candidate maximizing the criterion.
///
/// Only layers in `[⌈L/2⌉, L]` are eligible. Ties go to the deeper layer,
/// then to last-token pooling, then to the encoder listed first.
pub fn select_layers(
    diags: &[LayerDiagnostics],
    criterion: SelectionCriterion,
    cv: Option<&CvScores>,
) -> Result<LayerSelection> {
    if diags.is_empty() {
        return Err(Error::data("no layer diagnostics to select from"));
    }
    if criterion == SelectionCriterion::CvAuc && cv.is_none() {
        return Err(Error::config("cv_auc selection requires cross-validation scores"));
    }
    let mut encoder_rank: Vec<&str> = Vec::new();
    for d in diags {
        if !encoder_rank.contains(&d.encoder_id.as_str()) {
            encoder_rank.push(&d.encoder_id);
        }
    }
    let rank = |e: &str| encoder_rank.iter().position(|x| *x == e).unwrap();

    let mut targets: Vec<&str> = Vec::new();
    for d in diags {
        for t in &d.targets {
            if !targets.contains(&t.model_id.as_str()) {
                targets.push(&t.model_id);
            }
        }
    }

    let mut choices = Vec::with_capacity(targets.len());
    for target in targets {
        let mut best: Option<(&LayerDiagnostics, f64)> = None;
        for d in diags {
            if d.layer < upper_half_start(d.num_layers) || d.layer > d.num_layers {
                continue;
            }
            let score = match criterion {
                SelectionCriterion::FisherJ => d.fisher(target),
                SelectionCriterion::CvAuc => cv.unwrap().get(&d.encoder_id, d.key(), target),
            };
            let Some(score) = score else { continue };
            let better = match best {
                None => true,
                Some((b, bs)) => {
                    score > bs
                        || (score == bs
                            && (d.layer, std::cmp::Reverse(d.pooling), std::cmp::Reverse(rank(&d.encoder_id)))
                                > (b.layer, std::cmp::Reverse(b.pooling), std::cmp::Reverse(rank(&b.encoder_id))))
                }
            };
            if better {
                best = Some((d, score));
            }
        }
        let (d, score) = best.ok_or_else(|| {
            Error::data(format!("no upper-half candidate scored for target `{target}`"))
        })?;
        choices.push(LayerChoice {
            model_id: target.to_string(),
            encoder_id: d.encoder_id.clone(),
            layer: d.layer,
            pooling: d.pooling,
            score,
            criterion,
        });
    }
    Ok(LayerSelection { choices })
}

/// Columnar text table: one row per (encoder, layer, pooling).
pub fn render_diagnostics(diags: &[LayerDiagnostics]) -> String {
    let mut out = String::new();
    let targets: Vec<&str> = diags
        .first()
        .map(|d| d.targets.iter().map(|t| t.model_id.as_str()).collect())
        .unwrap_or_default();
    let _ = write!(
        out,
        "{:<16} {:>5} {:<10} {:>7} {:>10} {:>10}",
        "encoder", "layer", "pooling", "n", "d_eff", "anisotropy"
    );
    for t in &targets {
        let _ = write!(out, " {:>14}", format!("J[{t}]"));
    }
    out.push('\n');
    for d in diags {
        let _ = write!(
            out,
            "{:<16} {:>5} {:<10} {:>7} {:>10.4} {:>10.6}",
            d.encoder_id, d.layer, d.pooling, d.sample_count, d.d_eff, d.anisotropy
        );
        for t in &targets {
            let _ = write!(out, " {:>14.6e}", d.fisher(t).unwrap_or(f64::NAN));
        }
        out.push('\n');
    }
    out
}
