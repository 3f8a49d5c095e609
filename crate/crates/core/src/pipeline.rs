//! End-to-end runs: split → probe → layer selection → PCA → features →
//! SharedTrunkNet → routing sweep → report, with every intermediate
//! persisted under the output directory.
//!
//! A run is described by a TOML [`RunConfig`]. Any key can be overridden by
//! an environment variable `PFROUTER_<KEY>`, with `__` separating nested
//! tables (`PFROUTER_TRUNK__MAX_EPOCHS=50`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::evaluation::{evaluate_router, EvalOptions, EvalReport, HeadroomPoint, OraclePoints};
use crate::features::{build_features, fit_pca, FeatureMatrix, PcaModel, DEFAULT_PCA_DIM};
use crate::geometry::{
    cv_scores, probe_layers, render_diagnostics, select_layers, CandidateKey, CvScores,
    LayerChoice, LayerDiagnostics, LayerSelection, SelectionCriterion,
};
use crate::ingest::{
    load_activation_store, load_labels, load_pool, stratified_split, ActivationStore, LabelTable,
    ModelPool, SplitAssignment, SplitFractions,
};
use crate::predictors::{
    predict, train_shared_trunk, CvConfig, PredictionMatrix, TrunkNetConfig, TrunkNetEnsemble,
};
use crate::report::report_render;
use crate::routing::{route, write_decisions, CostMatrix};
use crate::{Error, Result};

pub const ENV_PREFIX: &str = "PFROUTER_";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderMode {
    /// Each target uses the encoder named in `assignments`.
    PerModel,
    /// Every target uses one encoder.
    #[default]
    Single,
    /// Each target uses the encoder whose selected layer probes best.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSettings {
    pub folds: usize,
    pub lambda_l2: f64,
}

impl Default for CvSettings {
    fn default() -> Self {
        let d = CvConfig::default();
        Self {
            folds: d.folds,
            lambda_l2: d.lambda_l2,
        }
    }
}

fn default_pca_dim() -> usize {
    DEFAULT_PCA_DIM
}

fn default_grid_step() -> f64 {
    1e-2
}

fn default_criterion() -> SelectionCriterion {
    SelectionCriterion::FisherJ
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub labels: PathBuf,
    pub pool: PathBuf,
    /// Encoder id → activation store directory.
    pub encoders: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub encoder_mode: EncoderMode,
    /// Encoder used in `single` mode; may be omitted when only one is listed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub single_encoder: Option<String>,
    /// Model id → encoder id, for `per_model` mode.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub assignments: BTreeMap<String, String>,
    #[serde(default = "default_pca_dim")]
    pub pca_dim: usize,
    /// PCA dimension for the Fisher probe; defaults to `pca_dim`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_pca_dim: Option<usize>,
    #[serde(default = "default_criterion")]
    pub layer_criterion: SelectionCriterion,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub headroom_point: HeadroomPoint,
    #[serde(default)]
    pub oracle_points: OraclePoints,
    #[serde(default)]
    pub cv: CvSettings,
    #[serde(default)]
    pub trunk: TrunkNetConfig,
}

impl RunConfig {
    /// A config with defaults for everything but paths.
    pub fn new(
        output_dir: impl Into<PathBuf>,
        labels: impl Into<PathBuf>,
        pool: impl Into<PathBuf>,
        encoders: BTreeMap<String, PathBuf>,
    ) -> Self {
        Self {
            output_dir: output_dir.into(),
            labels: labels.into(),
            pool: pool.into(),
            encoders,
            encoder_mode: EncoderMode::default(),
            single_encoder: None,
            assignments: BTreeMap::new(),
            pca_dim: DEFAULT_PCA_DIM,
            probe_pca_dim: None,
            layer_criterion: SelectionCriterion::FisherJ,
            grid_step: default_grid_step(),
            split: SplitFractions::default(),
            seed: 0,
            headroom_point: HeadroomPoint::default(),
            oracle_points: OraclePoints::default(),
            cv: CvSettings::default(),
            trunk: TrunkNetConfig::default(),
        }
    }

    /// Reads a config file, applies `PFROUTER_` overrides from the process
    /// environment and resolves relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base, std::env::vars())
    }

    pub fn from_toml(
        text: &str,
        base_dir: &Path,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?;
        apply_env_overrides(&mut table, env)?;
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| Error::config(format!("config: {e}")))?;
        cfg.resolve_paths(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("serializing config: {e}")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.labels);
        fix(&mut self.pool);
        self.encoders.values_mut().for_each(fix);
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoders.is_empty() {
            return Err(Error::config("config lists no encoders"));
        }
        if self.pca_dim == 0 || self.probe_pca_dim == Some(0) {
            return Err(Error::config("pca_dim must be positive"));
        }
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0) {
            return Err(Error::config("grid_step must lie in (0, 1]"));
        }
        self.split.validate()?;
        self.trunk.validate()?;
        if self.cv.folds < 2 || !(self.cv.lambda_l2 > 0.0) {
            return Err(Error::config("cv needs folds >= 2 and lambda_l2 > 0"));
        }
        match self.encoder_mode {
            EncoderMode::Single => {
                self.single_encoder_id()?;
            }
            EncoderMode::PerModel => {
                if self.assignments.is_empty() {
                    return Err(Error::config("per_model mode needs an [assignments] table"));
                }
                if let Some(e) = self.assignments.values().find(|e| !self.encoders.contains_key(*e)) {
                    return Err(Error::config(format!("assignment names unknown encoder `{e}`")));
                }
            }
            EncoderMode::Auto => {}
        }
        Ok(())
    }

    fn single_encoder_id(&self) -> Result<&str> {
        match &self.single_encoder {
            Some(e) if self.encoders.contains_key(e) => Ok(e),
            Some(e) => Err(Error::config(format!("single_encoder `{e}` is not listed in [encoders]"))),
            None if self.encoders.len() == 1 => Ok(self.encoders.keys().next().unwrap()),
            None => Err(Error::config("single mode with several encoders needs single_encoder")),
        }
    }

    /// Candidate encoders per target under the configured mode.
    fn candidates(&self, targets: &[String]) -> Result<BTreeMap<String, Vec<String>>> {
        targets
            .iter()
            .map(|t| {
                let encs = match self.encoder_mode {
                    EncoderMode::Single => vec![self.single_encoder_id()?.to_string()],
                    EncoderMode::PerModel => vec![self
                        .assignments
                        .get(t)
                        .ok_or_else(|| Error::config(format!("no encoder assigned to target `{t}`")))?
                        .clone()],
                    EncoderMode::Auto => self.encoders.keys().cloned().collect(),
                };
                Ok((t.clone(), encs))
            })
            .collect()
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            grid_step: self.grid_step,
            headroom_point: self.headroom_point,
            oracle_points: self.oracle_points,
        }
    }

    fn cv_config(&self, pca_dim: usize) -> CvConfig {
        CvConfig {
            folds: self.cv.folds,
            lambda_l2: self.cv.lambda_l2,
            pca_dim: Some(pca_dim),
            seed: self.seed,
        }
    }
}

fn parse_override(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Writes `PFROUTER_A__B=v` into `table["a"]["b"]`.
pub fn apply_env_overrides(
    table: &mut toml::Table,
    env: impl IntoIterator<Item = (String, String)>,
) -> Result<()> {
    let mut vars: Vec<(String, String)> = env
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..]
            .split("__")
            .map(|s| s.to_ascii_lowercase())
            .collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(Error::config(format!("malformed override variable `{key}`")));
        }
        let mut node = &mut *table;
        for part in &path[..path.len() - 1] {
            let entry = node
                .entry(part.clone())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            node = entry
                .as_table_mut()
                .ok_or_else(|| Error::config(format!("override `{key}` descends into a non-table")))?;
        }
        log::info!("config override {key}");
        node.insert(path.last().unwrap().clone(), parse_override(&raw));
    }
    Ok(())
}

/// File names under the output directory.
pub mod artifacts {
    pub const CONFIG: &str = "config.toml";
    pub const SPLIT: &str = "split.json";
    pub const DIAGNOSTICS: &str = "diagnostics.json";
    pub const DIAGNOSTICS_TABLE: &str = "diagnostics.txt";
    pub const CV_SCORES: &str = "cv_scores.json";
    pub const SELECTION: &str = "layer_selection.json";
    pub const PCA_DIR: &str = "pca";
    pub const TRAIN_FEATURES: &str = "features_train.pffea";
    pub const TEST_FEATURES: &str = "features_test.pffea";
    pub const ENSEMBLE: &str = "ensemble.pfnet";
    pub const PREDICTIONS: &str = "predictions_test.csv";
    pub const DECISIONS: &str = "decisions.jsonl";
    pub const REPORT: &str = "report.json";
    pub const REPORT_TEXT: &str = "report.txt";
    pub const OPERATING_POINTS: &str = "operating_points.csv";
    pub const MANIFEST: &str = "run_manifest.json";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub crate_version: String,
    pub config: RunConfig,
    /// Relative artifact path → SHA-256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug)]
pub struct RunOutput {
    pub report: EvalReport,
    pub selection: LayerSelection,
    pub diagnostics: Vec<LayerDiagnostics>,
    pub split: SplitAssignment,
    pub manifest: RunManifest,
}

struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn path(&mut self, rel: &str) -> PathBuf {
        self.written.push(rel.to_string());
        self.dir.join(rel)
    }

    fn write_text(&mut self, rel: &str, text: &str) -> Result<()> {
        let p = self.path(rel);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.write_text(rel, &text)
    }
}

fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    log::info!("stage {name}");
    f().map_err(|e| e.in_stage(name))
}

/// PCA dimension usable on `n_train` rows of width `hidden`.
pub fn effective_pca_dim(requested: usize, n_train: usize, hidden: usize) -> usize {
    let cap = n_train.saturating_sub(1).min(hidden).max(1);
    if requested > cap {
        log::warn!("pca_dim {requested} exceeds the rank bound {cap}; using {cap}");
    }
    requested.min(cap)
}

/// Chooses one (encoder, layer, pooling) per target.
///
/// Layers are picked per encoder by the configured criterion. When a target
/// has several candidate encoders the one whose selected layer has the
/// highest cross-validated probe AUC wins, ties to the encoder listed first.
pub fn select_for_targets(
    cfg: &RunConfig,
    stores: &BTreeMap<String, ActivationStore>,
    labels: &LabelTable,
    train_ids: &[String],
    diags: &[LayerDiagnostics],
    targets: &[String],
    cv_pca_dim: usize,
) -> Result<(LayerSelection, CvScores)> {
    let candidates = cfg.candidates(targets)?;
    let cv_cfg = cfg.cv_config(cv_pca_dim);
    let mut scores = if cfg.layer_criterion == SelectionCriterion::CvAuc {
        cv_scores(stores, labels, train_ids, diags, &cv_cfg)?
    } else {
        CvScores::default()
    };

    let mut per_encoder: BTreeMap<String, LayerSelection> = BTreeMap::new();
    for enc in candidates.values().flatten() {
        if per_encoder.contains_key(enc) {
            continue;
        }
        let own: Vec<LayerDiagnostics> = diags.iter().filter(|d| d.encoder_id == *enc).cloned().collect();
        let sel = select_layers(&own, cfg.layer_criterion, Some(&scores))?;
        per_encoder.insert(enc.clone(), sel);
    }

    // encoder comparison needs probe AUCs for each candidate's chosen layer
    let mut missing: Vec<LayerDiagnostics> = Vec::new();
    for (t, encs) in &candidates {
        if encs.len() < 2 {
            continue;
        }
        for e in encs {
            let c = per_encoder[e].choice(t).expect("every target selected");
            if scores.get(e, c.key(), t).is_none() {
                let d = diags
                    .iter()
                    .find(|d| d.encoder_id == *e && d.key() == c.key())
                    .expect("choice comes from a diagnostic");
                let mut d = d.clone();
                d.targets.retain(|x| x.model_id == *t);
                missing.push(d);
            }
        }
    }
    if !missing.is_empty() {
        let extra = cv_scores(stores, labels, train_ids, &missing, &cv_cfg)?;
        scores.scores.extend(extra.scores);
    }

    let mut choices = Vec::with_capacity(targets.len());
    for t in targets {
        let encs = &candidates[t];
        let mut best: Option<(&LayerChoice, f64)> = None;
        for e in encs {
            let c = per_encoder[e].choice(t).expect("every target selected");
            let auc = if encs.len() > 1 {
                scores.get(e, c.key(), t).unwrap_or(f64::NEG_INFINITY)
            } else {
                0.0
            };
            if best.is_none_or(|(_, b)| auc > b) {
                best = Some((c, auc));
            }
        }
        choices.push(best.expect("at least one candidate encoder").0.clone());
    }
    Ok((LayerSelection { choices }, scores))
}

#[derive(Serialize)]
struct CvRecord<'a> {
    #[serde(flatten)]
    key: &'a CandidateKey,
    cv_auc: f64,
}

/// Executes every stage and persists the intermediates under
/// `cfg.output_dir`. Failures name the stage; outputs written before the
/// failure are kept.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(dir.join(artifacts::PCA_DIR)).map_err(|e| Error::io(&dir, e))?;
    let mut out = Outputs {
        dir,
        written: Vec::new(),
    };
    out.write_text(artifacts::CONFIG, &cfg.to_toml()?)?;

    let (labels, pool, stores) = stage("ingest", || {
        let pool = load_pool(&cfg.pool)?;
        let labels = load_labels(&cfg.labels)?;
        labels.check_pool(&pool)?;
        let labels = labels.select_models(&pool.model_ids())?;
        let mut stores = BTreeMap::new();
        for (id, path) in &cfg.encoders {
            let s = load_activation_store(path)?;
            if s.encoder_id() != id {
                log::warn!("encoder `{id}` store declares id `{}`", s.encoder_id());
            }
            stores.insert(id.clone(), s);
        }
        Ok((labels, pool, stores))
    })?;
    let targets = pool.model_ids();

    let split = stage("split", || {
        let split = stratified_split(&labels, cfg.split, cfg.seed)?;
        split.write_json(&out.path(artifacts::SPLIT))?;
        Ok(split)
    })?;
    let hidden_min = stores.values().map(|s| s.hidden_dim()).min().unwrap_or(1);
    let pca_dim = effective_pca_dim(cfg.pca_dim, split.train_ids.len(), hidden_min);
    let probe_dim = effective_pca_dim(cfg.probe_pca_dim.unwrap_or(cfg.pca_dim), split.train_ids.len(), hidden_min);

    let candidates = cfg.candidates(&targets)?;
    let diagnostics = stage("probe", || {
        let mut diags = Vec::new();
        for (id, store) in &stores {
            if candidates.values().any(|encs| encs.contains(id)) {
                diags.extend(probe_layers(store, &labels, &pool, &split, probe_dim)?);
            }
        }
        out.write_json(artifacts::DIAGNOSTICS, &diags)?;
        out.write_text(artifacts::DIAGNOSTICS_TABLE, &render_diagnostics(&diags))?;
        Ok(diags)
    })?;

    let selection = stage("select", || {
        let (sel, scores) = select_for_targets(cfg, &stores, &labels, &split.train_ids, &diagnostics, &targets, pca_dim)?;
        let records: Vec<CvRecord> = scores
            .scores
            .iter()
            .map(|(key, &cv_auc)| CvRecord { key, cv_auc })
            .collect();
        out.write_json(artifacts::CV_SCORES, &records)?;
        out.write_json(artifacts::SELECTION, &sel)?;
        Ok(sel)
    })?;

    let pcas = stage("fit-pca", || {
        let mut pcas: BTreeMap<String, PcaModel> = BTreeMap::new();
        for c in &selection.choices {
            let x = stores[&c.encoder_id].rows(c.key(), &split.train_ids)?;
            let pca = fit_pca(x.view(), pca_dim, cfg.seed)?;
            pca.write(&out.path(&format!("{}/{}.pfpca", artifacts::PCA_DIR, c.model_id)))?;
            pcas.insert(c.model_id.clone(), pca);
        }
        Ok(pcas)
    })?;

    let (train_x, test_x) = stage("features", || {
        let train = build_features(&stores, &selection, &pcas, &targets, &split.train_ids)?;
        let test = build_features(&stores, &selection, &pcas, &targets, &split.test_ids)?;
        train.write(&out.path(artifacts::TRAIN_FEATURES))?;
        test.write(&out.path(artifacts::TEST_FEATURES))?;
        Ok((train, test))
    })?;

    let ensemble = stage("train", || {
        let y = labels.label_matrix(&split.train_ids, &targets)?;
        let ens = train_shared_trunk(train_x.data.view(), y.view(), &targets, &cfg.trunk, cfg.seed)?;
        ens.write(&out.path(artifacts::ENSEMBLE))?;
        Ok(ens)
    })?;

    let (p_hat, costs) = stage("route", || {
        let p_hat = predict(&ensemble, &test_x)?;
        p_hat.write_csv(&out.path(artifacts::PREDICTIONS))?;
        let costs = CostMatrix::from_labels(&pool, &labels, &split.test_ids, &split.train_ids)?;
        let decisions = route(&p_hat, &costs, 1.0)?;
        write_decisions(&decisions, &out.path(artifacts::DECISIONS))?;
        Ok((p_hat, costs))
    })?;

    let report = stage("evaluate", || {
        let correct = labels.label_matrix(&split.test_ids, &targets)?;
        let report = evaluate_router(&p_hat, &costs, correct.view(), &cfg.eval_options())?;
        report.write_json(&out.path(artifacts::REPORT))?;
        out.write_text(artifacts::REPORT_TEXT, &report_render(&report))?;
        report.write_operating_points(&out.path(artifacts::OPERATING_POINTS))?;
        Ok(report)
    })?;

    let manifest = stage("manifest", || {
        let mut hashes = BTreeMap::new();
        for rel in &out.written {
            hashes.insert(rel.clone(), sha256_file(&out.dir.join(rel))?);
        }
        let manifest = RunManifest {
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            artifacts: hashes,
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        let p = out.dir.join(artifacts::MANIFEST);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        Ok(manifest)
    })?;

    Ok(RunOutput {
        report,
        selection,
        diagnostics,
        split,
        manifest,
    })
}

/// Training-set cost anchors from the query ids of a training feature file.
pub fn anchors_from_features(pool: &ModelPool, labels: &LabelTable, train: &FeatureMatrix) -> Result<(f64, f64)> {
    crate::routing::training_range(pool, labels, &train.query_ids)
}

/// Predictions and anchored costs for a feature file, as used by the
/// `route`, `sweep` and `evaluate` commands.
pub fn predict_with_costs(
    ensemble: &TrunkNetEnsemble,
    features: &FeatureMatrix,
    train_features: &FeatureMatrix,
    pool: &ModelPool,
    labels: &LabelTable,
) -> Result<(PredictionMatrix, CostMatrix)> {
    if ensemble.target_order != pool.model_ids() {
        return Err(Error::data("ensemble targets differ from the pool order"));
    }
    let p_hat = predict(ensemble, features)?;
    let costs = CostMatrix::from_labels(pool, labels, &features.query_ids, &train_features.query_ids)?;
    Ok((p_hat, costs))
}

/// 0/1 label matrix for the rows of `features` in pool order.
pub fn correctness(labels: &LabelTable, pool: &ModelPool, ids: &[String]) -> Result<Array2<f64>> {
    labels.label_matrix(ids, &pool.model_ids())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
output_dir = "out"
labels = "labels.csv"
pool = "pool.toml"

[encoders]
enc0 = "activations/enc0"
"#;

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let cfg = RunConfig::from_toml(BASE, Path::new("/data/run"), Vec::new()).unwrap();
        assert_eq!(cfg.labels, Path::new("/data/run/labels.csv"));
        assert_eq!(cfg.encoders["enc0"], Path::new("/data/run/activations/enc0"));
        assert_eq!(cfg.pca_dim, 100);
        assert_eq!(cfg.grid_step, 0.01);
        assert_eq!(cfg.trunk, TrunkNetConfig::default());
    }

    #[test]
    fn env_overrides_reach_nested_keys() {
        let env = vec![
            ("PFROUTER_SEED".to_string(), "7".to_string()),
            ("PFROUTER_TRUNK__MAX_EPOCHS".to_string(), "3".to_string()),
            ("PFROUTER_LAYER_CRITERION".to_string(), "cv_auc".to_string()),
            ("OTHER".to_string(), "x".to_string()),
        ];
        let cfg = RunConfig::from_toml(BASE, Path::new("/"), env).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.trunk.max_epochs, 3);
        assert_eq!(cfg.layer_criterion, SelectionCriterion::CvAuc);
    }

    #[test]
    fn config_errors() {
        let bad = format!("{BASE}\nencoder_mode = \"per_model\"\n");
        let err = RunConfig::from_toml(&bad, Path::new("/"), Vec::new()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let unknown = format!("{BASE}\nbogus = 1\n");
        assert!(RunConfig::from_toml(&unknown, Path::new("/"), Vec::new()).is_err());
    }

    #[test]
    fn pca_dim_clamps_to_rank_bound() {
        assert_eq!(effective_pca_dim(100, 3400, 64), 64);
        assert_eq!(effective_pca_dim(100, 30, 64), 29);
        assert_eq!(effective_pca_dim(50, 3400, 64), 50);
    }
}
