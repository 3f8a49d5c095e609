//! Synthetic activation stores and label tables with a planted signal.
//!
//! Every stored vector is isotropic Gaussian noise except the last-token
//! vectors of `signal_layer` in the signal encoder, which drive correctness:
//! `y_k ~ Bernoulli(sigmoid(strength_k·⟨w_k, h⟩ + b_k))` with a random unit
//! direction `w_k` per target. Mean pooling at the signal layer carries a
//! diluted copy, `0.5·h + √0.75·noise`. The bias `b_k` is solved so that the
//! realized base rate of the generated sample sits on the requested one.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{
    upper_half_start, write_activation_store, ActivationStore, LabelRow, LabelTable, MatrixKey,
    ModelPool, ModelSpec, Pooling,
};
use crate::linalg::sigmoid;
use crate::predictors::trunk::mix_seed;
use crate::{Error, Result};

const BASE_RATE_TOLERANCE: f64 = 0.02;
const BAYES_AUC_DRAWS: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTarget {
    pub model_id: String,
    pub strength: f64,
    pub base_rate: f64,
    pub rate_in: f64,
    pub rate_out: f64,
    pub median_out_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTag {
    pub name: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_queries: usize,
    pub hidden_dim: usize,
    pub num_layers: u16,
    pub signal_layer: u16,
    pub noise_std: f64,
    /// Length of a fixed offset added to every vector of an encoder, which
    /// raises anisotropy without changing class separation.
    pub anisotropy_shift: f64,
    pub num_encoders: usize,
    pub signal_encoder: usize,
    pub targets: Vec<SynthTarget>,
    pub benchmarks: Vec<BenchmarkTag>,
    /// Inclusive range of prompt lengths.
    pub input_tokens: [u64; 2],
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self::planted(4.0)
    }
}

impl SynthSpec {
    /// Three targets with strength `strength`, 4000 queries, 64 dimensions,
    /// 8 layers and the signal at layer 6.
    pub fn planted(strength: f64) -> Self {
        let target = |id: &str, base_rate, rate_in, rate_out, out| SynthTarget {
            model_id: id.into(),
            strength,
            base_rate,
            rate_in,
            rate_out,
            median_out_tokens: out,
        };
        Self {
            n_queries: 4000,
            hidden_dim: 64,
            num_layers: 8,
            signal_layer: 6,
            noise_std: 1.0,
            anisotropy_shift: 0.0,
            num_encoders: 1,
            signal_encoder: 0,
            targets: vec![
                target("small", 0.55, 0.2, 0.8, 400),
                target("medium", 0.65, 0.5, 2.0, 400),
                target("large", 0.75, 1.0, 4.0, 400),
            ],
            benchmarks: vec![
                BenchmarkTag {
                    name: "math".into(),
                    weight: 0.4,
                },
                BenchmarkTag {
                    name: "code".into(),
                    weight: 0.35,
                },
                BenchmarkTag {
                    name: "qa".into(),
                    weight: 0.25,
                },
            ],
            input_tokens: [64, 1024],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_queries < 2 || self.hidden_dim == 0 || self.num_layers == 0 {
            return Err(Error::config("synth needs n_queries >= 2, hidden_dim >= 1 and num_layers >= 1"));
        }
        let lo = upper_half_start(self.num_layers);
        if self.signal_layer < lo || self.signal_layer > self.num_layers {
            return Err(Error::config(format!(
                "signal_layer {} outside the upper half [{lo}, {}]",
                self.signal_layer, self.num_layers
            )));
        }
        if !(self.noise_std > 0.0) || !(self.anisotropy_shift >= 0.0) {
            return Err(Error::config("noise_std must be positive and anisotropy_shift nonnegative"));
        }
        if self.num_encoders == 0 || self.signal_encoder >= self.num_encoders {
            return Err(Error::config("signal_encoder must index one of num_encoders"));
        }
        if self.targets.len() < 2 {
            return Err(Error::config("synth needs at least two targets"));
        }
        for t in &self.targets {
            if !(t.strength >= 0.0) || !(t.base_rate > 0.0 && t.base_rate < 1.0) {
                return Err(Error::config(format!(
                    "target `{}` needs strength >= 0 and base_rate in (0, 1)",
                    t.model_id
                )));
            }
        }
        if self.benchmarks.is_empty() || self.benchmarks.iter().any(|b| !(b.weight > 0.0)) {
            return Err(Error::config("benchmark weights must be positive"));
        }
        if self.input_tokens[0] > self.input_tokens[1] {
            return Err(Error::config("input_tokens range is reversed"));
        }
        Ok(())
    }

    pub fn encoder_id(index: usize) -> String {
        format!("enc{index}")
    }

    pub fn pool(&self) -> Result<ModelPool> {
        ModelPool::new(
            self.targets
                .iter()
                .map(|t| ModelSpec {
                    model_id: t.model_id.clone(),
                    rate_in: t.rate_in,
                    rate_out: t.rate_out,
                    median_out_tokens: t.median_out_tokens,
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTarget {
    pub model_id: String,
    pub strength: f64,
    pub direction: Vec<f64>,
    pub bias: f64,
    pub target_base_rate: f64,
    pub realized_base_rate: f64,
    /// Monte-Carlo AUC of the true correctness probability.
    pub bayes_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthMetadata {
    pub spec: SynthSpec,
    pub signal_encoder_id: String,
    pub signal_layer: u16,
    pub signal_pooling: Pooling,
    pub targets: Vec<PlantedTarget>,
}

impl SynthMetadata {
    pub fn mean_bayes_auc(&self) -> f64 {
        self.targets.iter().map(|t| t.bayes_auc).sum::<f64>() / self.targets.len() as f64
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug)]
pub struct SynthDataset {
    pub stores: Vec<ActivationStore>,
    pub labels: LabelTable,
    pub pool: ModelPool,
    pub metadata: SynthMetadata,
}

pub const LABELS_FILE: &str = "labels.csv";
pub const POOL_FILE: &str = "pool.toml";
pub const METADATA_FILE: &str = "metadata.json";
pub const ACTIVATIONS_DIR: &str = "activations";

impl SynthDataset {
    pub fn store(&self, encoder_id: &str) -> Option<&ActivationStore> {
        self.stores.iter().find(|s| s.encoder_id() == encoder_id)
    }

    /// Stores keyed by encoder id, plus labels, pool and metadata.
    pub fn into_parts(self) -> (BTreeMap<String, ActivationStore>, LabelTable, ModelPool, SynthMetadata) {
        let stores = self
            .stores
            .into_iter()
            .map(|s| (s.encoder_id().to_string(), s))
            .collect();
        (stores, self.labels, self.pool, self.metadata)
    }

    /// Writes `activations/<encoder>/`, `labels.csv`, `pool.toml` and
    /// `metadata.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for s in &self.stores {
            write_activation_store(s, dir.join(ACTIVATIONS_DIR).join(s.encoder_id()))?;
        }
        self.labels.write_csv(&dir.join(LABELS_FILE))?;
        let pool_path = dir.join(POOL_FILE);
        fs::write(&pool_path, self.pool.to_toml()?).map_err(|e| Error::io(&pool_path, e))?;
        let meta_path = dir.join(METADATA_FILE);
        let text = serde_json::to_string_pretty(&self.metadata)?;
        fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || {
        scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
    })
}

fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Array1<f64> {
    loop {
        let v = Array1::from_shape_simple_fn(d, || {
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
        });
        let norm = v.dot(&v).sqrt();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Realized base rate of `u < sigmoid(logit + b)`.
fn realized_rate(logits: &[f64], uniforms: &[f64], b: f64) -> f64 {
    let hits = logits
        .iter()
        .zip(uniforms)
        .filter(|(&l, &u)| u < sigmoid(l + b))
        .count();
    hits as f64 / logits.len() as f64
}

/// Smallest bias (to bisection precision) whose realized rate reaches
/// `target`; the realized rate is monotone in the bias for fixed uniforms.
fn solve_bias(logits: &[f64], uniforms: &[f64], target: f64, model_id: &str) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if realized_rate(logits, uniforms, mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let rate = realized_rate(logits, uniforms, hi);
    if (rate - target).abs() > BASE_RATE_TOLERANCE {
        return Err(Error::config(format!(
            "base rate {target} of `{model_id}` is unattainable: closest realized rate {rate}"
        )));
    }
    Ok((hi, rate))
}

/// AUC of the true correctness probability for a target whose logit is
/// `strength·noise_std·z + bias`, `z ~ N(0, 1)`, by weighted ranks over
/// Monte-Carlo draws of `z`.
pub fn bayes_auc(strength: f64, noise_std: f64, bias: f64, draws: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut logits: Vec<f64> = (0..draws)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            strength * noise_std * z + bias
        })
        .collect();
    logits.sort_by(f64::total_cmp);
    let (mut neg_below, mut num) = (0.0, 0.0);
    let (mut pos_total, mut neg_total) = (0.0, 0.0);
    let mut i = 0;
    while i < logits.len() {
        let mut j = i;
        while j + 1 < logits.len() && logits[j + 1] == logits[i] {
            j += 1;
        }
        let p = sigmoid(logits[i]);
        let m = (j - i + 1) as f64;
        let (pos, neg) = (p * m, (1.0 - p) * m);
        num += pos * (neg_below + 0.5 * neg);
        neg_below += neg;
        pos_total += pos;
        neg_total += neg;
        i = j + 1;
    }
    num / (pos_total * neg_total)
}

fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed ^ mix_seed(tag)))
}

const TAG_LABELS: u64 = 1;
const TAG_DIRECTIONS: u64 = 2;
const TAG_SIGNAL: u64 = 3;
const TAG_META: u64 = 4;
const TAG_SHIFT: u64 = 5;

fn layer_tag(encoder: usize, layer: u16, pooling: Pooling) -> u64 {
    1000 + ((encoder as u64) << 24) + ((layer as u64) << 2) + pooling.code() as u64
}

fn encoder_shift(spec: &SynthSpec, encoder: usize) -> Option<Array1<f64>> {
    (spec.anisotropy_shift > 0.0).then(|| {
        let mut rng = stream(spec.seed, TAG_SHIFT + ((encoder as u64) << 8));
        unit_vector(&mut rng, spec.hidden_dim) * spec.anisotropy_shift
    })
}

pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let (n, d) = (spec.n_queries, spec.hidden_dim);
    let query_ids: Vec<String> = (0..n).map(|i| format!("q{i:05}")).collect();

    let mut sig_rng = stream(spec.seed, TAG_SIGNAL);
    let h = gaussian(&mut sig_rng, n, d, spec.noise_std);
    let mean_noise = gaussian(&mut sig_rng, n, d, spec.noise_std);

    let mut dir_rng = stream(spec.seed, TAG_DIRECTIONS);
    let directions: Vec<Array1<f64>> = spec.targets.iter().map(|_| unit_vector(&mut dir_rng, d)).collect();

    let mut label_rng = stream(spec.seed, TAG_LABELS);
    let benchmark_pick = WeightedIndex::new(spec.benchmarks.iter().map(|b| b.weight))
        .map_err(|e| Error::config(format!("benchmark weights: {e}")))?;
    let benchmarks: Vec<usize> = (0..n).map(|_| benchmark_pick.sample(&mut label_rng)).collect();
    let tokens: Vec<u64> = (0..n)
        .map(|_| label_rng.random_range(spec.input_tokens[0]..=spec.input_tokens[1]))
        .collect();

    let mut planted = Vec::with_capacity(spec.targets.len());
    let mut correct: Vec<Vec<bool>> = Vec::with_capacity(spec.targets.len());
    for (k, (t, w)) in spec.targets.iter().zip(&directions).enumerate() {
        let logits: Vec<f64> = h.dot(w).iter().map(|&z| t.strength * z).collect();
        let uniforms: Vec<f64> = (0..n).map(|_| label_rng.random::<f64>()).collect();
        let (bias, realized) = solve_bias(&logits, &uniforms, t.base_rate, &t.model_id)?;
        correct.push(
            logits
                .iter()
                .zip(&uniforms)
                .map(|(&l, &u)| u < sigmoid(l + bias))
                .collect(),
        );
        planted.push(PlantedTarget {
            model_id: t.model_id.clone(),
            strength: t.strength,
            direction: w.to_vec(),
            bias,
            target_base_rate: t.base_rate,
            realized_base_rate: realized,
            bayes_auc: bayes_auc(
                t.strength,
                spec.noise_std,
                bias,
                BAYES_AUC_DRAWS,
                mix_seed(spec.seed ^ mix_seed(TAG_META + k as u64)),
            ),
        });
    }

    let rows = (0..n)
        .map(|q| LabelRow {
            query_id: query_ids[q].clone(),
            benchmark: spec.benchmarks[benchmarks[q]].name.clone(),
            input_tokens: tokens[q],
            correct: correct.iter().map(|c| c[q]).collect(),
        })
        .collect();
    let labels = LabelTable::new(spec.targets.iter().map(|t| t.model_id.clone()).collect(), rows)?;

    let signal_last = h;
    let signal_mean = &signal_last * 0.5 + &mean_noise * 0.75f64.sqrt();
    let stores = (0..spec.num_encoders)
        .map(|e| {
            let shift = encoder_shift(spec, e);
            let keys: Vec<MatrixKey> = (0..=spec.num_layers)
                .flat_map(|l| [MatrixKey::new(l, Pooling::LastToken), MatrixKey::new(l, Pooling::Mean)])
                .collect();
            let matrices = keys
                .into_par_iter()
                .map(|key| {
                    let mut m = if e == spec.signal_encoder && key.layer == spec.signal_layer {
                        match key.pooling {
                            Pooling::LastToken => signal_last.clone(),
                            Pooling::Mean => signal_mean.clone(),
                        }
                    } else {
                        let mut rng = stream(spec.seed, layer_tag(e, key.layer, key.pooling));
                        gaussian(&mut rng, n, d, spec.noise_std)
                    };
                    if let Some(s) = &shift {
                        m += s;
                    }
                    (key, m.mapv(|v| v as f32))
                })
                .collect::<BTreeMap<_, _>>();
            ActivationStore::from_matrices(
                SynthSpec::encoder_id(e),
                spec.num_layers,
                query_ids.clone(),
                matrices,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SynthDataset {
        stores,
        labels,
        pool: spec.pool()?,
        metadata: SynthMetadata {
            spec: spec.clone(),
            signal_encoder_id: SynthSpec::encoder_id(spec.signal_encoder),
            signal_layer: spec.signal_layer,
            signal_pooling: Pooling::LastToken,
            targets: planted,
        },
    })
}

/// True correctness probabilities of `ids` under the planted model, read
/// from the signal store.
pub fn true_probabilities(
    meta: &SynthMetadata,
    store: &ActivationStore,
    ids: &[String],
) -> Result<Array2<f64>> {
    let x = store.rows(MatrixKey::new(meta.signal_layer, meta.signal_pooling), ids)?;
    let x = match encoder_shift(&meta.spec, meta.spec.signal_encoder) {
        Some(shift) => x - &shift,
        None => x,
    };
    let mut out = Array2::zeros((ids.len(), meta.targets.len()));
    for (k, t) in meta.targets.iter().enumerate() {
        let w = Array1::from(t.direction.clone());
        for (q, z) in x.dot(&w).iter().enumerate() {
            out[[q, k]] = sigmoid(t.strength * z + t.bias);
        }
    }
    Ok(out)
}
