//! SharedTrunkNet: a multi-output MLP predicting every target's correctness
//! in one forward pass.
//!
//! The network is a stack of rectified dense layers (the shared trunk)
//! followed by one linear logit per target. Training minimizes the mean
//! binary cross-entropy over all (query, target) cells with Adam, on a
//! regime-stratified internal train/validation split with early stopping.
//! Several independently seeded members are trained; the ones with the
//! lowest validation loss form the ensemble and their probabilities are
//! averaged.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PredictionMatrix;
use crate::container::{read_f64s, read_magic, truncated, write_f64s, NET_MAGIC};
use crate::features::FeatureMatrix;
use crate::ingest::Regime;
use crate::linalg::{bce_with_logit, sigmoid};
use crate::{Error, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const MIN_TRAIN_ROWS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrunkNetConfig {
    pub trunk_hidden_sizes: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub val_fraction: f64,
    pub num_seeds: usize,
    pub ensemble_top: usize,
    pub weight_decay: f64,
}

impl Default for TrunkNetConfig {
    fn default() -> Self {
        Self {
            trunk_hidden_sizes: vec![256, 128],
            learning_rate: 1e-3,
            batch_size: 256,
            max_epochs: 200,
            early_stop_patience: 10,
            val_fraction: 0.15,
            num_seeds: 10,
            ensemble_top: 5,
            weight_decay: 0.0,
        }
    }
}

impl TrunkNetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trunk_hidden_sizes.contains(&0) {
            return Err(Error::config("trunk layer sizes must be positive"));
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::config(
                "learning_rate, batch_size and max_epochs must be positive",
            ));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::config("early_stop_patience must be positive"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::config("val_fraction must lie in (0, 1)"));
        }
        if self.ensemble_top == 0 || self.ensemble_top > self.num_seeds {
            return Err(Error::config("need 1 <= ensemble_top <= num_seeds"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    /// `[in × out]`
    w: Array2<f64>,
    b: Array1<f64>,
}

/// One trained network: rectified trunk layers plus a linear head layer
/// with one output per target.
#[derive(Debug, Clone, PartialEq)]
pub struct TrunkNet {
    layers: Vec<Dense>,
}

type Grads = Vec<(Array2<f64>, Array1<f64>)>;

impl TrunkNet {
    /// Fan-in scaled uniform init: every weight and bias drawn from
    /// `U(−1/√fan_in, 1/√fan_in)`.
    pub fn init(input_dim: usize, hidden: &[usize], outputs: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(outputs);
        let layers = sizes
            .windows(2)
            .map(|io| {
                let bound = 1.0 / (io[0] as f64).sqrt();
                Dense {
                    w: Array2::from_shape_simple_fn((io[0], io[1]), || {
                        rng.random_range(-bound..bound)
                    }),
                    b: Array1::from_shape_simple_fn(io[1], || rng.random_range(-bound..bound)),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn num_outputs(&self) -> usize {
        self.layers.last().unwrap().w.ncols()
    }

    /// Activations of every layer; the last entry holds the logits.
    fn forward(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let input = if i == 0 { x } else { acts[i - 1].view() };
            let mut z = input.dot(&layer.w) + &layer.b;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    /// Smallest `|z|` over the pre-activations of every trunk layer.
    pub fn min_hidden_preactivation(&self, x: ArrayView2<f64>) -> f64 {
        let mut a = x.to_owned();
        let mut m = f64::INFINITY;
        for layer in &self.layers[..self.layers.len() - 1] {
            let z = a.dot(&layer.w) + &layer.b;
            m = z.iter().fold(m, |m, v| m.min(v.abs()));
            a = z.mapv(|v| v.max(0.0));
        }
        m
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward(x).pop().unwrap()
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.logits(x).mapv(sigmoid)
    }

    /// Mean binary cross-entropy over all cells of `y`.
    pub fn loss(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> f64 {
        let z = self.logits(x);
        mean_bce(&z, y)
    }

    /// Loss and gradients with respect to every weight and bias.
    fn loss_and_grads(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> (f64, Grads) {
        let acts = self.forward(x);
        let logits = acts.last().unwrap();
        let loss = mean_bce(logits, y);
        let cells = (y.nrows() * y.ncols()) as f64;
        let mut delta = (logits.mapv(sigmoid) - y) / cells;
        let mut grads: Grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let input = if i == 0 { x } else { acts[i - 1].view() };
            let gw = input.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].w.t());
                back.zip_mut_with(&acts[i - 1], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0
                    }
                });
                delta = back;
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        (loss, grads)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Parameters in a fixed flat order: per layer, weights row-major then bias.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
            .collect()
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        *self.param_mut(index) = value;
    }

    fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            if index < l.w.len() {
                return l.w.as_slice_mut().unwrap().get_mut(index).unwrap();
            }
            index -= l.w.len();
            if index < l.b.len() {
                return &mut l.b[index];
            }
            index -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    /// Analytic gradient in [`TrunkNet::params`] order.
    pub fn gradient(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Vec<f64> {
        let (_, grads) = self.loss_and_grads(x, y);
        grads
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }

    fn zero_like(&self) -> Grads {
        self.layers
            .iter()
            .map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.len())))
            .collect()
    }
}

fn mean_bce(logits: &Array2<f64>, y: ArrayView2<f64>) -> f64 {
    let total: f64 = logits
        .iter()
        .zip(y.iter())
        .map(|(&z, &t)| bce_with_logit(z, t))
        .sum();
    total / logits.len() as f64
}

struct Adam {
    m: Grads,
    v: Grads,
    step: i32,
    lr: f64,
    weight_decay: f64,
}

impl Adam {
    fn new(net: &TrunkNet, lr: f64, weight_decay: f64) -> Self {
        Self {
            m: net.zero_like(),
            v: net.zero_like(),
            step: 0,
            lr,
            weight_decay,
        }
    }

    fn update(&mut self, net: &mut TrunkNet, grads: &mut Grads) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        let (lr, wd) = (self.lr, self.weight_decay);
        for (((layer, (gw, gb)), (mw, mb)), (vw, vb)) in net
            .layers
            .iter_mut()
            .zip(grads.iter_mut())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            if wd > 0.0 {
                gw.scaled_add(wd, &layer.w);
            }
            adam_step(layer.w.as_slice_mut().unwrap(), gw.as_slice().unwrap(), mw.as_slice_mut().unwrap(), vw.as_slice_mut().unwrap(), lr, c1, c2);
            adam_step(layer.b.as_slice_mut().unwrap(), gb.as_slice().unwrap(), mb.as_slice_mut().unwrap(), vb.as_slice_mut().unwrap(), lr, c1, c2);
        }
    }
}

fn adam_step(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, c1: f64, c2: f64) {
    for i in 0..p.len() {
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleMember {
    pub seed: u64,
    /// Mean validation BCE of the restored (best) weights.
    pub val_loss: f64,
    pub best_epoch: usize,
    pub net: TrunkNet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrunkNetEnsemble {
    pub config: TrunkNetConfig,
    pub target_order: Vec<String>,
    pub members: Vec<EnsembleMember>,
    /// Indices into `members`, best validation loss first.
    pub selected: Vec<usize>,
}

/// SplitMix64 finalizer, used to derive independent member seeds.
pub(crate) fn mix_seed(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn member_seed(master_seed: u64, index: usize) -> u64 {
    mix_seed(master_seed ^ mix_seed(index as u64))
}

/// Train/validation row indices, stratified by consensus regime.
fn internal_split(y: ArrayView2<f64>, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut groups: BTreeMap<Regime, Vec<usize>> = BTreeMap::new();
    for (i, row) in y.rows().into_iter().enumerate() {
        groups
            .entry(Regime::of(row.iter().map(|&v| v > 0.5)))
            .or_default()
            .push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (_, mut idx) in groups {
        idx.shuffle(&mut rng);
        let quota = idx.len() as f64 * val_fraction;
        let n_val = if idx.len() < 2 {
            0
        } else {
            let f = quota.floor();
            f as usize + usize::from(quota - f > 0.5)
        };
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn train_member(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    cfg: &TrunkNetConfig,
    seed: u64,
) -> Result<EnsembleMember> {
    let (train_idx, val_idx) = internal_split(y, cfg.val_fraction, mix_seed(seed ^ 0x5b11_7000));
    if val_idx.is_empty() || train_idx.is_empty() {
        return Err(Error::data("internal validation split is empty"));
    }
    let x_val = x.select(Axis(0), &val_idx);
    let y_val = y.select(Axis(0), &val_idx);

    let mut net = TrunkNet::init(x.ncols(), &cfg.trunk_hidden_sizes, y.ncols(), seed);
    let mut adam = Adam::new(&net, cfg.learning_rate, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed ^ 0x0b47_c400));
    let mut order = train_idx.clone();

    let mut best = (net.loss(x_val.view(), y_val.view()), 0, net.clone());
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let xb = x.select(Axis(0), batch);
            let yb = y.select(Axis(0), batch);
            let (_, mut grads) = net.loss_and_grads(xb.view(), yb.view());
            adam.update(&mut net, &mut grads);
        }
        let val_loss = net.loss(x_val.view(), y_val.view());
        if !val_loss.is_finite() {
            return Err(Error::numeric(format!(
                "validation loss diverged at epoch {epoch} (seed {seed})"
            )));
        }
        if val_loss < best.0 {
            best = (val_loss, epoch, net.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience {
                break;
            }
        }
    }
    let (val_loss, best_epoch, net) = best;
    Ok(EnsembleMember {
        seed,
        val_loss,
        best_epoch,
        net,
    })
}

/// Indices of the `top` members with smallest validation loss, ties to the
/// smaller seed.
pub fn select_members(members: &[EnsembleMember], top: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..members.len()).collect();
    idx.sort_by(|&a, &b| {
        members[a]
            .val_loss
            .total_cmp(&members[b].val_loss)
            .then(members[a].seed.cmp(&members[b].seed))
    });
    idx.truncate(top);
    idx
}

/// Trains `cfg.num_seeds` members and keeps the best `cfg.ensemble_top`.
///
/// `y` is a `[n × K]` 0/1 matrix whose columns follow `target_order`.
/// Members train in parallel; results do not depend on thread count.
pub fn train_shared_trunk(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    target_order: &[String],
    cfg: &TrunkNetConfig,
    master_seed: u64,
) -> Result<TrunkNetEnsemble> {
    cfg.validate()?;
    let (n, k) = y.dim();
    if x.nrows() != n {
        return Err(Error::data("feature and label row counts differ"));
    }
    if k == 0 || k != target_order.len() {
        return Err(Error::data("label columns must match the target order"));
    }
    if n < MIN_TRAIN_ROWS {
        return Err(Error::data(format!(
            "need at least {MIN_TRAIN_ROWS} training rows, got {n}"
        )));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::data("labels must be 0 or 1"));
    }
    for (j, target) in target_order.iter().enumerate() {
        let pos = y.column(j).sum();
        if pos == 0.0 || pos == n as f64 {
            return Err(Error::data(format!(
                "target `{target}` has single-class training labels"
            )));
        }
    }
    let members = (0..cfg.num_seeds)
        .into_par_iter()
        .map(|i| train_member(x, y, cfg, member_seed(master_seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let selected = select_members(&members, cfg.ensemble_top);
    for &i in &selected {
        log::debug!(
            "member seed {} val_loss {:.6} best_epoch {}",
            members[i].seed,
            members[i].val_loss,
            members[i].best_epoch
        );
    }
    Ok(TrunkNetEnsemble {
        config: cfg.clone(),
        target_order: target_order.to_vec(),
        members,
        selected,
    })
}

#[derive(Serialize, Deserialize)]
struct ConfigEcho {
    config: TrunkNetConfig,
    target_order: Vec<String>,
}

impl TrunkNetEnsemble {
    pub fn input_dim(&self) -> usize {
        self.members[0].net.input_dim()
    }

    /// Mean of the selected members' probabilities.
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::data(format!(
                "dimension mismatch: ensemble expects {} features, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let mut acc = Array2::zeros((x.nrows(), self.target_order.len()));
        for &i in &self.selected {
            acc += &self.members[i].net.predict_proba(x);
        }
        acc /= self.selected.len() as f64;
        Ok(acc.mapv(|p: f64| p.clamp(0.0, 1.0)))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        let echo = serde_json::to_vec(&ConfigEcho {
            config: self.config.clone(),
            target_order: self.target_order.clone(),
        })?;
        w.write_all(&NET_MAGIC).map_err(io)?;
        w.write_u32::<LittleEndian>(echo.len() as u32).map_err(io)?;
        w.write_all(&echo).map_err(io)?;
        w.write_u32::<LittleEndian>(self.members.len() as u32).map_err(io)?;
        for m in &self.members {
            w.write_u64::<LittleEndian>(m.seed).map_err(io)?;
            w.write_f64::<LittleEndian>(m.val_loss).map_err(io)?;
            w.write_u32::<LittleEndian>(m.best_epoch as u32).map_err(io)?;
            w.write_u32::<LittleEndian>(m.net.layers.len() as u32).map_err(io)?;
            for l in &m.net.layers {
                w.write_u32::<LittleEndian>(l.w.nrows() as u32).map_err(io)?;
                w.write_u32::<LittleEndian>(l.w.ncols() as u32).map_err(io)?;
                write_f64s(&mut w, l.w.iter().copied()).map_err(io)?;
                write_f64s(&mut w, l.b.iter().copied()).map_err(io)?;
            }
        }
        w.write_u32::<LittleEndian>(self.selected.len() as u32).map_err(io)?;
        for &i in &self.selected {
            w.write_u32::<LittleEndian>(i as u32).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        read_magic(&mut r, &NET_MAGIC, &path.display().to_string())?;
        let len = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let mut echo = vec![0u8; len];
        r.read_exact(&mut echo).map_err(truncated)?;
        let echo: ConfigEcho = serde_json::from_slice(&echo)?;
        let n_members = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let mut members = Vec::with_capacity(n_members);
        for _ in 0..n_members {
            let seed = r.read_u64::<LittleEndian>().map_err(truncated)?;
            let val_loss = r.read_f64::<LittleEndian>().map_err(truncated)?;
            let best_epoch = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
            let n_layers = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
            let mut layers = Vec::with_capacity(n_layers);
            for _ in 0..n_layers {
                let rows = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
                let cols = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
                let w = read_f64s(&mut r, rows * cols).map_err(truncated)?;
                let b = read_f64s(&mut r, cols).map_err(truncated)?;
                layers.push(Dense {
                    w: Array2::from_shape_vec((rows, cols), w).expect("length read above"),
                    b: Array1::from(b),
                });
            }
            members.push(EnsembleMember {
                seed,
                val_loss,
                best_epoch,
                net: TrunkNet { layers },
            });
        }
        let n_sel = r.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let selected = (0..n_sel)
            .map(|_| r.read_u32::<LittleEndian>().map(|i| i as usize))
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(truncated)?;
        if selected.iter().any(|&i| i >= members.len()) || selected.is_empty() {
            return Err(Error::format("ensemble selection indexes a missing member"));
        }
        Ok(Self {
            config: echo.config,
            target_order: echo.target_order,
            members,
            selected,
        })
    }
}

pub fn predict(ens: &TrunkNetEnsemble, x: &FeatureMatrix) -> Result<PredictionMatrix> {
    let probs = ens.predict_proba(x.data.view())?;
    PredictionMatrix::new(x.query_ids.clone(), ens.target_order.clone(), probs)
}

pub const GRADIENT_CHECK_STEP: f64 = 1e-4;
pub const KINK_MARGIN: f64 = 1e-3;
/// Gradient magnitudes below this are compared in absolute terms.
const GRADIENT_CHECK_FLOOR: f64 = 1e-7;

/// Compares backprop gradients with central differences on a tiny network
/// (input 5, two targets, the configured trunk) and a random batch of 16.
///
/// Batches are redrawn until every hidden pre-activation is at least
/// [`KINK_MARGIN`] from zero, so that no difference quotient straddles a
/// rectifier kink.
///
/// Returns the largest `|analytic − numeric| / max(|analytic|, |numeric|, 1e-7)`
/// over all parameters.
pub fn gradient_check(cfg: &TrunkNetConfig, seed: u64) -> f64 {
    const INPUT: usize = 5;
    const TARGETS: usize = 2;
    const BATCH: usize = 16;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = TrunkNet::init(INPUT, &cfg.trunk_hidden_sizes, TARGETS, mix_seed(seed));
    let x = loop {
        let x = Array2::from_shape_simple_fn((BATCH, INPUT), || rng.random_range(-2.0..2.0));
        if net.min_hidden_preactivation(x.view()) >= KINK_MARGIN {
            break x;
        }
    };
    let y = Array2::from_shape_simple_fn((BATCH, TARGETS), || {
        if rng.random_bool(0.5) {
            1.0
        } else {
            0.0
        }
    });
    let analytic = net.gradient(x.view(), y.view());
    let params = net.params();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (i, (&p, &a)) in params.iter().zip(&analytic).enumerate() {
        probe.set_param(i, p + GRADIENT_CHECK_STEP);
        let up = probe.loss(x.view(), y.view());
        probe.set_param(i, p - GRADIENT_CHECK_STEP);
        let down = probe.loss(x.view(), y.view());
        probe.set_param(i, p);
        let numeric = (up - down) / (2.0 * GRADIENT_CHECK_STEP);
        let scale = a.abs().max(numeric.abs()).max(GRADIENT_CHECK_FLOOR);
        worst = worst.max((a - numeric).abs() / scale);
    }
    worst
}
