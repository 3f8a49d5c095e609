//! Stratified train/(calibration/)test splits.
//!
//! Queries are grouped by (consensus regime, benchmark). Each group is
//! shuffled with a seeded ChaCha stream and cut by nearest-integer
//! allocation: the test count first, then calibration, with train taking
//! the rest. Groups smaller than the number of splits go wholly to train.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LabelTable, Regime};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cal: Option<f64>,
    pub test: f64,
}

impl SplitFractions {
    pub fn train_test(train: f64, test: f64) -> Self {
        Self {
            train,
            cal: None,
            test,
        }
    }

    pub fn train_cal_test(train: f64, cal: f64, test: f64) -> Self {
        Self {
            train,
            cal: Some(cal),
            test,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [Some(self.train), self.cal, Some(self.test)];
        if parts.iter().flatten().any(|&f| !(f > 0.0 && f < 1.0)) {
            return Err(Error::config("split fractions must lie in (0, 1)"));
        }
        let sum: f64 = parts.iter().flatten().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("split fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    fn num_splits(&self) -> usize {
        if self.cal.is_some() {
            3
        } else {
            2
        }
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self::train_test(0.85, 0.15)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Stratum {
    pub regime: Regime,
    pub benchmark: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train_ids: Vec<String>,
    #[serde(default)]
    pub cal_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub strata: BTreeMap<String, Stratum>,
    /// Strata too small to split, assigned wholly to train.
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl SplitAssignment {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Largest-remainder apportionment of `m` items by `shares`; equal
/// remainders favour the earlier share.
fn apportion(m: usize, shares: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = shares.iter().map(|f| m as f64 * f).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let left = m.saturating_sub(counts.iter().sum());
    for &i in order.iter().cycle().take(left) {
        counts[i] += 1;
    }
    counts
}

#[derive(Clone, Copy, PartialEq)]
enum Part {
    Train,
    Cal,
    Test,
}

pub fn stratified_split(
    labels: &LabelTable,
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitAssignment> {
    fractions.validate()?;
    if labels.is_empty() {
        return Err(Error::data("cannot split an empty label table"));
    }

    let mut strata: BTreeMap<String, Stratum> = BTreeMap::new();
    let mut groups: BTreeMap<Stratum, Vec<&str>> = BTreeMap::new();
    for row in labels.rows() {
        let stratum = Stratum {
            regime: Regime::of(row.correct.iter().copied()),
            benchmark: row.benchmark.clone(),
        };
        groups.entry(stratum.clone()).or_default().push(&row.query_id);
        strata.insert(row.query_id.clone(), stratum);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut part: HashMap<&str, Part> = HashMap::with_capacity(labels.len());
    let mut warnings = Vec::new();
    for (stratum, mut ids) in groups {
        let m = ids.len();
        if m < fractions.num_splits() {
            let msg = format!(
                "stratum ({}, {}) has {m} queries, fewer than {} splits; assigned to train",
                stratum.regime.as_str(),
                stratum.benchmark,
                fractions.num_splits()
            );
            log::warn!("{msg}");
            warnings.push(msg);
            part.extend(ids.into_iter().map(|id| (id, Part::Train)));
            continue;
        }
        ids.shuffle(&mut rng);
        let counts = apportion(m, &[fractions.train, fractions.cal.unwrap_or(0.0), fractions.test]);
        let (n_cal, n_test) = (counts[1], counts[2]);
        for (i, id) in ids.into_iter().enumerate() {
            let p = if i < n_test {
                Part::Test
            } else if i < n_test + n_cal {
                Part::Cal
            } else {
                Part::Train
            };
            part.insert(id, p);
        }
    }

    let mut out = SplitAssignment {
        train_ids: Vec::new(),
        cal_ids: Vec::new(),
        test_ids: Vec::new(),
        strata,
        warnings,
    };
    for id in labels.query_ids() {
        let bucket = match part[id] {
            Part::Train => &mut out.train_ids,
            Part::Cal => &mut out.cal_ids,
            Part::Test => &mut out.test_ids,
        };
        bucket.push(id.to_string());
    }
    Ok(out)
}
