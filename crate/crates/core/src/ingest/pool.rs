use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One target model with its token pricing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: String,
    /// Currency per million input tokens.
    pub rate_in: f64,
    /// Currency per million output tokens.
    pub rate_out: f64,
    /// Median output length observed on training queries.
    pub median_out_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPool {
    pub models: Vec<ModelSpec>,
}

impl ModelPool {
    pub fn new(models: Vec<ModelSpec>) -> Result<Self> {
        let pool = Self { models };
        pool.validate()?;
        Ok(pool)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.len() < 2 {
            return Err(Error::config("model pool needs at least two models"));
        }
        let mut seen = HashSet::new();
        for m in &self.models {
            if !seen.insert(m.model_id.as_str()) {
                return Err(Error::config(format!("duplicate model id `{}`", m.model_id)));
            }
            if !(m.rate_in >= 0.0 && m.rate_out >= 0.0) {
                return Err(Error::config(format!(
                    "model `{}` has a negative or non-finite rate",
                    m.model_id
                )));
            }
        }
        if !self.models.iter().any(|m| m.rate_in + m.rate_out > 0.0) {
            return Err(Error::config("every model in the pool is free"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn model_ids(&self) -> Vec<String> {
        self.models.iter().map(|m| m.model_id.clone()).collect()
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::format(format!("serializing pool: {e}")))
    }
}

/// Reads a pool from TOML (`[[models]]` tables).
pub fn load_pool(path: impl AsRef<Path>) -> Result<ModelPool> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let pool: ModelPool = toml::from_str(&text)
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    pool.validate()?;
    Ok(pool)
}
