//! Per-(query, model) binary correctness labels.
//!
//! Two on-disk forms are accepted: a CSV table with header
//! `query_id,benchmark,input_tokens,<model_id>...` and 0/1 cells, and a
//! JSON-lines file with one `{query_id, benchmark, input_tokens, correct}`
//! record per line where `correct` maps model id to 0 or 1.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::ModelPool;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    AllCorrect,
    AllIncorrect,
    Disagreement,
}

impl Regime {
    pub fn of(correct: impl IntoIterator<Item = bool>) -> Self {
        let (mut any_true, mut any_false) = (false, false);
        for c in correct {
            if c {
                any_true = true;
            } else {
                any_false = true;
            }
        }
        match (any_true, any_false) {
            (true, false) => Regime::AllCorrect,
            (false, _) => Regime::AllIncorrect,
            (true, true) => Regime::Disagreement,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::AllCorrect => "all_correct",
            Regime::AllIncorrect => "all_incorrect",
            Regime::Disagreement => "disagreement",
        }
    }

    pub const ALL: [Regime; 3] = [Regime::AllCorrect, Regime::AllIncorrect, Regime::Disagreement];
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRow {
    pub query_id: String,
    pub benchmark: String,
    pub input_tokens: u64,
    /// Aligned with [`LabelTable::model_ids`].
    pub correct: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTable {
    model_ids: Vec<String>,
    rows: Vec<LabelRow>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct Record {
    query_id: String,
    benchmark: String,
    input_tokens: u64,
    correct: BTreeMap<String, u8>,
}

impl LabelTable {
    pub fn new(model_ids: Vec<String>, rows: Vec<LabelRow>) -> Result<Self> {
        if model_ids.is_empty() {
            return Err(Error::data("label table has no model columns"));
        }
        let mut seen = HashSet::new();
        for m in &model_ids {
            if !seen.insert(m.as_str()) {
                return Err(Error::data(format!("duplicate model column `{m}`")));
            }
        }
        let mut index = HashMap::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.correct.len() != model_ids.len() {
                return Err(Error::data(format!(
                    "query `{}` has {} correctness entries, expected {}",
                    row.query_id,
                    row.correct.len(),
                    model_ids.len()
                )));
            }
            if index.insert(row.query_id.clone(), i).is_some() {
                return Err(Error::data(format!("duplicate query id `{}`", row.query_id)));
            }
        }
        Ok(Self {
            model_ids,
            rows,
            index,
        })
    }

    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    pub fn rows(&self) -> &[LabelRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|r| r.query_id.as_str())
    }

    pub fn row(&self, query_id: &str) -> Result<&LabelRow> {
        self.index
            .get(query_id)
            .map(|&i| &self.rows[i])
            .ok_or_else(|| Error::data(format!("unknown query id `{query_id}`")))
    }

    fn model_column(&self, model_id: &str) -> Result<usize> {
        self.model_ids
            .iter()
            .position(|m| m == model_id)
            .ok_or_else(|| Error::data(format!("no correctness column for model `{model_id}`")))
    }

    pub fn is_correct(&self, query_id: &str, model_id: &str) -> Result<bool> {
        let c = self.model_column(model_id)?;
        Ok(self.row(query_id)?.correct[c])
    }

    /// Fails unless every pool model has a correctness column.
    pub fn check_pool(&self, pool: &ModelPool) -> Result<()> {
        for m in pool.model_ids() {
            self.model_column(&m)?;
        }
        Ok(())
    }

    /// Correctness matrix `[ids × models]` with entries 0.0 / 1.0.
    pub fn label_matrix(&self, ids: &[String], models: &[String]) -> Result<Array2<f64>> {
        let cols = models
            .iter()
            .map(|m| self.model_column(m))
            .collect::<Result<Vec<_>>>()?;
        let mut y = Array2::zeros((ids.len(), cols.len()));
        for (i, id) in ids.iter().enumerate() {
            let row = self.row(id)?;
            for (j, &c) in cols.iter().enumerate() {
                y[[i, j]] = if row.correct[c] { 1.0 } else { 0.0 };
            }
        }
        Ok(y)
    }

    /// Restricts the table to `models`, in that order.
    pub fn select_models(&self, models: &[String]) -> Result<LabelTable> {
        let cols = models
            .iter()
            .map(|m| self.model_column(m))
            .collect::<Result<Vec<_>>>()?;
        let rows = self
            .rows
            .iter()
            .map(|r| LabelRow {
                correct: cols.iter().map(|&c| r.correct[c]).collect(),
                ..r.clone()
            })
            .collect();
        LabelTable::new(models.to_vec(), rows)
    }

    pub fn regime_of(&self, query_id: &str) -> Result<Regime> {
        Ok(Regime::of(self.row(query_id)?.correct.iter().copied()))
    }

    pub fn regime_counts(&self) -> BTreeMap<Regime, usize> {
        let mut counts: BTreeMap<Regime, usize> = Regime::ALL.iter().map(|&r| (r, 0)).collect();
        for row in &self.rows {
            *counts.get_mut(&Regime::of(row.correct.iter().copied())).unwrap() += 1;
        }
        counts
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(BufReader::new(file));
        let headers = rdr.headers()?.clone();
        let fixed = ["query_id", "benchmark", "input_tokens"];
        if headers.len() < 4 || headers.iter().take(3).ne(fixed.iter().copied()) {
            return Err(Error::format(format!(
                "{}: header must start with query_id,benchmark,input_tokens and name at least one model",
                path.display()
            )));
        }
        let model_ids: Vec<String> = headers.iter().skip(3).map(str::to_string).collect();
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let at = || format!("{} row {}", path.display(), line + 1);
            if rec.len() != headers.len() {
                return Err(Error::data(format!("{}: missing correctness entries", at())));
            }
            let input_tokens = rec[2]
                .trim()
                .parse()
                .map_err(|_| Error::format(format!("{}: bad input_tokens `{}`", at(), &rec[2])))?;
            let correct = rec
                .iter()
                .skip(3)
                .map(|cell| parse_bit(cell.trim()).map_err(|e| e.context(at())))
                .collect::<Result<Vec<_>>>()?;
            rows.push(LabelRow {
                query_id: rec[0].to_string(),
                benchmark: rec[1].to_string(),
                input_tokens,
                correct,
            });
        }
        LabelTable::new(model_ids, rows)
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut model_ids: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line)
                .map_err(|e| Error::format(format!("{} line {}: {e}", path.display(), n + 1)))?;
            let keys: Vec<String> = rec.correct.keys().cloned().collect();
            let models = model_ids.get_or_insert_with(|| keys.clone());
            if *models != keys {
                return Err(Error::data(format!(
                    "{} line {}: correctness keys differ from the first record",
                    path.display(),
                    n + 1
                )));
            }
            let correct = rec
                .correct
                .values()
                .map(|&v| match v {
                    0 => Ok(false),
                    1 => Ok(true),
                    other => Err(Error::format(format!(
                        "{} line {}: correctness must be 0 or 1, got {other}",
                        path.display(),
                        n + 1
                    ))),
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(LabelRow {
                query_id: rec.query_id,
                benchmark: rec.benchmark,
                input_tokens: rec.input_tokens,
                correct,
            });
        }
        let model_ids =
            model_ids.ok_or_else(|| Error::data(format!("{}: no records", path.display())))?;
        LabelTable::new(model_ids, rows)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let mut header = vec!["query_id", "benchmark", "input_tokens"];
        header.extend(self.model_ids.iter().map(String::as_str));
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![
                row.query_id.clone(),
                row.benchmark.clone(),
                row.input_tokens.to_string(),
            ];
            rec.extend(row.correct.iter().map(|&c| u8::from(c).to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for row in &self.rows {
            let rec = Record {
                query_id: row.query_id.clone(),
                benchmark: row.benchmark.clone(),
                input_tokens: row.input_tokens,
                correct: self
                    .model_ids
                    .iter()
                    .cloned()
                    .zip(row.correct.iter().map(|&c| u8::from(c)))
                    .collect(),
            };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn parse_bit(cell: &str) -> Result<bool> {
    match cell {
        "0" => Ok(false),
        "1" => Ok(true),
        "" => Err(Error::data("missing correctness entry")),
        other => Err(Error::format(format!("correctness must be 0 or 1, got `{other}`"))),
    }
}

/// Loads a label table; `.jsonl`/`.ndjson` files are read as records,
/// anything else as CSV.
pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelTable> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") | Some("ndjson") => LabelTable::read_jsonl(path),
        _ => LabelTable::read_csv(path),
    }
}

pub fn consensus_regime(labels: &LabelTable, query_id: &str) -> Result<Regime> {
    labels.regime_of(query_id)
}
