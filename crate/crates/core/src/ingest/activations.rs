//! Prefill activation dumps.
//!
//! A store is a directory holding a `manifest.toml` plus one matrix file per
//! (layer, pooling) pair. Matrix files are headed by
//! `PFACT\0\x01\0`, `u32` rows, `u32` cols, `u16` layer, `u8` pooling,
//! `u8` reserved, followed by row-major `f32` little-endian values.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::container::{read_magic, ACTIVATION_MAGIC};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";
const HEADER_LEN: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    LastToken,
    Mean,
}

impl Pooling {
    pub fn code(self) -> u8 {
        match self {
            Pooling::LastToken => 0,
            Pooling::Mean => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Pooling::LastToken),
            1 => Ok(Pooling::Mean),
            other => Err(Error::format(format!("unknown pooling code {other}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pooling::LastToken => "last_token",
            Pooling::Mean => "mean",
        }
    }
}

impl std::fmt::Display for Pooling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.as_str())
    }
}

impl std::str::FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last_token" => Ok(Pooling::LastToken),
            "mean" => Ok(Pooling::Mean),
            other => Err(Error::config(format!("unknown pooling mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MatrixKey {
    pub layer: u16,
    pub pooling: Pooling,
}

impl MatrixKey {
    pub fn new(layer: u16, pooling: Pooling) -> Self {
        Self { layer, pooling }
    }

    fn default_file_name(&self) -> String {
        format!("layer{:03}_{}.pfact", self.layer, self.pooling)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub layer: u16,
    pub pooling: Pooling,
    /// Relative to the manifest's directory.
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivationManifest {
    pub encoder_id: String,
    pub num_layers: u16,
    pub hidden_dim: u32,
    pub dtype: String,
    pub pooling_modes: BTreeSet<Pooling>,
    pub query_ids: Vec<String>,
    /// Queries whose prompt was cut to fit the encoder context.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub truncated_query_ids: Vec<String>,
    pub matrices: Vec<MatrixEntry>,
}

impl ActivationManifest {
    fn validate(&self) -> Result<()> {
        if self.dtype != "f32le" {
            return Err(Error::format(format!("unsupported dtype `{}`", self.dtype)));
        }
        if self.num_layers == 0 || self.hidden_dim == 0 {
            return Err(Error::format("num_layers and hidden_dim must be positive"));
        }
        if self.query_ids.is_empty() {
            return Err(Error::data("empty store"));
        }
        let mut seen = HashSet::with_capacity(self.query_ids.len());
        for id in &self.query_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::data(format!("duplicate query id `{id}` in manifest")));
            }
        }
        let mut keys = HashSet::new();
        for m in &self.matrices {
            if m.layer > self.num_layers {
                return Err(Error::format(format!(
                    "layer {} outside [0, {}]",
                    m.layer, self.num_layers
                )));
            }
            if !self.pooling_modes.contains(&m.pooling) {
                return Err(Error::format(format!(
                    "matrix for layer {} uses pooling `{}` not listed in pooling_modes",
                    m.layer, m.pooling
                )));
            }
            if !keys.insert((m.layer, m.pooling)) {
                return Err(Error::format(format!(
                    "duplicate matrix entry for layer {} {}",
                    m.layer, m.pooling
                )));
            }
        }
        Ok(())
    }
}

/// First layer of the upper half `[⌈L/2⌉, L]` searched for routing signal.
pub fn upper_half_start(num_layers: u16) -> u16 {
    num_layers.div_ceil(2)
}

/// Hidden states for one encoder, keyed by (layer, pooling).
///
/// Matrices are materialized on first access and cached; the store is safe
/// to share across threads.
#[derive(Debug)]
pub struct ActivationStore {
    manifest: ActivationManifest,
    root: Option<PathBuf>,
    row_index: HashMap<String, usize>,
    cache: RwLock<BTreeMap<MatrixKey, Arc<Array2<f32>>>>,
}

impl ActivationStore {
    /// Builds an in-memory store. Matrix file names in the manifest are
    /// generated from the keys.
    pub fn from_matrices(
        encoder_id: impl Into<String>,
        num_layers: u16,
        query_ids: Vec<String>,
        matrices: BTreeMap<MatrixKey, Array2<f32>>,
    ) -> Result<Self> {
        if query_ids.is_empty() {
            return Err(Error::data("empty store"));
        }
        let hidden_dim = matrices
            .values()
            .next()
            .map(|m| m.ncols())
            .ok_or_else(|| Error::data("store has no matrices"))?;
        let manifest = ActivationManifest {
            encoder_id: encoder_id.into(),
            num_layers,
            hidden_dim: hidden_dim as u32,
            dtype: "f32le".into(),
            pooling_modes: matrices.keys().map(|k| k.pooling).collect(),
            query_ids,
            truncated_query_ids: Vec::new(),
            matrices: matrices
                .keys()
                .map(|k| MatrixEntry {
                    layer: k.layer,
                    pooling: k.pooling,
                    path: k.default_file_name(),
                })
                .collect(),
        };
        manifest.validate()?;
        for (key, m) in &matrices {
            check_matrix(&manifest, *key, m)?;
        }
        let cache = matrices.into_iter().map(|(k, m)| (k, Arc::new(m))).collect();
        Ok(Self::assemble(manifest, None, cache))
    }

    fn assemble(
        manifest: ActivationManifest,
        root: Option<PathBuf>,
        cache: BTreeMap<MatrixKey, Arc<Array2<f32>>>,
    ) -> Self {
        let row_index = manifest
            .query_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Self {
            manifest,
            root,
            row_index,
            cache: RwLock::new(cache),
        }
    }

    pub fn manifest(&self) -> &ActivationManifest {
        &self.manifest
    }

    pub fn encoder_id(&self) -> &str {
        &self.manifest.encoder_id
    }

    pub fn num_layers(&self) -> u16 {
        self.manifest.num_layers
    }

    pub fn hidden_dim(&self) -> usize {
        self.manifest.hidden_dim as usize
    }

    pub fn query_ids(&self) -> &[String] {
        &self.manifest.query_ids
    }

    pub fn row_of(&self, query_id: &str) -> Option<usize> {
        self.row_index.get(query_id).copied()
    }

    /// All (layer, pooling) keys listed in the manifest, sorted.
    pub fn keys(&self) -> Vec<MatrixKey> {
        let mut keys: Vec<_> = self
            .manifest
            .matrices
            .iter()
            .map(|m| MatrixKey::new(m.layer, m.pooling))
            .collect();
        keys.sort();
        keys
    }

    /// Keys whose layer lies in the upper half `[⌈L/2⌉, L]`.
    pub fn upper_half_keys(&self) -> Vec<MatrixKey> {
        let start = upper_half_start(self.num_layers());
        self.keys().into_iter().filter(|k| k.layer >= start).collect()
    }

    pub fn is_loaded(&self, key: MatrixKey) -> bool {
        self.cache.read().unwrap().contains_key(&key)
    }

    /// Returns the matrix for `key`, reading it from disk on first use.
    pub fn matrix(&self, key: MatrixKey) -> Result<Arc<Array2<f32>>> {
        if let Some(m) = self.cache.read().unwrap().get(&key) {
            return Ok(Arc::clone(m));
        }
        let entry = self
            .manifest
            .matrices
            .iter()
            .find(|m| m.layer == key.layer && m.pooling == key.pooling)
            .ok_or_else(|| {
                Error::data(format!(
                    "encoder `{}` has no matrix for layer {} {}",
                    self.manifest.encoder_id, key.layer, key.pooling
                ))
            })?;
        let root = self
            .root
            .as_ref()
            .ok_or_else(|| Error::data("in-memory store is missing a matrix"))?;
        let (header, m) = read_matrix_file(&root.join(&entry.path))?;
        if header.key() != key {
            return Err(Error::format(format!(
                "{}: header says layer {} {}, manifest says layer {} {}",
                entry.path, header.layer, header.pooling, key.layer, key.pooling
            )));
        }
        check_matrix(&self.manifest, key, &m)?;
        let m = Arc::new(m);
        self.cache
            .write()
            .unwrap()
            .entry(key)
            .or_insert_with(|| Arc::clone(&m));
        Ok(m)
    }

    /// Materializes every matrix, in parallel.
    pub fn load_all(&self) -> Result<()> {
        self.keys()
            .into_par_iter()
            .try_for_each(|k| self.matrix(k).map(|_| ()))
    }

    /// Gathers the rows for `ids` as an `f64` matrix.
    pub fn rows(&self, key: MatrixKey, ids: &[String]) -> Result<Array2<f64>> {
        let m = self.matrix(key)?;
        let mut out = Array2::<f64>::zeros((ids.len(), m.ncols()));
        for (i, id) in ids.iter().enumerate() {
            let r = self.row_of(id).ok_or_else(|| {
                Error::data(format!(
                    "query `{id}` missing from encoder `{}`",
                    self.manifest.encoder_id
                ))
            })?;
            out.row_mut(i)
                .iter_mut()
                .zip(m.row(r))
                .for_each(|(o, &v)| *o = v as f64);
        }
        Ok(out)
    }
}

fn check_matrix(manifest: &ActivationManifest, key: MatrixKey, m: &Array2<f32>) -> Result<()> {
    if m.nrows() != manifest.query_ids.len() {
        return Err(Error::format(format!(
            "row count mismatch for layer {} {}: manifest has {} queries, matrix has {} rows",
            key.layer,
            key.pooling,
            manifest.query_ids.len(),
            m.nrows()
        )));
    }
    if m.ncols() != manifest.hidden_dim as usize {
        return Err(Error::format(format!(
            "column count mismatch for layer {} {}: hidden_dim {}, matrix has {} columns",
            key.layer,
            key.pooling,
            manifest.hidden_dim,
            m.ncols()
        )));
    }
    for (r, row) in m.rows().into_iter().enumerate() {
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "non-finite value at layer {} {} row {r} column {c}",
                key.layer, key.pooling
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatrixHeader {
    pub rows: u32,
    pub cols: u32,
    pub layer: u16,
    pub pooling: Pooling,
}

impl MatrixHeader {
    pub fn key(&self) -> MatrixKey {
        MatrixKey::new(self.layer, self.pooling)
    }
}

fn read_header<R: Read>(r: &mut R, path: &Path) -> Result<MatrixHeader> {
    let what = path.display().to_string();
    read_magic(r, &ACTIVATION_MAGIC, &what)?;
    let trunc = |_| Error::format(format!("{what}: truncated header"));
    let rows = r.read_u32::<LittleEndian>().map_err(trunc)?;
    let cols = r.read_u32::<LittleEndian>().map_err(trunc)?;
    let layer = r.read_u16::<LittleEndian>().map_err(trunc)?;
    let pooling = Pooling::from_code(r.read_u8().map_err(trunc)?)?;
    let reserved = r.read_u8().map_err(trunc)?;
    if reserved != 0 {
        return Err(Error::format(format!("{what}: reserved header byte is {reserved}")));
    }
    Ok(MatrixHeader {
        rows,
        cols,
        layer,
        pooling,
    })
}

pub fn read_matrix_file(path: &Path) -> Result<(MatrixHeader, Array2<f32>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let header = read_header(&mut r, path)?;
    let n = header.rows as usize * header.cols as usize;
    let mut bytes = Vec::with_capacity(n * 4);
    r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() != n * 4 {
        return Err(Error::format(format!(
            "{}: payload has {} bytes, header implies {}",
            path.display(),
            bytes.len(),
            n * 4
        )));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let m = Array2::from_shape_vec((header.rows as usize, header.cols as usize), values)
        .expect("shape checked above");
    Ok((header, m))
}

pub fn write_matrix_file(path: &Path, key: MatrixKey, m: &Array2<f32>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(&ACTIVATION_MAGIC).map_err(io)?;
    w.write_u32::<LittleEndian>(m.nrows() as u32).map_err(io)?;
    w.write_u32::<LittleEndian>(m.ncols() as u32).map_err(io)?;
    w.write_u16::<LittleEndian>(key.layer).map_err(io)?;
    w.write_u8(key.pooling.code()).map_err(io)?;
    w.write_u8(0).map_err(io)?;
    for row in m.rows() {
        for &v in row {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Opens a store from its directory or its manifest file.
///
/// The manifest and every matrix header are validated eagerly; matrix
/// payloads are read lazily by [`ActivationStore::matrix`].
pub fn load_activation_store(path: impl AsRef<Path>) -> Result<ActivationStore> {
    let path = path.as_ref();
    let manifest_path = if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    };
    let root = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: ActivationManifest = toml::from_str(&text)
        .map_err(|e| Error::format(format!("{}: {e}", manifest_path.display())))?;
    manifest.validate()?;

    for entry in &manifest.matrices {
        let p = root.join(&entry.path);
        let file = File::open(&p).map_err(|e| Error::io(&p, e))?;
        let len = file.metadata().map_err(|e| Error::io(&p, e))?.len();
        let header = read_header(&mut BufReader::new(file), &p)?;
        if header.rows as usize != manifest.query_ids.len() {
            return Err(Error::format(format!(
                "{}: row count mismatch: manifest has {} queries, file has {} rows",
                entry.path,
                manifest.query_ids.len(),
                header.rows
            )));
        }
        if header.cols != manifest.hidden_dim {
            return Err(Error::format(format!(
                "{}: column count mismatch: hidden_dim {}, file has {} columns",
                entry.path, manifest.hidden_dim, header.cols
            )));
        }
        if header.layer != entry.layer || header.pooling != entry.pooling {
            return Err(Error::format(format!(
                "{}: header key (layer {} {}) disagrees with manifest",
                entry.path, header.layer, header.pooling
            )));
        }
        let expected = HEADER_LEN + 4 * header.rows as u64 * header.cols as u64;
        if len != expected {
            return Err(Error::format(format!(
                "{}: file is {len} bytes, expected {expected}",
                entry.path
            )));
        }
    }
    Ok(ActivationStore::assemble(manifest, Some(root), BTreeMap::new()))
}

/// Writes the manifest and every matrix under `dir`, creating it if needed.
pub fn write_activation_store(store: &ActivationStore, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    if store.query_ids().is_empty() {
        return Err(Error::data("empty store"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for entry in &store.manifest.matrices {
        let key = MatrixKey::new(entry.layer, entry.pooling);
        let m = store.matrix(key)?;
        write_matrix_file(&dir.join(&entry.path), key, &m)?;
    }
    let text = toml::to_string(&store.manifest)
        .map_err(|e| Error::format(format!("serializing manifest: {e}")))?;
    let p = dir.join(MANIFEST_FILE);
    fs::write(&p, text).map_err(|e| Error::io(&p, e))
}
