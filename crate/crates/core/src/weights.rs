//! The `.newt` model file: hyperparameters, named tensors, control normalization
//! statistics and optional baked shaper tables.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "NEWT"            4 bytes magic
//! version           u32
//! metadata_len      u32
//! metadata          metadata_len bytes of UTF-8 JSON
//! payload           f32 tensors, row-major, in manifest order
//! ```
//!
//! The JSON carries `config`, `normalization`, `fastnewt` (table size and domain, or
//! null) and `tensors`, the manifest of `{name, shape}` entries sorted by name.
//! See `docs/tensor-schema.md` for the full name schema.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::newt::FastNewtTable;

pub const MAGIC: &[u8; 4] = b"NEWT";
pub const FORMAT_VERSION: u32 = 1;

/// Control features fed to the encoder: standardized F0 and loudness.
pub const CONTROL_CHANNELS: usize = 2;

/// Model hyperparameters. `Default` gives the reference configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub sample_rate: u32,
    pub hop_size: usize,
    pub n_harmonics: usize,
    pub n_newt_channels: usize,
    pub shaper_depth: usize,
    pub shaper_hidden: usize,
    pub control_dim: usize,
    pub mlp_depth: usize,
    pub mlp_hidden: usize,
    pub noise_fir_taps: usize,
    pub reverb_length: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            hop_size: 128,
            n_harmonics: 101,
            n_newt_channels: 64,
            shaper_depth: 4,
            shaper_hidden: 8,
            control_dim: 128,
            mlp_depth: 4,
            mlp_hidden: 128,
            noise_fir_taps: 256,
            reverb_length: 32000,
        }
    }
}

/// Widest shaper layer the engine evaluates on the stack.
pub const MAX_SHAPER_WIDTH: usize = 64;

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("sample_rate", self.sample_rate as usize),
            ("hop_size", self.hop_size),
            ("n_harmonics", self.n_harmonics),
            ("n_newt_channels", self.n_newt_channels),
            ("shaper_depth", self.shaper_depth),
            ("shaper_hidden", self.shaper_hidden),
            ("control_dim", self.control_dim),
            ("mlp_depth", self.mlp_depth),
            ("mlp_hidden", self.mlp_hidden),
            ("noise_fir_taps", self.noise_fir_taps),
            ("reverb_length", self.reverb_length),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Schema(format!("config field {name} must be >= 1")));
            }
        }
        if self.shaper_hidden > MAX_SHAPER_WIDTH {
            return Err(Error::Schema(format!(
                "shaper_hidden {} exceeds supported maximum {MAX_SHAPER_WIDTH}",
                self.shaper_hidden
            )));
        }
        if self.noise_fir_taps % 2 != 0 {
            return Err(Error::Schema("noise_fir_taps must be even".into()));
        }
        Ok(())
    }

    pub fn noise_bins(&self) -> usize {
        self.noise_fir_taps / 2 + 1
    }

    /// Width of each shaper layer boundary: `1 -> hidden -> ... -> hidden -> 1`.
    pub fn shaper_widths(&self) -> Vec<usize> {
        let mut w = vec![1];
        w.extend(std::iter::repeat_n(self.shaper_hidden, self.shaper_depth - 1));
        w.push(1);
        w
    }

    /// Every tensor the forward graph reads, except the per-channel shapers.
    pub fn core_tensors(&self) -> Vec<(String, Vec<usize>)> {
        let h = self.control_dim;
        let mut v = vec![
            ("control_gru.w_ih".to_string(), vec![3 * h, CONTROL_CHANNELS]),
            ("control_gru.w_hh".to_string(), vec![3 * h, h]),
            ("control_gru.b_ih".to_string(), vec![3 * h]),
            ("control_gru.b_hh".to_string(), vec![3 * h]),
            ("control_dense.weight".to_string(), vec![h, h]),
            ("control_dense.bias".to_string(), vec![h]),
            (
                "exciter.mixer.weight".to_string(),
                vec![self.n_newt_channels, self.n_harmonics],
            ),
            ("exciter.mixer.bias".to_string(), vec![self.n_newt_channels]),
            ("reverb.ir".to_string(), vec![self.reverb_length]),
        ];
        v.extend(mlp_tensors("newt.mlp", h, self.mlp_hidden, 4 * self.n_newt_channels, self.mlp_depth));
        v.extend(mlp_tensors("noise.mlp", h, self.mlp_hidden, self.noise_bins(), self.mlp_depth));
        v
    }

    pub fn shaper_tensors(&self) -> Vec<(String, Vec<usize>)> {
        let widths = self.shaper_widths();
        let mut v = Vec::new();
        for i in 0..self.n_newt_channels {
            for (j, pair) in widths.windows(2).enumerate() {
                v.push((format!("newt.shaper.{i}.layer{j}.weight"), vec![pair[1], pair[0]]));
                v.push((format!("newt.shaper.{i}.layer{j}.bias"), vec![pair[1]]));
            }
        }
        v
    }

    /// All trainable tensors of a full (non-baked) model.
    pub fn required_tensors(&self) -> Vec<(String, Vec<usize>)> {
        let mut v = self.core_tensors();
        v.extend(self.shaper_tensors());
        v.sort();
        v
    }

    /// Parameter count implied by the configuration.
    pub fn parameter_count(&self) -> usize {
        self.required_tensors()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

fn mlp_tensors(prefix: &str, in_dim: usize, hidden: usize, out_dim: usize, depth: usize) -> Vec<(String, Vec<usize>)> {
    let mut v = Vec::new();
    let mut width = in_dim;
    for j in 0..depth {
        let out = if j + 1 == depth { out_dim } else { hidden };
        v.push((format!("{prefix}.layer{j}.weight"), vec![out, width]));
        v.push((format!("{prefix}.layer{j}.bias"), vec![out]));
        if j + 1 < depth {
            v.push((format!("{prefix}.layer{j}.ln.gain"), vec![out]));
            v.push((format!("{prefix}.layer{j}.ln.bias"), vec![out]));
        }
        width = out;
    }
    v
}

pub fn table_tensor_name(channel: usize) -> String {
    format!("newt.table.{channel}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected = shape_len(&shape)?;
        if expected != data.len() {
            return Err(Error::Schema(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
}

fn shape_len(shape: &[usize]) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format(format!("shape {shape:?} overflows")))
}

/// Name-unique tensor map, iterated in name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorStore {
    tensors: BTreeMap<String, Tensor>,
}

impl TensorStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a tensor; a name that is already present is a schema error.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::Schema(format!("duplicate tensor name {name}")));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.tensors.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    /// Data of `name`, which must have exactly `shape`.
    pub fn expect(&self, name: &str, shape: &[usize]) -> Result<&[f32]> {
        let t = self
            .get(name)
            .ok_or_else(|| Error::Schema(format!("missing tensor {name}")))?;
        if t.shape() != shape {
            return Err(Error::Schema(format!(
                "tensor {name} has shape {:?}, expected {shape:?}",
                t.shape()
            )));
        }
        Ok(t.data())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(|t| t.data.len()).sum()
    }
}

/// Per-channel control standardization: `(x - mean) / std`, channels `[f0_hz, loudness_db]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub mean: [f32; CONTROL_CHANNELS],
    pub std: [f32; CONTROL_CHANNELS],
}

impl NormalizationStats {
    pub fn new(mean: [f32; CONTROL_CHANNELS], std: [f32; CONTROL_CHANNELS]) -> Result<Self> {
        if mean.iter().any(|m| !m.is_finite()) || std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Schema(format!(
                "normalization stats must be finite with std > 0 (mean {mean:?}, std {std:?})"
            )));
        }
        Ok(Self { mean, std })
    }

    pub fn identity() -> Self {
        Self {
            mean: [0.0; CONTROL_CHANNELS],
            std: [1.0; CONTROL_CHANNELS],
        }
    }
}

/// Everything stored in a `.newt` file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub config: ModelConfig,
    pub tensors: TensorStore,
    pub stats: NormalizationStats,
    pub tables: Option<Vec<FastNewtTable>>,
}

impl ModelFile {
    pub fn has_shapers(&self) -> bool {
        self.tensors.contains("newt.shaper.0.layer0.weight")
    }

    /// Trainable parameters counted from the tensors present (baked tables excluded).
    pub fn parameter_count(&self) -> usize {
        self.tensors.parameter_count()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    config: ModelConfig,
    normalization: StatsMeta,
    fastnewt: Option<TableMeta>,
    tensors: Vec<ManifestEntry>,
}

// f32 values are widened to f64 in JSON so that they round-trip exactly.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StatsMeta {
    mean: Vec<f64>,
    std: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TableMeta {
    table_size: usize,
    domain: [f64; 2],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

/// Checks names and shapes against the configuration.
pub(crate) fn check_schema(config: &ModelConfig, tensors: &TensorStore, has_tables: bool) -> Result<()> {
    config.validate()?;
    let mut expected: BTreeMap<String, Vec<usize>> = config.core_tensors().into_iter().collect();
    let shapers = config.shaper_tensors();
    let with_shapers = tensors.contains(&shapers[0].0) || !has_tables;
    if with_shapers {
        expected.extend(shapers);
    }
    for (name, shape) in &expected {
        match tensors.get(name) {
            None => return Err(Error::Schema(format!("missing required tensor {name}"))),
            Some(t) if t.shape() != shape.as_slice() => {
                return Err(Error::Schema(format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )))
            }
            Some(_) => {}
        }
    }
    if let Some((name, _)) = tensors.iter().find(|(n, _)| !expected.contains_key(*n)) {
        return Err(Error::Schema(format!("unexpected tensor {name}")));
    }
    Ok(())
}

fn check_tables(config: &ModelConfig, tables: &[FastNewtTable]) -> Result<(usize, f32, f32)> {
    if tables.len() != config.n_newt_channels {
        return Err(Error::Schema(format!(
            "{} shaper tables for {} channels",
            tables.len(),
            config.n_newt_channels
        )));
    }
    let first = &tables[0];
    let (size, lo, hi) = (first.len(), first.lo(), first.hi());
    if tables
        .iter()
        .any(|t| t.len() != size || t.lo() != lo || t.hi() != hi)
    {
        return Err(Error::Schema("shaper tables must share size and domain".into()));
    }
    Ok((size, lo, hi))
}

/// Serializes a model. Output is deterministic and round-trips bit-exactly.
pub fn save_model(file: &ModelFile) -> Result<Vec<u8>> {
    let ModelFile {
        config,
        tensors,
        stats,
        tables,
    } = file;
    check_schema(config, tensors, tables.is_some())?;
    let mut all: BTreeMap<String, (Vec<usize>, &[f32])> = tensors
        .iter()
        .map(|(n, t)| (n.clone(), (t.shape().to_vec(), t.data())))
        .collect();
    let fastnewt = match tables {
        Some(tables) => {
            let (size, lo, hi) = check_tables(config, tables)?;
            for (i, t) in tables.iter().enumerate() {
                if all.insert(table_tensor_name(i), (vec![size], t.samples())).is_some() {
                    return Err(Error::Schema(format!("duplicate tensor name {}", table_tensor_name(i))));
                }
            }
            Some(TableMeta {
                table_size: size,
                domain: [lo as f64, hi as f64],
            })
        }
        None => None,
    };
    let meta = Metadata {
        config: config.clone(),
        normalization: StatsMeta {
            mean: stats.mean.iter().map(|&v| v as f64).collect(),
            std: stats.std.iter().map(|&v| v as f64).collect(),
        },
        fastnewt,
        tensors: all
            .iter()
            .map(|(name, (shape, _))| ManifestEntry {
                name: name.clone(),
                shape: shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&meta).map_err(|e| Error::Format(e.to_string()))?;
    let payload: usize = all.values().map(|(_, d)| d.len() * 4).sum();
    let mut out = Vec::with_capacity(12 + json.len() + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, data) in all.values() {
        for v in *data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Format(format!("truncated before {what}")))
}

/// Parses and validates a `.newt` file.
///
/// Structural problems (magic, version, truncation, bad JSON) are format errors;
/// names and shapes that disagree with the configuration are schema errors. Tensor
/// values are not inspected here; [`crate::verify`] reports non-finite data.
pub fn load_model(bytes: &[u8]) -> Result<ModelFile> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic, not a .newt file".into()));
    }
    let version = read_u32(bytes, 4, "version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let meta_len = read_u32(bytes, 8, "metadata length")? as usize;
    let meta_end = 12usize
        .checked_add(meta_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Format("truncated metadata block".into()))?;
    let meta: Metadata = serde_json::from_slice(&bytes[12..meta_end])
        .map_err(|e| Error::Format(format!("metadata: {e}")))?;
    meta.config.validate()?;

    let mut offset = meta_end;
    let mut tensors = TensorStore::new();
    let mut table_data: BTreeMap<usize, Vec<f32>> = BTreeMap::new();
    for entry in meta.tensors {
        let n = shape_len(&entry.shape)?;
        let end = n
            .checked_mul(4)
            .and_then(|b| offset.checked_add(b))
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Format(format!("file truncated inside tensor {}", entry.name)))?;
        let data: Vec<f32> = bytes[offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        offset = end;
        if let Some(idx) = entry.name.strip_prefix("newt.table.") {
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::Schema(format!("bad table tensor name {}", entry.name)))?;
            if table_data.insert(idx, data).is_some() {
                return Err(Error::Schema(format!("duplicate tensor name {}", entry.name)));
            }
            continue;
        }
        tensors.insert(entry.name, Tensor::new(entry.shape, data)?)?;
    }
    if offset != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after tensor payload",
            bytes.len() - offset
        )));
    }

    let tables = match meta.fastnewt {
        Some(tm) => {
            let (lo, hi) = (tm.domain[0] as f32, tm.domain[1] as f32);
            let mut tables = Vec::with_capacity(meta.config.n_newt_channels);
            for i in 0..meta.config.n_newt_channels {
                let samples = table_data
                    .remove(&i)
                    .ok_or_else(|| Error::Schema(format!("missing required tensor {}", table_tensor_name(i))))?;
                if samples.len() != tm.table_size {
                    return Err(Error::Schema(format!(
                        "tensor {} has {} samples, expected {}",
                        table_tensor_name(i),
                        samples.len(),
                        tm.table_size
                    )));
                }
                tables.push(FastNewtTable::from_samples(samples, lo, hi)?);
            }
            if let Some(extra) = table_data.keys().next() {
                return Err(Error::Schema(format!("unexpected tensor {}", table_tensor_name(*extra))));
            }
            Some(tables)
        }
        None => {
            if let Some(i) = table_data.keys().next() {
                return Err(Error::Schema(format!(
                    "tensor {} present without fastnewt metadata",
                    table_tensor_name(*i)
                )));
            }
            None
        }
    };
    check_schema(&meta.config, &tensors, tables.is_some())?;

    let to_pair = |v: &[f64], what: &str| -> Result<[f32; CONTROL_CHANNELS]> {
        let v: Vec<f32> = v.iter().map(|&x| x as f32).collect();
        v.try_into()
            .map_err(|_| Error::Schema(format!("normalization {what} needs {CONTROL_CHANNELS} values")))
    };
    let stats = NormalizationStats::new(
        to_pair(&meta.normalization.mean, "mean")?,
        to_pair(&meta.normalization.std, "std")?,
    )?;

    Ok(ModelFile {
        config: meta.config,
        tensors,
        stats,
        tables,
    })
}
