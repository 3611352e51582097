//! Shared domain types and the BMA1/BMH1 binary containers.
//!
//! Both containers share one layout:
//!
//! ```text
//! magic (4 bytes) | u32 LE header length | UTF-8 JSON header
//! | f32 LE row-major payload | label columns (f64 LE or i64 LE, count each)
//! ```
//!
//! BMA1 stores `count` activation rows of width `d` and the label columns named
//! in `label_fields`. BMH1 stores the final-norm weights as payload row 0, the
//! 1000 unembedding rows after it, and a single `token_value` i64 column.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const NUM_TOKENS: usize = 1000;
pub const MAX_VALUE: f64 = 999.0;

const BMA_MAGIC: &[u8; 4] = b"BMA1";
const BMH_MAGIC: &[u8; 4] = b"BMH1";
const FORMAT_VERSION: u32 = 1;

/// Parameters of a generating Gaussian, in token-value units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistSpec {
    pub mu: f64,
    pub sigma: f64,
}

impl DistSpec {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        let spec = DistSpec { mu, sigma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(0.0..=MAX_VALUE).contains(&self.mu) {
            return Err(Error::invalid(format!("mu must lie in [0, 999], got {}", self.mu)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationRecord {
    pub vector: Vec<f32>,
    pub mu: f64,
    pub sigma: f64,
    /// Number index within the series.
    pub t: i64,
    pub layer: i64,
    pub seq_id: i64,
}

impl ActivationRecord {
    pub fn vector_f64(&self) -> Vec<f64> {
        self.vector.iter().map(|&v| v as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSet {
    pub records: Vec<ActivationRecord>,
    pub d: usize,
    pub layer: i64,
}

impl ActivationSet {
    /// Builds a set and checks the shared-width and shared-layer invariants.
    pub fn new(records: Vec<ActivationRecord>, layer: i64) -> Result<Self> {
        let d = records.first().map(|r| r.vector.len()).unwrap_or(0);
        let set = ActivationSet { records, d, layer };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::invalid("empty set"));
        }
        for r in &self.records {
            if r.vector.len() != self.d {
                return Err(Error::invalid(format!("inconsistent d: expected {}, found {}", self.d, r.vector.len())));
            }
            if r.layer != self.layer {
                return Err(Error::invalid(format!("inconsistent layer: expected {}, found {}", self.layer, r.layer)));
            }
            if r.t < 0 {
                return Err(Error::invalid("negative number index t"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Activation rows widened to f64.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.vector_f64()).collect()
    }

    pub fn mus(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.mu).collect()
    }

    /// Records whose mu equals `mu` exactly.
    pub fn select_mu(&self, mu: f64) -> Vec<&ActivationRecord> {
        self.records.iter().filter(|r| r.mu == mu).collect()
    }

    /// Mean vector of every (mu, sigma) class, ordered by (mu, sigma).
    pub fn class_centroids(&self) -> Vec<(f64, f64, Vec<f64>)> {
        let mut keys: Vec<(f64, f64)> = Vec::new();
        for r in &self.records {
            if !keys.iter().any(|&(m, s)| m == r.mu && s == r.sigma) {
                keys.push((r.mu, r.sigma));
            }
        }
        keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        keys.into_iter()
            .map(|(m, s)| {
                let rows: Vec<Vec<f64>> =
                    self.records.iter().filter(|r| r.mu == m && r.sigma == s).map(|r| r.vector_f64()).collect();
                (m, s, crate::linalg::mean_rows(&rows))
            })
            .collect()
    }
}

/// Probability vector over the number tokens 0..=999, indexed by token value.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVec(Vec<f64>);

impl ProbVec {
    /// Normalizes `weights` to unit mass. Rejects negative, non-finite or
    /// all-zero input and any length other than 1000.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() != NUM_TOKENS {
            return Err(Error::invalid(format!(
                "probability vector needs {NUM_TOKENS} entries, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("probability entries must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::numeric("probability vector has zero mass"));
        }
        Ok(ProbVec(weights.into_iter().map(|w| w / total).collect()))
    }

    pub fn uniform() -> Self {
        ProbVec(vec![1.0 / NUM_TOKENS as f64; NUM_TOKENS])
    }

    pub fn point_mass(value: usize) -> Result<Self> {
        if value >= NUM_TOKENS {
            return Err(Error::invalid(format!("token value {value} out of range")));
        }
        let mut p = vec![0.0; NUM_TOKENS];
        p[value] = 1.0;
        Ok(ProbVec(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Final normalization plus unembedding, restricted to the number tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub norm_weights: Vec<f32>,
    pub norm_epsilon: f64,
    /// 1000 rows of width d; row k produces the logit of token `token_value_map[k]`.
    pub unembed: Vec<Vec<f32>>,
    pub token_value_map: Vec<i64>,
}

impl HeadParams {
    pub fn d(&self) -> usize {
        self.norm_weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        if d == 0 {
            return Err(Error::invalid("head has zero width"));
        }
        if self.unembed.len() != NUM_TOKENS {
            return Err(Error::invalid(format!("expected 1000 rows, got {}", self.unembed.len())));
        }
        if self.unembed.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("unembed row width differs from norm weights"));
        }
        if self.token_value_map.len() != NUM_TOKENS {
            return Err(Error::invalid("token_value_map must have 1000 entries"));
        }
        let mut seen = [false; NUM_TOKENS];
        for &v in &self.token_value_map {
            if !(0..NUM_TOKENS as i64).contains(&v) {
                return Err(Error::invalid(format!("token value {v} out of range")));
            }
            if std::mem::replace(&mut seen[v as usize], true) {
                return Err(Error::invalid(format!("token_value_map is not a permutation: duplicate {v}")));
            }
        }
        if !(self.norm_epsilon >= 0.0) {
            return Err(Error::invalid("norm epsilon must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelDtype {
    F64,
    I64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelField {
    pub name: String,
    pub dtype: LabelDtype,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerHeader {
    pub version: u32,
    pub d: usize,
    pub layer: i64,
    pub count: usize,
    pub label_fields: Vec<LabelField>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_epsilon: Option<f64>,
}

fn activation_label_fields() -> Vec<LabelField> {
    [("mu", LabelDtype::F64), ("sigma", LabelDtype::F64), ("t", LabelDtype::I64), ("seq_id", LabelDtype::I64)]
        .into_iter()
        .map(|(name, dtype)| LabelField { name: name.to_string(), dtype })
        .collect()
}

fn encode(magic: &[u8; 4], header: &ContainerHeader, payload: &[f32], labels: &[LabelColumn]) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(header).map_err(|e| Error::format(e.to_string()))?;
    let mut out = Vec::with_capacity(8 + json.len() + payload.len() * 4 + labels.len() * header.count * 8);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for col in labels {
        match col {
            LabelColumn::F64(vals) => vals.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
            LabelColumn::I64(vals) => vals.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
enum LabelColumn {
    F64(Vec<f64>),
    I64(Vec<i64>),
}

struct Decoded {
    header: ContainerHeader,
    payload: Vec<f32>,
    labels: Vec<(String, LabelColumn)>,
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| Error::format("truncated"))?;
    let s = &bytes[*pos..end];
    *pos = end;
    Ok(s)
}

fn decode(bytes: &[u8], magic: &[u8; 4], payload_rows: impl Fn(&ContainerHeader) -> usize) -> Result<Decoded> {
    if bytes.len() < 4 || &bytes[..4] != magic {
        return Err(Error::format("bad magic"));
    }
    let mut pos = 4;
    let hlen = u32::from_le_bytes(take(bytes, &mut pos, 4)?.try_into().unwrap()) as usize;
    let header: ContainerHeader =
        serde_json::from_slice(take(bytes, &mut pos, hlen)?).map_err(|e| Error::format(format!("bad header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(Error::format(format!("unsupported version {}", header.version)));
    }
    let n_floats =
        payload_rows(&header).checked_mul(header.d).ok_or_else(|| Error::format("header/payload count mismatch"))?;
    let raw = take(bytes, &mut pos, n_floats * 4)?;
    let payload = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    let mut labels = Vec::new();
    for field in &header.label_fields {
        let raw = take(bytes, &mut pos, header.count * 8)?;
        let col = match field.dtype {
            LabelDtype::F64 => {
                LabelColumn::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
            }
            LabelDtype::I64 => {
                LabelColumn::I64(raw.chunks_exact(8).map(|c| i64::from_le_bytes(c.try_into().unwrap())).collect())
            }
        };
        labels.push((field.name.clone(), col));
    }
    if pos != bytes.len() {
        return Err(Error::format("header/payload count mismatch: trailing bytes"));
    }
    Ok(Decoded { header, payload, labels })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn encode_activation_set(set: &ActivationSet) -> Result<Vec<u8>> {
    set.validate()?;
    let header = ContainerHeader {
        version: FORMAT_VERSION,
        d: set.d,
        layer: set.layer,
        count: set.len(),
        label_fields: activation_label_fields(),
        norm_epsilon: None,
    };
    let payload: Vec<f32> = set.records.iter().flat_map(|r| r.vector.iter().copied()).collect();
    let labels = [
        LabelColumn::F64(set.records.iter().map(|r| r.mu).collect()),
        LabelColumn::F64(set.records.iter().map(|r| r.sigma).collect()),
        LabelColumn::I64(set.records.iter().map(|r| r.t).collect()),
        LabelColumn::I64(set.records.iter().map(|r| r.seq_id).collect()),
    ];
    encode(BMA_MAGIC, &header, &payload, &labels)
}

pub fn decode_activation_set(bytes: &[u8]) -> Result<ActivationSet> {
    let dec = decode(bytes, BMA_MAGIC, |h| h.count)?;
    let h = &dec.header;
    let f64_col = |name: &str| -> Result<Option<Vec<f64>>> {
        match dec.labels.iter().find(|(n, _)| n == name) {
            None => Ok(None),
            Some((_, LabelColumn::F64(v))) => Ok(Some(v.clone())),
            Some((_, LabelColumn::I64(v))) => Ok(Some(v.iter().map(|&x| x as f64).collect())),
        }
    };
    let i64_col = |name: &str| -> Result<Option<Vec<i64>>> {
        match dec.labels.iter().find(|(n, _)| n == name) {
            None => Ok(None),
            Some((_, LabelColumn::I64(v))) => Ok(Some(v.clone())),
            Some((_, LabelColumn::F64(_))) => Err(Error::format(format!("label {name} must be i64"))),
        }
    };
    let mu = f64_col("mu")?.ok_or_else(|| Error::format("missing label column mu"))?;
    let sigma = f64_col("sigma")?.ok_or_else(|| Error::format("missing label column sigma"))?;
    let t = i64_col("t")?.unwrap_or_else(|| vec![0; h.count]);
    let seq = i64_col("seq_id")?.unwrap_or_else(|| vec![0; h.count]);
    if h.count == 0 {
        return Err(Error::format("empty set"));
    }
    let records = (0..h.count)
        .map(|i| ActivationRecord {
            vector: dec.payload[i * h.d..(i + 1) * h.d].to_vec(),
            mu: mu[i],
            sigma: sigma[i],
            t: t[i],
            layer: h.layer,
            seq_id: seq[i],
        })
        .collect();
    Ok(ActivationSet { records, d: h.d, layer: h.layer })
}

pub fn write_activation_set(set: &ActivationSet, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_activation_set(set)?)
}

pub fn read_activation_set(path: impl AsRef<Path>) -> Result<ActivationSet> {
    decode_activation_set(&read_file(path.as_ref())?)
}

pub fn encode_head_params(params: &HeadParams) -> Result<Vec<u8>> {
    params.validate()?;
    let header = ContainerHeader {
        version: FORMAT_VERSION,
        d: params.d(),
        layer: 0,
        count: NUM_TOKENS,
        label_fields: vec![LabelField { name: "token_value".into(), dtype: LabelDtype::I64 }],
        norm_epsilon: Some(params.norm_epsilon),
    };
    let mut payload = params.norm_weights.clone();
    for row in &params.unembed {
        payload.extend_from_slice(row);
    }
    encode(BMH_MAGIC, &header, &payload, &[LabelColumn::I64(params.token_value_map.clone())])
}

pub fn decode_head_params(bytes: &[u8]) -> Result<HeadParams> {
    let dec = decode(bytes, BMH_MAGIC, |h| h.count + 1)?;
    let h = &dec.header;
    if h.count != NUM_TOKENS {
        return Err(Error::invalid(format!("expected 1000 rows, got {}", h.count)));
    }
    let map = match dec.labels.iter().find(|(n, _)| n == "token_value") {
        Some((_, LabelColumn::I64(v))) => v.clone(),
        _ => return Err(Error::format("missing i64 label column token_value")),
    };
    let d = h.d;
    let params = HeadParams {
        norm_weights: dec.payload[..d].to_vec(),
        norm_epsilon: h.norm_epsilon.ok_or_else(|| Error::format("missing norm_epsilon"))?,
        unembed: dec.payload[d..].chunks_exact(d).map(|c| c.to_vec()).collect(),
        token_value_map: map,
    };
    params.validate()?;
    Ok(params)
}

pub fn write_head_params(params: &HeadParams, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_head_params(params)?)
}

pub fn read_head_params(path: impl AsRef<Path>) -> Result<HeadParams> {
    decode_head_params(&read_file(path.as_ref())?)
}
