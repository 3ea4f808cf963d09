//! OCEB v1: the binary embedding interchange format.
//!
//! Layout of the `.oceb` file, all integers and floats little-endian:
//!
//! ```text
//! offset  size         field
//! 0       4            magic "OCEB"
//! 4       4            version (u32) = 1
//! 8       4            dim (u32)
//! 12      8            count (u64)
//! 20      4*count*dim  f32 payload, row-major
//! ```
//!
//! A sidecar NDJSON file with the same basename and extension `.meta.jsonl`
//! carries a leading manifest line `{"_manifest":{"normalized":bool}}` followed
//! by one `{"id","class","split","extra"}` object per record, in payload order.

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::embedding::{l2_norm, normalize, EmbeddingError, EmbeddingVector};
use crate::FORMAT_VERSION;

pub const MAGIC: &[u8; 4] = b"OCEB";
pub const HEADER_LEN: usize = 20;

/// Stored vectors whose norm is further than this from 1 are renormalized on load.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum OcebError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad magic bytes {0:?}, expected \"OCEB\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    VersionUnsupported(u32),
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    TruncatedPayload { expected: u64, actual: u64 },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(u64),
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("sidecar line {line}: {message}")]
    BadSidecar { line: usize, message: String },
    #[error("sidecar has {sidecar} records but payload has {payload}")]
    SidecarCountMismatch { sidecar: usize, payload: u64 },
    #[error("record {id:?}: {source}")]
    BadVector {
        id: String,
        #[source]
        source: EmbeddingError,
    },
    #[error("record {id:?} has {actual} components, store dim is {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        actual: usize,
    },
}

/// Per-record sidecar metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub id: String,
    #[serde(default)]
    pub class: String,
    #[serde(default)]
    pub split: Option<String>,
    #[serde(default)]
    pub extra: Map<String, Value>,
}

impl RecordMeta {
    pub fn new(id: impl Into<String>, class: impl Into<String>, split: Option<String>) -> Self {
        Self {
            id: id.into(),
            class: class.into(),
            split,
            extra: Map::new(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    normalized: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestLine {
    #[serde(rename = "_manifest")]
    manifest: Manifest,
}

/// An ordered, id-unique collection of equal-length `f32` vectors.
///
/// Immutable once built; `Sync`, so any number of threads may read it.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    records: Vec<RecordMeta>,
    payload: Vec<f32>,
    normalized: bool,
    renormalized: bool,
}

impl EmbeddingStore {
    pub fn new(dim: usize, normalized: bool) -> Result<Self, OcebError> {
        if dim == 0 || dim > u32::MAX as usize {
            return Err(OcebError::BadHeader(format!("dim {dim} out of range")));
        }
        Ok(Self {
            dim,
            records: Vec::new(),
            payload: Vec::new(),
            normalized,
            renormalized: false,
        })
    }

    pub fn push(&mut self, meta: RecordMeta, values: &[f32]) -> Result<(), OcebError> {
        if values.len() != self.dim {
            return Err(OcebError::DimensionMismatch {
                id: meta.id,
                expected: self.dim,
                actual: values.len(),
            });
        }
        if self.records.iter().any(|r| r.id == meta.id) {
            return Err(OcebError::DuplicateId(meta.id));
        }
        self.records.push(meta);
        self.payload.extend_from_slice(values);
        Ok(())
    }

    /// Pushes a unit vector, narrowing it to `f32`.
    pub fn push_vector(&mut self, meta: RecordMeta, v: &EmbeddingVector) -> Result<(), OcebError> {
        let narrowed: Vec<f32> = v.as_slice().iter().map(|&x| x as f32).collect();
        self.push(meta, &narrowed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    /// True when load had to rescale at least one vector to unit norm.
    pub fn renormalized(&self) -> bool {
        self.renormalized
    }

    pub fn records(&self) -> &[RecordMeta] {
        &self.records
    }

    pub fn payload(&self) -> &[f32] {
        &self.payload
    }

    pub fn raw(&self, index: usize) -> &[f32] {
        &self.payload[index * self.dim..(index + 1) * self.dim]
    }

    /// The record at `index` widened to `f64`.
    pub fn vector(&self, index: usize) -> EmbeddingVector {
        EmbeddingVector::from_unit_unchecked(self.raw(index).iter().map(|&x| x as f64).collect())
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.id == id)
    }

    pub fn get(&self, id: &str) -> Option<EmbeddingVector> {
        self.index_of(id).map(|i| self.vector(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RecordMeta, EmbeddingVector)> + '_ {
        self.records
            .iter()
            .enumerate()
            .map(|(i, m)| (m, self.vector(i)))
    }

    /// Checks finiteness and unit norm, rescaling vectors that are off the sphere.
    fn enforce_unit_norm(&mut self) -> Result<(), OcebError> {
        for i in 0..self.records.len() {
            let wide: Vec<f64> = self.raw(i).iter().map(|&x| x as f64).collect();
            let norm = l2_norm(&wide);
            let ok = self.normalized && (norm - 1.0).abs() <= UNIT_NORM_TOLERANCE;
            if wide.iter().any(|x| !x.is_finite()) || !ok {
                let unit = normalize(&wide).map_err(|source| OcebError::BadVector {
                    id: self.records[i].id.clone(),
                    source,
                })?;
                if self.normalized {
                    log::warn!(
                        "record {:?} has norm {norm}, renormalizing",
                        self.records[i].id
                    );
                }
                let dim = self.dim;
                for (dst, src) in self.payload[i * dim..(i + 1) * dim]
                    .iter_mut()
                    .zip(unit.as_slice())
                {
                    *dst = *src as f32;
                }
                self.renormalized = true;
            }
        }
        self.normalized = true;
        Ok(())
    }
}

/// Sidecar path for an `.oceb` file: same basename, `.meta.jsonl` extension.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.jsonl")
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OcebError + '_ {
    move |source| OcebError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn encode_payload(store: &EmbeddingStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + store.payload.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.dim as u32).to_le_bytes());
    out.extend_from_slice(&(store.records.len() as u64).to_le_bytes());
    for x in &store.payload {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

/// Parses the binary part. Returns (dim, count, payload).
pub fn decode_payload(bytes: &[u8]) -> Result<(usize, u64, Vec<f32>), OcebError> {
    if bytes.len() < 4 {
        let mut got = [0u8; 4];
        got[..bytes.len()].copy_from_slice(bytes);
        return Err(OcebError::BadMagic(got));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if &magic != MAGIC {
        return Err(OcebError::BadMagic(magic));
    }
    if bytes.len() < HEADER_LEN {
        return Err(OcebError::BadHeader(format!(
            "header needs {HEADER_LEN} bytes, file has {}",
            bytes.len()
        )));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(OcebError::VersionUnsupported(version));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    if dim == 0 {
        return Err(OcebError::BadHeader("dim is 0".into()));
    }
    let body = (bytes.len() - HEADER_LEN) as u64;
    let expected = count
        .checked_mul(dim as u64)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| OcebError::BadHeader(format!("count {count} x dim {dim} overflows")))?;
    if body < expected {
        return Err(OcebError::TruncatedPayload {
            expected,
            actual: body,
        });
    }
    if body > expected {
        return Err(OcebError::TrailingBytes(body - expected));
    }
    let payload = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dim, count, payload))
}

pub fn encode_sidecar(store: &EmbeddingStore) -> String {
    let mut out = serde_json::to_string(&ManifestLine {
        manifest: Manifest {
            normalized: store.normalized,
        },
    })
    .expect("manifest serialization");
    out.push('\n');
    for r in &store.records {
        out.push_str(&serde_json::to_string(r).expect("record serialization"));
        out.push('\n');
    }
    out
}

fn decode_sidecar(reader: impl BufRead) -> Result<(bool, Vec<RecordMeta>), OcebError> {
    let mut normalized = None;
    let mut records = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| OcebError::BadSidecar {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |e: serde_json::Error| OcebError::BadSidecar {
            line: line_no,
            message: e.to_string(),
        };
        if normalized.is_none() {
            let m: ManifestLine = serde_json::from_str(&line).map_err(bad)?;
            normalized = Some(m.manifest.normalized);
            continue;
        }
        records.push(serde_json::from_str::<RecordMeta>(&line).map_err(bad)?);
    }
    let normalized = normalized.ok_or(OcebError::BadSidecar {
        line: 1,
        message: "missing _manifest line".into(),
    })?;
    Ok((normalized, records))
}

/// Reads a store exactly as written, with no norm checks or rescaling.
pub fn read_store(path: &Path) -> Result<EmbeddingStore, OcebError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let (dim, count, payload) = decode_payload(&bytes)?;
    let side = sidecar_path(path);
    let file = fs::File::open(&side).map_err(io_err(&side))?;
    let (normalized, records) = decode_sidecar(BufReader::new(file))?;
    if records.len() as u64 != count {
        return Err(OcebError::SidecarCountMismatch {
            sidecar: records.len(),
            payload: count,
        });
    }
    let mut seen = HashSet::with_capacity(records.len());
    for r in &records {
        if !seen.insert(r.id.as_str()) {
            return Err(OcebError::DuplicateId(r.id.clone()));
        }
    }
    Ok(EmbeddingStore {
        dim,
        records,
        payload,
        normalized,
        renormalized: false,
    })
}

/// Reads a store and guarantees every vector is finite and unit norm.
///
/// Vectors are normalized when the manifest says `normalized=false`, or when a
/// vector's norm is more than [`UNIT_NORM_TOLERANCE`] away from 1; either case
/// sets [`EmbeddingStore::renormalized`].
pub fn load_store(path: &Path) -> Result<EmbeddingStore, OcebError> {
    let mut store = read_store(path)?;
    store.enforce_unit_norm()?;
    Ok(store)
}

pub fn save_store(store: &EmbeddingStore, path: &Path) -> Result<(), OcebError> {
    let bytes = encode_payload(store);
    fs::write(path, bytes).map_err(io_err(path))?;
    let side = sidecar_path(path);
    let file = fs::File::create(&side).map_err(io_err(&side))?;
    let mut w = BufWriter::new(file);
    w.write_all(encode_sidecar(store).as_bytes())
        .and_then(|_| w.flush())
        .map_err(io_err(&side))
}
