//! Weight checkpoints and the `KENC v1` container.
//!
//! A checkpoint is a set of named 2-D `f32` matrices plus free-form string
//! metadata. Payloads are stored little-endian and compared by bit pattern,
//! so NaN payloads and signed zeros survive a round trip unchanged.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::{self, FrameError};

pub const MAGIC: &[u8; 4] = b"KENC";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("malformed header JSON: {0}")]
    HeaderJson(String),
    #[error("tensor {name:?}: unsupported dtype {dtype:?} (header entry at payload offset {offset})")]
    Dtype { name: String, dtype: String, offset: u64 },
    #[error("tensor {name:?}: expected a 2-D shape, found {shape:?}")]
    NotMatrix { name: String, shape: Vec<u64> },
    #[error("tensor {name:?}: invalid shape {rows}x{cols}")]
    EmptyShape { name: String, rows: u64, cols: u64 },
    #[error("tensor {name:?}: {values} values do not fill shape {rows}x{cols}")]
    ValueCount {
        name: String,
        rows: usize,
        cols: usize,
        values: usize,
    },
    #[error("tensor name must be non-empty")]
    EmptyName,
    #[error("duplicate tensor name {0:?}")]
    DuplicateName(String),
    #[error("tensor {name:?}: header lists tensors out of name order")]
    Unsorted { name: String },
    #[error("tensor {name:?}: offset {offset} inconsistent with layout (expected {expected})")]
    Offset { name: String, offset: u64, expected: u64 },
    #[error("tensor {name:?}: nbytes {nbytes} does not match shape (expected {expected})")]
    NBytes { name: String, nbytes: u64, expected: u64 },
    #[error("tensor {name:?}: truncated data at byte offset {offset}: need {needed} bytes, file has {available}")]
    Truncated {
        name: String,
        offset: u64,
        needed: u64,
        available: u64,
    },
    #[error("{extra} trailing bytes after payload at byte offset {offset}")]
    TrailingBytes { offset: u64, extra: u64 },
    #[error("tensor name sets differ: only in first {only_a:?}, only in second {only_b:?}")]
    NameSetMismatch {
        only_a: Vec<String>,
        only_b: Vec<String>,
    },
    #[error("tensor {name:?}: shape mismatch {a:?} vs {b:?}")]
    ShapeMismatch {
        name: String,
        a: (usize, usize),
        b: (usize, usize),
    },
}

impl CheckpointError {
    pub fn is_io(&self) -> bool {
        matches!(self, CheckpointError::Io { .. })
    }
}

/// A named row-major `f32` matrix.
#[derive(Debug, Clone)]
pub struct TensorRecord {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl TensorRecord {
    pub fn new(
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        values: Vec<f32>,
    ) -> Result<Self, CheckpointError> {
        let name = name.into();
        if name.is_empty() {
            return Err(CheckpointError::EmptyName);
        }
        if rows == 0 || cols == 0 {
            return Err(CheckpointError::EmptyShape {
                name,
                rows: rows as u64,
                cols: cols as u64,
            });
        }
        if rows.checked_mul(cols) != Some(values.len()) {
            return Err(CheckpointError::ValueCount {
                name,
                rows,
                cols,
                values: values.len(),
            });
        }
        Ok(Self {
            name,
            rows,
            cols,
            values,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn rows_iter(&self) -> std::slice::ChunksExact<'_, f32> {
        self.values.chunks_exact(self.cols)
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    /// True when any element differs from `other` by bit pattern.
    pub fn differs_bitwise(&self, other: &TensorRecord) -> bool {
        self.values
            .iter()
            .zip(&other.values)
            .any(|(a, b)| a.to_bits() != b.to_bits())
    }
}

/// Bitwise equality: NaN payloads compare by bits and `-0.0 != +0.0`.
impl PartialEq for TensorRecord {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.shape() == other.shape()
            && !self.differs_bitwise(other)
    }
}

impl Eq for TensorRecord {}

/// Model weights at one training state. Tensors iterate in name order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Checkpoint {
    pub tensors: BTreeMap<String, TensorRecord>,
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn insert(&mut self, tensor: TensorRecord) -> Result<(), CheckpointError> {
        if self.tensors.contains_key(tensor.name()) {
            return Err(CheckpointError::DuplicateName(tensor.name.clone()));
        }
        self.tensors.insert(tensor.name.clone(), tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&TensorRecord> {
        self.tensors.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (offsets, total) =
            container::layout(self.tensors.values().map(|t| t.len() as u64 * 4));
        let entries = self
            .tensors
            .values()
            .zip(&offsets)
            .map(|(t, &offset)| HeaderEntry {
                name: t.name.clone(),
                dtype: "f32".to_string(),
                shape: vec![t.rows as u64, t.cols as u64],
                offset,
                nbytes: t.len() as u64 * 4,
            })
            .collect();
        let header = Header {
            meta: self.meta.clone(),
            tensors: entries,
        };
        let json = serde_json::to_vec(&header).expect("header serialization");

        let mut payload = vec![0u8; total as usize];
        for (t, &offset) in self.tensors.values().zip(&offsets) {
            let dst = &mut payload[offset as usize..offset as usize + t.len() * 4];
            for (chunk, v) in dst.chunks_exact_mut(4).zip(&t.values) {
                chunk.copy_from_slice(&v.to_le_bytes());
            }
        }
        container::join_frame(MAGIC, &json, &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let frame = container::split_frame(bytes, MAGIC)?;
        let header: Header = serde_json::from_slice(frame.header)
            .map_err(|e| CheckpointError::HeaderJson(e.to_string()))?;

        let mut ckpt = Checkpoint {
            tensors: BTreeMap::new(),
            meta: header.meta,
        };
        let mut cursor = 0u64;
        let mut prev: Option<&str> = None;
        for entry in &header.tensors {
            if entry.dtype != "f32" {
                return Err(CheckpointError::Dtype {
                    name: entry.name.clone(),
                    dtype: entry.dtype.clone(),
                    offset: entry.offset,
                });
            }
            let &[rows, cols] = entry.shape.as_slice() else {
                return Err(CheckpointError::NotMatrix {
                    name: entry.name.clone(),
                    shape: entry.shape.clone(),
                });
            };
            if rows == 0 || cols == 0 {
                return Err(CheckpointError::EmptyShape {
                    name: entry.name.clone(),
                    rows,
                    cols,
                });
            }
            if let Some(p) = prev {
                if p == entry.name {
                    return Err(CheckpointError::DuplicateName(entry.name.clone()));
                }
                if p > entry.name.as_str() {
                    return Err(CheckpointError::Unsorted {
                        name: entry.name.clone(),
                    });
                }
            }
            prev = Some(&entry.name);

            let expected_offset = container::align_up(cursor);
            if entry.offset != expected_offset {
                return Err(CheckpointError::Offset {
                    name: entry.name.clone(),
                    offset: entry.offset,
                    expected: expected_offset,
                });
            }
            let expected_nbytes = rows
                .checked_mul(cols)
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| CheckpointError::EmptyShape {
                    name: entry.name.clone(),
                    rows,
                    cols,
                })?;
            if entry.nbytes != expected_nbytes {
                return Err(CheckpointError::NBytes {
                    name: entry.name.clone(),
                    nbytes: entry.nbytes,
                    expected: expected_nbytes,
                });
            }
            let end = entry.offset + entry.nbytes;
            if end > frame.payload.len() as u64 {
                return Err(CheckpointError::Truncated {
                    name: entry.name.clone(),
                    offset: frame.payload_start + entry.offset,
                    needed: entry.nbytes,
                    available: (frame.payload.len() as u64).saturating_sub(entry.offset),
                });
            }
            let raw = &frame.payload[entry.offset as usize..end as usize];
            let values = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            ckpt.insert(TensorRecord::new(
                entry.name.clone(),
                rows as usize,
                cols as usize,
                values,
            )?)?;
            cursor = end;
        }
        if (frame.payload.len() as u64) > cursor {
            return Err(CheckpointError::TrailingBytes {
                offset: frame.payload_start + cursor,
                extra: frame.payload.len() as u64 - cursor,
            });
        }
        Ok(ckpt)
    }
}

impl fmt::Display for Checkpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "checkpoint with {} tensors", self.tensors.len())?;
        for (k, v) in &self.meta {
            write!(f, ", {k}={v}")?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    #[serde(default)]
    meta: BTreeMap<String, String>,
    tensors: Vec<HeaderEntry>,
}

#[derive(Serialize, Deserialize)]
struct HeaderEntry {
    name: String,
    dtype: String,
    shape: Vec<u64>,
    offset: u64,
    nbytes: u64,
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Checkpoint::from_bytes(&bytes)
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    std::fs::write(path, ckpt.to_bytes()).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Names of tensors whose bit patterns differ between `pre` and `fine`.
///
/// Both checkpoints must hold the same tensor names with equal shapes.
pub fn diff_checkpoints(pre: &Checkpoint, fine: &Checkpoint) -> Result<Vec<String>, CheckpointError> {
    let only_a: Vec<String> = pre
        .names()
        .filter(|n| !fine.tensors.contains_key(*n))
        .map(str::to_owned)
        .collect();
    let only_b: Vec<String> = fine
        .names()
        .filter(|n| !pre.tensors.contains_key(*n))
        .map(str::to_owned)
        .collect();
    if !only_a.is_empty() || !only_b.is_empty() {
        return Err(CheckpointError::NameSetMismatch { only_a, only_b });
    }
    let mut changed = Vec::new();
    for (name, a) in &pre.tensors {
        let b = &fine.tensors[name];
        if a.shape() != b.shape() {
            return Err(CheckpointError::ShapeMismatch {
                name: name.clone(),
                a: a.shape(),
                b: b.shape(),
            });
        }
        if a.differs_bitwise(b) {
            changed.push(name.clone());
        }
    }
    Ok(changed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(name: &str, rows: usize, cols: usize, values: Vec<f32>) -> TensorRecord {
        TensorRecord::new(name, rows, cols, values).unwrap()
    }

    #[test]
    fn single_tensor_round_trip() {
        let mut c = Checkpoint::new().with_meta("state", "finetuned");
        c.insert(tensor("w", 2, 2, vec![1.0, 2.0, 3.0, 4.0])).unwrap();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back.get("w").unwrap().values(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(back.meta["state"], "finetuned");
    }

    #[test]
    fn empty_checkpoint_is_valid() {
        let c = Checkpoint::new();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert!(back.is_empty());
        let frame = container::split_frame(&bytes, MAGIC).unwrap();
        let v: serde_json::Value = serde_json::from_slice(frame.header).unwrap();
        assert_eq!(v["tensors"], serde_json::json!([]));
    }

    #[test]
    fn nan_and_signed_zero_preserved() {
        let odd_nan = f32::from_bits(0x7fc0_1234);
        let mut c = Checkpoint::new();
        c.insert(tensor("n", 1, 3, vec![odd_nan, -0.0, f32::NEG_INFINITY]))
            .unwrap();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        let bits: Vec<u32> = back.get("n").unwrap().values().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, vec![0x7fc0_1234, 0x8000_0000, f32::NEG_INFINITY.to_bits()]);
        assert_eq!(back, c);
    }

    #[test]
    fn header_lists_tensors_in_name_order() {
        let mut c = Checkpoint::new();
        for name in ["zeta", "alpha", "mid"] {
            c.insert(tensor(name, 1, 3, vec![0.0; 3])).unwrap();
        }
        let bytes = c.to_bytes();
        let frame = container::split_frame(&bytes, MAGIC).unwrap();
        let v: serde_json::Value = serde_json::from_slice(frame.header).unwrap();
        let names: Vec<&str> = v["tensors"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| t["name"].as_str().unwrap())
            .collect();
        assert_eq!(names, vec!["alpha", "mid", "zeta"]);
        let offsets: Vec<u64> = v["tensors"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| t["offset"].as_u64().unwrap())
            .collect();
        assert_eq!(offsets, vec![0, 16, 32]);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = Checkpoint::new().to_bytes();
        bytes[0] = b'X';
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("bad magic"), "{err}");
    }

    #[test]
    fn rejects_truncated_payload_with_name_and_offset() {
        let mut c = Checkpoint::new();
        c.insert(tensor("a", 2, 2, vec![1.0; 4])).unwrap();
        c.insert(tensor("b", 2, 2, vec![2.0; 4])).unwrap();
        let bytes = c.to_bytes();
        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        match &err {
            CheckpointError::Truncated { name, offset, .. } => {
                assert_eq!(name, "b");
                assert_eq!(*offset, bytes.len() as u64 - 16);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn with_header(header: serde_json::Value, payload: &[u8]) -> Vec<u8> {
        container::join_frame(MAGIC, header.to_string().as_bytes(), payload)
    }

    #[test]
    fn rejects_non_f32_dtype() {
        let bytes = with_header(
            serde_json::json!({"meta": {}, "tensors": [
                {"name": "h", "dtype": "f16", "shape": [1, 2], "offset": 0, "nbytes": 4}
            ]}),
            &[0; 4],
        );
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, CheckpointError::Dtype { ref name, .. } if name == "h"));
    }

    #[test]
    fn rejects_vectors_and_bad_offsets() {
        let bias = with_header(
            serde_json::json!({"meta": {}, "tensors": [
                {"name": "bias", "dtype": "f32", "shape": [4], "offset": 0, "nbytes": 16}
            ]}),
            &[0; 16],
        );
        assert!(matches!(
            Checkpoint::from_bytes(&bias),
            Err(CheckpointError::NotMatrix { .. })
        ));
        let gap = with_header(
            serde_json::json!({"meta": {}, "tensors": [
                {"name": "a", "dtype": "f32", "shape": [1, 1], "offset": 8, "nbytes": 4}
            ]}),
            &[0; 12],
        );
        assert!(matches!(
            Checkpoint::from_bytes(&gap),
            Err(CheckpointError::Offset { offset: 8, expected: 0, .. })
        ));
        let short = with_header(
            serde_json::json!({"meta": {}, "tensors": [
                {"name": "a", "dtype": "f32", "shape": [1, 2], "offset": 0, "nbytes": 4}
            ]}),
            &[0; 8],
        );
        assert!(matches!(
            Checkpoint::from_bytes(&short),
            Err(CheckpointError::NBytes { .. })
        ));
    }

    #[test]
    fn tensor_invariants() {
        assert!(matches!(
            TensorRecord::new("", 1, 1, vec![0.0]),
            Err(CheckpointError::EmptyName)
        ));
        assert!(TensorRecord::new("x", 0, 1, vec![]).is_err());
        assert!(TensorRecord::new("x", 2, 2, vec![0.0; 3]).is_err());
        let mut c = Checkpoint::new();
        c.insert(tensor("x", 1, 1, vec![0.0])).unwrap();
        assert!(c.insert(tensor("x", 1, 1, vec![1.0])).is_err());
    }

    #[test]
    fn diff_identity_and_single_change() {
        let mut pre = Checkpoint::new();
        pre.insert(tensor("attn.q", 2, 2, vec![0.0; 4])).unwrap();
        pre.insert(tensor("attn.k", 2, 2, vec![0.0; 4])).unwrap();
        assert!(diff_checkpoints(&pre, &pre).unwrap().is_empty());

        let mut fine = pre.clone();
        fine.tensors.insert(
            "attn.q".into(),
            tensor("attn.q", 2, 2, vec![0.0, 0.0, 0.5, 0.0]),
        );
        assert_eq!(diff_checkpoints(&pre, &fine).unwrap(), vec!["attn.q"]);
    }

    #[test]
    fn diff_sees_signed_zero_and_rejects_mismatch() {
        let mut pre = Checkpoint::new();
        pre.insert(tensor("z", 1, 1, vec![0.0])).unwrap();
        let mut fine = Checkpoint::new();
        fine.insert(tensor("z", 1, 1, vec![-0.0])).unwrap();
        assert_eq!(diff_checkpoints(&pre, &fine).unwrap(), vec!["z"]);

        let mut other = Checkpoint::new();
        other.insert(tensor("z", 1, 2, vec![0.0, 0.0])).unwrap();
        assert!(matches!(
            diff_checkpoints(&pre, &other),
            Err(CheckpointError::ShapeMismatch { .. })
        ));
        let mut renamed = Checkpoint::new();
        renamed.insert(tensor("y", 1, 1, vec![0.0])).unwrap();
        assert!(matches!(
            diff_checkpoints(&pre, &renamed),
            Err(CheckpointError::NameSetMismatch { .. })
        ));
    }
}
