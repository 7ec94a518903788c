//! Retention masks (`MaskSet`) and the `KENM v1` container.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitMatrix;
use crate::container::{self, FrameError};

pub const MAGIC: &[u8; 4] = b"KENM";

#[derive(Debug, Error)]
pub enum MaskError {
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
    #[error("mask {name:?}: expected a 2-D shape, found {shape:?}")]
    NotMatrix { name: String, shape: Vec<u64> },
    #[error("mask {name:?}: duplicate or out-of-order name")]
    Unsorted { name: String },
    #[error("mask {name:?}: offset {offset} inconsistent with layout (expected {expected})")]
    Offset { name: String, offset: u64, expected: u64 },
    #[error("mask {name:?}: nbytes {nbytes} does not match shape (expected {expected})")]
    NBytes { name: String, nbytes: u64, expected: u64 },
    #[error("mask {name:?}: truncated data at byte offset {offset}")]
    Truncated { name: String, offset: u64 },
    #[error("mask {name:?}: nonzero padding bits")]
    Padding { name: String },
    #[error("{extra} trailing bytes after payload at byte offset {offset}")]
    TrailingBytes { offset: u64, extra: u64 },
    #[error("mask {name:?} row {row}: {ones} retained entries, expected {expected} for k = {k}")]
    RowCardinality {
        name: String,
        row: usize,
        ones: usize,
        expected: usize,
        k: usize,
    },
}

impl MaskError {
    pub fn is_io(&self) -> bool {
        matches!(self, MaskError::Io { .. })
    }
}

/// Per-tensor retention masks: 1 keeps the fine-tuned value, 0 resets to the
/// pre-trained value. Every row holds exactly `min(k_per_row, cols)` ones.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MaskSet {
    pub masks: BTreeMap<String, BitMatrix>,
    pub k_per_row: usize,
    pub source_meta: BTreeMap<String, String>,
}

impl MaskSet {
    pub fn new(k_per_row: usize, source_meta: BTreeMap<String, String>) -> Self {
        Self {
            masks: BTreeMap::new(),
            k_per_row,
            source_meta,
        }
    }

    pub fn get(&self, name: &str) -> Option<&BitMatrix> {
        self.masks.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.masks.keys().map(String::as_str)
    }

    /// Display label: the `variant` meta entry, else `model`, else `fallback`.
    pub fn label_or<'a>(&'a self, fallback: &'a str) -> &'a str {
        self.source_meta
            .get("variant")
            .or_else(|| self.source_meta.get("model"))
            .map(String::as_str)
            .unwrap_or(fallback)
    }

    pub fn retained(&self) -> usize {
        self.masks.values().map(BitMatrix::count_ones).sum()
    }

    pub fn validate(&self) -> Result<(), MaskError> {
        for (name, m) in &self.masks {
            let expected = self.k_per_row.min(m.cols());
            for row in 0..m.rows() {
                let ones = m.row_count_ones(row);
                if ones != expected {
                    return Err(MaskError::RowCardinality {
                        name: name.clone(),
                        row,
                        ones,
                        expected,
                        k: self.k_per_row,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let packed: Vec<Vec<u8>> = self.masks.values().map(BitMatrix::to_packed).collect();
        let (offsets, total) = container::layout(packed.iter().map(|p| p.len() as u64));
        let header = Header {
            k: self.k_per_row as u64,
            meta: self.source_meta.clone(),
            masks: self
                .masks
                .iter()
                .zip(&offsets)
                .zip(&packed)
                .map(|(((name, m), &offset), p)| Entry {
                    name: name.clone(),
                    shape: vec![m.rows() as u64, m.cols() as u64],
                    offset,
                    nbytes: p.len() as u64,
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serialization");
        let mut payload = vec![0u8; total as usize];
        for (p, &offset) in packed.iter().zip(&offsets) {
            payload[offset as usize..offset as usize + p.len()].copy_from_slice(p);
        }
        container::join_frame(MAGIC, &json, &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MaskError> {
        let frame = container::split_frame(bytes, MAGIC)?;
        let header: Header =
            serde_json::from_slice(frame.header).map_err(|e| MaskError::HeaderJson(e.to_string()))?;
        let mut set = MaskSet::new(header.k as usize, header.meta);
        let mut cursor = 0u64;
        for entry in header.masks {
            let &[rows, cols] = entry.shape.as_slice() else {
                return Err(MaskError::NotMatrix {
                    name: entry.name,
                    shape: entry.shape,
                });
            };
            if rows == 0 || cols == 0 {
                return Err(MaskError::NotMatrix {
                    name: entry.name,
                    shape: entry.shape,
                });
            }
            if set
                .masks
                .last_key_value()
                .is_some_and(|(last, _)| last.as_str() >= entry.name.as_str())
            {
                return Err(MaskError::Unsorted { name: entry.name });
            }
            let expected_offset = container::align_up(cursor);
            if entry.offset != expected_offset {
                return Err(MaskError::Offset {
                    name: entry.name,
                    offset: entry.offset,
                    expected: expected_offset,
                });
            }
            let expected = rows * (cols.div_ceil(8));
            if entry.nbytes != expected {
                return Err(MaskError::NBytes {
                    name: entry.name,
                    nbytes: entry.nbytes,
                    expected,
                });
            }
            let end = entry.offset + entry.nbytes;
            if end > frame.payload.len() as u64 {
                return Err(MaskError::Truncated {
                    name: entry.name,
                    offset: frame.payload_start + entry.offset,
                });
            }
            let raw = &frame.payload[entry.offset as usize..end as usize];
            let m = BitMatrix::from_packed(rows as usize, cols as usize, raw)
                .ok_or_else(|| MaskError::Padding {
                    name: entry.name.clone(),
                })?;
            set.masks.insert(entry.name, m);
            cursor = end;
        }
        if (frame.payload.len() as u64) > cursor {
            return Err(MaskError::TrailingBytes {
                offset: frame.payload_start + cursor,
                extra: frame.payload.len() as u64 - cursor,
            });
        }
        set.validate()?;
        Ok(set)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    k: u64,
    #[serde(default)]
    meta: BTreeMap<String, String>,
    masks: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<u64>,
    offset: u64,
    nbytes: u64,
}

pub fn read_masks(path: impl AsRef<Path>) -> Result<MaskSet, MaskError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| MaskError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    MaskSet::from_bytes(&bytes)
}

pub fn write_masks(masks: &MaskSet, path: impl AsRef<Path>) -> Result<(), MaskError> {
    let path = path.as_ref();
    std::fs::write(path, masks.to_bytes()).map_err(|source| MaskError::Io {
        path: path.to_path_buf(),
        source,
    })
}
