//! Similarity between subnetworks: pairwise overlap, in-breadth
//! intersection and the common / A-only / B-only partition of one tensor.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::BitMatrix;
use crate::masks::MaskSet;
use crate::select::TensorFilter;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("mask sets select different tensors: only in {a_label}: {only_a:?}, only in {b_label}: {only_b:?}")]
    NameMismatch {
        a_label: String,
        b_label: String,
        only_a: Vec<String>,
        only_b: Vec<String>,
    },
    #[error("tensor {name:?}: shape mismatch {a:?} vs {b:?}")]
    ShapeMismatch {
        name: String,
        a: (usize, usize),
        b: (usize, usize),
    },
    #[error("unequal k per row: {a} vs {b}")]
    UnequalK { a: usize, b: usize },
    #[error("tensor {0:?} missing")]
    MissingTensor(String),
    #[error("in-breadth analysis needs at least 2 mask sets, got {0}")]
    TooFewInputs(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorOverlap {
    pub common: u64,
    pub only_a: u64,
    pub only_b: u64,
    /// Retained entries in mask A (equal to B's under equal k).
    pub k_total: u64,
}

/// Overlap between two subnetworks over the filtered tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub label_a: String,
    pub label_b: String,
    /// Column label for tabular output (e.g. the architecture name).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub per_tensor: BTreeMap<String, TensorOverlap>,
    pub common: u64,
    pub retained_a: u64,
    pub retained_b: u64,
    /// `100 * common / retained_a`.
    pub overlap_pct: f64,
    /// `100 * common / |A OR B|`.
    pub jaccard_pct: f64,
}

impl OverlapReport {
    /// A report carrying only labels and a percentage, for tabulating
    /// externally obtained figures.
    pub fn literal(
        label_a: impl Into<String>,
        label_b: impl Into<String>,
        model: Option<String>,
        overlap_pct: f64,
    ) -> Self {
        Self {
            label_a: label_a.into(),
            label_b: label_b.into(),
            model,
            per_tensor: BTreeMap::new(),
            common: 0,
            retained_a: 0,
            retained_b: 0,
            overlap_pct,
            jaccard_pct: overlap_pct,
        }
    }
}

fn pct(num: u64, den: u64) -> f64 {
    // empty masks are identical under equal k
    if den == 0 {
        100.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

fn selected_pairs<'a>(
    a: &'a MaskSet,
    b: &'a MaskSet,
    filter: &TensorFilter,
    a_label: &str,
    b_label: &str,
) -> Result<Vec<(&'a String, &'a BitMatrix, &'a BitMatrix)>, AnalysisError> {
    let names_a = filter.select(a.names());
    let names_b = filter.select(b.names());
    if names_a != names_b {
        return Err(AnalysisError::NameMismatch {
            a_label: a_label.to_string(),
            b_label: b_label.to_string(),
            only_a: names_a.iter().filter(|n| !names_b.contains(n)).cloned().collect(),
            only_b: names_b.iter().filter(|n| !names_a.contains(n)).cloned().collect(),
        });
    }
    a.masks
        .iter()
        .filter(|(name, _)| filter.matches(name))
        .map(|(name, ma)| {
            let mb = &b.masks[name];
            if ma.shape() != mb.shape() {
                return Err(AnalysisError::ShapeMismatch {
                    name: name.clone(),
                    a: ma.shape(),
                    b: mb.shape(),
                });
            }
            Ok((name, ma, mb))
        })
        .collect()
}

/// Share of A's retained parameters that B also retains, over the filtered
/// tensors. Labels come from each set's `variant` (or `model`) metadata.
pub fn pairwise_overlap(
    a: &MaskSet,
    b: &MaskSet,
    filter: &TensorFilter,
) -> Result<OverlapReport, AnalysisError> {
    let label_a = a.label_or("A").to_string();
    let label_b = b.label_or("B").to_string();
    if a.k_per_row != b.k_per_row {
        return Err(AnalysisError::UnequalK {
            a: a.k_per_row,
            b: b.k_per_row,
        });
    }
    let pairs = selected_pairs(a, b, filter, &label_a, &label_b)?;
    let mut per_tensor = BTreeMap::new();
    let (mut common, mut retained_a, mut retained_b) = (0u64, 0u64, 0u64);
    for (name, ma, mb) in pairs {
        let c = ma.and_count(mb) as u64;
        let pa = ma.count_ones() as u64;
        let pb = mb.count_ones() as u64;
        per_tensor.insert(
            name.clone(),
            TensorOverlap {
                common: c,
                only_a: pa - c,
                only_b: pb - c,
                k_total: pa,
            },
        );
        common += c;
        retained_a += pa;
        retained_b += pb;
    }
    let union = retained_a + retained_b - common;
    Ok(OverlapReport {
        label_a,
        label_b,
        model: None,
        per_tensor,
        common,
        retained_a,
        retained_b,
        overlap_pct: pct(common, retained_a),
        jaccard_pct: pct(common, union),
    })
}

/// Parameters retained by every one of several subnetworks.
#[derive(Debug, Clone, PartialEq)]
pub struct InBreadthReport {
    pub labels: Vec<String>,
    pub intersection: BTreeMap<String, BitMatrix>,
    pub per_tensor_common: BTreeMap<String, u64>,
    pub total_common: u64,
}

#[derive(Serialize)]
struct InBreadthJson<'a> {
    labels: &'a [String],
    per_tensor_common: &'a BTreeMap<String, u64>,
    total_common: u64,
}

impl InBreadthReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(InBreadthJson {
            labels: &self.labels,
            per_tensor_common: &self.per_tensor_common,
            total_common: self.total_common,
        })
        .expect("in-breadth report serialization")
    }
}

pub fn in_breadth(sets: &[MaskSet], filter: &TensorFilter) -> Result<InBreadthReport, AnalysisError> {
    if sets.len() < 2 {
        return Err(AnalysisError::TooFewInputs(sets.len()));
    }
    let labels: Vec<String> = sets
        .iter()
        .enumerate()
        .map(|(i, s)| s.label_or(&format!("M{i}")).to_string())
        .collect();
    let first = &sets[0];
    let mut intersection: BTreeMap<String, BitMatrix> = BTreeMap::new();
    for (i, other) in sets.iter().enumerate().skip(1) {
        for (name, ma, mb) in selected_pairs(first, other, filter, &labels[0], &labels[i])? {
            let acc = intersection.entry(name.clone()).or_insert_with(|| ma.clone());
            *acc = acc.and(mb);
        }
    }
    let per_tensor_common: BTreeMap<String, u64> = intersection
        .iter()
        .map(|(n, m)| (n.clone(), m.count_ones() as u64))
        .collect();
    let total_common = per_tensor_common.values().sum();
    Ok(InBreadthReport {
        labels,
        intersection,
        per_tensor_common,
        total_common,
    })
}

/// Pairwise-disjoint split of `a OR b` for one tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriPartition {
    pub common: BitMatrix,
    pub a_only: BitMatrix,
    pub b_only: BitMatrix,
}

pub fn difference_masks(a: &MaskSet, b: &MaskSet, tensor: &str) -> Result<TriPartition, AnalysisError> {
    let ma = a
        .get(tensor)
        .ok_or_else(|| AnalysisError::MissingTensor(tensor.to_string()))?;
    let mb = b
        .get(tensor)
        .ok_or_else(|| AnalysisError::MissingTensor(tensor.to_string()))?;
    if ma.shape() != mb.shape() {
        return Err(AnalysisError::ShapeMismatch {
            name: tensor.to_string(),
            a: ma.shape(),
            b: mb.shape(),
        });
    }
    Ok(TriPartition {
        common: ma.and(mb),
        a_only: ma.and_not(mb),
        b_only: mb.and_not(ma),
    })
}
