//! Mask construction, pruned-checkpoint synthesis and reset statistics.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bits::BitMatrix;
use crate::checkpoint::{Checkpoint, CheckpointError, TensorRecord};
use crate::kde::{self, KdeConfig, KdeError};
use crate::masks::MaskSet;

#[derive(Debug, Error)]
pub enum PruneError {
    #[error("unknown tensor {0:?}")]
    UnknownTensor(String),
    #[error("tensor {tensor:?} row {row}: {source}")]
    Kde {
        tensor: String,
        row: usize,
        #[source]
        source: KdeError,
    },
    #[error(transparent)]
    Config(KdeError),
    #[error("tensor {name:?}: shape mismatch ({what}: {a:?} vs {b:?})")]
    ShapeMismatch {
        name: String,
        what: &'static str,
        a: (usize, usize),
        b: (usize, usize),
    },
    #[error("mask references tensor {name:?} missing from the {which} checkpoint")]
    MissingTensor { name: String, which: &'static str },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Every row of one tensor ordered by density descending, ties by index.
#[derive(Debug, Clone)]
pub struct TensorRanking {
    rows: usize,
    cols: usize,
    order: Vec<u32>,
}

impl TensorRanking {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.order[r * self.cols..(r + 1) * self.cols]
    }

    pub fn mask(&self, k: usize) -> BitMatrix {
        let keep = k.min(self.cols);
        let mut m = BitMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for &c in &self.row(r)[..keep] {
                m.set(r, c as usize, true);
            }
        }
        m
    }
}

/// Density rankings for a set of prunable tensors. Rankings do not depend on
/// `k`, so one ranking pass serves every point of a sweep.
#[derive(Debug, Clone)]
pub struct Rankings {
    pub tensors: BTreeMap<String, TensorRanking>,
    pub source_meta: BTreeMap<String, String>,
}

impl Rankings {
    pub fn masks(&self, k: usize) -> MaskSet {
        let mut set = MaskSet::new(k, self.source_meta.clone());
        set.masks = self
            .tensors
            .par_iter()
            .map(|(name, ranking)| (name.clone(), ranking.mask(k)))
            .collect();
        set
    }
}

fn rank_tensor(tensor: &TensorRecord, config: &KdeConfig) -> Result<TensorRanking, PruneError> {
    let rows: Vec<Vec<u32>> = (0..tensor.rows())
        .into_par_iter()
        .map(|r| {
            let row: Vec<f64> = tensor.row(r).iter().map(|&v| v as f64).collect();
            let density = kde::kde_density(&row, config).map_err(|source| PruneError::Kde {
                tensor: tensor.name().to_string(),
                row: r,
                source,
            })?;
            Ok(kde::rank_by_density(&density.densities)
                .into_iter()
                .map(|i| i as u32)
                .collect())
        })
        .collect::<Result<_, PruneError>>()?;
    Ok(TensorRanking {
        rows: tensor.rows(),
        cols: tensor.cols(),
        order: rows.concat(),
    })
}

pub fn rank_tensors(
    fine: &Checkpoint,
    prunable: &[String],
    config: &KdeConfig,
) -> Result<Rankings, PruneError> {
    config.validate().map_err(PruneError::Config)?;
    let mut selected = Vec::with_capacity(prunable.len());
    for name in prunable {
        let tensor = fine
            .get(name)
            .ok_or_else(|| PruneError::UnknownTensor(name.clone()))?;
        selected.push(tensor);
    }
    let tensors = selected
        .into_par_iter()
        .map(|t| Ok((t.name().to_string(), rank_tensor(t, config)?)))
        .collect::<Result<BTreeMap<_, _>, PruneError>>()?;
    Ok(Rankings {
        tensors,
        source_meta: fine.meta.clone(),
    })
}

/// Keeps the `k` highest-density entries of every row of each prunable
/// tensor. Tensors not listed are absent from the result.
pub fn build_masks(
    fine: &Checkpoint,
    prunable: &[String],
    k: usize,
    config: &KdeConfig,
) -> Result<MaskSet, PruneError> {
    Ok(rank_tensors(fine, prunable, config)?.masks(k))
}

/// Fine-tuned values where the mask is set, pre-trained values elsewhere.
/// Unmasked tensors are copied from `fine`; `meta.state` becomes `pruned`.
pub fn apply_masks(
    pre: &Checkpoint,
    fine: &Checkpoint,
    masks: &MaskSet,
) -> Result<Checkpoint, PruneError> {
    let mut out = fine.clone();
    for (name, mask) in &masks.masks {
        let f = fine.get(name).ok_or_else(|| PruneError::MissingTensor {
            name: name.clone(),
            which: "fine-tuned",
        })?;
        let p = pre.get(name).ok_or_else(|| PruneError::MissingTensor {
            name: name.clone(),
            which: "pre-trained",
        })?;
        if p.shape() != f.shape() {
            return Err(PruneError::ShapeMismatch {
                name: name.clone(),
                what: "pre vs fine",
                a: p.shape(),
                b: f.shape(),
            });
        }
        if mask.shape() != f.shape() {
            return Err(PruneError::ShapeMismatch {
                name: name.clone(),
                what: "mask vs tensor",
                a: mask.shape(),
                b: f.shape(),
            });
        }
        let cols = f.cols();
        let values: Vec<f32> = f
            .values()
            .par_iter()
            .zip(p.values())
            .enumerate()
            .map(|(i, (&fv, &pv))| if mask.get(i / cols, i % cols) { fv } else { pv })
            .collect();
        out.tensors.insert(
            name.clone(),
            TensorRecord::new(name.clone(), f.rows(), cols, values)?,
        );
    }
    out.meta.insert("state".into(), "pruned".into());
    Ok(out)
}

/// Which tensors count towards the reset percentage.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ResetScope {
    #[default]
    MaskedOnly,
    /// The listed tensors; listed tensors without a mask count as fully
    /// retained (they keep their fine-tuned values).
    AllNamed(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TensorCounts {
    pub retained: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneReport {
    pub per_tensor: BTreeMap<String, TensorCounts>,
    pub retained: u64,
    pub total: u64,
    /// `100 * (1 - retained / total)`; zero when the scope is empty.
    pub model_reset_pct: f64,
}

pub fn reset_percentage(
    masks: &MaskSet,
    fine: &Checkpoint,
    scope: &ResetScope,
) -> Result<PruneReport, PruneError> {
    for (name, mask) in &masks.masks {
        let t = fine.get(name).ok_or_else(|| PruneError::MissingTensor {
            name: name.clone(),
            which: "fine-tuned",
        })?;
        if t.shape() != mask.shape() {
            return Err(PruneError::ShapeMismatch {
                name: name.clone(),
                what: "mask vs tensor",
                a: mask.shape(),
                b: t.shape(),
            });
        }
    }
    let mut per_tensor = BTreeMap::new();
    match scope {
        ResetScope::MaskedOnly => {
            for (name, mask) in &masks.masks {
                per_tensor.insert(
                    name.clone(),
                    TensorCounts {
                        retained: mask.count_ones() as u64,
                        total: (mask.rows() * mask.cols()) as u64,
                    },
                );
            }
        }
        ResetScope::AllNamed(names) => {
            for name in names {
                let t = fine
                    .get(name)
                    .ok_or_else(|| PruneError::UnknownTensor(name.clone()))?;
                let retained = masks
                    .get(name)
                    .map_or(t.len(), BitMatrix::count_ones);
                per_tensor.insert(
                    name.clone(),
                    TensorCounts {
                        retained: retained as u64,
                        total: t.len() as u64,
                    },
                );
            }
        }
    }
    let retained: u64 = per_tensor.values().map(|c| c.retained).sum();
    let total: u64 = per_tensor.values().map(|c| c.total).sum();
    let model_reset_pct = if total == 0 {
        0.0
    } else {
        100.0 * (1.0 - retained as f64 / total as f64)
    };
    Ok(PruneReport {
        per_tensor,
        retained,
        total,
        model_reset_pct,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kde::BandwidthRule;

    fn tensor(name: &str, rows: usize, cols: usize, values: Vec<f32>) -> TensorRecord {
        TensorRecord::new(name, rows, cols, values).unwrap()
    }

    fn pair() -> (Checkpoint, Checkpoint) {
        let mut pre = Checkpoint::new().with_meta("state", "pretrained");
        let mut fine = Checkpoint::new().with_meta("state", "finetuned");
        pre.insert(tensor("w", 3, 5, (0..15).map(|i| i as f32).collect()))
            .unwrap();
        fine.insert(tensor(
            "w",
            3,
            5,
            (0..15).map(|i| (i as f32 * 0.37).sin()).collect(),
        ))
        .unwrap();
        pre.insert(tensor("bias_like", 1, 2, vec![1.0, 2.0])).unwrap();
        fine.insert(tensor("bias_like", 1, 2, vec![9.0, 8.0])).unwrap();
        (pre, fine)
    }

    #[test]
    fn endpoints_of_k() {
        let (pre, fine) = pair();
        let names = vec!["w".to_string()];
        let cfg = KdeConfig::default();
        let all = build_masks(&fine, &names, 5, &cfg).unwrap();
        assert_eq!(all.masks["w"], BitMatrix::ones(3, 5));
        assert!(all.get("bias_like").is_none());
        let none = build_masks(&fine, &names, 0, &cfg).unwrap();
        assert_eq!(none.masks["w"].count_ones(), 0);

        assert_eq!(apply_masks(&pre, &fine, &all).unwrap().get("w"), fine.get("w"));
        let reset = apply_masks(&pre, &fine, &none).unwrap();
        assert_eq!(reset.get("w"), pre.get("w"));
        assert_eq!(reset.get("bias_like"), fine.get("bias_like"));
        assert_eq!(reset.meta["state"], "pruned");
    }

    #[test]
    fn rows_hold_exactly_k_ones() {
        let (_, fine) = pair();
        let names = vec!["w".to_string()];
        for k in 0..8 {
            let m = build_masks(&fine, &names, k, &KdeConfig::default()).unwrap();
            for r in 0..3 {
                assert_eq!(m.masks["w"].row_count_ones(r), k.min(5));
            }
            m.validate().unwrap();
        }
    }

    #[test]
    fn unknown_tensor_is_rejected() {
        let (_, fine) = pair();
        let err = build_masks(&fine, &["nope".into()], 1, &KdeConfig::default()).unwrap_err();
        assert!(matches!(err, PruneError::UnknownTensor(ref n) if n == "nope"));
    }

    #[test]
    fn non_finite_weights_name_the_row() {
        let mut fine = Checkpoint::new();
        fine.insert(tensor("w", 2, 2, vec![0.0, 1.0, f32::NAN, 0.0]))
            .unwrap();
        let err = build_masks(&fine, &["w".into()], 1, &KdeConfig::default()).unwrap_err();
        assert!(matches!(err, PruneError::Kde { row: 1, .. }), "{err}");
    }

    #[test]
    fn masks_from_known_rows() {
        let mut fine = Checkpoint::new();
        // row 0: cluster at 0 with outlier; row 1: cluster at the end
        fine.insert(tensor(
            "m",
            2,
            4,
            vec![0.0, 0.0, 0.0, 1.0, 5.0, 1.0, 1.0, 1.0],
        ))
        .unwrap();
        let cfg = KdeConfig::with_bandwidth(BandwidthRule::Fixed(0.2));
        let m = build_masks(&fine, &["m".into()], 2, &cfg).unwrap();
        let bits: Vec<bool> = (0..2).flat_map(|r| (0..4).map(move |c| (r, c))).map(|(r, c)| m.masks["m"].get(r, c)).collect();
        assert_eq!(
            bits,
            vec![true, true, false, false, false, true, true, false]
        );
    }

    #[test]
    fn reset_percentage_scopes() {
        let (_, fine) = pair();
        let names = vec!["w".to_string()];
        let m = build_masks(&fine, &names, 2, &KdeConfig::default()).unwrap();
        let masked = reset_percentage(&m, &fine, &ResetScope::MaskedOnly).unwrap();
        assert_eq!(masked.retained, 6);
        assert_eq!(masked.total, 15);
        assert!((masked.model_reset_pct - 60.0).abs() < 1e-9);

        let all = reset_percentage(
            &m,
            &fine,
            &ResetScope::AllNamed(vec!["w".into(), "bias_like".into()]),
        )
        .unwrap();
        assert_eq!(all.retained, 8);
        assert_eq!(all.total, 17);
        assert_eq!(all.per_tensor["bias_like"].retained, 2);

        let err = reset_percentage(&m, &fine, &ResetScope::AllNamed(vec!["zz".into()]));
        assert!(err.is_err());
    }

    #[test]
    fn ten_by_ten_k4_resets_sixty_percent() {
        let mut fine = Checkpoint::new();
        fine.insert(tensor("t", 10, 10, (0..100).map(|i| (i % 13) as f32).collect()))
            .unwrap();
        let m = build_masks(&fine, &["t".into()], 4, &KdeConfig::default()).unwrap();
        let r = reset_percentage(&m, &fine, &ResetScope::MaskedOnly).unwrap();
        assert!((r.model_reset_pct - 60.0).abs() < 1e-9);
    }

    #[test]
    fn apply_rejects_shape_mismatch() {
        let (pre, fine) = pair();
        let mut bad = MaskSet::new(1, BTreeMap::new());
        bad.masks.insert("w".into(), BitMatrix::zeros(5, 3));
        assert!(matches!(
            apply_masks(&pre, &fine, &bad),
            Err(PruneError::ShapeMismatch { .. })
        ));
        let mut missing = MaskSet::new(1, BTreeMap::new());
        missing.masks.insert("ghost".into(), BitMatrix::zeros(1, 1));
        assert!(matches!(
            apply_masks(&pre, &fine, &missing),
            Err(PruneError::MissingTensor { .. })
        ));
    }
}
