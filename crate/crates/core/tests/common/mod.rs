#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;

use kenforge::{BitMatrix, Checkpoint, MaskSet, TensorRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// O(n^2) estimator written out term by term.
pub fn brute_density(row: &[f64], h: f64) -> Vec<f64> {
    let n = row.len() as f64;
    let c = 1.0 / (2.0 * PI).sqrt();
    row.iter()
        .map(|&xj| {
            let mut s = 0.0;
            for &xi in row {
                let u = (xj - xi) / h;
                s += c * (-u * u / 2.0).exp();
            }
            s / (n * h)
        })
        .collect()
}

/// Scott bandwidth straight from the definition (two-pass variance).
pub fn scott_oracle(row: &[f64], degenerate: f64) -> f64 {
    let n = row.len() as f64;
    if row.len() < 2 || row.iter().all(|&v| v == row[0]) {
        return degenerate;
    }
    let mean = row.iter().sum::<f64>() / n;
    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let h = var.sqrt() * n.powf(-0.2);
    if h > 0.0 {
        h
    } else {
        degenerate
    }
}

/// Top-k by brute-force density; densities within `rel` of each other count
/// as tied and fall back to index order.
pub fn brute_top_k(row: &[f64], h: f64, k: usize) -> Vec<usize> {
    let d = brute_density(row, h);
    let mut idx: Vec<usize> = (0..row.len()).collect();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    idx.sort_by(|&a, &b| {
        if close(d[a], d[b]) {
            a.cmp(&b)
        } else {
            d[b].partial_cmp(&d[a]).unwrap()
        }
    });
    let mut out: Vec<usize> = idx.into_iter().take(k.min(row.len())).collect();
    out.sort_unstable();
    out
}

pub fn normal_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Random matrix values; roughly one in `tie_every` entries is quantized so
/// that exact ties occur.
pub fn random_values(rng: &mut ChaCha8Rng, len: usize) -> Vec<f32> {
    (0..len)
        .map(|_| {
            let v: f64 = StandardNormal.sample(rng);
            if rng.random_range(0..4) == 0 {
                (v * 2.0).round() as f32 / 2.0
            } else {
                v as f32 * 0.05
            }
        })
        .collect()
}

pub fn random_checkpoint(rng: &mut ChaCha8Rng, n_tensors: usize) -> Checkpoint {
    let mut c = Checkpoint::new().with_meta("model", "fixture");
    for i in 0..n_tensors {
        let rows = rng.random_range(1..7);
        let cols = rng.random_range(1..12);
        let values = random_values(rng, rows * cols);
        c.insert(TensorRecord::new(format!("layer{i}.w"), rows, cols, values).unwrap())
            .unwrap();
    }
    c
}

/// Fine-tuned copy of `pre` with a random subset of entries perturbed.
pub fn perturb(rng: &mut ChaCha8Rng, pre: &Checkpoint, frac: f64) -> Checkpoint {
    let mut fine = pre.clone().with_meta("state", "finetuned");
    for t in pre.tensors.values() {
        let values = t
            .values()
            .iter()
            .map(|&v| {
                if rng.random_bool(frac) {
                    v + rng.random_range(-0.5f32..0.5)
                } else {
                    v
                }
            })
            .collect();
        fine.tensors.insert(
            t.name().to_string(),
            TensorRecord::new(t.name(), t.rows(), t.cols(), values).unwrap(),
        );
    }
    fine
}

/// Random mask with exactly `min(k, cols)` ones per row.
pub fn random_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, k: usize) -> BitMatrix {
    let mut m = BitMatrix::zeros(rows, cols);
    for r in 0..rows {
        let mut idx: Vec<usize> = (0..cols).collect();
        for i in 0..k.min(cols) {
            let j = rng.random_range(i..cols);
            idx.swap(i, j);
            m.set(r, idx[i], true);
        }
    }
    m
}

pub fn random_mask_set(
    rng: &mut ChaCha8Rng,
    label: &str,
    shapes: &[(String, usize, usize)],
    k: usize,
) -> MaskSet {
    let mut set = MaskSet::new(k, BTreeMap::from([("variant".to_string(), label.to_string())]));
    for (name, rows, cols) in shapes {
        set.masks
            .insert(name.clone(), random_mask(rng, *rows, *cols, k));
    }
    set
}

pub fn random_shapes(rng: &mut ChaCha8Rng, n: usize) -> Vec<(String, usize, usize)> {
    (0..n)
        .map(|i| (format!("attn.{i}"), rng.random_range(1..9), rng.random_range(2..20)))
        .collect()
}

/// Bitwise tensor equality for a name present in both checkpoints.
pub fn same_bits(a: &Checkpoint, b: &Checkpoint, name: &str) -> bool {
    let (x, y) = (&a.tensors[name], &b.tensors[name]);
    x.shape() == y.shape()
        && x.values()
            .iter()
            .zip(y.values())
            .all(|(p, q)| p.to_bits() == q.to_bits())
}
