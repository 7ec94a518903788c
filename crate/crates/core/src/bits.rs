//! Dense row-major bit matrices backed by `u64` words.

use std::fmt;

/// A `rows x cols` bit matrix. Each row starts on a fresh word; bits past
/// `cols` in the last word of a row are always zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let words_per_row = cols.div_ceil(64);
        Self {
            rows,
            cols,
            words_per_row,
            words: vec![0; rows * words_per_row],
        }
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.set(r, c, true);
            }
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                if f(r, c) {
                    m.set(r, c, true);
                }
            }
        }
        m
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

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        debug_assert!(r < self.rows && c < self.cols);
        let w = self.words[r * self.words_per_row + c / 64];
        (w >> (c % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        assert!(r < self.rows && c < self.cols, "bit ({r}, {c}) out of bounds");
        let w = &mut self.words[r * self.words_per_row + c / 64];
        let bit = 1u64 << (c % 64);
        if value {
            *w |= bit;
        } else {
            *w &= !bit;
        }
    }

    fn row_words(&self, r: usize) -> &[u64] {
        &self.words[r * self.words_per_row..(r + 1) * self.words_per_row]
    }

    pub(crate) fn row_words_mut(&mut self, r: usize) -> &mut [u64] {
        &mut self.words[r * self.words_per_row..(r + 1) * self.words_per_row]
    }

    pub fn row_count_ones(&self, r: usize) -> usize {
        self.row_words(r).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows).flat_map(move |r| (0..self.cols).filter(move |&c| self.get(r, c)).map(move |c| (r, c)))
    }

    fn zip_with(&self, other: &Self, op: impl Fn(u64, u64) -> u64) -> Self {
        assert_eq!(self.shape(), other.shape(), "bit matrix shape mismatch");
        Self {
            rows: self.rows,
            cols: self.cols,
            words_per_row: self.words_per_row,
            words: self.words.iter().zip(&other.words).map(|(&a, &b)| op(a, b)).collect(),
        }
    }

    pub fn and(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn or(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a | b)
    }

    /// `self AND NOT other`.
    pub fn and_not(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a & !b)
    }

    pub fn and_count(&self, other: &Self) -> usize {
        assert_eq!(self.shape(), other.shape(), "bit matrix shape mismatch");
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.shape() == other.shape()
            && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Bytes per row when packed to a whole number of bytes.
    pub fn row_bytes(cols: usize) -> usize {
        cols.div_ceil(8)
    }

    /// Packs rows into bytes, least significant bit first, each row padded
    /// to a whole byte.
    pub fn to_packed(&self) -> Vec<u8> {
        let rb = Self::row_bytes(self.cols);
        let mut out = Vec::with_capacity(rb * self.rows);
        for r in 0..self.rows {
            let words = self.row_words(r);
            out.extend((0..rb).map(|i| (words[i / 8] >> ((i % 8) * 8)) as u8));
        }
        out
    }

    /// Inverse of [`BitMatrix::to_packed`]. Returns `None` when the length is
    /// wrong or a padding bit is set.
    pub fn from_packed(rows: usize, cols: usize, bytes: &[u8]) -> Option<Self> {
        let rb = Self::row_bytes(cols);
        if bytes.len() != rb * rows {
            return None;
        }
        let mut m = Self::zeros(rows, cols);
        let tail_bits = cols % 8;
        for (r, row) in bytes.chunks_exact(rb.max(1)).enumerate().take(rows) {
            if tail_bits != 0 && row[rb - 1] >> tail_bits != 0 {
                return None;
            }
            let words = m.row_words_mut(r);
            for (i, &b) in row.iter().enumerate() {
                words[i / 8] |= (b as u64) << ((i % 8) * 8);
            }
        }
        Some(m)
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows.min(16) {
            let line: String = (0..self.cols.min(64))
                .map(|c| if self.get(r, c) { '1' } else { '0' })
                .collect();
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn set_get_count() {
        let mut m = BitMatrix::zeros(3, 70);
        m.set(0, 0, true);
        m.set(1, 69, true);
        m.set(2, 64, true);
        m.set(2, 63, true);
        assert!(m.get(1, 69) && !m.get(1, 68));
        assert_eq!(m.count_ones(), 4);
        assert_eq!(m.row_count_ones(2), 2);
        m.set(2, 63, false);
        assert_eq!(m.row_count_ones(2), 1);
        assert_eq!(BitMatrix::ones(3, 70).count_ones(), 210);
    }

    #[test]
    fn packing_is_lsb_first_per_row() {
        let m = BitMatrix::from_fn(2, 10, |r, c| (r == 0 && c == 0) || (r == 1 && c == 9));
        assert_eq!(m.to_packed(), vec![0b0000_0001, 0, 0, 0b0000_0010]);
    }

    #[test]
    fn rejects_padding_bits() {
        assert!(BitMatrix::from_packed(1, 3, &[0b0000_1000]).is_none());
        assert!(BitMatrix::from_packed(1, 3, &[0b0000_0111]).is_some());
        assert!(BitMatrix::from_packed(2, 3, &[0]).is_none());
    }

    proptest! {
        #[test]
        fn packed_round_trip(rows in 1usize..6, cols in 1usize..140, seed in any::<u64>()) {
            let m = BitMatrix::from_fn(rows, cols, |r, c| {
                (seed.rotate_left((r * 31 + c) as u32 % 64) ^ (r * 7 + c) as u64) & 1 == 1
            });
            let packed = m.to_packed();
            prop_assert_eq!(packed.len(), rows * cols.div_ceil(8));
            prop_assert_eq!(BitMatrix::from_packed(rows, cols, &packed), Some(m));
        }
    }
}
