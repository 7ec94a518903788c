//! Static visual artifacts: tri-panel parameter-location grids (PGM or CSV)
//! and overlap tables.
//!
//! Grids use one cell per parameter. In PGM output a retained parameter is
//! black (0) and everything else white (255). With a stride `s > 1` each
//! `s x s` block becomes one cell that is black if any parameter in it is
//! retained, which is lossy.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::analysis::{OverlapReport, TriPartition};
use crate::bits::BitMatrix;

pub const RETAINED: u8 = 0;
pub const BLANK: u8 = 255;

#[derive(Debug, Error)]
pub enum VizError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("panels differ in shape: {0:?}, {1:?}, {2:?}")]
    ShapeMismatch((usize, usize), (usize, usize), (usize, usize)),
    #[error("stride must be at least 1")]
    ZeroStride,
    #[error("conflicting values for pair ({a}, {b}) in column {model:?}: {first} vs {second}")]
    ConflictingPair {
        a: String,
        b: String,
        model: String,
        first: f64,
        second: f64,
    },
    #[error("unknown grid format {0:?} (expected pgm or csv)")]
    UnknownFormat(String),
}

impl VizError {
    pub fn is_io(&self) -> bool {
        matches!(self, VizError::Io { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridFormat {
    Pgm,
    Csv,
}

impl GridFormat {
    pub fn extension(self) -> &'static str {
        match self {
            GridFormat::Pgm => "pgm",
            GridFormat::Csv => "csv",
        }
    }
}

impl FromStr for GridFormat {
    type Err = VizError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pgm" => Ok(GridFormat::Pgm),
            "csv" => Ok(GridFormat::Csv),
            _ => Err(VizError::UnknownFormat(s.to_string())),
        }
    }
}

/// One palette byte per cell, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GridImage {
    pub fn from_mask(mask: &BitMatrix, stride: usize) -> Result<Self, VizError> {
        if stride == 0 {
            return Err(VizError::ZeroStride);
        }
        let width = mask.cols().div_ceil(stride);
        let height = mask.rows().div_ceil(stride);
        let mut pixels = vec![BLANK; width * height];
        for (r, c) in mask.iter_ones() {
            pixels[(r / stride) * width + c / stride] = RETAINED;
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn retained_cells(&self) -> usize {
        self.pixels.iter().filter(|&&p| p == RETAINED).count()
    }

    /// Binary PGM (`P5`, maxval 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// A `# panel=.. count=..` comment line, a `c0,c1,..` header row, then one
    /// row of 1/0 cells per grid row. `count` is the number of retained
    /// parameters in the underlying mask.
    pub fn to_csv(&self, panel: &str, count: usize) -> String {
        let mut out = String::with_capacity(self.pixels.len() * 2 + 64);
        let _ = writeln!(
            out,
            "# panel={panel} count={count} rows={} cols={}",
            self.height, self.width
        );
        let header: Vec<String> = (0..self.width).map(|c| format!("c{c}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for row in self.pixels.chunks(self.width.max(1)) {
            for (i, &p) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push(if p == RETAINED { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), VizError> {
    std::fs::write(path, bytes).map_err(|source| VizError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub const PANELS: [&str; 3] = ["common", "a_only", "b_only"];

/// Paths `<prefix>.{common,a_only,b_only}.<ext>`.
pub fn tri_panel_paths(out_prefix: &Path, format: GridFormat) -> [PathBuf; 3] {
    PANELS.map(|panel| {
        let mut name = out_prefix.as_os_str().to_owned();
        name.push(format!(".{panel}.{}", format.extension()));
        PathBuf::from(name)
    })
}

pub fn emit_tri_panel(
    parts: &TriPartition,
    out_prefix: &Path,
    format: GridFormat,
    stride: usize,
) -> Result<[PathBuf; 3], VizError> {
    let masks = [&parts.common, &parts.a_only, &parts.b_only];
    if masks.iter().any(|m| m.shape() != parts.common.shape()) {
        return Err(VizError::ShapeMismatch(
            masks[0].shape(),
            masks[1].shape(),
            masks[2].shape(),
        ));
    }
    let paths = tri_panel_paths(out_prefix, format);
    for ((mask, panel), path) in masks.iter().zip(PANELS).zip(&paths) {
        let grid = GridImage::from_mask(mask, stride)?;
        let bytes = match format {
            GridFormat::Pgm => grid.to_pgm(),
            GridFormat::Csv => grid.to_csv(panel, mask.count_ones()).into_bytes(),
        };
        write_file(path, &bytes)?;
    }
    Ok(paths)
}

const DEFAULT_COLUMN: &str = "overlap";

/// Table with columns `Subnet A, Subnet B, <one per model label>`; one row
/// per unordered pair, percentages with two decimals. Rows are ordered by
/// label pair; columns by first appearance.
pub fn overlap_table_csv(reports: &[OverlapReport]) -> Result<String, VizError> {
    let mut columns: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(String, String), BTreeMap<String, f64>> = BTreeMap::new();
    for r in reports {
        let model = r.model.clone().unwrap_or_else(|| DEFAULT_COLUMN.to_string());
        if !columns.contains(&model) {
            columns.push(model.clone());
        }
        let key = if r.label_a <= r.label_b {
            (r.label_a.clone(), r.label_b.clone())
        } else {
            (r.label_b.clone(), r.label_a.clone())
        };
        let row = cells.entry(key.clone()).or_default();
        match row.get(&model) {
            Some(&prev) if prev.to_bits() != r.overlap_pct.to_bits() => {
                return Err(VizError::ConflictingPair {
                    a: key.0,
                    b: key.1,
                    model,
                    first: prev,
                    second: r.overlap_pct,
                });
            }
            _ => {
                row.insert(model, r.overlap_pct);
            }
        }
    }

    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = vec!["Subnet A".to_string(), "Subnet B".to_string()];
    header.extend(columns.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for ((a, b), row) in &cells {
        let mut record = vec![a.clone(), b.clone()];
        record.extend(
            columns
                .iter()
                .map(|c| row.get(c).map(|v| format!("{v:.2}")).unwrap_or_default()),
        );
        w.write_record(&record).expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory flush");
    Ok(String::from_utf8(bytes).expect("utf-8 table"))
}

pub fn emit_overlap_table(reports: &[OverlapReport], out: &Path) -> Result<(), VizError> {
    let table = overlap_table_csv(reports)?;
    write_file(out, table.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_pgm_bytes() {
        let m = BitMatrix::from_fn(2, 2, |r, c| r == c);
        let g = GridImage::from_mask(&m, 1).unwrap();
        let pgm = g.to_pgm();
        assert!(pgm.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&pgm[pgm.len() - 4..], &[0, 255, 255, 0]);
    }

    #[test]
    fn zero_mask_is_white() {
        let g = GridImage::from_mask(&BitMatrix::zeros(3, 5), 1).unwrap();
        assert_eq!((g.width, g.height), (5, 3));
        assert!(g.pixels.iter().all(|&p| p == BLANK));
    }

    #[test]
    fn stride_blocks_are_black_if_any_cell_is() {
        let m = BitMatrix::from_fn(5, 5, |r, c| r == 4 && c == 1);
        let g = GridImage::from_mask(&m, 2).unwrap();
        assert_eq!((g.width, g.height), (3, 3));
        assert_eq!(g.pixels, vec![255, 255, 255, 255, 255, 255, 0, 255, 255]);
        assert!(GridImage::from_mask(&m, 0).is_err());
    }

    #[test]
    fn csv_grid_layout() {
        let m = BitMatrix::from_fn(2, 3, |r, c| r == 0 && c == 2);
        let csv = GridImage::from_mask(&m, 1).unwrap().to_csv("common", 1);
        assert_eq!(
            csv,
            "# panel=common count=1 rows=2 cols=3\nc0,c1,c2\n0,0,1\n0,0,0\n"
        );
    }

    #[test]
    fn overlap_table_rows() {
        let table = overlap_table_csv(&[OverlapReport::literal("AU", "GB", None, 69.73)]).unwrap();
        assert_eq!(table, "Subnet A,Subnet B,overlap\nAU,GB,69.73\n");
        assert_eq!(overlap_table_csv(&[]).unwrap(), "Subnet A,Subnet B\n");
        let table = overlap_table_csv(&[OverlapReport::literal("A", "A", None, 100.0)]).unwrap();
        assert!(table.ends_with("A,A,100.00\n"));
    }

    #[test]
    fn overlap_table_pairs_are_unordered() {
        let reports = [
            OverlapReport::literal("GB", "AU", Some("BERT".into()), 69.73),
            OverlapReport::literal("AU", "GB", Some("BERT".into()), 69.73),
            OverlapReport::literal("AU", "GB", Some("Electra".into()), 89.49),
            OverlapReport::literal("AU", "IE", Some("Electra".into()), 23.15),
        ];
        let table = overlap_table_csv(&reports).unwrap();
        assert_eq!(
            table,
            "Subnet A,Subnet B,BERT,Electra\nAU,GB,69.73,89.49\nAU,IE,,23.15\n"
        );
        let conflict = [
            OverlapReport::literal("AU", "GB", None, 69.73),
            OverlapReport::literal("GB", "AU", None, 70.0),
        ];
        assert!(matches!(
            overlap_table_csv(&conflict),
            Err(VizError::ConflictingPair { .. })
        ));
    }

    #[test]
    fn panel_paths() {
        let paths = tri_panel_paths(Path::new("/tmp/out/gb_ie.layer0"), GridFormat::Pgm);
        assert_eq!(paths[0], PathBuf::from("/tmp/out/gb_ie.layer0.common.pgm"));
        assert_eq!(paths[2], PathBuf::from("/tmp/out/gb_ie.layer0.b_only.pgm"));
    }
}
