//! Extraction and comparison of KDE-selected subnetworks.
//!
//! Given a pre-trained and a fine-tuned checkpoint, every row of each
//! prunable matrix keeps the `k` fine-tuned parameters with the highest
//! kernel density estimate and reverts the rest to their pre-trained values.
//! The resulting retention masks can be compared across models (pairwise
//! overlap, all-model intersection, tri-panel grids). A separate module
//! distills multi-annotator irony annotations into per-variant datasets.

pub mod analysis;
pub mod bits;
pub mod checkpoint;
mod container;
pub mod distill;
pub mod kde;
pub mod masks;
pub mod prune;
pub mod select;
pub mod sweep;
pub mod viz;

pub use analysis::{
    difference_masks, in_breadth, pairwise_overlap, AnalysisError, InBreadthReport, OverlapReport,
    TensorOverlap, TriPartition,
};
pub use bits::BitMatrix;
pub use checkpoint::{
    diff_checkpoints, read_checkpoint, write_checkpoint, Checkpoint, CheckpointError, TensorRecord,
};
pub use container::FrameError;
pub use distill::{
    distill, ingest_csv, ingest_reader, majority_vote, AnnotationRecord, ColumnMap, DistillError,
    Label, VariantDataset, VariantStats,
};
pub use kde::{
    bandwidth, kde_density, kde_density_reference, select_top_k, BandwidthRule, KdeConfig,
    KdeError, Kernel, RowDensity,
};
pub use masks::{read_masks, write_masks, MaskError, MaskSet};
pub use prune::{
    apply_masks, build_masks, rank_tensors, reset_percentage, PruneError, PruneReport, Rankings,
    ResetScope, TensorCounts,
};
pub use select::TensorFilter;
pub use sweep::{
    k_sweep, CommandEvaluator, EvalError, Evaluator, QuadraticEvaluator, SweepError, SweepOutcome,
    SweepPoint, SweepStatus,
};
pub use viz::{emit_overlap_table, emit_tri_panel, overlap_table_csv, GridFormat, GridImage, VizError};
