//! Incremental retention sweep: grow `k` along a schedule until the pruned
//! model scores at least as well as the baseline.

use std::path::PathBuf;
use std::process::{Command, Stdio};

use serde::Serialize;
use thiserror::Error;

use crate::checkpoint::Checkpoint;
use crate::kde::KdeConfig;
use crate::masks::MaskSet;
use crate::prune::{apply_masks, rank_tensors, PruneError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("failed to launch {program:?}: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("could not stage checkpoint for evaluation: {0}")]
    Stage(String),
    #[error("evaluator exited with {status}")]
    ExitStatus { status: String },
    #[error("evaluator output has no trailing decimal score: {last_token:?}")]
    Parse { last_token: String },
    #[error("{0}")]
    Other(String),
}

/// Scores a pruned checkpoint; higher is better. Implementations must be
/// deterministic for a given checkpoint.
pub trait Evaluator {
    fn score(&mut self, pruned: &Checkpoint) -> Result<f64, EvalError>;
}

impl<F> Evaluator for F
where
    F: FnMut(&Checkpoint) -> Result<f64, EvalError>,
{
    fn score(&mut self, pruned: &Checkpoint) -> Result<f64, EvalError> {
        self(pruned)
    }
}

/// `-||pruned - reference||^2` summed over every reference tensor. Elements
/// with identical bit patterns contribute nothing.
#[derive(Debug, Clone)]
pub struct QuadraticEvaluator {
    reference: Checkpoint,
}

impl QuadraticEvaluator {
    pub fn new(reference: Checkpoint) -> Self {
        Self { reference }
    }
}

impl Evaluator for QuadraticEvaluator {
    fn score(&mut self, pruned: &Checkpoint) -> Result<f64, EvalError> {
        let mut total = 0.0f64;
        for (name, r) in &self.reference.tensors {
            let p = pruned
                .get(name)
                .ok_or_else(|| EvalError::Other(format!("pruned checkpoint lacks {name:?}")))?;
            if p.shape() != r.shape() {
                return Err(EvalError::Other(format!("shape mismatch for {name:?}")));
            }
            for (&a, &b) in p.values().iter().zip(r.values()) {
                if a.to_bits() != b.to_bits() {
                    let d = a as f64 - b as f64;
                    total += d * d;
                }
            }
        }
        Ok(-total)
    }
}

/// Runs `command... <checkpoint_path>` and reads the score from the last
/// whitespace-delimited token of standard output.
#[derive(Debug, Clone)]
pub struct CommandEvaluator {
    argv: Vec<String>,
    scratch_dir: Option<PathBuf>,
}

impl CommandEvaluator {
    pub fn new(argv: Vec<String>) -> Result<Self, EvalError> {
        if argv.is_empty() {
            return Err(EvalError::Other("empty evaluator command".into()));
        }
        Ok(Self {
            argv,
            scratch_dir: None,
        })
    }

    /// Directory for the staged checkpoint; defaults to the system temp dir.
    pub fn scratch_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.scratch_dir = Some(dir.into());
        self
    }
}

pub fn parse_score(stdout: &str) -> Result<f64, EvalError> {
    let last = stdout.split_whitespace().last().unwrap_or("");
    match last.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(EvalError::Parse {
            last_token: last.to_string(),
        }),
    }
}

impl Evaluator for CommandEvaluator {
    fn score(&mut self, pruned: &Checkpoint) -> Result<f64, EvalError> {
        let mut builder = tempfile::Builder::new();
        builder.prefix("kenforge-eval-").suffix(".kenc");
        let staged = match &self.scratch_dir {
            Some(dir) => builder.tempfile_in(dir),
            None => builder.tempfile(),
        }
        .map_err(|e| EvalError::Stage(e.to_string()))?;
        std::fs::write(staged.path(), pruned.to_bytes())
            .map_err(|e| EvalError::Stage(e.to_string()))?;

        let output = Command::new(&self.argv[0])
            .args(&self.argv[1..])
            .arg(staged.path())
            .stdin(Stdio::null())
            .stderr(Stdio::inherit())
            .output()
            .map_err(|source| EvalError::Spawn {
                program: self.argv[0].clone(),
                source,
            })?;
        if !output.status.success() {
            return Err(EvalError::ExitStatus {
                status: output.status.to_string(),
            });
        }
        parse_score(&String::from_utf8_lossy(&output.stdout))
    }
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("evaluator failed at k = {k}: {source}")]
    Evaluator {
        k: usize,
        #[source]
        source: EvalError,
    },
    #[error(transparent)]
    Prune(#[from] PruneError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepStatus {
    Reached,
    NoKReachedBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub k: usize,
    pub score: f64,
    pub meets_baseline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub k_star: usize,
    pub status: SweepStatus,
    pub baseline: f64,
    pub trace: Vec<SweepPoint>,
    #[serde(skip)]
    pub masks: MaskSet,
}

pub fn validate_schedule(schedule: &[usize]) -> Result<(), SweepError> {
    if schedule.is_empty() {
        return Err(SweepError::Schedule("schedule is empty".into()));
    }
    if let Some(w) = schedule.windows(2).find(|w| w[0] >= w[1]) {
        return Err(SweepError::Schedule(format!(
            "schedule must be strictly ascending ({} then {})",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Evaluates `schedule` in ascending order and stops at the first `k` whose
/// pruned checkpoint scores `>= baseline`. When none does, the last `k` is
/// returned with [`SweepStatus::NoKReachedBaseline`].
pub fn k_sweep(
    pre: &Checkpoint,
    fine: &Checkpoint,
    prunable: &[String],
    config: &KdeConfig,
    eval: &mut dyn Evaluator,
    schedule: &[usize],
    baseline: f64,
) -> Result<SweepOutcome, SweepError> {
    validate_schedule(schedule)?;
    let rankings = rank_tensors(fine, prunable, config)?;
    let mut trace = Vec::with_capacity(schedule.len());
    let mut last = None;
    for &k in schedule {
        let masks = rankings.masks(k);
        let pruned = apply_masks(pre, fine, &masks)?;
        let score = eval
            .score(&pruned)
            .map_err(|source| SweepError::Evaluator { k, source })?;
        let meets_baseline = score >= baseline;
        log::info!("k = {k}: score {score} (baseline {baseline})");
        trace.push(SweepPoint {
            k,
            score,
            meets_baseline,
        });
        if meets_baseline {
            return Ok(SweepOutcome {
                k_star: k,
                status: SweepStatus::Reached,
                baseline,
                trace,
                masks,
            });
        }
        last = Some((k, masks));
    }
    let (k, masks) = last.expect("non-empty schedule");
    Ok(SweepOutcome {
        k_star: k,
        status: SweepStatus::NoKReachedBaseline,
        baseline,
        trace,
        masks,
    })
}
