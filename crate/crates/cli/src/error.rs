use std::fmt;
use std::process::ExitCode;

use kenforge::{
    AnalysisError, CheckpointError, DistillError, MaskError, PruneError, SweepError, VizError,
};

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Input = 2,
    Evaluator = 3,
    Io = 4,
}

/// A failure carrying the exit class and a message for stderr.
#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl fmt::Display) -> Self {
        Self { exit: Exit::Input, message: message.to_string() }
    }

    pub fn io(message: impl fmt::Display) -> Self {
        Self { exit: Exit::Io, message: message.to_string() }
    }

    pub fn code(&self) -> ExitCode {
        ExitCode::from(self.exit as u8)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type CliResult<T> = Result<T, CliError>;

// Anything wrong with an input file, including a missing one, is an input
// error. Write failures use the I/O class.

pub fn reading<E: fmt::Display>(e: E) -> CliError {
    CliError::input(e)
}

pub fn writing_checkpoint(e: CheckpointError) -> CliError {
    if e.is_io() { CliError::io(e) } else { CliError::input(e) }
}

pub fn writing_masks(e: MaskError) -> CliError {
    if e.is_io() { CliError::io(e) } else { CliError::input(e) }
}

impl From<DistillError> for CliError {
    fn from(e: DistillError) -> Self {
        if e.is_io() { CliError::io(e) } else { CliError::input(e) }
    }
}

impl From<VizError> for CliError {
    fn from(e: VizError) -> Self {
        if e.is_io() { CliError::io(e) } else { CliError::input(e) }
    }
}

impl From<PruneError> for CliError {
    fn from(e: PruneError) -> Self {
        CliError::input(e)
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::input(e)
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Evaluator { .. } => CliError { exit: Exit::Evaluator, message: e.to_string() },
            other => CliError::input(other),
        }
    }
}
