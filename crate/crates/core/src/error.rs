use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("integration blew up at t = {time:.3} s (neuron {neuron})")]
    IntegrationBlowup { neuron: usize, time: f64 },

    #[error("physics simulation diverged at t = {time:.3} s")]
    SimulationDiverged { time: f64 },

    #[error("allele {value} at index {index} is outside [1, 10]")]
    InvalidAllele { index: usize, value: u8 },

    #[error("genome has {found} alleles, map {kind} expects {expected}")]
    GenomeLength {
        kind: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("design matrix is rank deficient; collinear columns: {columns:?}")]
    RankDeficient { columns: Vec<usize> },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no measurable period: {0}")]
    NoPeriod(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
