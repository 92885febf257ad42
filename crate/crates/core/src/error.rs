//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph must contain at least one site")]
    EmptyGraph,

    #[error("duplicate site ({x}, {y}) at indices {first} and {second}")]
    DuplicateSite { x: i32, y: i32, first: usize, second: usize },

    #[error("lattice spacing must be positive, got {0}")]
    InvalidSpacing(f64),

    #[error("bitstring length {got} does not match graph order {expected}")]
    BitstringLength { got: usize, expected: usize },

    #[error("graph order {order} exceeds the enumeration limit {limit}")]
    EnumerationLimit { order: usize, limit: usize },

    #[error(
        "graph order {order} exceeds the {choice} simulation limit {limit}; \
         a restricted subspace may still fit"
    )]
    BasisLimit { order: usize, choice: &'static str, limit: usize },

    #[error("basis dimension {dim} exceeds the supported maximum {max}")]
    BasisDimension { dim: usize, max: usize },

    #[error("state length {got} does not match basis dimension {expected}")]
    StateLength { got: usize, expected: usize },

    #[error("malformed toy-graph identifier {0:?}: expected three hex digits")]
    MalformedToyId(String),

    #[error("toy-graph identifier {0:?} encodes an empty graph")]
    EmptyToyId(String),

    #[error("triangle chain requires m >= 1")]
    EmptyChain,

    #[error("independence number is zero; hardness parameter undefined")]
    ZeroIndependenceNumber,

    #[error("invalid schedule parameters: {}", .0.join("; "))]
    ScheduleParams(Vec<String>),

    #[error("schedule violates hardware invariants: {}", .0.join("; "))]
    HardwareInvariant(Vec<String>),

    #[error("discretization step {step} us is below the hardware minimum {min} us")]
    StepTooSmall { step: f64, min: f64 },

    #[error("counterdiabatic denominator crosses zero near t = {t} us")]
    CdDenominatorZero { t: f64 },

    #[error("no rescale factor in (0, 1] keeps the drive amplitude within {omega_max} MHz")]
    CdRescaleInfeasible { omega_max: f64 },

    #[error("integration norm drift {drift:.3e} exceeds 1e-6; tighten the tolerances")]
    NormDrift { drift: f64 },

    #[error("step size underflow at t = {t} us; the problem appears too stiff")]
    StepUnderflow { t: f64 },

    #[error("maximum-independent-set bitstring is missing from the simulation basis")]
    MisOutsideBasis,

    #[error("{context}: expected {expected}, got {got}")]
    Inconsistent { context: &'static str, expected: usize, got: usize },

    #[error("hardness model for {family} has not been fitted")]
    ModelNotFitted { family: &'static str },

    #[error("optimization failed: every schedule evaluation errored; first error: {first}")]
    AllEvaluationsFailed { first: String },

    #[error("empty collection: {0}")]
    EmptyCollection(&'static str),

    #[error("fit requires at least {min} rows, got {got}")]
    TooFewRows { min: usize, got: usize },

    #[error("fit requires hardness values spanning at least one decade (got {lo:.4}..{hi:.4})")]
    DegenerateHardnessSpread { lo: f64, hi: f64 },

    #[error("window {w}x{h} cannot hold {order} distinct sites")]
    WindowTooSmall { w: u32, h: u32, order: usize },

    #[error("dataset selection infeasible; deficient (order, bin) cells: {0:?}")]
    SelectionInfeasible(Vec<(u32, usize)>),

    #[error("dataset spec inconsistent: {0}")]
    InvalidDatasetSpec(String),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },

    #[error("{0}")]
    InvalidInput(String),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    pub fn json(path: impl AsRef<std::path::Path>, source: serde_json::Error) -> Self {
        Error::Json { path: path.as_ref().display().to_string(), source }
    }
}
