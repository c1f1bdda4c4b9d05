use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),
    #[error("word length {got} does not match topology size {want}")]
    WordLength { got: usize, want: usize },
    #[error("stack violates the sitewise ordering at site {site} between line {line} and the line above")]
    UnorderedStack { site: i64, line: usize },
    #[error("class {value} out of range 1..={max}")]
    ClassOutOfRange { value: u32, max: u32 },
    #[error("density {0} outside the open interval (0, 1)")]
    InvalidDensity(f64),
    #[error("densities must be strictly increasing: {0:?}")]
    DensitiesNotIncreasing(Vec<f64>),
    #[error("truncation level {m} out of range 1..={n}")]
    TruncationOutOfRange { m: usize, n: usize },
    #[error("unstable ring queue: {arrivals} arrivals vs {services} services (need strictly fewer arrivals)")]
    UnstableQueue { arrivals: usize, services: usize },
    #[error("class split inconsistent with the tandem identity at stage {stage}")]
    InconsistentSplit { stage: usize },
    #[error("configuration has no particle (operation undefined on an empty ring)")]
    EmptyConfiguration,
    #[error("configuration has no hole (operation undefined on a full ring)")]
    FullConfiguration,
    #[error("mark at time {0} outside the trajectory horizon")]
    MarkOutsideHorizon(f64),
    #[error("location {0} invalid for the topology/location kind")]
    InvalidLocation(i64),
    #[error("marks for this dynamics need direction flags (generate them with directions)")]
    MissingDirections,
    #[error("trajectory lacks spin words; evolve with evolve_augmented first")]
    MissingSpins,
    #[error("unsupported operation: {0}")]
    UnsupportedKind(String),
    #[error("state space of {size} states exceeds the dense-solver cap of {cap}")]
    StateSpaceTooLarge { size: usize, cap: usize },
    #[error("chain is reducible: {unreached} of {total} states unreachable from the initial class")]
    ReducibleChain { unreached: usize, total: usize },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
