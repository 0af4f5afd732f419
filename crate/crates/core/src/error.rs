use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },
    #[error("matrix is singular in {0}")]
    Singular(&'static str),
    #[error("state overflow at t = {t} (|x| > 1e12); the system is likely unstable")]
    Overflow { t: usize },
    #[error("observer state diverged at t = {t}; the gain does not stabilize A - LC")]
    Divergence { t: usize },
    #[error("not applicable: {0}")]
    NotApplicable(&'static str),
    #[error("the pair (A, C) is not observable")]
    NotObservable,
    #[error("no candidate in the gain grid passed certification")]
    EmptyGrid,
    #[error("gain grid has {0} candidates, above the enumeration limit")]
    GridTooLarge(usize),
    #[error("invalid H-infinity inflation level {0}; must be nonnegative")]
    InvalidLevel(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("degenerate fit: {0} points, need at least 10")]
    Degenerate(usize),
    #[error("invalid polynomial roots: {0}")]
    InvalidRoots(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("trial {trial}, variant `{variant}`, t = {t}: {source}")]
    AtStep {
        trial: usize,
        variant: String,
        t: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
