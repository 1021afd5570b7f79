use thiserror::Error;

#[derive(Debug, Error)]
pub enum HfError {
    #[error("front reaches the outer ring of the grid; enlarge the domain")]
    DomainTooSmall,
    #[error("front polyline self-intersects (segments {0} and {1})")]
    SelfIntersecting(usize, usize),
    #[error("front footprint is smaller than a 3x3 block of cells")]
    DegenerateFront,
    #[error("front moved more than one cell pitch since the last collection update")]
    UpdateIntervalViolated,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("toughness regime has no speed dependence; invert in distance instead")]
    SpeedNotInvertible,
    #[error("no external tangent: centre distance {d} does not exceed radius difference {dr}")]
    NoExternalTangent { d: f64, dr: f64 },
    #[error("front segment does not cut the cell")]
    SegmentMissesCell,
    #[error("front folding: {0}")]
    FrontFolding(String),
    #[error("speed equation root not found in [{lo}, {hi}] after {iterations} iterations")]
    RootNotFound { lo: f64, hi: f64, iterations: usize },
    #[error("fixed-point iteration stalled after {iterations} iterations; relative changes {history:?}")]
    FixedPointDiverged { iterations: usize, history: Vec<f64> },
    #[error("self-similar solve did not converge (residual {0:e})")]
    SelfSimilarDiverged(f64),
    #[error("singular linear system in implicit step")]
    SingularSystem,
    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    StepTooLarge { dt: f64, bound: f64 },
    #[error("run became unstable at t = {t}: {reason}")]
    Unstable { t: f64, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, HfError>;
