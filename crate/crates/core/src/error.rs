use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("resolution too coarse: {0}")]
    ResolutionTooCoarse(String),

    #[error("too few Monte Carlo samples: {got} < {min}")]
    TooFewSamples { got: usize, min: usize },

    #[error("node-pair budget exceeded: {pairs} pairs > budget {budget}")]
    BudgetExceeded { pairs: u128, budget: u128 },

    #[error("node budget exceeded: {nodes} nodes > {budget}")]
    NodeBudget { nodes: usize, budget: usize },

    #[error("unsupported exponent: {0}")]
    UnsupportedExponent(String),

    #[error("unsupported method: {0}")]
    UnsupportedMethod(String),

    #[error("flow degenerate: {0}")]
    FlowDegenerate(String),

    #[error("point outside grid domain: {0}")]
    OutOfDomain(String),

    #[error("inversion failed: {0}")]
    InversionFailed(String),

    #[error("incompatible grids: {0}")]
    IncompatibleGrids(String),

    #[error("monotonicity violated: {0}")]
    MonotonicityViolated(String),

    #[error("strip decomposition failed: {0}")]
    DecompositionFailed(String),

    #[error("construction inconsistent: {0}")]
    ConstructionInconsistent(String),

    #[error("strategy not applicable: {0}")]
    StrategyNotApplicable(String),

    #[error("assembly failed: {0}")]
    AssemblyFailed(String),

    #[error("incomplete run: {0}")]
    IncompleteRun(String),

    #[error("bad plan: {0}")]
    BadPlan(String),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error("empty path list")]
    EmptyPath,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
