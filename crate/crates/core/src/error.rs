use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {what} = {index} (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("infeasible parameters: {0}")]
    InfeasibleParams(String),

    /// One of the lower-bound assumptions on `p_X`, `p_V` or `gamma` fails.
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("xi = {xi} must satisfy 0 <= xi < p_V = {p_v}")]
    XiTooLarge { xi: f64, p_v: f64 },

    #[error("invalid ratings data: {0}")]
    InvalidRatings(String),

    #[error("context {0} has no users assigned")]
    EmptyCluster(usize),

    #[error("missing knowledge for agent: {0}")]
    MissingKnowledge(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// True for errors caused by an instance that breaks the modelling
    /// assumptions rather than by malformed input.
    pub fn is_assumption_violation(&self) -> bool {
        matches!(self, Error::AssumptionViolated(_))
    }
}
