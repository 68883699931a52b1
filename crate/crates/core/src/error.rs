use thiserror::Error;

pub type Result<T, E = MmdError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MmdError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("graph with radius {radius} has {components} connected components; increase the graph radius")]
    Disconnected { radius: f64, components: usize },

    #[error("neighborhood of point {point} is not unisolvent for the {basis} basis ({neighbors} neighbors)")]
    Unisolvency {
        point: usize,
        basis: &'static str,
        neighbors: usize,
    },

    #[error("rank-deficient least-squares system (pivot ratio {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("right-hand side violates the compatibility condition 1^T b = 0 ({context}: relative sum {relative_sum:e})")]
    Incompatible { context: String, relative_sum: f64 },

    #[error(
        "solver did not converge after {iterations} iterations (relative residual {residual:e})"
    )]
    NotConverged { iterations: usize, residual: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
