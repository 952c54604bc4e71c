use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("range error: {0}")]
    Range(String),
    /// The graph metric J_i became non-positive somewhere on an arc.
    #[error("fold-over on arc {arc} at node {node}")]
    FoldOver { arc: usize, node: usize },
    /// The junction system (I − 𝔅𝓙) left the regime where it is safely invertible.
    #[error("regime error: {0}")]
    Regime(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("admissibility error: {0}")]
    Admissibility(String),
    #[error("chart-domain error: {0}")]
    ChartDomain(String),
}

pub type Result<T> = std::result::Result<T, Error>;
