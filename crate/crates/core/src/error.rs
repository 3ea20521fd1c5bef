use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeamError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("problem is infeasible: {0}")]
    Infeasible(String),
    #[error("solver failed to converge: {0}")]
    NumericalFailure(String),
    #[error("all {candidates} Gaussian randomization candidates were infeasible")]
    RandomizationExhausted { candidates: usize },
    #[error("matrix has rank {rank}, expected one")]
    RankNotOne { rank: usize },
    #[error("matrix is zero; no principal direction")]
    ZeroMatrix,
    #[error("subproblem at BS {bs} infeasible in round {round} after {backtracks} backtracks")]
    SubproblemInfeasible {
        bs: usize,
        round: usize,
        backtracks: usize,
    },
    #[error("solution is not optimal")]
    NonOptimalSolution,
    #[error("i/o: {0}")]
    Io(String),
    #[error("closed-form signaling load requires U divisible by B (U={users}, B={bs})")]
    UnequalCellLoad { users: usize, bs: usize },
}

pub type Result<T> = std::result::Result<T, BeamError>;

impl BeamError {
    /// Stable snake_case identifier for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::InvalidConfig(_) => "invalid_config",
            Self::Infeasible(_) => "infeasible",
            Self::NumericalFailure(_) => "numerical_failure",
            Self::RandomizationExhausted { .. } => "randomization_exhausted",
            Self::RankNotOne { .. } => "rank_not_one",
            Self::ZeroMatrix => "zero_matrix",
            Self::SubproblemInfeasible { .. } => "subproblem_infeasible",
            Self::NonOptimalSolution => "non_optimal_solution",
            Self::Io(_) => "io",
            Self::UnequalCellLoad { .. } => "unequal_cell_load",
        }
    }
}
