use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain violation: {what} at {point:?}")]
    Domain { what: &'static str, point: Vec<f64> },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("{what} did not converge after {iters} iterations (residual {residual:e})")]
    NotConverged {
        what: &'static str,
        iters: usize,
        residual: f64,
    },

    #[error("insufficient degree {degree}: residual {residual:e}")]
    InsufficientDegree { degree: usize, residual: f64 },

    #[error("norm budget exceeded: {norm:e} > {budget:e}")]
    NormBudget { norm: f64, budget: f64 },

    #[error("invalid map: {0}")]
    InvalidMap(String),

    #[error("not renormalizable: {0}")]
    NotRenormalizable(String),

    #[error("Henon form lost: |pi_y RF - x| = {0:e}")]
    HenonFormLost(f64),

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("index out of range: {what} = {index}, limit {limit}")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("level {level}: {source}")]
    Level { level: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn domain(what: &'static str, point: &[f64]) -> Self {
        Error::Domain {
            what,
            point: point.to_vec(),
        }
    }

    pub(crate) fn at_level(self, level: usize) -> Self {
        match self {
            e @ Error::Level { .. } => e,
            e => Error::Level {
                level,
                source: Box::new(e),
            },
        }
    }

    /// True for failures of an iterative solver (as opposed to invalid input).
    pub fn is_solver_failure(&self) -> bool {
        match self {
            Error::NotConverged { .. }
            | Error::InsufficientDegree { .. }
            | Error::NoSolution(_)
            | Error::NotRenormalizable(_)
            | Error::HenonFormLost(_)
            | Error::Domain { .. } => true,
            Error::Level { source, .. } => source.is_solver_failure(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
