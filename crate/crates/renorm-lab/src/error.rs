use thiserror::Error;

/// Front-end failure, mapped onto the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    /// `1` config, `2` solver, `3` verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Verification(_) => 3,
        }
    }

    /// Solver failures of the numerical core exit with `2`; rejected inputs
    /// and violated hypotheses count as configuration errors.
    pub fn from_core(e: renorm_core::Error) -> Self {
        if is_input_error(&e) {
            CliError::Config(e.to_string())
        } else {
            CliError::Solver(e.to_string())
        }
    }
}

fn is_input_error(e: &renorm_core::Error) -> bool {
    use renorm_core::Error as E;
    match e {
        E::NormBudget { .. } | E::InvalidMap(_) | E::Hypothesis(_) | E::Index { .. } => true,
        E::Level { source, .. } => is_input_error(source),
        _ => false,
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 1);
        assert_eq!(CliError::Solver(String::new()).exit_code(), 2);
        assert_eq!(CliError::Verification(String::new()).exit_code(), 3);
        let e = renorm_core::Error::InsufficientDegree {
            degree: 4,
            residual: f64::NAN,
        };
        assert_eq!(CliError::from_core(e).exit_code(), 2);
        let e = renorm_core::Error::NormBudget {
            norm: 1.0,
            budget: 0.1,
        };
        assert_eq!(CliError::from_core(e).exit_code(), 1);
    }
}
