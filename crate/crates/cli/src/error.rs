use mmn_predict::MmnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] MmnError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn config(e: MmnError) -> Self {
        CliError::Config(e.to_string())
    }

    /// 2 for bad input, 3 for unsupported operations, 4 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 1,
            CliError::Model(e) => match e {
                MmnError::Capability(_)
                | MmnError::NoDensity(_)
                | MmnError::UnsupportedCovariance(_)
                | MmnError::UnsupportedOrder { .. } => 3,
                MmnError::Contaminated { .. }
                | MmnError::Numerical(_)
                | MmnError::Window { .. }
                | MmnError::NonNormalizable(_) => 4,
                MmnError::Domain(_)
                | MmnError::Dimension(_)
                | MmnError::DegenerateDirection
                | MmnError::NotPositiveDefinite
                | MmnError::InvalidParameter(_) => 2,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::from(MmnError::Domain("x".into())).exit_code(), 2);
        assert_eq!(
            CliError::from(MmnError::Capability("x".into())).exit_code(),
            3
        );
        assert_eq!(
            CliError::from(MmnError::Contaminated { bad: 3, n: 10 }).exit_code(),
            4
        );
    }
}
