use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}", anchored(.path, *.line, .msg))]
    Config {
        path: PathBuf,
        line: Option<usize>,
        msg: String,
    },

    #[error("{0}")]
    Core(#[from] fdemulti::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn anchored(path: &std::path::Path, line: Option<usize>, msg: &str) -> String {
    match line {
        Some(l) => format!("{}:{l}: {msg}", path.display()),
        None => format!("{}: {msg}", path.display()),
    }
}

impl CliError {
    /// 1 for configuration and i/o problems, 2 for an infeasible exponent,
    /// 3 for numerical breakdown.
    pub fn exit_code(&self) -> u8 {
        use fdemulti::Error as E;
        match self {
            CliError::Core(E::InfeasibleExponent { .. }) => 2,
            CliError::Core(
                E::Range { .. } | E::NumericalFailure { .. } | E::SingularIntegrand(_),
            ) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
