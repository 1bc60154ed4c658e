use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },

    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },

    #[error("[{context}] {source}")]
    Module { context: String, source: liescale::Error },
}

impl CliError {
    pub fn config(path: &str, message: impl Into<String>) -> Self {
        CliError::Config { path: path.into(), message: message.into() }
    }

    pub fn module(context: &str) -> impl FnOnce(liescale::Error) -> Self + '_ {
        move |source| CliError::Module { context: context.into(), source }
    }

    /// 2 for configuration problems, 3 for exhausted caps, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use liescale::Error as E;
        match self {
            CliError::Config { .. } | CliError::Read { .. } | CliError::Write { .. } => 2,
            CliError::Module { source, .. } if source.is_resource_cap() => 3,
            CliError::Module { source, .. } => match source {
                E::InvalidKernel(_)
                | E::InvalidArgument(_)
                | E::InvalidMeasure(_)
                | E::InvalidElement { .. }
                | E::OutsideChart { .. }
                | E::ModelMismatch { .. }
                | E::RangeTooNarrow { .. } => 2,
                _ => 1,
            },
        }
    }
}
