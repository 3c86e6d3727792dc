use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("accuracy error: {0}")]
    Accuracy(String),

    #[error("singular evaluation: {0}")]
    Singularity(String),

    #[error("evaluation point too close to the scatterers: {0}")]
    EvaluationPoint(String),

    #[error("solvability condition violated: {0}")]
    Solvability(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("solution diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("delayed history query outside the recorded past (t = {t}, recorded up to {recorded})")]
    HistoryGap { t: f64, recorded: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// True for failures caused by the inputs rather than by a solver.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Parameter(_) | Error::Config(_) | Error::Usage(_) | Error::Resolution(_) => true,
            Error::Stage { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}
