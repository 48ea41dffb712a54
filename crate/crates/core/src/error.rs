use thiserror::Error;

pub type Result<T> = std::result::Result<T, DceError>;

/// Failure modes shared by every pipeline.
///
/// The variants line up with the CLI exit-code classes: configuration,
/// regime (outside the validity window of a formula) and numerical.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DceError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("regime violation: {0}")]
    Regime(String),

    #[error("integration failed at t = {reached}: {reason}")]
    Integration { reached: f64, reason: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("Bogoliubov extraction invalid: {0}")]
    ExtractionInvalid(String),

    #[error("population cutoff insufficient: tail bound {tail:e} at n_cut = {n_cut}")]
    Cutoff { n_cut: usize, tail: f64 },
}

impl DceError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        DceError::Config(msg.into())
    }

    /// True for failures that come from the numerics rather than the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            DceError::Integration { .. }
                | DceError::InvalidState(_)
                | DceError::ExtractionInvalid(_)
                | DceError::Cutoff { .. }
        )
    }
}
