use thiserror::Error;

use crate::model::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty admissible set at (h={h}, s={s})")]
    EmptyAdmissible { h: usize, s: usize },

    #[error("policy plays inadmissible action {a} at (h={h}, s={s})")]
    Inadmissible { h: usize, s: usize, a: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("validation failed with {} defect(s)", .0.defects.len())]
    Validation(ValidationReport),

    #[error("instance format: {0}")]
    Format(String),

    #[error("bound degenerate: {0}")]
    DegenerateBound(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
