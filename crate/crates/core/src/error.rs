use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("load error at line {line}: {message}")]
    Load { line: usize, message: String },

    #[error("non-binary cloud_label at line {line}")]
    NonBinaryLabel { line: usize },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("split `{which}` would be empty (n = {n})")]
    EmptySplit { which: &'static str, n: usize },

    #[error("non-finite gradient in epoch {epoch}, batch {batch}")]
    NonFiniteGradient { epoch: usize, batch: usize },

    #[error("certification infeasible: slack {slack:.6} leaves no admissible candidate; increase |V| or zeta")]
    CertificationInfeasible { slack: f64 },

    #[error("target accuracy {target} unattainable; best achieved {best_accuracy:.6}")]
    TargetUnattainable { target: f64, best_accuracy: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("geometric degeneracy: {0}")]
    Geometry(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
