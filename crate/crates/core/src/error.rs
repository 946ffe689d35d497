use thiserror::Error;

use crate::estimation::PolyModel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Not enough (or malformed) data for the requested operation.
    #[error("data error: {0}")]
    Data(String),

    #[error("identifiability error: {message} (deficient columns: {columns:?})")]
    Identifiability { message: String, columns: Vec<String> },

    /// Iterative estimator did not converge; carries the best iterate found.
    #[error("estimation error after {iterations} iterations: {message}")]
    Estimation {
        message: String,
        iterations: usize,
        best: Box<PolyModel>,
    },

    #[error("model error: {0}")]
    Model(String),

    #[error("controller design error: {0}")]
    Design(String),

    #[error("integration diverged: {0}")]
    Integration(String),

    #[error("simulation diverged at step {step}: {message}")]
    Simulation { step: usize, message: String },

    #[error("angle cap of {cap_deg:.1} deg breached at t = {time:.3} s (angle {angle_deg:.2} deg)")]
    AngleCap {
        time: f64,
        angle_deg: f64,
        cap_deg: f64,
    },

    #[error("fit is undefined: measured output is constant")]
    UndefinedFit,

    #[error("degenerate correlation: {0}")]
    Degenerate(String),

    #[error("not implemented: {0}")]
    NotImplemented(String),

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
