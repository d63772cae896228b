//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is singular (det = 0)")]
    SingularMatrix,

    #[error("unsupported regime: {0} (only d = 1 or N = 1 is supported)")]
    UnsupportedRegime(String),

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("working box too small: {0}")]
    BoxTooSmall(String),

    #[error(
        "generator family is numerically degenerate: B/A ratio {ratio:.3e} exceeds cap {cap:.3e}"
    )]
    DegenerateGenerators { ratio: f64, cap: f64 },

    #[error(
        "truncation loss: boundary sample magnitude {worst:.3e} exceeds 1e-12 at |alpha| = {k_sym}"
    )]
    TruncationLoss { worst: f64, k_sym: i64 },

    #[error("evaluation point {point:?} is outside the reliable region")]
    OutOfReliableRegion { point: Vec<f64> },

    #[error("modulation field is not left invertible: A_G = {a_g:.3e} <= floor {floor:.3e}")]
    NotLeftInvertible { a_g: f64, floor: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("space element carries no source patch function; cannot verify the sampling identity")]
    MissingProvenance,

    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
