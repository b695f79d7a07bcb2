//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid dimension {0} is not a power of two >= 16")]
    BadGridSize(usize),

    #[error("grid spacing/wavelength must be positive and finite, got {0}")]
    BadGridScale(f64),

    #[error("field sample at pixel ({ix}, {iy}) is not finite")]
    NonFiniteSample { ix: usize, iy: usize },

    #[error("field norm is zero; cannot normalize")]
    ZeroNorm,

    #[error("field grids are incompatible: {0}")]
    GridMismatch(String),

    #[error("aperture radius {r_max} does not fit inside the grid (limit {limit})")]
    ApertureTooLarge { r_max: f64, limit: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("no peak found above the noise floor")]
    NoPeak,

    #[error("ambiguous reference trace: {0}")]
    AmbiguousReference(String),

    #[error("calibration requires at least two distinct OAM reference values")]
    UnderdeterminedCalibration,

    #[error("trace has no calibration attached")]
    MissingCalibration,

    #[error("point-spread function is invalid: {0}")]
    BadPsf(String),

    #[error("spectra are not comparable: {0}")]
    SpectrumMismatch(String),

    #[error("file format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
