//! Wave-optical simulation of a log-polar orbital-angular-momentum (OAM)
//! sorter for electron beams.
//!
//! The crate models the full measurement chain:
//!
//! - scalar complex fields on uniform grids with FFT-based free-space
//!   propagation and ideal focal-plane transforms ([`field`], [`propagate`]),
//! - beam sources: Gaussians, ring vortices, superpositions, and diffractive
//!   generator masks with their analytic OAM spectra ([`sources`]),
//! - the two-element conformal-mapping sorter (unwrapper + phase corrector +
//!   Fourier lens) that disperses OAM states along a line ([`sorter`]),
//! - the azimuthal-decomposition reference analyzer used to validate every
//!   other stage ([`oracle`]),
//! - phase imprint of a magnetic dipole and the Bessel-function model of its
//!   OAM spectrum ([`dipole`]),
//! - the detector-trace processing pipeline: background subtraction,
//!   maximum-entropy deconvolution, and spectrum binning ([`spectro`]),
//! - file formats for fields, images, traces, and spectra ([`io`]).
//!
//! All numerics are `f64`, deterministic, and covered by unit, property, and
//! acceptance tests (`tests/acceptance.rs`).

pub mod bessel;
pub mod constants;
pub mod detector;
pub mod dipole;
pub mod error;
pub mod field;
pub mod fft;
pub mod grid;
pub mod io;
pub mod oracle;
pub mod propagate;
pub mod quad;
pub mod sorter;
pub mod sources;
pub mod spectro;

pub use error::{Error, Result};
pub use field::{ApertureSpec, ComplexField};
pub use grid::GridSpec;
pub use oracle::OamSpectrum;
