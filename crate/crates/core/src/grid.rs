//! Uniform sampling grids for transverse field planes.

use crate::error::{Error, Result};

/// Geometry of one transverse plane.
///
/// The coordinate origin sits on the center pixel (`nx/2`, `ny/2`), x points
/// right (increasing column index), y points up (increasing row index), and
/// the azimuth `phi = atan2(y, x)` lies in `(-pi, pi]`. Power-of-two sizes
/// keep every plane FFT-friendly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    /// Number of columns (x samples); power of two, at least 16.
    pub nx: usize,
    /// Number of rows (y samples); power of two, at least 16.
    pub ny: usize,
    /// Pixel pitch along x in meters.
    pub dx: f64,
    /// Pixel pitch along y in meters.
    pub dy: f64,
    /// Wavelength of the beam in meters.
    pub wavelength: f64,
}

fn is_pow2_ge16(n: usize) -> bool {
    n >= 16 && n.is_power_of_two()
}

impl GridSpec {
    /// Builds a validated grid. `dx`, `dy`, `wavelength` must be positive
    /// and finite; `nx`, `ny` powers of two >= 16.
    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64, wavelength: f64) -> Result<Self> {
        if !is_pow2_ge16(nx) {
            return Err(Error::BadGridSize(nx));
        }
        if !is_pow2_ge16(ny) {
            return Err(Error::BadGridSize(ny));
        }
        for v in [dx, dy, wavelength] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::BadGridScale(v));
            }
        }
        Ok(GridSpec { nx, ny, dx, dy, wavelength })
    }

    /// Square grid with equal pitch in both directions.
    pub fn square(n: usize, pitch: f64, wavelength: f64) -> Result<Self> {
        Self::new(n, n, pitch, pitch, wavelength)
    }

    /// x coordinate of column `ix` in meters.
    #[inline]
    pub fn x(&self, ix: usize) -> f64 {
        (ix as f64 - (self.nx / 2) as f64) * self.dx
    }

    /// y coordinate of row `iy` in meters.
    #[inline]
    pub fn y(&self, iy: usize) -> f64 {
        (iy as f64 - (self.ny / 2) as f64) * self.dy
    }

    /// Half-extent along x in meters (`nx/2 * dx`).
    #[inline]
    pub fn half_extent_x(&self) -> f64 {
        (self.nx / 2) as f64 * self.dx
    }

    /// Half-extent along y in meters.
    #[inline]
    pub fn half_extent_y(&self) -> f64 {
        (self.ny / 2) as f64 * self.dy
    }

    /// Smaller of the two half-extents: radius of the largest centered disk
    /// fully inside the grid.
    #[inline]
    pub fn min_half_extent(&self) -> f64 {
        self.half_extent_x().min(self.half_extent_y())
    }

    /// Pixel area in square meters; the quadrature weight for norms.
    #[inline]
    pub fn pixel_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Number of samples.
    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Polar coordinates `(r, phi)` of pixel (`ix`, `iy`); `phi` in
    /// `(-pi, pi]` with `atan2(0, 0) = 0` at the exact center.
    #[inline]
    pub fn r_phi(&self, ix: usize, iy: usize) -> (f64, f64) {
        let x = self.x(ix);
        let y = self.y(iy);
        (x.hypot(y), y.atan2(x))
    }
}
