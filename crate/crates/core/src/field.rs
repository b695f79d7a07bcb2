//! Complex scalar fields sampled on a [`GridSpec`] and pointwise optical
//! elements (phase plates, absorbers, apertures).

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Hard or soft-edged circular aperture centered on the grid origin.
#[derive(Clone, Copy, Debug)]
pub struct ApertureSpec {
    /// Cutoff radius in meters.
    pub r_max: f64,
    /// Width of the raised-cosine roll-off in pixels (0 = hard edge). The
    /// transmission falls smoothly from 1 at `r_max - width` to 0 at
    /// `r_max`. Soft default of 2 px keeps edge diffraction ringing out of
    /// the sorter planes.
    pub soft_px: f64,
}

impl ApertureSpec {
    pub fn hard(r_max: f64) -> Self {
        ApertureSpec { r_max, soft_px: 0.0 }
    }

    pub fn soft(r_max: f64) -> Self {
        ApertureSpec { r_max, soft_px: 2.0 }
    }
}

/// A transverse complex field: row-major samples over `grid`.
#[derive(Clone, Debug)]
pub struct ComplexField {
    grid: GridSpec,
    data: Vec<Complex64>,
}

impl ComplexField {
    /// Samples `f(x, y)` (meters) on every pixel. Errors with the pixel
    /// location if `f` produces a non-finite value.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> Complex64 + Sync) -> Result<Self> {
        let mut data = vec![Complex64::new(0.0, 0.0); grid.len()];
        data.par_chunks_mut(grid.nx).enumerate().for_each(|(iy, row)| {
            let y = grid.y(iy);
            for (ix, v) in row.iter_mut().enumerate() {
                *v = f(grid.x(ix), y);
            }
        });
        if let Some(i) = data.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFiniteSample { ix: i % grid.nx, iy: i / grid.nx });
        }
        Ok(ComplexField { grid, data })
    }

    /// Wraps an existing sample buffer (used by file loading and the
    /// propagation routines).
    pub fn from_data(grid: GridSpec, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "buffer has {} samples, grid wants {}",
                data.len(),
                grid.len()
            )));
        }
        Ok(ComplexField { grid, data })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        ComplexField { grid, data: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Consumes the field, returning the raw buffer.
    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    #[inline]
    pub fn at(&self, ix: usize, iy: usize) -> Complex64 {
        self.data[iy * self.grid.nx + ix]
    }

    /// Area-weighted squared L2 norm: `sum |psi|^2 dx dy`.
    /// Summed sequentially so results are bitwise reproducible.
    pub fn norm_sqr(&self) -> f64 {
        let s: f64 = self.data.iter().map(|v| v.norm_sqr()).sum();
        s * self.grid.pixel_area()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Rescales to unit norm. Errors on an all-zero field.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let s = 1.0 / n;
        self.data.par_iter_mut().for_each(|v| *v *= s);
        Ok(())
    }

    /// Multiplies by the unit-modulus factor `exp(i * phase(x, y))`, with an
    /// optional absorption exponent: amplitude is further multiplied by
    /// `exp(-absorption(x, y))`. Absorption must be non-negative (passive
    /// element); phase must be finite.
    pub fn apply_phase(
        &mut self,
        phase: impl Fn(f64, f64) -> f64 + Sync,
        absorption: Option<&(dyn Fn(f64, f64) -> f64 + Sync)>,
    ) -> Result<()> {
        let grid = self.grid;
        let flags: Vec<u8> = self
            .data
            .par_chunks_mut(grid.nx)
            .enumerate()
            .map(|(iy, row)| {
                let y = grid.y(iy);
                let mut flag = 0u8;
                for (ix, v) in row.iter_mut().enumerate() {
                    let x = grid.x(ix);
                    let p = phase(x, y);
                    if !p.is_finite() {
                        flag |= 1;
                        continue;
                    }
                    let mut factor = Complex64::from_polar(1.0, p);
                    if let Some(a) = absorption {
                        let av = a(x, y);
                        if !(av >= 0.0) {
                            flag |= 2;
                            continue;
                        }
                        factor *= (-av).exp();
                    }
                    *v *= factor;
                }
                flag
            })
            .collect();
        let flag = flags.iter().fold(0u8, |acc, f| acc | f);
        if flag & 1 != 0 {
            return Err(Error::InvalidParam("phase function produced a non-finite value".into()));
        }
        if flag & 2 != 0 {
            return Err(Error::InvalidParam("absorption must be non-negative".into()));
        }
        Ok(())
    }

    /// Applies a centered circular aperture with an optional raised-cosine
    /// soft edge. Errors if the aperture does not fit one pixel inside the
    /// grid.
    pub fn apply_aperture(&mut self, ap: &ApertureSpec) -> Result<()> {
        let grid = self.grid;
        let px = grid.dx.max(grid.dy);
        let limit = grid.min_half_extent() - px;
        if !(ap.r_max > 0.0 && ap.r_max < limit) {
            return Err(Error::ApertureTooLarge { r_max: ap.r_max, limit });
        }
        if ap.soft_px < 0.0 {
            return Err(Error::InvalidParam("aperture soft width must be >= 0".into()));
        }
        let soft = ap.soft_px * px;
        let r_inner = ap.r_max - soft;
        self.data.par_chunks_mut(grid.nx).enumerate().for_each(|(iy, row)| {
            let y = grid.y(iy);
            for (ix, v) in row.iter_mut().enumerate() {
                let r = grid.x(ix).hypot(y);
                if r >= ap.r_max {
                    *v = Complex64::new(0.0, 0.0);
                } else if soft > 0.0 && r > r_inner {
                    let t = (r - r_inner) / soft;
                    *v *= 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
                }
            }
        });
        Ok(())
    }

    /// Per-pixel intensity `|psi|^2` (row-major). The area-weighted sum of
    /// the result equals `norm_sqr()`.
    pub fn intensity(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.norm_sqr()).collect()
    }

    /// Intensity-weighted mean squared radius `<r^2>`. For a Gaussian
    /// amplitude `exp(-r^2/w^2)` this equals `w^2/2`; used as a beam-width
    /// diagnostic.
    pub fn radial_second_moment(&self) -> f64 {
        let grid = self.grid;
        let mut wsum = 0.0;
        let mut r2sum = 0.0;
        for (iy, row) in self.data.chunks(grid.nx).enumerate() {
            let y = grid.y(iy);
            for (ix, v) in row.iter().enumerate() {
                let x = grid.x(ix);
                let w = v.norm_sqr();
                wsum += w;
                r2sum += w * (x * x + y * y);
            }
        }
        if wsum == 0.0 {
            0.0
        } else {
            r2sum / wsum
        }
    }
}
