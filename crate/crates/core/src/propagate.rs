//! Free-space propagation and ideal focal-plane (2f) transforms.
//!
//! Free space uses the band-limited angular-spectrum method: the field
//! spectrum is multiplied by the exact non-paraxial transfer function, with
//! the carrier `exp(i k z)` removed so zero distance is exactly the
//! identity, and with the transfer function zeroed beyond the
//! aliasing-free band for the requested distance. The computational grid
//! (and pixel pitch) is unchanged, which keeps successive element planes
//! colocated.
//!
//! The focal-plane transform models an ideal 2f lens relay: an exact
//! Fourier transform onto a plane whose pitch is `lambda f / (N dx)`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::{fft2, fftshift2, freq, ifft2};
use crate::field::ComplexField;
use crate::grid::GridSpec;

/// Propagates the field a distance `z` (meters, may be negative) through
/// free space. Pixel pitch is preserved. Spectral components beyond the
/// band limit `1 / (lambda sqrt((2 dnu z)^2 + 1))` would alias for this
/// distance and are removed; fields whose spectrum stays inside the limit
/// propagate with their norm conserved.
pub fn propagate(field: &ComplexField, z: f64) -> Result<ComplexField> {
    if !z.is_finite() {
        return Err(Error::InvalidParam("propagation distance must be finite".into()));
    }
    if z == 0.0 {
        return Ok(field.clone());
    }
    let grid = *field.grid();
    let (nx, ny) = (grid.nx, grid.ny);
    let lam = grid.wavelength;
    let inv_lam2 = 1.0 / (lam * lam);

    // Matsushima-style band limits per axis for an aliasing-free kernel.
    let dnu_x = 1.0 / (nx as f64 * grid.dx);
    let dnu_y = 1.0 / (ny as f64 * grid.dy);
    let limit_x = 1.0 / (lam * ((2.0 * dnu_x * z).powi(2) + 1.0).sqrt());
    let limit_y = 1.0 / (lam * ((2.0 * dnu_y * z).powi(2) + 1.0).sqrt());

    let mut data = field.data().to_vec();
    fft2(&mut data, nx, ny);
    let two_pi_z = 2.0 * std::f64::consts::PI * z;
    data.par_chunks_mut(nx).enumerate().for_each(|(iy, row)| {
        let ny_freq = freq(iy, ny, grid.dy);
        for (ix, v) in row.iter_mut().enumerate() {
            let nx_freq = freq(ix, nx, grid.dx);
            let nu2 = nx_freq * nx_freq + ny_freq * ny_freq;
            if nu2 > inv_lam2 || nx_freq.abs() > limit_x || ny_freq.abs() > limit_y {
                *v = Complex64::new(0.0, 0.0);
                continue;
            }
            // Carrier-free longitudinal phase: kz - k, with kz from the
            // exact dispersion relation. Written via the difference quotient
            // to avoid catastrophic cancellation at small nu.
            let kz_minus_k = -nu2 / ((inv_lam2 - nu2).sqrt() + 1.0 / lam);
            *v *= Complex64::from_polar(1.0, two_pi_z * kz_minus_k);
        }
    });
    ifft2(&mut data, nx, ny);
    ComplexField::from_data(grid, data)
}

/// Transforms the field to the back focal plane of an ideal lens with focal
/// length `f` (a 2f relay): an exact scaled Fourier transform. The returned
/// field lives on a new grid with pitch `lambda f / (N dx)` per axis; the
/// area-weighted norm is conserved exactly (up to FFT rounding).
pub fn to_focal_plane(field: &ComplexField, f: f64) -> Result<ComplexField> {
    if !(f.is_finite() && f > 0.0) {
        return Err(Error::InvalidParam(format!("focal length must be positive, got {f}")));
    }
    let grid = *field.grid();
    let (nx, ny) = (grid.nx, grid.ny);
    let lam = grid.wavelength;

    let mut data = field.data().to_vec();
    fftshift2(&mut data, nx, ny);
    fft2(&mut data, nx, ny);
    fftshift2(&mut data, nx, ny);

    // Physical amplitude of the Fresnel diffraction integral in the focal
    // plane: (1 / (i lambda f)) * dx * dy per sample.
    let scale = Complex64::new(0.0, -1.0) * (grid.dx * grid.dy / (lam * f));
    data.par_iter_mut().for_each(|v| *v *= scale);

    let out_grid = GridSpec::new(
        nx,
        ny,
        lam * f / (nx as f64 * grid.dx),
        lam * f / (ny as f64 * grid.dy),
        lam,
    )?;
    ComplexField::from_data(out_grid, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gaussian_field(grid: GridSpec, w0: f64) -> ComplexField {
        ComplexField::from_fn(grid, |x, y| {
            Complex64::new((-(x * x + y * y) / (w0 * w0)).exp(), 0.0)
        })
        .unwrap()
    }

    #[test]
    fn zero_distance_is_identity() {
        let g = GridSpec::square(64, 1e-6, 2e-12).unwrap();
        let f = gaussian_field(g, 10e-6);
        let p = propagate(&f, 0.0).unwrap();
        assert_eq!(f.data(), p.data());
    }

    #[test]
    fn norm_conserved_and_round_trip() {
        let g = GridSpec::square(128, 1e-6, 2e-12).unwrap();
        let f = gaussian_field(g, 12e-6);
        let z = 0.05;
        let fwd = propagate(&f, z).unwrap();
        assert!((fwd.norm_sqr() / f.norm_sqr() - 1.0).abs() < 1e-10);
        let back = propagate(&fwd, -z).unwrap();
        let mut err: f64 = 0.0;
        for (a, b) in back.data().iter().zip(f.data()) {
            err = err.max((a - b).norm());
        }
        assert!(err < 1e-8 * f.norm(), "round-trip error {err}");
    }

    #[test]
    fn propagation_distances_compose() {
        let g = GridSpec::square(128, 1e-6, 2e-12).unwrap();
        let f = gaussian_field(g, 12e-6);
        let a = propagate(&propagate(&f, 0.02).unwrap(), 0.03).unwrap();
        let b = propagate(&f, 0.05).unwrap();
        let mut err: f64 = 0.0;
        for (x, y) in a.data().iter().zip(b.data()) {
            err = err.max((x - y).norm());
        }
        assert!(err < 1e-10 * f.norm());
    }

    #[test]
    fn gaussian_spreads_like_theory() {
        // Waist evolution w(z) = w0 sqrt(1 + (lambda z / (pi w0^2))^2),
        // checked through the measured second moment <r^2> = w^2/2.
        let g = GridSpec::square(256, 1e-6, 2e-12).unwrap();
        let w0 = 10e-6;
        let f = gaussian_field(g, w0);
        let zr = PI * w0 * w0 / g.wavelength;
        let z = 1.2 * zr;
        let p = propagate(&f, z).unwrap();
        let w_meas = (2.0 * p.radial_second_moment()).sqrt();
        let w_theory = w0 * (1.0 + (z / zr).powi(2)).sqrt();
        assert!(
            (w_meas / w_theory - 1.0).abs() < 0.01,
            "w_meas {w_meas} vs w_theory {w_theory}"
        );
    }

    #[test]
    fn focal_plane_pitch_and_norm() {
        let g = GridSpec::square(128, 1e-6, 2e-12).unwrap();
        let f = gaussian_field(g, 10e-6);
        let fl = 0.5;
        let out = to_focal_plane(&f, fl).unwrap();
        let d2 = g.wavelength * fl / (g.nx as f64 * g.dx);
        assert!((out.grid().dx / d2 - 1.0).abs() < 1e-14);
        assert!((out.norm_sqr() / f.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tilt_maps_to_displaced_spot() {
        // A tilted plane wave exp(i k_v y) focuses at y = f k_v lambda/(2 pi).
        let g = GridSpec::square(128, 1e-6, 2e-12).unwrap();
        let cycles = 9.0; // integer cycles across the grid -> exact bin
        let nu = cycles / (g.ny as f64 * g.dy);
        let k_v = 2.0 * PI * nu;
        let f = ComplexField::from_fn(g, |_, y| Complex64::from_polar(1.0, k_v * y)).unwrap();
        let fl = 0.25;
        let out = to_focal_plane(&f, fl).unwrap();
        let inten = out.intensity();
        let (nx, ny) = (out.grid().nx, out.grid().ny);
        let peak = (0..nx * ny).max_by(|a, b| inten[*a].total_cmp(&inten[*b])).unwrap();
        let (piy, pix) = (peak / nx, peak % nx);
        assert_eq!(pix, nx / 2);
        let y_pred = fl * k_v * g.wavelength / (2.0 * PI);
        let y_meas = out.grid().y(piy);
        assert!((y_meas - y_pred).abs() <= out.grid().dy + 1e-15);
    }

    #[test]
    fn centered_gaussian_stays_centered_and_transforms_width() {
        let g = GridSpec::square(128, 1e-6, 2e-12).unwrap();
        let w0 = 9e-6;
        let f = gaussian_field(g, w0);
        let fl = 0.4;
        let out = to_focal_plane(&f, fl).unwrap();
        // Fourier pair of exp(-r^2/w0^2) has waist lambda f / (pi w0).
        let w_expect = g.wavelength * fl / (PI * w0);
        let w_meas = (2.0 * out.radial_second_moment()).sqrt();
        assert!((w_meas / w_expect - 1.0).abs() < 1e-3);
        let inten = out.intensity();
        let nx = out.grid().nx;
        let peak = (0..inten.len()).max_by(|a, b| inten[*a].total_cmp(&inten[*b])).unwrap();
        assert_eq!((peak % nx, peak / nx), (nx / 2, nx / 2));
    }
}
