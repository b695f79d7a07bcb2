//! Reference OAM analyzer: numerical azimuthal decomposition of a sampled
//! field, independent of the sorter optics.
//!
//! The decomposition resamples the field onto polar rings (bilinear
//! interpolation), takes an azimuthal FFT per ring, and integrates the
//! per-ring harmonic power over radius. It is the measurement standard the
//! sorter and the analytic spectrum models are tested against, so it
//! deliberately shares no code with either.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;
use crate::field::ComplexField;

/// Discrete OAM spectrum over a contiguous window of integer `ell`.
#[derive(Clone, Debug, PartialEq)]
pub struct OamSpectrum {
    pub ell_min: i64,
    pub ell_max: i64,
    /// One weight per `ell` in `ell_min..=ell_max`.
    pub weights: Vec<f64>,
}

impl OamSpectrum {
    pub fn zeros(ell_min: i64, ell_max: i64) -> Result<Self> {
        if ell_max < ell_min {
            return Err(Error::InvalidParam(format!(
                "empty ell range {ell_min}..={ell_max}"
            )));
        }
        let n = (ell_max - ell_min + 1) as usize;
        Ok(OamSpectrum { ell_min, ell_max, weights: vec![0.0; n] })
    }

    /// Builds a spectrum from `(ell, weight)` pairs and normalizes it.
    pub fn from_pairs(pairs: &[(i64, f64)]) -> Result<Self> {
        let ell_min = pairs.iter().map(|p| p.0).min().ok_or_else(|| {
            Error::InvalidParam("empty spectrum".into())
        })?;
        let ell_max = pairs.iter().map(|p| p.0).max().unwrap();
        let mut s = Self::zeros(ell_min, ell_max)?;
        for &(ell, w) in pairs {
            *s.weight_mut(ell).unwrap() += w;
        }
        s.normalize()?;
        Ok(s)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Weight at `ell`; zero outside the stored window.
    pub fn weight(&self, ell: i64) -> f64 {
        if ell < self.ell_min || ell > self.ell_max {
            0.0
        } else {
            self.weights[(ell - self.ell_min) as usize]
        }
    }

    pub fn weight_mut(&mut self, ell: i64) -> Option<&mut f64> {
        if ell < self.ell_min || ell > self.ell_max {
            None
        } else {
            Some(&mut self.weights[(ell - self.ell_min) as usize])
        }
    }

    /// Iterates `(ell, weight)` in increasing `ell`.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.weights.iter().enumerate().map(|(i, w)| (self.ell_min + i as i64, *w))
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Rescales to unit total weight; errors on an all-zero spectrum.
    pub fn normalize(&mut self) -> Result<()> {
        let t = self.total();
        if t <= 0.0 {
            return Err(Error::ZeroNorm);
        }
        for w in &mut self.weights {
            *w /= t;
        }
        Ok(())
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.total() - 1.0).abs() <= tol && self.weights.iter().all(|w| *w >= 0.0)
    }

    /// Shannon entropy (nats) of the normalized weights; 0 log 0 := 0.
    pub fn entropy(&self) -> f64 {
        -self
            .weights
            .iter()
            .filter(|w| **w > 0.0)
            .map(|w| w * w.ln())
            .sum::<f64>()
    }

    /// Weight-averaged |ell|.
    pub fn mean_abs_ell(&self) -> f64 {
        self.iter().map(|(ell, w)| w * (ell.abs() as f64)).sum()
    }
}

/// Bilinear sample of the field at physical coordinates (x, y); zero
/// outside the sampled area.
fn bilinear(field: &ComplexField, x: f64, y: f64) -> Complex64 {
    let g = field.grid();
    let fx = x / g.dx + (g.nx / 2) as f64;
    let fy = y / g.dy + (g.ny / 2) as f64;
    if fx < 0.0 || fy < 0.0 || fx > (g.nx - 1) as f64 || fy > (g.ny - 1) as f64 {
        return Complex64::new(0.0, 0.0);
    }
    let ix = (fx.floor() as usize).min(g.nx - 2);
    let iy = (fy.floor() as usize).min(g.ny - 2);
    let tx = fx - ix as f64;
    let ty = fy - iy as f64;
    let v00 = field.at(ix, iy);
    let v10 = field.at(ix + 1, iy);
    let v01 = field.at(ix, iy + 1);
    let v11 = field.at(ix + 1, iy + 1);
    (v00 * (1.0 - tx) + v10 * tx) * (1.0 - ty) + (v01 * (1.0 - tx) + v11 * tx) * ty
}

struct PolarDecomposition {
    /// c_ell(r_j): ring-major, harmonic index in FFT ordering.
    ring_coeffs: Vec<Vec<Complex64>>,
    radii: Vec<f64>,
    dr: f64,
    n_phi: usize,
}

fn decompose_rings(field: &ComplexField) -> PolarDecomposition {
    let g = field.grid();
    let n_r = g.nx / 2;
    let n_phi = 4 * g.nx;
    let px = g.dx.max(g.dy);
    // Largest radius whose full circle stays on sampled pixels.
    let r_cap = g.min_half_extent() - px;
    let dr = r_cap / n_r as f64;
    let mut radii = Vec::with_capacity(n_r);
    let mut ring_coeffs = Vec::with_capacity(n_r);
    let fwd = std::f64::consts::TAU / n_phi as f64;
    for j in 0..n_r {
        let r = (j + 1) as f64 * dr;
        if r < px {
            continue; // sub-pixel rings carry no reliable azimuthal info
        }
        let mut samples: Vec<Complex64> = (0..n_phi)
            .map(|k| {
                let phi = k as f64 * fwd;
                bilinear(field, r * phi.cos(), r * phi.sin())
            })
            .collect();
        fft::fft1(&mut samples);
        let scale = 1.0 / n_phi as f64;
        for v in &mut samples {
            *v *= scale;
        }
        radii.push(r);
        ring_coeffs.push(samples);
    }
    PolarDecomposition { ring_coeffs, radii, dr, n_phi }
}

fn harmonic_index(ell: i64, n_phi: usize) -> usize {
    if ell >= 0 {
        ell as usize
    } else {
        (n_phi as i64 + ell) as usize
    }
}

/// Azimuthal decomposition: normalized OAM power spectrum over
/// `-ell_max ..= ell_max`, plus the unnormalized total azimuthal power
/// (all harmonics), which matches the field's norm^2 inside the sampled
/// disk up to interpolation error.
pub fn azimuthal_decompose_with_total(
    field: &ComplexField,
    ell_max: i64,
) -> Result<(OamSpectrum, f64)> {
    let g = field.grid();
    if ell_max < 0 || ell_max as usize > g.nx {
        return Err(Error::InvalidParam(format!(
            "ell_max {ell_max} outside 0..{} supported by the azimuthal sampling",
            g.nx
        )));
    }
    let dec = decompose_rings(field);
    if dec.radii.is_empty() {
        return Err(Error::InvalidParam("grid too small for polar resampling".into()));
    }
    let n_rings = dec.radii.len();
    // Trapezoid weights in radius with the r measure of the area element.
    let ring_weight = |j: usize| -> f64 {
        let trap = if j == 0 || j == n_rings - 1 { 0.5 } else { 1.0 };
        std::f64::consts::TAU * dec.radii[j] * dec.dr * trap
    };
    let mut total = 0.0;
    for (j, coeffs) in dec.ring_coeffs.iter().enumerate() {
        let w = ring_weight(j);
        total += w * coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>();
    }
    let mut spec = OamSpectrum::zeros(-ell_max, ell_max)?;
    for ell in -ell_max..=ell_max {
        let idx = harmonic_index(ell, dec.n_phi);
        let mut acc = 0.0;
        for (j, coeffs) in dec.ring_coeffs.iter().enumerate() {
            acc += ring_weight(j) * coeffs[idx].norm_sqr();
        }
        *spec.weight_mut(ell).unwrap() = acc;
    }
    spec.normalize()?;
    Ok((spec, total))
}

/// Normalized OAM power spectrum over `-ell_max ..= ell_max`.
pub fn azimuthal_decompose(field: &ComplexField, ell_max: i64) -> Result<OamSpectrum> {
    azimuthal_decompose_with_total(field, ell_max).map(|(s, _)| s)
}

/// Radially integrated complex harmonic amplitudes, for phase-sensitive
/// diagnostics (e.g. rotation tests). Index `i` corresponds to
/// `ell = -ell_max + i`.
pub fn azimuthal_coefficients(field: &ComplexField, ell_max: i64) -> Result<Vec<Complex64>> {
    let g = field.grid();
    if ell_max < 0 || ell_max as usize > g.nx {
        return Err(Error::InvalidParam("ell_max outside supported range".into()));
    }
    let dec = decompose_rings(field);
    let n_rings = dec.radii.len();
    let mut out = Vec::with_capacity((2 * ell_max + 1) as usize);
    for ell in -ell_max..=ell_max {
        let idx = harmonic_index(ell, dec.n_phi);
        let mut acc = Complex64::new(0.0, 0.0);
        for (j, coeffs) in dec.ring_coeffs.iter().enumerate() {
            let trap = if j == 0 || j == n_rings - 1 { 0.5 } else { 1.0 };
            acc += coeffs[idx] * (dec.radii[j] * dec.dr * trap);
        }
        out.push(acc);
    }
    Ok(out)
}

/// Bhattacharyya coefficient `sum sqrt(p_l q_l)` over the overlap of the
/// two windows: 1 for identical spectra, 0 for disjoint support. Both
/// inputs must be normalized.
pub fn spectrum_fidelity(a: &OamSpectrum, b: &OamSpectrum) -> Result<f64> {
    if !a.is_normalized(1e-6) || !b.is_normalized(1e-6) {
        return Err(Error::SpectrumMismatch(
            "spectrum_fidelity wants normalized spectra".into(),
        ));
    }
    let lo = a.ell_min.max(b.ell_min);
    let hi = a.ell_max.min(b.ell_max);
    let mut acc = 0.0;
    for ell in lo..=hi {
        acc += (a.weight(ell) * b.weight(ell)).sqrt();
    }
    Ok(acc.min(1.0))
}
