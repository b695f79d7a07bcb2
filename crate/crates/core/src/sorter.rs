//! Log-polar coordinate-transform OAM sorter.
//!
//! The sorter is a two-element optical train. The first element (the
//! "unwrapper") carries a phase whose gradient realizes the conformal map
//! u = -a ln(r/b), v = a phi on the following focal plane: circles about
//! the axis become horizontal line segments, and azimuthal phase winding
//! becomes a linear phase along v. The second element (the "corrector")
//! cancels the residual phase that the stationary-phase mapping leaves
//! behind, so that a final focusing step turns each OAM component into a
//! diffraction-limited spot displaced linearly in ell along v.
//!
//! The map parameters a and b are dimensionless: coordinates entering the
//! element phases are expressed in units of the grid half-extent, so one
//! parameter set serves any physical pixel pitch. Both elements exist in a
//! smooth (kinoform) variant and a binarized variant; the binarized
//! elements diffract into multiple orders of which a configurable
//! rectangular window in the corrector plane keeps one.
//!
//! Resolution scaling. On an N-pixel grid the stationary-phase mapping
//! produces spots of ~2 sqrt(a g / r) pixels in the corrector plane while
//! the unwrapped stripe is 4 pi a g pixels long (g = `map_gain`), so the
//! number of resolvable OAM states grows as pi sqrt(a g r). The gain
//! multiplies both element phases and scales the log-polar image by the
//! same factor; it is the simulation counterpart of choosing how strongly
//! the physical elements magnify the map relative to the beam. g = 1
//! reproduces the textbook phase profiles literally but resolves only a
//! couple of states on affordable grids; the default g = N/40 grows with
//! the grid so the resolvable range does too, while the dispersion per
//! state stays fixed (~3.2 detector pixels at the default oversampling).

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{ApertureSpec, ComplexField};
use crate::grid::GridSpec;
use crate::propagate::to_focal_plane;

/// Parameters of the two-element sorter.
#[derive(Clone, Debug)]
pub struct SorterParams {
    /// Map scale (dimensionless, grid-relative units).
    pub a: f64,
    /// Map reference radius (dimensionless fraction of the half-extent).
    pub b: f64,
    /// Map magnification: both element phases and the log-polar image
    /// scale by this factor, and OAM resolution grows as its square root
    /// (see the module docs). 1.0 gives the literal textbook profiles.
    pub map_gain: f64,
    /// Oversampling factor of the detector plane: the corrector-plane
    /// field is zero-padded to `detector_pad` times the grid before the
    /// final transform, which samples the same physical detector span at
    /// 1/pad of the pitch. Padding is exactly energy-conserving; it exists
    /// so the few-pixel dispersion per OAM unit is resolved well enough
    /// for sub-bin peak positions to be representable. 1 disables it.
    pub detector_pad: usize,
    /// Carrier parameter of the binarized corrector (cycles per unit v).
    pub c: f64,
    /// Binary phase depth of the unwrapper: levels are +-phi0/ sign. The
    /// level separation is 2*phi0, so phi0 = pi/2 gives the 0/pi hologram
    /// that suppresses the undiffracted order entirely.
    pub phi0: f64,
    /// Binary phase depth of the corrector, same convention as phi0.
    pub phi1: f64,
    /// Focal length of the transform from element 1 to the corrector
    /// plane, meters.
    pub f_unwrap: f64,
    /// Focal length of the final focusing transform, meters.
    pub f_fourier: f64,
    /// Beam truncation applied before the first element.
    pub aperture: ApertureSpec,
    /// Use the binarized elements instead of the smooth kinoforms.
    pub binarized: bool,
    /// Support window (u_lo, u_hi) of the corrector phase in log-polar
    /// units; `None` derives it from the aperture so it covers exactly the
    /// band where the mapped annulus can land. The corrector phase grows
    /// exponentially outside that band and must not be sampled there.
    pub corrector_window: Option<(f64, f64)>,
    /// Binarized mode only: rectangular amplitude window (u_lo, u_hi)
    /// selecting one diffraction order of the unwrapper in the corrector
    /// plane. `None` selects the order mapped to u < 0 automatically.
    pub order_window: Option<(f64, f64)>,
}

/// Focal length for which the focal-plane pixel pitch equals the input
/// pitch (lambda f / (N dx) = dx), keeping every sorter plane on the same
/// grid geometry.
pub fn unit_focal_length(grid: &GridSpec) -> f64 {
    grid.nx as f64 * grid.dx * grid.dx / grid.wavelength
}

impl SorterParams {
    /// Default smooth-variant parameters for a given grid: a = 2,
    /// b = 0.01, aperture at 45% of the half-extent, unit-magnification
    /// focal lengths.
    pub fn for_grid(grid: &GridSpec) -> Self {
        let f = unit_focal_length(grid);
        SorterParams {
            a: 2.0,
            b: 0.01,
            map_gain: grid.nx as f64 / 40.0,
            detector_pad: 2,
            c: 0.6,
            phi0: PI / 2.0,
            phi1: PI / 2.0,
            f_unwrap: f,
            f_fourier: f,
            aperture: ApertureSpec::soft(0.45 * grid.min_half_extent()),
            binarized: false,
            corrector_window: None,
            order_window: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.a > 0.0
            && self.a.is_finite()
            && self.b > 0.0
            && self.b.is_finite()
            && self.map_gain > 0.0
            && self.map_gain.is_finite()
            && (1..=8).contains(&self.detector_pad)
            && self.c >= 0.0
            && self.c.is_finite()
            && self.phi0 > 0.0
            && self.phi0 <= TAU
            && self.phi1 > 0.0
            && self.phi1 <= TAU
            && self.f_unwrap > 0.0
            && self.f_unwrap.is_finite()
            && self.f_fourier > 0.0
            && self.f_fourier.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("bad sorter parameters: {self:?}")))
        }
    }

    /// Detector displacement per unit of OAM, in detector pixels, for an
    /// n-pixel input grid. Follows from the map scale: an input phase
    /// winding ell phi becomes a tilt of ell/(2 a g) radians per
    /// corrector-plane pixel along v, which the final transform turns
    /// into a shift of pad * n / (4 pi a g) detector pixels.
    pub fn dispersion_px(&self, n: usize) -> f64 {
        (self.detector_pad * n) as f64 / (4.0 * PI * self.a * self.map_gain)
    }

    /// Default corrector support window in log-polar u units, covering
    /// radii from two input pixels out to just beyond the aperture. The
    /// upper edge is additionally clamped so the mapped band (scaled by
    /// `map_gain` onto the plane) stays inside the grid.
    fn auto_corrector_window(&self, n: usize, r_max_rel: f64) -> (f64, f64) {
        let u_lo = -self.a * (1.05 * r_max_rel / self.b).ln();
        let u_hi = self.a * (n as f64 * self.b / 4.0).ln();
        let u_grid = 0.25 * n as f64 / self.map_gain - 1.0;
        let u_hi = u_hi.min(u_grid);
        (u_lo, u_hi.max(u_lo + 2.0))
    }
}

/// The log-polar map itself: u = -a ln(r/b), v = a phi.
pub fn log_polar_map(x: f64, y: f64, a: f64, b: f64) -> Result<(f64, f64)> {
    if x == 0.0 && y == 0.0 {
        return Err(Error::InvalidParam("log-polar map is singular at the origin".into()));
    }
    let r = x.hypot(y);
    Ok((-a * (r / b).ln(), a * y.atan2(x)))
}

/// Phase of the unwrapping element at grid-relative coordinates (x and y
/// in units of the half-extent, so the grid spans [-1, 1)). The smooth
/// kinoform is 2 pi a g [y atan2(y,x) - x ln(r/b) + x]; its gradient is
/// 2 pi a g (-ln(r/b), phi), which is what places each input point at its
/// log-polar image, magnified by the gain g, on the focal plane. The
/// binarized variant is phi0 * sign(sin(smooth)). Origin returns 0 by
/// convention.
pub fn unwrapper_phase(x: f64, y: f64, params: &SorterParams) -> f64 {
    if x == 0.0 && y == 0.0 {
        return 0.0;
    }
    let r = x.hypot(y);
    let smooth = TAU * params.a * params.map_gain
        * (y * y.atan2(x) - x * (r / params.b).ln() + x);
    if params.binarized {
        let s = smooth.sin();
        if s == 0.0 {
            0.0
        } else {
            params.phi0 * s.signum()
        }
    } else {
        smooth
    }
}

/// Phase of the corrector element at grid-relative coordinates of the
/// corrector plane; `n` is the (square) grid size in pixels. The plane's
/// Cartesian axes carry the log-polar image magnified by the gain g, so
/// the log-polar coordinates are u = x n/(4 g), v = y n/(4 g). The smooth
/// phase -2 pi a b g exp(-u/a) cos(v/a) cancels the stationary-phase
/// residual of the unwrapping transform; the binarized variant adds the
/// carrier 2 pi c v inside the sign(sin(..)) binarization.
///
/// The expression grows exponentially toward negative u; callers must
/// restrict evaluation to a support window around the mapped annulus
/// (run_sorter does this), otherwise the phase aliases and can overflow.
pub fn corrector_phase(x: f64, y: f64, n: usize, params: &SorterParams) -> f64 {
    if x == 0.0 && y == 0.0 {
        return 0.0;
    }
    let u = 0.25 * n as f64 * x / params.map_gain;
    let v = 0.25 * n as f64 * y / params.map_gain;
    let structure = -TAU * params.a * params.b * params.map_gain
        * (-u / params.a).exp()
        * (v / params.a).cos();
    if params.binarized {
        let s = (structure + TAU * params.c * v).sin();
        if s == 0.0 {
            0.0
        } else {
            params.phi1 * s.signum()
        }
    } else {
        structure
    }
}

/// Zero-pads a field symmetrically onto a `pad`-times larger grid with
/// the same pitch. Norm is preserved exactly; pad = 1 is the identity.
fn zero_pad(f: &ComplexField, pad: usize) -> Result<ComplexField> {
    if pad == 1 {
        return Ok(f.clone());
    }
    let g = *f.grid();
    let big = GridSpec::square(pad * g.nx, g.dx, g.wavelength)?;
    let mut out = ComplexField::zeros(big);
    let off = (pad - 1) * g.nx / 2;
    for iy in 0..g.ny {
        let row = (iy + off) * big.nx + off;
        out.data_mut()[row..row + g.nx]
            .copy_from_slice(&f.data()[iy * g.nx..(iy + 1) * g.nx]);
    }
    Ok(out)
}

/// Raised-cosine window weight: 1 on [lo, hi], rolling to 0 over `ramp`
/// on both sides.
fn window_weight(u: f64, lo: f64, hi: f64, ramp: f64) -> f64 {
    if u >= lo && u <= hi {
        1.0
    } else if u <= lo - ramp || u >= hi + ramp {
        0.0
    } else if u < lo {
        0.5 * (1.0 + (PI * (lo - u) / ramp).cos())
    } else {
        0.5 * (1.0 + (PI * (u - hi) / ramp).cos())
    }
}

/// Linear position-to-OAM calibration of a detector trace.
#[derive(Clone, Copy, Debug)]
pub struct Calibration {
    /// Detector pixels per unit of OAM.
    pub px_per_ell: f64,
    /// Trace position of the ell = 0 peak, pixels.
    pub offset_px: f64,
    /// Coefficient of determination of the calibration fit.
    pub r_squared: f64,
}

impl Calibration {
    pub fn position_of_ell(&self, ell: f64) -> f64 {
        self.offset_px + self.px_per_ell * ell
    }

    pub fn ell_of_position(&self, position: f64) -> f64 {
        (position - self.offset_px) / self.px_per_ell
    }
}

/// 1-D marginal of the detector image along the dispersion (v) axis.
#[derive(Clone, Debug)]
pub struct DetectorTrace {
    /// Strictly increasing v positions, detector pixels relative to the
    /// grid center.
    pub positions: Vec<f64>,
    /// Nonnegative counts per position.
    pub counts: Vec<f64>,
    pub calibration: Option<Calibration>,
}

impl DetectorTrace {
    pub fn new(positions: Vec<f64>, counts: Vec<f64>) -> Result<Self> {
        let t = DetectorTrace { positions, counts, calibration: None };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positions.is_empty() || self.positions.len() != self.counts.len() {
            return Err(Error::Format("trace positions/counts length mismatch".into()));
        }
        if !self.positions.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Format("trace positions must be strictly increasing".into()));
        }
        if self.counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Format("trace counts must be finite and nonnegative".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn with_calibration(mut self, calibration: Calibration) -> Self {
        self.calibration = Some(calibration);
        self
    }
}

/// Everything run_sorter produces for one input field.
#[derive(Clone, Debug)]
pub struct SorterRun {
    pub detector_grid: GridSpec,
    /// Detector-plane intensity, row-major.
    pub detector_image: Vec<f64>,
    pub trace: DetectorTrace,
    /// Beam power surviving the input aperture.
    pub post_aperture_norm_sqr: f64,
    /// Fraction of the post-aperture power reaching the detector: 1 for
    /// the smooth elements, the selected-order fraction for binarized
    /// ones.
    pub selected_fraction: f64,
}

/// Intermediate fields of one sorter run, for inspection dumps.
#[derive(Clone, Debug)]
pub struct SorterStages {
    pub after_aperture: ComplexField,
    pub after_unwrapper: ComplexField,
    pub corrector_plane_in: ComplexField,
    pub corrector_plane_out: ComplexField,
    pub detector_field: ComplexField,
}

/// Runs the full sorter train on a unit-norm input field:
/// aperture -> unwrapper phase -> focal transform -> corrector phase
/// (windowed) -> focal transform -> detector intensity and v-trace.
pub fn run_sorter(input: &ComplexField, params: &SorterParams) -> Result<SorterRun> {
    Ok(run_sorter_traced(input, params, false)?.0)
}

/// As `run_sorter`, optionally keeping every intermediate field.
pub fn run_sorter_traced(
    input: &ComplexField,
    params: &SorterParams,
    keep_stages: bool,
) -> Result<(SorterRun, Option<SorterStages>)> {
    params.validate()?;
    let grid = *input.grid();
    if grid.nx != grid.ny || grid.dx != grid.dy {
        return Err(Error::GridMismatch("the sorter requires a square grid".into()));
    }
    if (input.norm_sqr() - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidParam("run_sorter expects a unit-norm input field".into()));
    }

    let limit = 0.5 * grid.min_half_extent();
    if params.aperture.r_max > limit {
        return Err(Error::ApertureTooLarge { r_max: params.aperture.r_max, limit });
    }

    let mut f = input.clone();
    f.apply_aperture(&params.aperture)?;
    let post_aperture = f.norm_sqr();
    if post_aperture <= 0.0 {
        return Err(Error::ZeroNorm);
    }
    let after_aperture = keep_stages.then(|| f.clone());

    let (hx, hy) = (grid.half_extent_x(), grid.half_extent_y());
    f.apply_phase(|x, y| unwrapper_phase(x / hx, y / hy, params), None)?;
    let after_unwrapper = keep_stages.then(|| f.clone());

    let mut g = to_focal_plane(&f, params.f_unwrap)?;
    let corrector_plane_in = keep_stages.then(|| g.clone());

    let cgrid = *g.grid();
    let n = cgrid.nx;
    let r_max_rel = params.aperture.r_max / grid.min_half_extent();
    let (u_lo, u_hi) = params
        .corrector_window
        .unwrap_or_else(|| params.auto_corrector_window(n, r_max_rel));
    if !(u_lo < u_hi) {
        return Err(Error::InvalidParam(format!(
            "corrector window is empty: ({u_lo}, {u_hi})"
        )));
    }
    let (chx, chy) = (cgrid.half_extent_x(), cgrid.half_extent_y());

    if params.binarized {
        let (w_lo, w_hi) = params.order_window.unwrap_or((u_lo, (u_lo + 1.0).max(0.0)));
        if !(w_lo < w_hi) {
            return Err(Error::InvalidParam(format!(
                "order-selection window is empty: ({w_lo}, {w_hi})"
            )));
        }
        g.data_mut().par_chunks_mut(n).enumerate().for_each(|(iy, row)| {
            let yr = cgrid.y(iy) / chy;
            for (ix, val) in row.iter_mut().enumerate() {
                let xr = cgrid.x(ix) / chx;
                let u = 0.25 * n as f64 * xr / params.map_gain;
                if u < w_lo || u > w_hi {
                    *val = Complex64::new(0.0, 0.0);
                } else {
                    let ph = corrector_phase(xr, yr, n, params);
                    *val *= Complex64::from_polar(1.0, ph);
                }
            }
        });
    } else {
        // Phase-only support window: amplitude untouched, so the smooth
        // train stays unitary.
        let ramp = 1.0;
        g.apply_phase(
            |x, y| {
                let xr = x / chx;
                let u = 0.25 * n as f64 * xr / params.map_gain;
                let w = window_weight(u, u_lo, u_hi, ramp);
                if w == 0.0 {
                    0.0
                } else {
                    w * corrector_phase(xr, y / chy, n, params)
                }
            },
            None,
        )?;
    }
    let corrector_plane_out = keep_stages.then(|| g.clone());

    let padded = zero_pad(&g, params.detector_pad)?;
    let det = to_focal_plane(&padded, params.f_fourier)?;
    let selected_fraction = det.norm_sqr() / post_aperture;
    let detector_grid = *det.grid();
    let detector_image = det.intensity();
    let trace = extract_trace(&detector_grid, &detector_image);
    let detector_field = keep_stages.then(|| det.clone());

    let run = SorterRun {
        detector_grid,
        detector_image,
        trace,
        post_aperture_norm_sqr: post_aperture,
        selected_fraction,
    };
    let stages = keep_stages.then(|| SorterStages {
        after_aperture: after_aperture.unwrap(),
        after_unwrapper: after_unwrapper.unwrap(),
        corrector_plane_in: corrector_plane_in.unwrap(),
        corrector_plane_out: corrector_plane_out.unwrap(),
        detector_field: detector_field.unwrap(),
    });
    Ok((run, stages))
}

/// Sums a detector intensity image over the u (x) direction, leaving the
/// OAM-dispersed v profile. Counts carry the pixel-area weight so the
/// trace total equals the image power.
pub fn extract_trace(grid: &GridSpec, image: &[f64]) -> DetectorTrace {
    let da = grid.pixel_area();
    let half = (grid.ny / 2) as f64;
    let mut positions = Vec::with_capacity(grid.ny);
    let mut counts = Vec::with_capacity(grid.ny);
    for iy in 0..grid.ny {
        positions.push(iy as f64 - half);
        counts.push(image[iy * grid.nx..(iy + 1) * grid.nx].iter().sum::<f64>() * da);
    }
    DetectorTrace { positions, counts, calibration: None }
}

/// A reference input of known OAM content used for calibration.
#[derive(Clone, Copy, Debug)]
pub enum CalibrationRef {
    /// A pure state of the given ell: one peak.
    Single(i64),
    /// An equal superposition of +-ell: two symmetric peaks.
    SymmetricPair(u32),
}

/// Least-squares linear fit of peak position against known ell over a set
/// of reference traces. Needs at least two distinct ell values.
pub fn calibrate_dispersion(
    references: &[(CalibrationRef, &DetectorTrace)],
) -> Result<Calibration> {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (r, t) in references {
        t.validate()?;
        match r {
            CalibrationRef::Single(ell) => {
                pts.push((*ell as f64, single_peak_centroid(t)?));
            }
            CalibrationRef::SymmetricPair(ell) => {
                if *ell == 0 {
                    return Err(Error::InvalidParam(
                        "a symmetric pair reference needs ell != 0".into(),
                    ));
                }
                let (lo, hi) = two_peak_centroids(t)?;
                pts.push((-(*ell as f64), lo));
                pts.push((*ell as f64, hi));
            }
        }
    }
    let mut ells: Vec<f64> = pts.iter().map(|p| p.0).collect();
    ells.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ells.dedup();
    if ells.len() < 2 {
        return Err(Error::UnderdeterminedCalibration);
    }

    let m = pts.len() as f64;
    let mean_l = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_p = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let var_l: f64 = pts.iter().map(|p| (p.0 - mean_l).powi(2)).sum();
    let cov: f64 = pts.iter().map(|p| (p.0 - mean_l) * (p.1 - mean_p)).sum();
    let slope = cov / var_l;
    let offset = mean_p - slope * mean_l;
    if !(slope.is_finite() && slope.abs() > 1e-9) {
        return Err(Error::UnderdeterminedCalibration);
    }
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean_p).powi(2)).sum();
    let ss_res: f64 = pts.iter().map(|p| (p.1 - (offset + slope * p.0)).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(Calibration { px_per_ell: slope, offset_px: offset, r_squared })
}

/// Contiguous region around `start` where counts stay above `floor`.
fn peak_region(counts: &[f64], start: usize, floor: f64) -> (usize, usize) {
    let mut lo = start;
    while lo > 0 && counts[lo - 1] > floor {
        lo -= 1;
    }
    let mut hi = start;
    while hi + 1 < counts.len() && counts[hi + 1] > floor {
        hi += 1;
    }
    (lo, hi)
}

fn centroid(trace: &DetectorTrace, lo: usize, hi: usize) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in lo..=hi {
        num += trace.positions[i] * trace.counts[i];
        den += trace.counts[i];
    }
    num / den
}

fn argmax(counts: &[f64]) -> (usize, f64) {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, v) in counts.iter().enumerate() {
        if *v > best.1 {
            best = (i, *v);
        }
    }
    best
}

/// Centroid of the dominant peak (region above 5% of its height).
fn single_peak_centroid(trace: &DetectorTrace) -> Result<f64> {
    let (imax, vmax) = argmax(&trace.counts);
    if !(vmax > 0.0) {
        return Err(Error::NoPeak);
    }
    let (lo, hi) = peak_region(&trace.counts, imax, 0.05 * vmax);
    Ok(centroid(trace, lo, hi))
}

/// Centroids of the two dominant, well-separated peaks, in ascending
/// position order.
fn two_peak_centroids(trace: &DetectorTrace) -> Result<(f64, f64)> {
    let (i1, v1) = argmax(&trace.counts);
    if !(v1 > 0.0) {
        return Err(Error::NoPeak);
    }
    let (lo1, hi1) = peak_region(&trace.counts, i1, 0.05 * v1);
    let width = hi1 - lo1 + 1;
    let mask_lo = lo1.saturating_sub(width);
    let mask_hi = (hi1 + width).min(trace.counts.len() - 1);

    let mut masked = trace.counts.clone();
    for c in &mut masked[mask_lo..=mask_hi] {
        *c = 0.0;
    }
    let (i2, v2) = argmax(&masked);
    if !(v2 > 0.0) || v2 < 0.2 * v1 {
        return Err(Error::AmbiguousReference(
            "expected two comparable peaks, found one dominant peak".into(),
        ));
    }
    let (lo2, hi2) = peak_region(&masked, i2, 0.05 * v2);
    let c1 = centroid(trace, lo1, hi1);
    let c2 = centroid(trace, lo2, hi2);
    if c1 < c2 {
        Ok((c1, c2))
    } else {
        Ok((c2, c1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SorterParams {
        let grid = GridSpec::square(256, 1e-6, 2e-12).unwrap();
        SorterParams::for_grid(&grid)
    }

    #[test]
    fn log_polar_fixed_point_and_scaling() {
        let (a, b) = (2.0, 0.01);
        // r = b is the map's zero line.
        let (u, v) = log_polar_map(b, 0.0, a, b).unwrap();
        assert!(u.abs() < 1e-15 && v.abs() < 1e-15);
        // r = b/e at phi = pi/2.
        let r = b / std::f64::consts::E;
        let (u, v) = log_polar_map(0.0, r, a, b).unwrap();
        assert!((u - 2.0).abs() < 1e-12);
        assert!((v - PI).abs() < 1e-12);
        // A circle at r = b keeps u = 0 while v sweeps (-a pi, a pi].
        for k in 0..64 {
            let phi = -PI + TAU * (k as f64 + 0.5) / 64.0;
            let (u, v) = log_polar_map(b * phi.cos(), b * phi.sin(), a, b).unwrap();
            assert!(u.abs() < 1e-12);
            assert!((v - a * phi).abs() < 1e-12);
            assert!(v > -a * PI && v <= a * PI);
        }
        assert!(log_polar_map(0.0, 0.0, a, b).is_err());
    }

    #[test]
    fn unwrapper_reference_value() {
        let p = params();
        // At (x, y) = (b, 0) the smooth phase is 2 pi a g b.
        let want = TAU * p.a * p.map_gain * p.b;
        assert!((unwrapper_phase(p.b, 0.0, &p) - want).abs() < 1e-12);
        assert_eq!(unwrapper_phase(0.0, 0.0, &p), 0.0);
    }

    #[test]
    fn binarized_unwrapper_range() {
        let mut p = params();
        p.binarized = true;
        assert_eq!(unwrapper_phase(0.0, 0.0, &p), 0.0);
        for k in 0..500 {
            let x = -0.9 + 1.8 * (k as f64) / 499.0;
            let y = 0.7 * (x * 13.0).sin();
            let ph = unwrapper_phase(x, y, &p);
            assert!(
                ph == 0.0 || (ph - p.phi0).abs() < 1e-15 || (ph + p.phi0).abs() < 1e-15,
                "binarized phase {ph} outside {{-phi0, 0, phi0}}"
            );
        }
    }

    #[test]
    fn corrector_axis_profile() {
        let p = params();
        let n = 256;
        // On the v = 0 axis the phase is -2 pi a b g exp(-u/a).
        for xr in [-0.04, -0.01, 0.005, 0.02] {
            let u = 0.25 * n as f64 * xr / p.map_gain;
            let want = -TAU * p.a * p.b * p.map_gain * (-u / p.a).exp();
            assert!((corrector_phase(xr, 0.0, n, &p) - want).abs() < 1e-12 * want.abs());
        }
        // Two axis points differ by the exponential factor alone.
        let r = corrector_phase(-0.02, 0.0, n, &p) / corrector_phase(-0.01, 0.0, n, &p);
        let du = 0.25 * n as f64 * 0.01 / p.map_gain;
        assert!((r - (du / p.a).exp()).abs() < 1e-9 * r.abs());
        assert_eq!(corrector_phase(0.0, 0.0, n, &p), 0.0);
    }

    #[test]
    fn binarized_corrector_range() {
        let mut p = params();
        p.binarized = true;
        for k in 0..400 {
            let xr = -0.03 + 0.05 * (k as f64) / 399.0;
            let yr = 0.8 * ((k as f64) / 17.0).sin();
            let ph = corrector_phase(xr, yr, 256, &p);
            assert!(ph == 0.0 || (ph - p.phi1).abs() < 1e-15 || (ph + p.phi1).abs() < 1e-15);
        }
    }

    #[test]
    fn params_validation() {
        let mut p = params();
        assert!(p.validate().is_ok());
        p.a = 0.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.phi0 = 7.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.f_unwrap = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn window_weight_shape() {
        assert_eq!(window_weight(0.0, -2.0, 2.0, 1.0), 1.0);
        assert_eq!(window_weight(-2.0, -2.0, 2.0, 1.0), 1.0);
        assert_eq!(window_weight(-3.5, -2.0, 2.0, 1.0), 0.0);
        let w = window_weight(-2.5, -2.0, 2.0, 1.0);
        assert!(w > 0.0 && w < 1.0);
        assert!((window_weight(2.5, -2.0, 2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    fn synthetic_trace(peaks: &[(f64, f64)]) -> DetectorTrace {
        let n = 512usize;
        let mut counts = vec![0.0; n];
        let mut positions = Vec::with_capacity(n);
        for i in 0..n {
            let p = i as f64 - 256.0;
            positions.push(p);
            for (center, h) in peaks {
                counts[i] += h * (-((p - center) / 4.0).powi(2)).exp();
            }
        }
        DetectorTrace::new(positions, counts).unwrap()
    }

    #[test]
    fn calibration_recovers_exact_linear_placement() {
        let (s, off) = (20.5, 3.0);
        let traces: Vec<(i64, DetectorTrace)> = [-3i64, 0, 4]
            .iter()
            .map(|&l| (l, synthetic_trace(&[(off + s * l as f64, 1.0)])))
            .collect();
        let refs: Vec<(CalibrationRef, &DetectorTrace)> =
            traces.iter().map(|(l, t)| (CalibrationRef::Single(*l), t)).collect();
        let cal = calibrate_dispersion(&refs).unwrap();
        assert!((cal.px_per_ell - s).abs() < 1e-6 * s);
        assert!((cal.offset_px - off).abs() < 1e-6);
        assert!(cal.r_squared > 1.0 - 1e-12);
        assert!((cal.position_of_ell(2.0) - (off + 2.0 * s)).abs() < 1e-6);
        assert!((cal.ell_of_position(off + 2.0 * s) - 2.0).abs() < 1e-7);
    }

    #[test]
    fn calibration_with_symmetric_pair() {
        let (s, off) = (18.0, -2.0);
        let zero = synthetic_trace(&[(off, 1.0)]);
        let pair = synthetic_trace(&[(off - 4.0 * s, 0.9), (off + 4.0 * s, 1.0)]);
        let cal = calibrate_dispersion(&[
            (CalibrationRef::Single(0), &zero),
            (CalibrationRef::SymmetricPair(4), &pair),
        ])
        .unwrap();
        assert!((cal.px_per_ell - s).abs() < 1e-6 * s);
        assert!((cal.offset_px - off).abs() < 1e-5);
        assert!(cal.r_squared > 0.999_999);
    }

    #[test]
    fn calibration_needs_two_distinct_references() {
        let t = synthetic_trace(&[(10.0, 1.0)]);
        assert!(matches!(
            calibrate_dispersion(&[(CalibrationRef::Single(3), &t)]),
            Err(Error::UnderdeterminedCalibration)
        ));
        assert!(matches!(
            calibrate_dispersion(&[
                (CalibrationRef::Single(3), &t),
                (CalibrationRef::Single(3), &t)
            ]),
            Err(Error::UnderdeterminedCalibration)
        ));
    }

    #[test]
    fn pair_reference_rejects_single_peak() {
        let t = synthetic_trace(&[(10.0, 1.0)]);
        let zero = synthetic_trace(&[(0.0, 1.0)]);
        let r = calibrate_dispersion(&[
            (CalibrationRef::Single(0), &zero),
            (CalibrationRef::SymmetricPair(4), &t),
        ]);
        assert!(matches!(r, Err(Error::AmbiguousReference(_))));
    }

    #[test]
    fn trace_validation() {
        assert!(DetectorTrace::new(vec![0.0, 1.0], vec![1.0, 2.0]).is_ok());
        assert!(DetectorTrace::new(vec![1.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(DetectorTrace::new(vec![0.0, 1.0], vec![1.0, -2.0]).is_err());
        assert!(DetectorTrace::new(vec![0.0], vec![1.0, 2.0]).is_err());
    }
}
