//! Detector-trace post-processing: polynomial background removal,
//! point-spread extraction from a zero-OAM reference, maximum-entropy
//! deconvolution, and binning into a discrete OAM spectrum.
//!
//! The chain is deliberately scale-free: every stage commutes with a
//! positive rescaling of the input counts (as long as the deconvolution
//! noise scale is left at its relative default), so the normalized
//! spectrum depends only on the shape of the trace.

use crate::error::{Error, Result};
use crate::oracle::OamSpectrum;
use crate::sorter::DetectorTrace;

/// Tunables of the processing chain.
#[derive(Clone, Copy, Debug)]
pub struct ProcessingConfig {
    /// Polynomial order of the background fit.
    pub background_poly_order: usize,
    /// Iteration cap for the deconvolution.
    pub mem_iterations: usize,
    /// Stop when the mean squared re-convolution residual per point,
    /// in units of the noise scale squared, drops below this.
    pub mem_tolerance: f64,
    /// Damping exponent of the multiplicative update.
    pub mem_damping: f64,
    /// Absolute noise scale for the deconvolution stop rule; `None`
    /// uses 1% of the trace maximum, which keeps the chain scale-free.
    pub mem_noise: Option<f64>,
    /// Half-range of the bin-offset grid search, in OAM units.
    pub bin_offset_search: f64,
    /// Clip negative counts after background subtraction.
    pub clip_negatives: bool,
}

impl Default for ProcessingConfig {
    fn default() -> Self {
        ProcessingConfig {
            background_poly_order: 3,
            mem_iterations: 500,
            mem_tolerance: 1.0,
            mem_damping: 0.7,
            mem_noise: None,
            bin_offset_search: 0.5,
            clip_negatives: true,
        }
    }
}

impl ProcessingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.background_poly_order > 9 {
            return Err(Error::InvalidParam("background order above 9 is not supported".into()));
        }
        if self.mem_iterations == 0 {
            return Err(Error::InvalidParam("mem_iterations must be >= 1".into()));
        }
        if !(self.mem_tolerance > 0.0) {
            return Err(Error::InvalidParam("mem_tolerance must be positive".into()));
        }
        if !(self.mem_damping > 0.0 && self.mem_damping <= 1.0) {
            return Err(Error::InvalidParam("mem_damping must lie in (0, 1]".into()));
        }
        if !(self.bin_offset_search >= 0.0 && self.bin_offset_search <= 0.5) {
            return Err(Error::InvalidParam("bin_offset_search must lie in [0, 0.5]".into()));
        }
        Ok(())
    }
}

/// Median of a slice (copies; input order preserved).
fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Robust standard deviation: 1.4826 * median absolute deviation.
fn robust_sigma(values: &[f64]) -> f64 {
    let m = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    1.4826 * median(&dev)
}

/// Least-squares polynomial fit y(t) over scaled positions, returning the
/// fitted values at every sample. `mask[i] = false` excludes a point.
fn polyfit_values(
    positions: &[f64],
    counts: &[f64],
    mask: &[bool],
    order: usize,
) -> Result<Vec<f64>> {
    let n = positions.len();
    let p_lo = positions[0];
    let p_hi = positions[n - 1];
    let scale = 2.0 / (p_hi - p_lo);
    let t: Vec<f64> = positions.iter().map(|p| (p - p_lo) * scale - 1.0).collect();

    let m = order + 1;
    let mut ata = vec![0.0f64; m * m];
    let mut atb = vec![0.0f64; m];
    for i in 0..n {
        if !mask[i] {
            continue;
        }
        let mut powers = vec![1.0f64; m];
        for k in 1..m {
            powers[k] = powers[k - 1] * t[i];
        }
        for r in 0..m {
            atb[r] += powers[r] * counts[i];
            for c in 0..m {
                ata[r * m + c] += powers[r] * powers[c];
            }
        }
    }
    let coef = solve_dense(&mut ata, &mut atb, m)?;
    Ok(t.iter()
        .map(|&ti| {
            let mut acc = 0.0;
            for k in (0..m).rev() {
                acc = acc * ti + coef[k];
            }
            acc
        })
        .collect())
}

/// Gaussian elimination with partial pivoting on an m x m system.
fn solve_dense(a: &mut [f64], b: &mut [f64], m: usize) -> Result<Vec<f64>> {
    for col in 0..m {
        let mut piv = col;
        for r in col + 1..m {
            if a[r * m + col].abs() > a[piv * m + col].abs() {
                piv = r;
            }
        }
        if a[piv * m + col].abs() < 1e-300 {
            return Err(Error::InvalidParam("degenerate background fit system".into()));
        }
        if piv != col {
            for c in 0..m {
                a.swap(col * m + c, piv * m + c);
            }
            b.swap(col, piv);
        }
        let d = a[col * m + col];
        for r in col + 1..m {
            let f = a[r * m + col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..m {
                a[r * m + c] -= f * a[col * m + c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0f64; m];
    for col in (0..m).rev() {
        let mut acc = b[col];
        for c in col + 1..m {
            acc -= a[col * m + c] * x[c];
        }
        x[col] = acc / a[col * m + col];
    }
    Ok(x)
}

/// Fits a polynomial background while iteratively excluding points more
/// than two robust standard deviations above the current fit (up to five
/// rounds), then subtracts the fit. The result may go negative; clipping
/// is a separate, later step.
pub fn subtract_background(trace: &DetectorTrace, order: usize) -> Result<DetectorTrace> {
    trace.validate()?;
    if order > 9 {
        return Err(Error::InvalidParam("background order above 9 is not supported".into()));
    }
    let n = trace.len();
    if n <= 3 * (order + 1) {
        return Err(Error::InvalidParam(format!(
            "trace of {n} points is too short for an order-{order} background fit"
        )));
    }
    let scale_floor = 1e-12 * trace.counts.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let mut mask = vec![true; n];
    let mut fit = polyfit_values(&trace.positions, &trace.counts, &mask, order)?;
    for _ in 0..5 {
        let residuals: Vec<f64> =
            trace.counts.iter().zip(&fit).map(|(c, f)| c - f).collect();
        let sigma = robust_sigma(&residuals);
        if sigma <= scale_floor {
            break;
        }
        let new_mask: Vec<bool> = residuals.iter().map(|r| *r <= 2.0 * sigma).collect();
        if new_mask == mask {
            break;
        }
        mask = new_mask;
        if mask.iter().filter(|m| **m).count() <= 3 * (order + 1) {
            break;
        }
        fit = polyfit_values(&trace.positions, &trace.counts, &mask, order)?;
    }
    let counts: Vec<f64> = trace.counts.iter().zip(&fit).map(|(c, f)| c - f).collect();
    let mut out = trace.clone();
    out.counts = counts;
    Ok(out)
}

/// Clips negative counts to zero.
pub fn clip_negative(trace: &DetectorTrace) -> DetectorTrace {
    let mut out = trace.clone();
    for c in &mut out.counts {
        if *c < 0.0 {
            *c = 0.0;
        }
    }
    out
}

/// 1-D detector response extracted from a zero-OAM reference.
#[derive(Clone, Debug)]
pub struct PointSpreadFunction {
    /// Nonnegative unit-sum kernel, one entry per detector pixel.
    pub kernel: Vec<f64>,
    /// Index of the kernel origin (the peak centroid).
    pub origin: usize,
}

impl PointSpreadFunction {
    pub fn delta() -> Self {
        PointSpreadFunction { kernel: vec![1.0], origin: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel.is_empty() || self.origin >= self.kernel.len() {
            return Err(Error::BadPsf("kernel empty or origin out of range".into()));
        }
        if self.kernel.iter().any(|k| !k.is_finite() || *k < 0.0) {
            return Err(Error::BadPsf("kernel entries must be finite and nonnegative".into()));
        }
        let total: f64 = self.kernel.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::BadPsf(format!("kernel sum {total} is not 1")));
        }
        Ok(())
    }

    /// Full width at half maximum, in kernel samples.
    pub fn fwhm(&self) -> f64 {
        let peak = self.kernel.iter().fold(0.0f64, |a, b| a.max(*b));
        let half = 0.5 * peak;
        let above: Vec<usize> =
            (0..self.kernel.len()).filter(|&i| self.kernel[i] >= half).collect();
        match (above.first(), above.last()) {
            (Some(&lo), Some(&hi)) => (hi - lo + 1) as f64,
            _ => 0.0,
        }
    }
}

/// Local maxima above max(5 x robust noise, 5% of the global maximum).
/// Deterministic and shared by the PSF builder and the bin-offset search.
pub fn detect_peaks(trace: &DetectorTrace) -> Vec<usize> {
    let c = &trace.counts;
    let n = c.len();
    if n < 3 {
        return Vec::new();
    }
    let noise = robust_sigma(c);
    let max = c.iter().fold(0.0f64, |a, b| a.max(*b));
    let floor = (5.0 * noise).max(0.05 * max);
    let mut peaks = Vec::new();
    for i in 1..n - 1 {
        if c[i] > floor && c[i] > c[i - 1] && c[i] >= c[i + 1] {
            peaks.push(i);
        }
    }
    peaks
}

/// Builds the detector point-spread function from a background-subtracted
/// zero-OAM trace: the dominant peak, cut to +-3 OAM units around its
/// centroid, clipped at zero and normalized to unit sum. The trace must
/// be calibrated (the cut is expressed in OAM units) and must contain one
/// unambiguous peak.
pub fn build_psf(zero_oam_trace: &DetectorTrace) -> Result<PointSpreadFunction> {
    zero_oam_trace.validate()?;
    let cal = zero_oam_trace.calibration.ok_or(Error::MissingCalibration)?;
    let c = &zero_oam_trace.counts;
    let n = c.len();
    let (imax, vmax) = c
        .iter()
        .enumerate()
        .fold((0usize, f64::NEG_INFINITY), |b, (i, v)| if *v > b.1 { (i, *v) } else { b });
    let noise = robust_sigma(c);
    if !(vmax > 0.0) || vmax < 5.0 * noise {
        return Err(Error::NoPeak);
    }

    // Centroid over the region above half maximum.
    let mut lo = imax;
    while lo > 0 && c[lo - 1] > 0.5 * vmax {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < n && c[hi + 1] > 0.5 * vmax {
        hi += 1;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for i in lo..=hi {
        num += zero_oam_trace.positions[i] * c[i];
        den += c[i];
    }
    let centroid = num / den;

    let half_width = 3.0 * cal.px_per_ell.abs();
    let step = zero_oam_trace.positions[1] - zero_oam_trace.positions[0];
    let w_lo = ((centroid - half_width - zero_oam_trace.positions[0]) / step).floor().max(0.0)
        as usize;
    let w_hi = (((centroid + half_width - zero_oam_trace.positions[0]) / step).ceil() as usize)
        .min(n - 1);
    if w_hi <= w_lo {
        return Err(Error::NoPeak);
    }

    // A second comparable peak outside the window is a precondition
    // violation: the reference is supposed to carry a single OAM value.
    for i in 1..n - 1 {
        if (i < w_lo || i > w_hi) && c[i] >= 0.5 * vmax && c[i] > c[i - 1] && c[i] >= c[i + 1] {
            return Err(Error::AmbiguousReference(
                "zero-OAM reference trace has more than one dominant peak".into(),
            ));
        }
    }

    let mut kernel: Vec<f64> = c[w_lo..=w_hi].iter().map(|v| v.max(0.0)).collect();
    let total: f64 = kernel.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NoPeak);
    }
    for k in &mut kernel {
        *k /= total;
    }
    let origin = (((centroid - zero_oam_trace.positions[w_lo]) / step).round() as usize)
        .min(kernel.len() - 1);
    Ok(PointSpreadFunction { kernel, origin })
}

/// Deconvolution result: the estimate plus convergence diagnostics.
#[derive(Clone, Debug)]
pub struct Deconvolved {
    pub trace: DetectorTrace,
    pub converged: bool,
    pub iterations: usize,
    /// Final mean squared re-convolution residual per point, in units of
    /// the noise scale squared.
    pub residual: f64,
}

fn convolve(f: &[f64], kernel: &[f64], origin: usize) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0f64; n];
    for (j, &k) in kernel.iter().enumerate() {
        if k == 0.0 {
            continue;
        }
        // out[i] = sum_j kernel[j] * f[i - j + origin]
        for i in 0..n {
            let src = i as isize - j as isize + origin as isize;
            if src >= 0 && (src as usize) < n {
                out[i] += k * f[src as usize];
            }
        }
    }
    out
}

fn correlate(g: &[f64], kernel: &[f64], origin: usize) -> Vec<f64> {
    let n = g.len();
    let mut out = vec![0.0f64; n];
    for (j, &k) in kernel.iter().enumerate() {
        if k == 0.0 {
            continue;
        }
        // out[m] = sum_j kernel[j] * g[m + j - origin]
        for m in 0..n {
            let src = m as isize + j as isize - origin as isize;
            if src >= 0 && (src as usize) < n {
                out[m] += k * g[src as usize];
            }
        }
    }
    out
}

/// Maximum-entropy-style deconvolution of a nonnegative trace by the
/// detector point-spread function: starting from a flat (maximum
/// entropy) estimate, damped multiplicative updates
/// f <- f * (A^T d / A^T A f)^damping
/// keep the estimate nonnegative and monotonically improve the
/// re-convolution fit, stopping once the mean squared residual per point
/// falls below `mem_tolerance` noise units.
pub fn mem_deconvolve(
    trace: &DetectorTrace,
    psf: &PointSpreadFunction,
    config: &ProcessingConfig,
) -> Result<Deconvolved> {
    trace.validate()?;
    psf.validate()?;
    config.validate()?;
    let d: Vec<f64> = if config.clip_negatives {
        trace.counts.iter().map(|c| c.max(0.0)).collect()
    } else {
        trace.counts.clone()
    };
    if d.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidParam(
            "deconvolution input must be nonnegative (enable clip_negatives)".into(),
        ));
    }
    let max = d.iter().fold(0.0f64, |a, b| a.max(*b));
    let mut out = trace.clone();
    if max == 0.0 {
        out.counts = d;
        return Ok(Deconvolved { trace: out, converged: true, iterations: 0, residual: 0.0 });
    }
    if psf.kernel.len() == 1 {
        // Identity kernel: the estimate is the data itself.
        out.counts = d;
        return Ok(Deconvolved { trace: out, converged: true, iterations: 0, residual: 0.0 });
    }

    let sigma = config.mem_noise.unwrap_or(0.01 * max);
    let n = d.len() as f64;
    let atd = correlate(&d, &psf.kernel, psf.origin);
    let mean = d.iter().sum::<f64>() / n;
    let mut f = vec![mean; d.len()];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    while iterations < config.mem_iterations {
        let af = convolve(&f, &psf.kernel, psf.origin);
        residual = af
            .iter()
            .zip(&d)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / (n * sigma * sigma);
        if residual <= config.mem_tolerance {
            converged = true;
            break;
        }
        let atf = correlate(&af, &psf.kernel, psf.origin);
        for ((fi, &num), &den) in f.iter_mut().zip(&atd).zip(&atf) {
            if den > 0.0 && num >= 0.0 {
                *fi *= (num / den).powf(config.mem_damping);
            }
        }
        iterations += 1;
    }
    out.counts = f;
    Ok(Deconvolved { trace: out, converged, iterations, residual })
}

/// Sums counts into unit-wide OAM bins [ell - 0.5 + offset,
/// ell + 0.5 + offset) without normalizing; bin range spans the trace.
pub fn bin_spectrum_raw(trace: &DetectorTrace, offset: f64) -> Result<OamSpectrum> {
    trace.validate()?;
    let cal = trace.calibration.ok_or(Error::MissingCalibration)?;
    let ells: Vec<f64> =
        trace.positions.iter().map(|p| cal.ell_of_position(*p) - offset).collect();
    let lo = ells.iter().fold(f64::INFINITY, |a, b| a.min(*b)).round() as i64;
    let hi = ells.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b)).round() as i64;
    let mut spec = OamSpectrum::zeros(lo, hi)?;
    for (e, c) in ells.iter().zip(&trace.counts) {
        let ell = (e + 0.5).floor() as i64;
        let ell = ell.clamp(lo, hi);
        spec.weights[(ell - lo) as usize] += c;
    }
    Ok(spec)
}

/// As `bin_spectrum_raw`, then normalized to unit total.
pub fn bin_spectrum(trace: &DetectorTrace, offset: f64) -> Result<OamSpectrum> {
    let mut spec = bin_spectrum_raw(trace, offset)?;
    spec.normalize()?;
    Ok(spec)
}

/// Grid search for the bin offset that best centers the detected peaks in
/// their bins: offsets in [-half, half) at 0.01 steps, scored by the
/// summed closeness of each peak to its bin center; ties resolve to the
/// smallest |offset|. A trace without detected peaks scores every offset
/// equally and returns 0.
pub fn optimize_bin_offset(trace: &DetectorTrace, half_range: f64) -> Result<f64> {
    trace.validate()?;
    let cal = trace.calibration.ok_or(Error::MissingCalibration)?;
    let peaks = detect_peaks(trace);
    if peaks.is_empty() {
        return Ok(0.0);
    }
    // Refine each peak position by a centroid over its half-max region.
    let c = &trace.counts;
    let peak_ells: Vec<f64> = peaks
        .iter()
        .map(|&i| {
            let mut lo = i;
            while lo > 0 && c[lo - 1] > 0.5 * c[i] {
                lo -= 1;
            }
            let mut hi = i;
            while hi + 1 < c.len() && c[hi + 1] > 0.5 * c[i] {
                hi += 1;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for k in lo..=hi {
                num += trace.positions[k] * c[k];
                den += c[k];
            }
            cal.ell_of_position(num / den)
        })
        .collect();

    let steps = (half_range / 0.01).round() as i64;
    let mut best = (f64::NEG_INFINITY, 0.0f64);
    for k in -steps..steps {
        let offset = k as f64 * 0.01;
        let score: f64 = peak_ells
            .iter()
            .map(|e| {
                let frac = e - offset - (e - offset).round();
                0.5 - frac.abs()
            })
            .sum();
        let better = score > best.0 + 1e-12
            || (score > best.0 - 1e-12 && offset.abs() < best.1.abs());
        if better {
            best = (score, offset);
        }
    }
    Ok(best.1)
}

/// Fraction of spectral weight outside the intended OAM components.
pub fn crosstalk(spectrum: &OamSpectrum, intended: &[i64]) -> Result<f64> {
    if intended.is_empty() {
        return Err(Error::InvalidParam("crosstalk needs a nonempty intended set".into()));
    }
    if !spectrum.is_normalized(1e-6) {
        return Err(Error::InvalidParam("crosstalk needs a normalized spectrum".into()));
    }
    let mut kept = 0.0;
    for ell in intended {
        kept += spectrum.weight(*ell);
    }
    Ok((1.0 - kept).clamp(0.0, 1.0))
}

/// Diagnostics of one full processing run.
#[derive(Clone, Debug)]
pub struct ProcessOutput {
    pub spectrum: OamSpectrum,
    /// The trace as it entered binning (after background removal,
    /// clipping, and deconvolution).
    pub final_trace: DetectorTrace,
    pub bin_offset: f64,
    pub mem: Option<(usize, bool, f64)>,
}

impl ProcessOutput {
    /// Key-value lines for the plain-text processing report.
    pub fn report_lines(&self, config: &ProcessingConfig) -> Vec<(String, String)> {
        let mut lines = vec![
            ("background_poly_order".into(), config.background_poly_order.to_string()),
            ("clip_negatives".into(), config.clip_negatives.to_string()),
            ("bin_offset".into(), format!("{}", self.bin_offset)),
        ];
        match self.mem {
            Some((iters, converged, residual)) => {
                lines.push(("mem_iterations_used".into(), iters.to_string()));
                lines.push(("mem_converged".into(), converged.to_string()));
                lines.push(("mem_residual".into(), format!("{residual}")));
            }
            None => lines.push(("mem".into(), "skipped".into())),
        }
        lines
    }
}

/// The full chain on a calibrated trace: background subtraction, optional
/// clipping, optional deconvolution, bin-offset optimization, binning.
pub fn process(
    trace: &DetectorTrace,
    psf: Option<&PointSpreadFunction>,
    config: &ProcessingConfig,
) -> Result<ProcessOutput> {
    config.validate()?;
    if trace.calibration.is_none() {
        return Err(Error::MissingCalibration);
    }
    let mut work = subtract_background(trace, config.background_poly_order)?;
    if config.clip_negatives {
        work = clip_negative(&work);
    }
    let mem = match psf {
        Some(p) => {
            let d = mem_deconvolve(&work, p, config)?;
            work = d.trace;
            Some((d.iterations, d.converged, d.residual))
        }
        None => None,
    };
    let bin_offset = optimize_bin_offset(&work, config.bin_offset_search)?;
    let spectrum = bin_spectrum(&work, bin_offset)?;
    Ok(ProcessOutput { spectrum, final_trace: work, bin_offset, mem })
}
