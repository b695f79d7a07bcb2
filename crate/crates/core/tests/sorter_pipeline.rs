//! End-to-end checks of the sorter optics: a vortex beam of topological
//! charge ell must land on the detector as a localized peak displaced
//! linearly in ell, with the designed dispersion, near-diffraction-limited
//! width, and deterministic output.

use num_complex::Complex64;
use oam_core::field::ComplexField;
use oam_core::grid::GridSpec;
use oam_core::sorter::{
    calibrate_dispersion, run_sorter, CalibrationRef, DetectorTrace, SorterParams,
};
use oam_core::sources::{vortex, RadialProfile, VortexSpec};

const N: usize = 512;

fn grid() -> GridSpec {
    GridSpec::square(N, 1e-6, 1.97e-12).unwrap()
}

/// Ring vortex placed where the sorter resolves it comfortably: at about
/// a third of the half-extent, well inside the default aperture, the
/// resolvable range (pi sqrt(a g r)) covers all charges used below.
fn probe(ell: i64) -> ComplexField {
    let g = grid();
    let half = g.min_half_extent();
    vortex(
        g,
        &VortexSpec {
            ell,
            profile: RadialProfile::Ring { r0: 0.32 * half, width: 0.04 * half },
        },
    )
    .unwrap()
}

fn trace_centroid(trace: &DetectorTrace) -> f64 {
    // Centroid over the region above half maximum, robust to sidelobes.
    let c = &trace.counts;
    let (imax, vmax) = c
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, v)| if *v > b.1 { (i, *v) } else { b });
    let mut lo = imax;
    while lo > 0 && c[lo - 1] > 0.5 * vmax {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < c.len() && c[hi + 1] > 0.5 * vmax {
        hi += 1;
    }
    let (mut num, mut den) = (0.0, 0.0);
    for i in lo..=hi {
        num += trace.positions[i] * c[i];
        den += c[i];
    }
    num / den
}

/// Full width at half maximum with linear interpolation of the two
/// half-crossings, so sub-pixel widths are measurable.
fn fwhm_px(trace: &DetectorTrace) -> f64 {
    let c = &trace.counts;
    let p = &trace.positions;
    let (imax, vmax) = c
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, v)| if *v > b.1 { (i, *v) } else { b });
    let half = 0.5 * vmax;
    let mut lo = imax;
    while lo > 0 && c[lo - 1] >= half {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < c.len() && c[hi + 1] >= half {
        hi += 1;
    }
    let left = if lo > 0 {
        let f = (c[lo] - half) / (c[lo] - c[lo - 1]);
        p[lo] - f * (p[lo] - p[lo - 1])
    } else {
        p[lo]
    };
    let right = if hi + 1 < c.len() {
        let f = (c[hi] - half) / (c[hi] - c[hi + 1]);
        p[hi] + f * (p[hi + 1] - p[hi])
    } else {
        p[hi]
    };
    right - left
}

#[test]
fn zero_oam_centers_on_axis() {
    let params = SorterParams::for_grid(&grid());
    let run = run_sorter(&probe(0), &params).unwrap();
    let centroid = trace_centroid(&run.trace);
    assert!(centroid.abs() < 1.0, "ell=0 peak at {centroid} px");
    // The ring sits inside the aperture, and every element after it is a
    // phase (the support window ramp shaves only the stripe tails).
    assert!(run.selected_fraction > 0.95, "kept {}", run.selected_fraction);
    assert!(run.selected_fraction <= 1.0 + 1e-9);
}

#[test]
fn dispersion_matches_design() {
    let params = SorterParams::for_grid(&grid());
    let designed = params.dispersion_px(N);
    let mut refs: Vec<(CalibrationRef, DetectorTrace)> = Vec::new();
    for ell in [-8i64, -5, -1, 0, 1, 5, 8] {
        let run = run_sorter(&probe(ell), &params).unwrap();
        let centroid = trace_centroid(&run.trace);
        let expect = designed * ell as f64;
        assert!(
            (centroid - expect).abs() < 0.35 * designed,
            "ell {ell}: centroid {centroid}, designed {expect}"
        );
        refs.push((CalibrationRef::Single(ell), run.trace));
    }
    let borrowed: Vec<(CalibrationRef, &DetectorTrace)> =
        refs.iter().map(|(r, t)| (*r, t)).collect();
    let cal = calibrate_dispersion(&borrowed).unwrap();
    assert!(
        (cal.px_per_ell / designed - 1.0).abs() < 0.03,
        "fitted {} px/ell vs designed {designed}",
        cal.px_per_ell
    );
    assert!(cal.r_squared > 0.99, "R^2 = {}", cal.r_squared);
    assert!(cal.offset_px.abs() < 1.0, "offset {} px", cal.offset_px);
}

#[test]
fn peak_width_is_near_the_diffraction_limit() {
    // The unwrapped stripe spans 4 pi a g pixels of the corrector plane,
    // so the transform-limited full width at half maximum on the detector
    // is 0.886 N / (4 pi a g) pixels: 0.886 dispersion units.
    let params = SorterParams::for_grid(&grid());
    let run = run_sorter(&probe(0), &params).unwrap();
    let limit = 0.886 * params.dispersion_px(N);
    let width = fwhm_px(&run.trace);
    assert!(
        width <= 1.3 * limit,
        "FWHM {width} px vs diffraction limit {limit} px"
    );
    assert!(width >= 0.6 * limit, "implausibly narrow: {width} px");
}

#[test]
fn positive_oam_moves_toward_positive_positions() {
    let params = SorterParams::for_grid(&grid());
    let plus = trace_centroid(&run_sorter(&probe(5), &params).unwrap().trace);
    let minus = trace_centroid(&run_sorter(&probe(-5), &params).unwrap().trace);
    assert!(plus > 0.0 && minus < 0.0, "+5 at {plus}, -5 at {minus}");
    // Sign consistency: the +-5 pair must sit symmetrically to within a
    // fifth of a dispersion unit.
    let d = SorterParams::for_grid(&grid()).dispersion_px(N);
    assert!((plus + minus).abs() < 0.2 * d, "asymmetry: {plus} vs {minus}");
}

#[test]
fn superposition_splits_into_two_equal_peaks() {
    let g = grid();
    let half = g.min_half_extent();
    let f = ComplexField::from_fn(g, |x, y| {
        let r = x.hypot(y);
        let phi = y.atan2(x);
        let amp = (-((r - 0.32 * half) / (0.04 * half)).powi(2)).exp();
        (Complex64::from_polar(amp, 3.0 * phi) + Complex64::from_polar(amp, -3.0 * phi))
            * 0.5
    })
    .unwrap();
    let mut f = f;
    f.normalize().unwrap();
    let params = SorterParams::for_grid(&g);
    let run = run_sorter(&f, &params).unwrap();
    let d = params.dispersion_px(N);
    // Main-lobe windows (one dispersion unit each side) around the two
    // expected peak positions.
    let window = |center: f64| -> f64 {
        run.trace
            .positions
            .iter()
            .zip(&run.trace.counts)
            .filter(|(p, _)| (**p - center).abs() <= d)
            .map(|(_, c)| *c)
            .sum()
    };
    let total = run.trace.total();
    let hi = window(3.0 * d) / total;
    let lo = window(-3.0 * d) / total;
    let mid = window(0.0) / total;
    assert!(hi > 0.25 && lo > 0.25, "window fractions {hi} / {lo}");
    assert!((hi / lo - 1.0).abs() < 0.10, "imbalance {hi} vs {lo}");
    assert!(mid < 0.5 * hi, "power between the peaks: {mid} vs {hi}");
}

#[test]
fn binarized_elements_track_the_same_dispersion() {
    let g = grid();
    let mut params = SorterParams::for_grid(&g);
    params.binarized = true;
    let argmax_pos = |t: &DetectorTrace| -> f64 {
        let (i, _) = t
            .counts
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, v)| if *v > b.1 { (i, *v) } else { b });
        t.positions[i]
    };
    let run0 = run_sorter(&probe(0), &params).unwrap();
    let run1 = run_sorter(&probe(1), &params).unwrap();
    for run in [&run0, &run1] {
        assert!(run.detector_image.iter().all(|v| v.is_finite()));
        assert!(run.selected_fraction > 0.05 && run.selected_fraction < 0.95);
    }
    // The carrier parks the working diffraction order off axis by
    // c pad N / (2 g) detector pixels.
    let y0 = argmax_pos(&run0.trace);
    let carrier = 0.5 * params.c * (params.detector_pad * N) as f64 / params.map_gain;
    assert!((y0 - carrier).abs() < 4.0, "carrier order at {y0} px, designed {carrier}");
    let shift = argmax_pos(&run1.trace) - y0;
    let designed = params.dispersion_px(N);
    assert!(
        (shift - designed).abs() < 1.0,
        "binarized shift {shift} px vs designed {designed}"
    );
}

#[test]
fn oversized_aperture_is_rejected() {
    let g = grid();
    let mut params = SorterParams::for_grid(&g);
    params.aperture.r_max = 0.6 * g.min_half_extent();
    assert!(run_sorter(&probe(0), &params).is_err());
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let params = SorterParams::for_grid(&grid());
    let a = run_sorter(&probe(2), &params).unwrap();
    let b = run_sorter(&probe(2), &params).unwrap();
    assert_eq!(a.detector_image, b.detector_image);
    assert_eq!(a.trace.counts, b.trace.counts);
}
