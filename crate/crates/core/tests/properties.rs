//! Randomized invariants: norm conservation of the optical transforms,
//! exactness of counting operations, scale-freedom of the processing
//! chain, and bounds that must hold for any parameters.

use num_complex::Complex64;
use proptest::prelude::*;

use oam_core::dipole::{analytic_dipole_spectrum, estimate_moment};
use oam_core::field::ComplexField;
use oam_core::grid::GridSpec;
use oam_core::oracle::OamSpectrum;
use oam_core::propagate::{propagate, to_focal_plane};
use oam_core::quad::integrate;
use oam_core::sorter::{Calibration, DetectorTrace};
use oam_core::sources::{analytic_mask_spectrum, gaussian, MaskSpec};
use oam_core::spectro::{
    bin_spectrum_raw, crosstalk, mem_deconvolve, optimize_bin_offset, process,
    PointSpreadFunction, ProcessingConfig,
};

fn grid32() -> GridSpec {
    GridSpec::square(32, 0.5e-6, 2e-12).unwrap()
}

/// A normalized pseudo-random field: white complex samples seeded from a
/// pair of integers, deterministic and cheap.
fn noise_field(seed: (u64, u64)) -> ComplexField {
    let g = grid32();
    let mut state = seed.0.wrapping_mul(0x9e3779b97f4a7c15) ^ seed.1;
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let data: Vec<Complex64> =
        (0..g.len()).map(|_| Complex64::new(next(), next())).collect();
    let mut f = ComplexField::from_data(g, data).unwrap();
    f.normalize().unwrap();
    f
}

fn trace_from_counts(counts: Vec<f64>, cal: Calibration) -> DetectorTrace {
    let n = counts.len();
    let positions: Vec<f64> = (0..n).map(|i| i as f64 - (n / 2) as f64).collect();
    let mut t = DetectorTrace::new(positions, counts).unwrap();
    t.calibration = Some(cal);
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn normalize_is_idempotent(s1 in any::<u64>(), s2 in any::<u64>()) {
        let mut f = noise_field((s1, s2));
        prop_assert!((f.norm_sqr() - 1.0).abs() < 1e-12);
        let before: Vec<Complex64> = f.data().to_vec();
        f.normalize().unwrap();
        let drift = f
            .data()
            .iter()
            .zip(&before)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>();
        let scale: f64 = before.iter().map(|v| v.norm_sqr()).sum();
        prop_assert!(
            drift < 1e-26 * scale,
            "renormalizing a unit field moved it by {}",
            drift / scale
        );
    }

    #[test]
    fn pure_phases_conserve_norm(s1 in any::<u64>(), k in -20.0f64..20.0) {
        let mut f = noise_field((s1, 1));
        f.apply_phase(|x, y| k * (x * 1e6 + 0.7 * y * 1e6).sin(), None).unwrap();
        prop_assert!((f.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn focal_transform_conserves_norm_for_any_field(
        s1 in any::<u64>(),
        f_mm in 1.0f64..50.0,
    ) {
        let f = noise_field((s1, 2));
        let out = to_focal_plane(&f, f_mm * 1e-3).unwrap();
        prop_assert!(
            (out.norm_sqr() - 1.0).abs() < 1e-12,
            "norm after transform: {}",
            out.norm_sqr()
        );
    }

    #[test]
    fn propagation_round_trip_restores_smooth_beams(
        w_px in 3.0f64..8.0,
        z_um in 1.0f64..100.0,
    ) {
        let g = grid32();
        let f = gaussian(g, w_px * g.dx).unwrap();
        let z = z_um * 1e-6;
        let fwd = propagate(&f, z).unwrap();
        prop_assert!((fwd.norm_sqr() - 1.0).abs() < 1e-10);
        let back = propagate(&fwd, -z).unwrap();
        let err: f64 = back
            .data()
            .iter()
            .zip(f.data())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        prop_assert!(err < 1e-16, "round-trip error {err}");
    }

    #[test]
    fn mask_transmission_never_amplifies(
        n in 1u32..12,
        delta0 in 0.0f64..6.28,
        absorption in 0.0f64..4.0,
        phi in -10.0f64..10.0,
        spiral in any::<bool>(),
    ) {
        let mask = if spiral {
            MaskSpec::spiral(n, delta0)
        } else {
            MaskSpec::two_level(n, delta0, absorption)
        };
        let t = mask.transmission(phi);
        prop_assert!(t.norm() <= 1.0 + 1e-12, "|t| = {} for {mask:?}", t.norm());
    }

    #[test]
    fn binning_conserves_counts_exactly(
        counts in prop::collection::vec(0.0f64..1e4, 32..200),
        px_per_ell in 1.5f64..30.0,
        offset_px in -5.0f64..5.0,
        bin_offset in -0.5f64..0.5,
    ) {
        let total_in: f64 = counts.iter().sum();
        prop_assume!(total_in > 0.0);
        let t = trace_from_counts(
            counts,
            Calibration { px_per_ell, offset_px, r_squared: 1.0 },
        );
        let spec = bin_spectrum_raw(&t, bin_offset).unwrap();
        let total_out: f64 = spec.weights.iter().sum();
        prop_assert!(
            (total_out - total_in).abs() <= 1e-9 * total_in,
            "binned {total_out} of {total_in}"
        );
    }

    #[test]
    fn offset_search_stays_inside_its_range(
        counts in prop::collection::vec(0.0f64..1e3, 64..128),
        half in 0.05f64..0.5,
    ) {
        let t = trace_from_counts(
            counts,
            Calibration { px_per_ell: 4.0, offset_px: 0.0, r_squared: 1.0 },
        );
        let off = optimize_bin_offset(&t, half).unwrap();
        prop_assert!(off >= -half - 1e-12 && off < half + 1e-12, "offset {off}");
    }

    #[test]
    fn processing_is_scale_free(
        seed_counts in prop::collection::vec(0.0f64..100.0, 100..160),
        scale in 1e-3f64..1e3,
    ) {
        let total: f64 = seed_counts.iter().sum();
        prop_assume!(total > 1.0);
        let cal = Calibration { px_per_ell: 5.0, offset_px: 0.0, r_squared: 1.0 };
        let base = trace_from_counts(seed_counts.clone(), cal);
        let scaled = trace_from_counts(
            seed_counts.iter().map(|c| c * scale).collect(),
            cal,
        );
        let config = ProcessingConfig::default();
        let a = process(&base, None, &config).unwrap();
        let b = process(&scaled, None, &config).unwrap();
        prop_assert_eq!(a.spectrum.ell_min, b.spectrum.ell_min);
        let worst = a
            .spectrum
            .weights
            .iter()
            .zip(&b.spectrum.weights)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        prop_assert!(worst < 1e-9, "normalized spectra differ by {worst}");
    }

    #[test]
    fn deconvolution_output_is_nonnegative_and_finite(
        counts in prop::collection::vec(0.0f64..50.0, 48..96),
        kw in 1.0f64..4.0,
    ) {
        let cal = Calibration { px_per_ell: 4.0, offset_px: 0.0, r_squared: 1.0 };
        let t = trace_from_counts(counts, cal);
        let kernel: Vec<f64> =
            (-6i64..=6).map(|k| (-((k as f64) / kw).powi(2)).exp()).collect();
        let total: f64 = kernel.iter().sum();
        let kernel: Vec<f64> = kernel.iter().map(|v| v / total).collect();
        let psf = PointSpreadFunction { kernel, origin: 6 };
        psf.validate().unwrap();
        let mut config = ProcessingConfig::default();
        config.mem_iterations = 40;
        let out = mem_deconvolve(&t, &psf, &config).unwrap();
        prop_assert!(out.trace.counts.iter().all(|c| c.is_finite() && *c >= 0.0));
    }

    #[test]
    fn crosstalk_is_a_fraction(
        raw in prop::collection::vec(0.0f64..10.0, 9),
        pick in 0usize..9,
    ) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 0.0);
        let pairs: Vec<(i64, f64)> =
            raw.iter().enumerate().map(|(i, w)| (i as i64 - 4, *w)).collect();
        let spec = OamSpectrum::from_pairs(&pairs).unwrap();
        let intended = pick as i64 - 4;
        let x = crosstalk(&spec, &[intended]).unwrap();
        prop_assert!((0.0..=1.0).contains(&x));
        // A spectrum holding only the intended component has none.
        let pure = OamSpectrum::from_pairs(&[(intended, 1.0)]).unwrap();
        prop_assert!(crosstalk(&pure, &[intended]).unwrap() < 1e-12);
    }

    #[test]
    fn bessel_comb_carries_unit_power(chi in 0.1f64..8.0) {
        let spec = analytic_dipole_spectrum(chi, 64).unwrap();
        // analytic_dipole_spectrum normalizes; verify the raw comb sums
        // to one before normalization via the table identity
        // J_0^2 + 2 sum J_k^2 = 1.
        let table = oam_core::bessel::j_table(64, chi);
        let total = table[0] * table[0]
            + 2.0 * table[1..].iter().map(|j| j * j).sum::<f64>();
        prop_assert!((total - 1.0).abs() < 1e-10, "sum rule broken: {total}");
        prop_assert!(spec.is_normalized(1e-9));
    }

    #[test]
    fn moment_estimate_scales_linearly_with_radius(
        chi in 1.0f64..8.0,
        r1_um in 0.5f64..5.0,
        k in 1.5f64..4.0,
    ) {
        let spec = analytic_dipole_spectrum(chi, 64).unwrap();
        let r1 = r1_um * 1e-6;
        let m1 = estimate_moment(&spec, r1).unwrap();
        let m2 = estimate_moment(&spec, k * r1).unwrap();
        prop_assert!((m2.moment / m1.moment - k).abs() < 1e-9 * k);
    }

    #[test]
    fn quadrature_is_exact_for_low_degree_polynomials(
        c0 in -3.0f64..3.0,
        c1 in -3.0f64..3.0,
        c2 in -3.0f64..3.0,
        c3 in -3.0f64..3.0,
        a in -2.0f64..0.0,
        span in 0.5f64..3.0,
    ) {
        let b = a + span;
        let f = |x: f64| c0 + c1 * x + c2 * x * x + c3 * x * x * x;
        let got = integrate(f, a, b, 4);
        let anti = |x: f64| {
            c0 * x + c1 * x * x / 2.0 + c2 * x * x * x / 3.0 + c3 * x * x * x * x / 4.0
        };
        let want = anti(b) - anti(a);
        prop_assert!((got - want).abs() < 1e-12 * (1.0 + want.abs()));
    }
}

// The mask quadrature walks every sector at high order, so it gets a
// smaller case budget than the cheap properties above.
proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn mask_spectra_never_exceed_unit_power(
        n in 1u32..8,
        delta0 in 0.0f64..6.28,
        absorption in 0.0f64..4.0,
        spiral in any::<bool>(),
    ) {
        let mask = if spiral {
            MaskSpec::spiral(n, delta0)
        } else {
            MaskSpec::two_level(n, delta0, absorption)
        };
        let spec = analytic_mask_spectrum(&mask, 64).unwrap();
        prop_assert!(spec.weights.iter().all(|w| *w >= 0.0));
        prop_assert!(spec.is_normalized(1e-9));
        let total: f64 = oam_core::sources::mask_coefficients(&mask, 64)
            .unwrap()
            .iter()
            .map(|c| c.norm_sqr())
            .sum();
        prop_assert!(total <= 1.0 + 1e-9, "captured power {total}");
    }
}
