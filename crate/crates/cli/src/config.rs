//! Run configuration: one TOML file with a section per pipeline stage.
//! Every field has a default, so an empty (or absent) file runs the
//! standard geometry; the README documents which defaults are fixed by
//! the sorter design being modeled and which are tool choices.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use oam_core::dipole::{apply_dipole_phase, DipoleSpec};
use oam_core::field::{ApertureSpec, ComplexField};
use oam_core::grid::GridSpec;
use oam_core::sorter::SorterParams;
use oam_core::sources::{
    apply_mask, gaussian, superpose, vortex, MaskKind, MaskSpec, RadialProfile, VortexSpec,
};
use oam_core::spectro::ProcessingConfig;

use crate::Fail;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub grid: GridConfig,
    pub source: SourceConfig,
    pub sorter: SorterConfig,
    pub process: ProcessConfig,
    pub detector: DetectorConfig,
    pub calibration: CalibrationConfig,
}

/// Simulation grid: square, uniform pitch.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Grid points per side.
    pub n: usize,
    /// Pixel pitch, meters.
    pub pitch_m: f64,
    /// Beam wavelength, meters (300 kV electrons by default).
    pub wavelength_m: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: 512, pitch_m: 1e-6, wavelength_m: 1.97e-12 }
    }
}

/// Source beam built by `generate` and by the canned experiments.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    /// gaussian | vortex | superposition | mask | dipole
    pub kind: String,
    /// Winding number of a `vortex` source.
    pub ell: i64,
    /// The two winding numbers of a `superposition` source.
    pub ell_pair: [i64; 2],
    /// Radial profile for vortex / superposition / dipole sources:
    /// ring | gaussian.
    pub profile: String,
    /// Ring radius as a fraction of the grid half-extent.
    pub r0_frac: f64,
    /// Ring 1/e half-width as a fraction of the grid half-extent.
    pub width_frac: f64,
    /// Gaussian waist as a fraction of the grid half-extent (also the
    /// illumination of a `mask` source).
    pub waist_frac: f64,
    /// two_level | spiral
    pub mask_kind: String,
    /// Azimuthal period count of the mask.
    pub mask_n: u32,
    /// Mask phase depth, radians.
    pub mask_delta0: f64,
    /// Absorption index of the recessed mask zones.
    pub mask_absorption: f64,
    /// Dipole moment, Bohr magnetons.
    pub moment_bohr: f64,
    /// If positive, rescales the dipole moment so the azimuthal phase
    /// amplitude equals this value (radians) at the ring radius.
    pub chi_target: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            kind: "gaussian".into(),
            ell: 0,
            ell_pair: [5, -5],
            profile: "ring".into(),
            r0_frac: 0.35,
            width_frac: 0.04,
            waist_frac: 0.2,
            mask_kind: "two_level".into(),
            mask_n: 1,
            mask_delta0: PI,
            mask_absorption: 0.0,
            moment_bohr: 6.2e9,
            chi_target: 0.0,
        }
    }
}

/// Sorter element and geometry parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SorterConfig {
    /// Map scale (grid-relative units).
    pub a: f64,
    /// Map reference radius (fraction of the half-extent).
    pub b: f64,
    /// Carrier parameter of the binarized corrector.
    pub c: f64,
    /// Map magnification; 0 selects the grid-sized default (n / 40).
    pub map_gain: f64,
    /// Detector oversampling factor (1 disables padding).
    pub detector_pad: usize,
    /// Input aperture radius as a fraction of the half-extent.
    pub aperture_frac: f64,
    /// Soft (raised-cosine) or hard aperture edge.
    pub aperture_soft: bool,
    /// Binary phase depths of the two elements, radians.
    pub phi0: f64,
    pub phi1: f64,
    /// Use the binarized elements instead of the smooth kinoforms.
    pub binarized: bool,
}

impl Default for SorterConfig {
    fn default() -> Self {
        SorterConfig {
            a: 2.0,
            b: 0.01,
            c: 0.6,
            map_gain: 0.0,
            detector_pad: 2,
            aperture_frac: 0.45,
            aperture_soft: true,
            phi0: PI / 2.0,
            phi1: PI / 2.0,
            binarized: false,
        }
    }
}

/// Trace-processing parameters (see the core `spectro` module).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessConfig {
    pub background_poly_order: usize,
    pub mem_iterations: usize,
    pub mem_tolerance: f64,
    pub mem_damping: f64,
    /// Deconvolution noise scale as a fraction of the trace maximum;
    /// 0 falls back to the library default (1%).
    pub mem_noise_frac: f64,
    pub bin_offset_search: f64,
    pub clip_negatives: bool,
}

impl Default for ProcessConfig {
    fn default() -> Self {
        ProcessConfig {
            background_poly_order: 3,
            mem_iterations: 5000,
            mem_tolerance: 1.0,
            mem_damping: 0.7,
            mem_noise_frac: 1e-3,
            bin_offset_search: 0.5,
            clip_negatives: true,
        }
    }
}

/// Optional shot-noise sampling of detector images.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Expected total counts; 0 disables sampling (noise-free images).
    pub poisson_counts: f64,
    /// Seed of the count sampler (`--seed` overrides).
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig { poisson_counts: 0.0, seed: 0 }
    }
}

/// Explicit position-to-OAM calibration for `process` when no reference
/// traces are given. `px_per_ell = 0` means unset.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub px_per_ell: f64,
    pub offset_px: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig { px_per_ell: 0.0, offset_px: 0.0 }
    }
}

/// Loads a config file, or the defaults when no path is given. A
/// manifest written by an earlier run is accepted too: its `[config]`
/// table is the snapshot of that run.
pub fn load(path: Option<&Path>) -> Result<Config, Fail> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Fail::config(format!("cannot read {}: {e}", path.display())))?;
    let value: toml::Value = text
        .parse()
        .map_err(|e| Fail::config(format!("{}: {e}", path.display())))?;
    let value = match value.get("config") {
        Some(inner) => inner.clone(),
        None => value,
    };
    value
        .try_into()
        .map_err(|e| Fail::config(format!("{}: {e}", path.display())))
}

impl Config {
    pub fn grid(&self) -> Result<GridSpec, Fail> {
        GridSpec::square(self.grid.n, self.grid.pitch_m, self.grid.wavelength_m)
            .map_err(|e| Fail::config(format!("[grid]: {e}")))
    }

    pub fn sorter_params(&self, grid: &GridSpec) -> Result<SorterParams, Fail> {
        let s = &self.sorter;
        let mut p = SorterParams::for_grid(grid);
        p.a = s.a;
        p.b = s.b;
        p.c = s.c;
        if s.map_gain > 0.0 {
            p.map_gain = s.map_gain;
        }
        p.detector_pad = s.detector_pad;
        p.phi0 = s.phi0;
        p.phi1 = s.phi1;
        p.binarized = s.binarized;
        let r_max = s.aperture_frac * grid.min_half_extent();
        p.aperture = if s.aperture_soft {
            ApertureSpec::soft(r_max)
        } else {
            ApertureSpec::hard(r_max)
        };
        p.validate().map_err(|e| Fail::config(format!("[sorter]: {e}")))?;
        Ok(p)
    }

    pub fn processing(&self, trace_max: f64) -> Result<ProcessingConfig, Fail> {
        let p = &self.process;
        let config = ProcessingConfig {
            background_poly_order: p.background_poly_order,
            mem_iterations: p.mem_iterations,
            mem_tolerance: p.mem_tolerance,
            mem_damping: p.mem_damping,
            mem_noise: if p.mem_noise_frac > 0.0 {
                Some(p.mem_noise_frac * trace_max)
            } else {
                None
            },
            bin_offset_search: p.bin_offset_search,
            clip_negatives: p.clip_negatives,
        };
        config.validate().map_err(|e| Fail::config(format!("[process]: {e}")))?;
        Ok(config)
    }

    pub(crate) fn radial_profile(&self, grid: &GridSpec) -> Result<RadialProfile, Fail> {
        let s = &self.source;
        let half = grid.min_half_extent();
        match s.profile.as_str() {
            "ring" => Ok(RadialProfile::Ring { r0: s.r0_frac * half, width: s.width_frac * half }),
            "gaussian" => Ok(RadialProfile::Gaussian { w0: s.waist_frac * half }),
            other => Err(Fail::config(format!(
                "[source] profile `{other}` is not one of: ring, gaussian"
            ))),
        }
    }

    fn mask_spec(&self) -> Result<MaskSpec, Fail> {
        let s = &self.source;
        let kind = match s.mask_kind.as_str() {
            "two_level" => MaskKind::TwoLevel,
            "spiral" => MaskKind::Spiral,
            other => {
                return Err(Fail::config(format!(
                    "[source] mask_kind `{other}` is not one of: two_level, spiral"
                )))
            }
        };
        let mask =
            MaskSpec { kind, n: s.mask_n, delta0: s.mask_delta0, absorption: s.mask_absorption };
        mask.validate().map_err(|e| Fail::config(format!("[source]: {e}")))?;
        Ok(mask)
    }

    /// The dipole strength actually applied: either `moment_bohr`
    /// directly, or the moment that realizes `chi_target` at the ring
    /// radius.
    pub fn dipole_spec(&self, grid: &GridSpec) -> DipoleSpec {
        let s = &self.source;
        let moment = if s.chi_target > 0.0 {
            DipoleSpec::moment_for_chi(s.chi_target, s.r0_frac * grid.min_half_extent())
        } else {
            s.moment_bohr
        };
        DipoleSpec::for_grid(grid, moment)
    }

    /// Builds the configured source beam (unit norm).
    pub fn build_source(&self, grid: &GridSpec) -> Result<ComplexField, Fail> {
        let s = &self.source;
        let half = grid.min_half_extent();
        let field = match s.kind.as_str() {
            "gaussian" => gaussian(*grid, s.waist_frac * half),
            "vortex" => {
                let profile = self.radial_profile(grid)?;
                vortex(*grid, &VortexSpec { ell: s.ell, profile })
            }
            "superposition" => {
                let profile = self.radial_profile(grid)?;
                let amp = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                let a = vortex(*grid, &VortexSpec { ell: s.ell_pair[0], profile: profile.clone() })
                    .map_err(|e| Fail::config(format!("[source]: {e}")))?;
                let b = vortex(*grid, &VortexSpec { ell: s.ell_pair[1], profile })
                    .map_err(|e| Fail::config(format!("[source]: {e}")))?;
                superpose(&[(amp, &a), (amp, &b)])
            }
            "mask" => {
                let mask = self.mask_spec()?;
                gaussian(*grid, s.waist_frac * half).and_then(|mut f| {
                    apply_mask(&mut f, &mask)?;
                    f.normalize()?;
                    Ok(f)
                })
            }
            "dipole" => {
                let profile = self.radial_profile(grid)?;
                let spec = self.dipole_spec(grid);
                vortex(*grid, &VortexSpec { ell: 0, profile }).and_then(|mut f| {
                    apply_dipole_phase(&mut f, &spec)?;
                    Ok(f)
                })
            }
            other => {
                return Err(Fail::config(format!(
                    "[source] kind `{other}` is not one of: gaussian, vortex, superposition, \
                     mask, dipole"
                )))
            }
        };
        field.map_err(|e| Fail::config(format!("[source]: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_build_a_valid_pipeline() {
        let cfg = Config::default();
        let grid = cfg.grid().unwrap();
        let params = cfg.sorter_params(&grid).unwrap();
        assert!(params.validate().is_ok());
        assert!((params.map_gain - 12.8).abs() < 1e-12);
        let beam = cfg.build_source(&grid).unwrap();
        assert!((beam.norm_sqr() - 1.0).abs() < 1e-9);
        assert!(cfg.processing(100.0).unwrap().mem_noise.unwrap() > 0.0);
    }

    #[test]
    fn unknown_keys_are_rejected_with_the_valid_list() {
        let dir = std::env::temp_dir();
        let path = dir.join(format!("oam-cli-cfg-{}.toml", std::process::id()));
        std::fs::write(&path, "[grid]\nnn = 3\n").unwrap();
        let err = match load(Some(&path)) {
            Err(e) => e.to_string(),
            Ok(_) => panic!("bad key accepted"),
        };
        assert!(err.contains("unknown field `nn`"), "{err}");
        assert!(err.contains("expected one of"), "{err}");
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn manifest_config_table_round_trips() {
        let mut cfg = Config::default();
        cfg.source.kind = "vortex".into();
        cfg.source.ell = 7;
        let mut root = toml::value::Table::new();
        root.insert("hash".into(), toml::Value::String("x".into()));
        root.insert("config".into(), toml::Value::try_from(&cfg).unwrap());
        let dir = std::env::temp_dir();
        let path = dir.join(format!("oam-cli-man-{}.toml", std::process::id()));
        std::fs::write(&path, toml::to_string(&toml::Value::Table(root)).unwrap()).unwrap();
        let back = load(Some(&path)).unwrap();
        assert_eq!(back.source.kind, "vortex");
        assert_eq!(back.source.ell, 7);
        std::fs::remove_file(&path).ok();
    }
}
