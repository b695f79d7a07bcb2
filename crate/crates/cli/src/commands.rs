//! The five commands: `generate`, `sort`, `process`, `calibrate`, and
//! `experiment`. Each one writes its artifacts plus a `manifest.toml`
//! into the output directory, and stamps the manifest hash into every
//! file it writes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;

use oam_core::detector::sample_counts;
use oam_core::dipole::{analytic_dipole_spectrum, chi, estimate_moment};
use oam_core::field::ComplexField;
use oam_core::grid::GridSpec;
use oam_core::io;
use oam_core::oracle::spectrum_fidelity;
use oam_core::sorter::{
    calibrate_dispersion, corrector_phase, extract_trace, run_sorter_traced, unwrapper_phase,
    Calibration, CalibrationRef, DetectorTrace, SorterParams, SorterRun, SorterStages,
};
use oam_core::sources::{superpose, vortex, VortexSpec};
use oam_core::spectro::{build_psf, crosstalk, detect_peaks, process, PointSpreadFunction};

use crate::config::Config;
use crate::manifest::Manifest;
use crate::Fail;

/// Resolved invocation context shared by all commands.
pub struct Ctx {
    pub config: Config,
    pub out: PathBuf,
    /// Shot-noise seed (the `--seed` override already folded in).
    pub seed: u64,
    /// Requested worker threads; 0 means the library default pool.
    pub threads: usize,
    pub dump_stages: bool,
}

impl Ctx {
    fn prepare(&self) -> Result<(), Fail> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| Fail::run(format!("cannot create {}: {e}", self.out.display())))
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Fail> {
    std::fs::write(path, text)
        .map_err(|e| Fail::run(format!("cannot write {}: {e}", path.display())))
}

/// Detector image and trace for one sorter run, with optional seeded
/// shot noise. `seed_offset` decorrelates the runs of one experiment.
fn detector_outputs(
    ctx: &Ctx,
    run: &SorterRun,
    seed_offset: u64,
) -> Result<(Vec<f64>, DetectorTrace), Fail> {
    let counts = ctx.config.detector.poisson_counts;
    if counts > 0.0 {
        let noisy = sample_counts(&run.detector_image, counts, ctx.seed.wrapping_add(seed_offset))
            .map_err(Fail::run_core)?;
        let trace = extract_trace(&run.detector_grid, &noisy);
        Ok((noisy, trace))
    } else {
        Ok((run.detector_image.clone(), run.trace.clone()))
    }
}

/// Records every written file and closes the manifest.
fn finish(mut manifest: Manifest, ctx: &Ctx, written: &[PathBuf]) -> Result<(), Fail> {
    for p in written {
        manifest.record_output(p)?;
    }
    manifest.write(&ctx.out)?;
    Ok(())
}

pub fn cmd_generate(ctx: &Ctx) -> Result<(), Fail> {
    let grid = ctx.config.grid()?;
    let beam = ctx.config.build_source(&grid)?;
    ctx.prepare()?;
    let manifest = Manifest::new("generate", ctx.seed, ctx.threads, &[], &ctx.config)?;
    let comment = manifest.comment();

    let field_path = ctx.path("field.bin");
    io::write_field(&field_path, &beam, Some(&comment)).map_err(Fail::run_core)?;
    let image_path = ctx.path("intensity.pgm");
    io::write_pgm16(&image_path, &beam.intensity(), grid.nx, grid.ny, Some(&comment))
        .map_err(Fail::run_core)?;

    finish(manifest, ctx, &[field_path, image_path])?;
    println!(
        "generate: {} source on a {}x{} grid -> {}",
        ctx.config.source.kind,
        grid.nx,
        grid.ny,
        ctx.out.display()
    );
    Ok(())
}

/// Phase profiles of the two sorter elements, for stage dumps.
fn element_phases(grid: &GridSpec, params: &SorterParams) -> (Vec<f64>, Vec<f64>) {
    let mut unwrapper = vec![0.0f64; grid.len()];
    let mut corrector = vec![0.0f64; grid.len()];
    for iy in 0..grid.ny {
        let y = grid.y(iy);
        for ix in 0..grid.nx {
            let x = grid.x(ix);
            unwrapper[iy * grid.nx + ix] = unwrapper_phase(x, y, params);
            corrector[iy * grid.nx + ix] = corrector_phase(x, y, grid.nx, params);
        }
    }
    (unwrapper, corrector)
}

fn dump_sorter_stages(
    ctx: &Ctx,
    grid: &GridSpec,
    params: &SorterParams,
    stages: &SorterStages,
    comment: &str,
    written: &mut Vec<PathBuf>,
) -> Result<(), Fail> {
    let images: [(&str, &ComplexField); 4] = [
        ("stage_after_aperture.pgm", &stages.after_aperture),
        ("stage_after_unwrapper.pgm", &stages.after_unwrapper),
        ("stage_corrector_in.pgm", &stages.corrector_plane_in),
        ("stage_corrector_out.pgm", &stages.corrector_plane_out),
    ];
    for (name, field) in images {
        let path = ctx.path(name);
        let g = field.grid();
        io::write_pgm16(&path, &field.intensity(), g.nx, g.ny, Some(comment))
            .map_err(Fail::run_core)?;
        written.push(path);
    }
    let (unwrapper, corrector) = element_phases(grid, params);
    for (name, phase) in
        [("element_unwrapper_phase.pgm", unwrapper), ("element_corrector_phase.pgm", corrector)]
    {
        let path = ctx.path(name);
        io::write_phase_pgm8(&path, &phase, grid.nx, grid.ny, Some(comment))
            .map_err(Fail::run_core)?;
        written.push(path);
    }
    Ok(())
}

pub fn cmd_sort(ctx: &Ctx, input: &Path) -> Result<(), Fail> {
    let mut field = io::read_field(input)
        .map_err(|e| Fail::config(format!("{}: {e}", input.display())))?;
    // Stored fields are single precision; restore exact unit power.
    field.normalize().map_err(Fail::run_core)?;
    let grid = *field.grid();
    let params = ctx.config.sorter_params(&grid)?;
    ctx.prepare()?;
    let command = format!("sort {}", input.file_name().unwrap_or_default().to_string_lossy());
    let manifest = Manifest::new(&command, ctx.seed, ctx.threads, &[input], &ctx.config)?;
    let comment = manifest.comment();

    let (run, stages) =
        run_sorter_traced(&field, &params, ctx.dump_stages).map_err(Fail::run_core)?;
    let (image, trace) = detector_outputs(ctx, &run, 0)?;

    let mut written = Vec::new();
    let det_path = ctx.path("detector.pgm");
    io::write_pgm16(&det_path, &image, run.detector_grid.nx, run.detector_grid.ny, Some(&comment))
        .map_err(Fail::run_core)?;
    written.push(det_path);
    let trace_path = ctx.path("trace.csv");
    io::write_trace_csv(&trace_path, &trace, Some(&comment)).map_err(Fail::run_core)?;
    written.push(trace_path);
    if let Some(stages) = &stages {
        dump_sorter_stages(ctx, &grid, &params, stages, &comment, &mut written)?;
    }

    finish(manifest, ctx, &written)?;
    println!(
        "sort: {:.4} of the aperture power reached the detector; dispersion {:.3} px per OAM \
         unit -> {}",
        run.selected_fraction,
        params.dispersion_px(grid.nx),
        ctx.out.display()
    );
    Ok(())
}

/// Loads `ELL=PATH` reference traces and fits the dispersion.
fn calibration_from_references(references: &[(i64, PathBuf)]) -> Result<Calibration, Fail> {
    let mut traces = Vec::new();
    for (ell, path) in references {
        let t = io::read_trace_csv(path)
            .map_err(|e| Fail::config(format!("{}: {e}", path.display())))?;
        traces.push((*ell, t));
    }
    let refs: Vec<(CalibrationRef, &DetectorTrace)> =
        traces.iter().map(|(ell, t)| (CalibrationRef::Single(*ell), t)).collect();
    calibrate_dispersion(&refs).map_err(Fail::run_core)
}

/// On-disk calibration format shared by `calibrate` and `process`.
#[derive(serde::Serialize, serde::Deserialize)]
struct CalibrationFile {
    px_per_ell: f64,
    offset_px: f64,
    r_squared: f64,
}

fn resolve_calibration(
    ctx: &Ctx,
    references: &[(i64, PathBuf)],
    calibration_path: Option<&Path>,
) -> Result<Calibration, Fail> {
    if !references.is_empty() {
        return calibration_from_references(references);
    }
    if let Some(path) = calibration_path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Fail::config(format!("cannot read {}: {e}", path.display())))?;
        let f: CalibrationFile = toml::from_str(&text)
            .map_err(|e| Fail::config(format!("{}: {e}", path.display())))?;
        return Ok(Calibration {
            px_per_ell: f.px_per_ell,
            offset_px: f.offset_px,
            r_squared: f.r_squared,
        });
    }
    let c = &ctx.config.calibration;
    if c.px_per_ell != 0.0 {
        return Ok(Calibration { px_per_ell: c.px_per_ell, offset_px: c.offset_px, r_squared: 1.0 });
    }
    Err(Fail::config(
        "process needs a position-to-OAM calibration: pass --reference ELL=PATH (repeatable), \
         --calibration FILE, or set [calibration] px_per_ell in the config",
    ))
}

pub fn cmd_process(
    ctx: &Ctx,
    input: &Path,
    references: &[(i64, PathBuf)],
    psf_path: Option<&Path>,
    calibration_path: Option<&Path>,
) -> Result<(), Fail> {
    let raw = io::read_trace_csv(input)
        .map_err(|e| Fail::config(format!("{}: {e}", input.display())))?;
    let cal = resolve_calibration(ctx, references, calibration_path)?;
    let trace = raw.with_calibration(cal);

    let psf: Option<PointSpreadFunction> = match psf_path {
        Some(path) => {
            let zero = io::read_trace_csv(path)
                .map_err(|e| Fail::config(format!("{}: {e}", path.display())))?
                .with_calibration(cal);
            Some(build_psf(&zero).map_err(Fail::run_core)?)
        }
        None => None,
    };

    let max = trace.counts.iter().fold(0.0f64, |a, b| a.max(*b));
    let pconfig = ctx.config.processing(max)?;
    let out = process(&trace, psf.as_ref(), &pconfig).map_err(Fail::run_core)?;

    ctx.prepare()?;
    let mut inputs: Vec<&Path> = vec![input];
    for (_, p) in references {
        inputs.push(p);
    }
    if let Some(p) = psf_path {
        inputs.push(p);
    }
    if let Some(p) = calibration_path {
        inputs.push(p);
    }
    let command = format!("process {}", input.file_name().unwrap_or_default().to_string_lossy());
    let manifest = Manifest::new(&command, ctx.seed, ctx.threads, &inputs, &ctx.config)?;
    let comment = manifest.comment();

    let mut written = Vec::new();
    let spec_path = ctx.path("spectrum.csv");
    io::write_spectrum_csv(&spec_path, &out.spectrum, Some(&comment)).map_err(Fail::run_core)?;
    written.push(spec_path);

    let mut report = format!("# {comment}\n");
    let _ = writeln!(report, "px_per_ell = {}", cal.px_per_ell);
    let _ = writeln!(report, "offset_px = {}", cal.offset_px);
    let _ = writeln!(report, "r_squared = {}", cal.r_squared);
    for (key, value) in out.report_lines(&pconfig) {
        let _ = writeln!(report, "{key} = {value}");
    }
    let report_path = ctx.path("report.txt");
    write_text(&report_path, &report)?;
    written.push(report_path);

    if ctx.dump_stages {
        let path = ctx.path("processed_trace.csv");
        io::write_trace_csv(&path, &out.final_trace, Some(&comment)).map_err(Fail::run_core)?;
        written.push(path);
    }

    finish(manifest, ctx, &written)?;
    let mut top: Vec<(i64, f64)> = out.spectrum.iter().collect();
    top.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    let head: Vec<String> =
        top.iter().take(3).map(|(e, w)| format!("{e}: {w:.3}")).collect();
    println!("process: strongest bins {} -> {}", head.join(", "), ctx.out.display());
    Ok(())
}

pub fn cmd_calibrate(ctx: &Ctx, references: &[(i64, PathBuf)]) -> Result<(), Fail> {
    if references.len() < 2 {
        return Err(Fail::config(
            "calibrate needs at least two --reference ELL=PATH traces with distinct ELL",
        ));
    }
    let cal = calibration_from_references(references)?;
    ctx.prepare()?;
    let inputs: Vec<&Path> = references.iter().map(|(_, p)| p.as_path()).collect();
    let manifest = Manifest::new("calibrate", ctx.seed, ctx.threads, &inputs, &ctx.config)?;

    let file = CalibrationFile {
        px_per_ell: cal.px_per_ell,
        offset_px: cal.offset_px,
        r_squared: cal.r_squared,
    };
    let body = toml::to_string(&file)
        .map_err(|e| Fail::run(format!("calibration serialization: {e}")))?;
    let path = ctx.path("calibration.toml");
    write_text(&path, &format!("# {}\n{}", manifest.comment(), body))?;

    finish(manifest, ctx, &[path])?;
    println!(
        "calibrate: {} px per OAM unit, zero at {:.2} px, R^2 = {:.6}",
        cal.px_per_ell, cal.offset_px, cal.r_squared
    );
    Ok(())
}

/// Canned end-to-end recipes. Overrides are applied onto the loaded
/// config (idempotently, so a manifest rerun reapplies them harmlessly)
/// and recorded in the manifest snapshot.
fn apply_recipe(config: &mut Config, name: &str) -> Result<(), Fail> {
    let s = &mut config.source;
    match name {
        "fig1" => {
            s.kind = "superposition".into();
            s.ell_pair = [5, -5];
            s.profile = "ring".into();
        }
        // The spectrum runs use the finer grid: its sorter resolves
        // the full -10..10 band the beams of this family span.
        "fig2a" => {
            s.kind = "vortex".into();
            s.ell = 1;
            s.profile = "ring".into();
            config.grid.n = 1024;
        }
        "fig2b" => {
            s.kind = "superposition".into();
            s.ell_pair = [4, -4];
            s.profile = "ring".into();
            config.grid.n = 1024;
        }
        "fig2c" => {
            s.kind = "superposition".into();
            s.ell_pair = [5, -5];
            s.profile = "ring".into();
            config.grid.n = 1024;
        }
        "fig2d" => {
            s.kind = "vortex".into();
            s.ell = 10;
            s.profile = "ring".into();
            config.grid.n = 1024;
        }
        "fig3" => {
            s.kind = "dipole".into();
            s.profile = "ring".into();
            s.width_frac = 0.03;
            s.moment_bohr = 6.2e9;
            s.chi_target = 0.0;
            // Place the 3.49 um reference ring at a grid fraction the
            // sorter resolves comfortably, whatever the grid size.
            config.grid.pitch_m = 4e-8;
            let half = (config.grid.n as f64 / 2.0) * config.grid.pitch_m;
            s.r0_frac = 3.49e-6 / half;
        }
        other => {
            return Err(Fail::config(format!(
                "unknown experiment `{other}`; valid names: fig1, fig2a, fig2b, fig2c, fig2d, \
                 fig3"
            )))
        }
    }
    Ok(())
}

/// Reference beam of one or two pure states on the configured ring
/// profile (used for the in-run dispersion calibration).
fn reference_beam(config: &Config, grid: &GridSpec, ells: &[i64]) -> Result<ComplexField, Fail> {
    let profile = config.radial_profile(grid)?;
    let beam = match ells {
        [ell] => vortex(*grid, &VortexSpec { ell: *ell, profile }),
        [a, b] => {
            let amp = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            let va = vortex(*grid, &VortexSpec { ell: *a, profile: profile.clone() })
                .map_err(Fail::run_core)?;
            let vb = vortex(*grid, &VortexSpec { ell: *b, profile }).map_err(Fail::run_core)?;
            superpose(&[(amp, &va), (amp, &vb)])
        }
        _ => unreachable!("reference beams carry one or two states"),
    };
    beam.map_err(Fail::run_core)
}

/// Calibration protocol of the canned experiments: a zero reference and
/// a +-4 superposition, sorted under the same geometry as the analyte.
/// Returns the fitted calibration, the detector response taken from the
/// zero reference, and both reference traces for export.
fn calibrate_in_run(
    ctx: &Ctx,
    grid: &GridSpec,
    params: &SorterParams,
) -> Result<(Calibration, PointSpreadFunction, DetectorTrace, DetectorTrace), Fail> {
    let zero_run =
        run_sorter_traced(&reference_beam(&ctx.config, grid, &[0])?, params, false)
            .map_err(Fail::run_core)?
            .0;
    let (_, zero_trace) = detector_outputs(ctx, &zero_run, 1)?;
    let pair_run =
        run_sorter_traced(&reference_beam(&ctx.config, grid, &[4, -4])?, params, false)
            .map_err(Fail::run_core)?
            .0;
    let (_, pair_trace) = detector_outputs(ctx, &pair_run, 2)?;
    let refs: Vec<(CalibrationRef, &DetectorTrace)> = vec![
        (CalibrationRef::Single(0), &zero_trace),
        (CalibrationRef::SymmetricPair(4), &pair_trace),
    ];
    let cal = calibrate_dispersion(&refs).map_err(Fail::run_core)?;
    let psf = build_psf(&zero_trace.clone().with_calibration(cal)).map_err(Fail::run_core)?;
    Ok((cal, psf, zero_trace, pair_trace))
}

/// Key-value summary file with the manifest stamp.
fn write_summary(
    ctx: &Ctx,
    comment: &str,
    lines: &[(String, String)],
    written: &mut Vec<PathBuf>,
) -> Result<(), Fail> {
    let mut text = format!("# {comment}\n");
    for (k, v) in lines {
        let _ = writeln!(text, "{k} = {v}");
    }
    let path = ctx.path("summary.txt");
    write_text(&path, &text)?;
    written.push(path);
    Ok(())
}

fn experiment_fig1(ctx: &Ctx, manifest: Manifest) -> Result<(), Fail> {
    let grid = ctx.config.grid()?;
    let params = ctx.config.sorter_params(&grid)?;
    let beam = ctx.config.build_source(&grid)?;
    let comment = manifest.comment();
    let mut written = Vec::new();

    let beam_path = ctx.path("beam_intensity.pgm");
    io::write_pgm16(&beam_path, &beam.intensity(), grid.nx, grid.ny, Some(&comment))
        .map_err(Fail::run_core)?;
    written.push(beam_path);

    let (run, stages) = run_sorter_traced(&beam, &params, true).map_err(Fail::run_core)?;
    let stages = stages.expect("stages were requested");
    let stripe_path = ctx.path("unwrapped_stripe.pgm");
    let sg = stages.corrector_plane_in.grid();
    io::write_pgm16(
        &stripe_path,
        &stages.corrector_plane_in.intensity(),
        sg.nx,
        sg.ny,
        Some(&comment),
    )
    .map_err(Fail::run_core)?;
    written.push(stripe_path);

    let (image, trace) = detector_outputs(ctx, &run, 0)?;
    let det_path = ctx.path("detector.pgm");
    io::write_pgm16(&det_path, &image, run.detector_grid.nx, run.detector_grid.ny, Some(&comment))
        .map_err(Fail::run_core)?;
    written.push(det_path);
    let trace_path = ctx.path("trace.csv");
    io::write_trace_csv(&trace_path, &trace, Some(&comment)).map_err(Fail::run_core)?;
    written.push(trace_path);

    let designed = params.dispersion_px(grid.nx);
    // The two dominant lobes; weaker local maxima are diffraction
    // sidelobes and stay out of the summary.
    let mut peaks = detect_peaks(&trace);
    peaks.sort_by(|&i, &j| trace.counts[j].partial_cmp(&trace.counts[i]).unwrap());
    peaks.truncate(2);
    peaks.sort_by(|&i, &j| trace.positions[i].partial_cmp(&trace.positions[j]).unwrap());
    let positions: Vec<String> =
        peaks.iter().map(|&i| format!("{:.2}", trace.positions[i])).collect();
    let mut lines = vec![
        ("experiment".to_string(), "fig1".to_string()),
        ("designed_px_per_ell".to_string(), format!("{designed}")),
        ("expected_peak_separation_px".to_string(), format!("{}", 10.0 * designed)),
        ("peak_positions_px".to_string(), positions.join(" ")),
    ];
    if peaks.len() == 2 {
        let sep = (trace.positions[peaks[1]] - trace.positions[peaks[0]]).abs();
        lines.push(("measured_peak_separation_px".to_string(), format!("{sep}")));
    }
    write_summary(ctx, &comment, &lines, &mut written)?;
    finish(manifest, ctx, &written)?;
    println!("experiment fig1 -> {}", ctx.out.display());
    Ok(())
}

fn experiment_fig2(ctx: &Ctx, name: &str, manifest: Manifest) -> Result<(), Fail> {
    let grid = ctx.config.grid()?;
    let params = ctx.config.sorter_params(&grid)?;
    let beam = ctx.config.build_source(&grid)?;
    let intended: Vec<i64> = match name {
        "fig2a" => vec![1],
        "fig2b" => vec![-4, 4],
        "fig2c" => vec![-5, 5],
        "fig2d" => vec![10],
        _ => unreachable!("checked by apply_recipe"),
    };
    let comment = manifest.comment();
    let mut written = Vec::new();

    let beam_path = ctx.path("beam_intensity.pgm");
    io::write_pgm16(&beam_path, &beam.intensity(), grid.nx, grid.ny, Some(&comment))
        .map_err(Fail::run_core)?;
    written.push(beam_path);

    let (cal, psf, zero_trace, pair_trace) = calibrate_in_run(ctx, &grid, &params)?;
    for (name, trace) in
        [("reference_zero.csv", &zero_trace), ("reference_pair.csv", &pair_trace)]
    {
        let path = ctx.path(name);
        io::write_trace_csv(&path, trace, Some(&comment)).map_err(Fail::run_core)?;
        written.push(path);
    }

    let run = run_sorter_traced(&beam, &params, false).map_err(Fail::run_core)?.0;
    let (image, trace) = detector_outputs(ctx, &run, 0)?;
    let det_path = ctx.path("detector.pgm");
    io::write_pgm16(&det_path, &image, run.detector_grid.nx, run.detector_grid.ny, Some(&comment))
        .map_err(Fail::run_core)?;
    written.push(det_path);
    let trace_path = ctx.path("trace.csv");
    io::write_trace_csv(&trace_path, &trace, Some(&comment)).map_err(Fail::run_core)?;
    written.push(trace_path);

    let calibrated = trace.with_calibration(cal);
    let max = calibrated.counts.iter().fold(0.0f64, |a, b| a.max(*b));
    let pconfig = ctx.config.processing(max)?;
    let out = process(&calibrated, Some(&psf), &pconfig).map_err(Fail::run_core)?;
    let spec_path = ctx.path("spectrum.csv");
    io::write_spectrum_csv(&spec_path, &out.spectrum, Some(&comment)).map_err(Fail::run_core)?;
    written.push(spec_path);

    let ct = crosstalk(&out.spectrum, &intended).map_err(Fail::run_core)?;
    let peaks = detect_peaks(&out.final_trace);
    let peak_ells: Vec<String> = peaks
        .iter()
        .map(|&i| format!("{:.2}", cal.ell_of_position(out.final_trace.positions[i])))
        .collect();
    let weights: Vec<String> =
        intended.iter().map(|e| format!("{e}: {:.3}", out.spectrum.weight(*e))).collect();
    let lines = vec![
        ("experiment".to_string(), name.to_string()),
        ("px_per_ell".to_string(), format!("{}", cal.px_per_ell)),
        ("calibration_r_squared".to_string(), format!("{}", cal.r_squared)),
        ("bin_offset".to_string(), format!("{}", out.bin_offset)),
        ("intended_bins".to_string(), intended.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(" ")),
        ("intended_bin_weights".to_string(), weights.join(", ")),
        ("cross_talk".to_string(), format!("{ct:.4}")),
        ("peak_positions_ell".to_string(), peak_ells.join(" ")),
    ];
    write_summary(ctx, &comment, &lines, &mut written)?;
    finish(manifest, ctx, &written)?;
    println!("experiment {name}: cross-talk {ct:.3} -> {}", ctx.out.display());
    Ok(())
}

fn experiment_fig3(ctx: &Ctx, manifest: Manifest) -> Result<(), Fail> {
    let grid = ctx.config.grid()?;
    let params = ctx.config.sorter_params(&grid)?;
    let beam = ctx.config.build_source(&grid)?;
    let spec = ctx.config.dipole_spec(&grid);
    let r0 = ctx.config.source.r0_frac * grid.min_half_extent();
    let chi_ring = chi(r0, &spec).map_err(Fail::run_core)?;
    let comment = manifest.comment();
    let mut written = Vec::new();

    let beam_path = ctx.path("beam_intensity.pgm");
    io::write_pgm16(&beam_path, &beam.intensity(), grid.nx, grid.ny, Some(&comment))
        .map_err(Fail::run_core)?;
    written.push(beam_path);

    let (cal, psf, zero_trace, pair_trace) = calibrate_in_run(ctx, &grid, &params)?;
    for (name, trace) in
        [("reference_zero.csv", &zero_trace), ("reference_pair.csv", &pair_trace)]
    {
        let path = ctx.path(name);
        io::write_trace_csv(&path, trace, Some(&comment)).map_err(Fail::run_core)?;
        written.push(path);
    }

    let run = run_sorter_traced(&beam, &params, false).map_err(Fail::run_core)?.0;
    let (image, trace) = detector_outputs(ctx, &run, 0)?;
    let det_path = ctx.path("detector.pgm");
    io::write_pgm16(&det_path, &image, run.detector_grid.nx, run.detector_grid.ny, Some(&comment))
        .map_err(Fail::run_core)?;
    written.push(det_path);
    let trace_path = ctx.path("trace.csv");
    io::write_trace_csv(&trace_path, &trace, Some(&comment)).map_err(Fail::run_core)?;
    written.push(trace_path);

    let calibrated = trace.with_calibration(cal);
    let max = calibrated.counts.iter().fold(0.0f64, |a, b| a.max(*b));
    let pconfig = ctx.config.processing(max)?;
    let out = process(&calibrated, Some(&psf), &pconfig).map_err(Fail::run_core)?;
    let spec_path = ctx.path("spectrum.csv");
    io::write_spectrum_csv(&spec_path, &out.spectrum, Some(&comment)).map_err(Fail::run_core)?;
    written.push(spec_path);

    // Overlay of the measured bins against the Bessel comb for the chi
    // realized at the ring radius.
    let comb = analytic_dipole_spectrum(chi_ring, 12).map_err(Fail::run_core)?;
    let mut overlay = format!("# {comment}\nell,measured,expected\n");
    for ell in -12..=12i64 {
        let _ = writeln!(overlay, "{ell},{},{}", out.spectrum.weight(ell), comb.weight(ell));
    }
    let overlay_path = ctx.path("overlay.csv");
    write_text(&overlay_path, &overlay)?;
    written.push(overlay_path);

    let fidelity = spectrum_fidelity(&out.spectrum, &comb).map_err(Fail::run_core)?;
    let estimate = estimate_moment(&out.spectrum, r0).map_err(Fail::run_core)?;
    let lines = vec![
        ("experiment".to_string(), "fig3".to_string()),
        ("chi_at_ring_rad".to_string(), format!("{chi_ring}")),
        ("moment_true_bohr".to_string(), format!("{}", spec.moment)),
        ("moment_estimated_bohr".to_string(), format!("{}", estimate.moment)),
        ("moment_uncertainty_bohr".to_string(), format!("{}", estimate.uncertainty)),
        ("comb_fidelity".to_string(), format!("{fidelity}")),
        ("px_per_ell".to_string(), format!("{}", cal.px_per_ell)),
        ("calibration_r_squared".to_string(), format!("{}", cal.r_squared)),
        ("bin_offset".to_string(), format!("{}", out.bin_offset)),
    ];
    write_summary(ctx, &comment, &lines, &mut written)?;
    finish(manifest, ctx, &written)?;
    println!(
        "experiment fig3: estimated moment {:.3e} (true {:.3e}) -> {}",
        estimate.moment,
        spec.moment,
        ctx.out.display()
    );
    Ok(())
}

pub fn cmd_experiment(ctx: &Ctx, name: &str) -> Result<(), Fail> {
    let mut config = ctx.config.clone();
    apply_recipe(&mut config, name)?;
    let ctx = Ctx {
        config,
        out: ctx.out.clone(),
        seed: ctx.seed,
        threads: ctx.threads,
        dump_stages: ctx.dump_stages,
    };
    ctx.prepare()?;
    let manifest =
        Manifest::new(&format!("experiment {name}"), ctx.seed, ctx.threads, &[], &ctx.config)?;
    match name {
        "fig1" => experiment_fig1(&ctx, manifest),
        "fig3" => experiment_fig3(&ctx, manifest),
        _ => experiment_fig2(&ctx, name, manifest),
    }
}
