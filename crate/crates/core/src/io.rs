//! On-disk formats: raw complex-field dumps, PGM images for intensity
//! maps and phase masks, and two-column CSV files for detector traces
//! and OAM spectra.
//!
//! Every text format tolerates `#`-prefixed comment lines; writers use
//! them to embed the run-manifest hash so an output file can be traced
//! back to the exact configuration that produced it.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::grid::GridSpec;
use crate::oracle::OamSpectrum;
use crate::sorter::DetectorTrace;

const FIELD_MAGIC: &str = "OAMFIELD1";

/// Writes a complex field as a one-line ASCII header
/// (`OAMFIELD1 nx ny dx dy wavelength`), optional `#` comment lines, and
/// little-endian f32 (re, im) pairs in row-major order.
pub fn write_field(path: &Path, field: &ComplexField, comment: Option<&str>) -> Result<()> {
    let g = field.grid();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{FIELD_MAGIC} {} {} {} {} {}", g.nx, g.ny, g.dx, g.dy, g.wavelength)?;
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    for z in field.data() {
        w.write_all(&(z.re as f32).to_le_bytes())?;
        w.write_all(&(z.im as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a field written by `write_field`.
pub fn read_field(path: &Path) -> Result<ComplexField> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = Vec::new();
    r.read_until(b'\n', &mut header)?;
    let header = String::from_utf8(header)
        .map_err(|_| Error::Format("field header is not ASCII".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 6 || parts[0] != FIELD_MAGIC {
        return Err(Error::Format(format!(
            "bad field header (expected `{FIELD_MAGIC} nx ny dx dy wavelength`)"
        )));
    }
    let nx: usize = parts[1].parse().map_err(|_| Error::Format("bad nx".into()))?;
    let ny: usize = parts[2].parse().map_err(|_| Error::Format("bad ny".into()))?;
    let dx: f64 = parts[3].parse().map_err(|_| Error::Format("bad dx".into()))?;
    let dy: f64 = parts[4].parse().map_err(|_| Error::Format("bad dy".into()))?;
    let wavelength: f64 =
        parts[5].parse().map_err(|_| Error::Format("bad wavelength".into()))?;
    let grid = GridSpec::new(nx, ny, dx, dy, wavelength)?;
    // Comment lines sit between the header and the binary payload; the
    // payload itself may contain 0x23 bytes, so peek before consuming.
    loop {
        let buf = r.fill_buf()?;
        if buf.first() != Some(&b'#') {
            break;
        }
        let mut skip = Vec::new();
        r.read_until(b'\n', &mut skip)?;
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != nx * ny * 8 {
        return Err(Error::Format(format!(
            "field payload has {} bytes, expected {}",
            bytes.len(),
            nx * ny * 8
        )));
    }
    let data: Vec<Complex64> = bytes
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]) as f64;
            Complex64::new(re, im)
        })
        .collect();
    ComplexField::from_data(grid, data)
}

/// Writes a 16-bit binary PGM (P5, maxval 65535, big-endian samples),
/// scaling the data linearly so the maximum maps to 65535. An all-zero
/// image stays all zero. `comment` lines are embedded after the magic.
pub fn write_pgm16(
    path: &Path,
    data: &[f64],
    nx: usize,
    ny: usize,
    comment: Option<&str>,
) -> Result<()> {
    if data.len() != nx * ny {
        return Err(Error::Format(format!(
            "image data has {} samples, expected {}",
            data.len(),
            nx * ny
        )));
    }
    let max = data.iter().fold(0.0f64, |a, b| a.max(*b));
    let scale = if max > 0.0 { 65535.0 / max } else { 0.0 };
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "P5")?;
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    writeln!(w, "{nx} {ny}")?;
    writeln!(w, "65535")?;
    for v in data {
        let s = (v.max(0.0) * scale).round().min(65535.0) as u16;
        w.write_all(&s.to_be_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a phase map as an 8-bit binary PGM, mapping phase 0 to 0 and
/// 2 pi to 255. Phases are wrapped into [0, 2 pi) first.
pub fn write_phase_pgm8(
    path: &Path,
    phase: &[f64],
    nx: usize,
    ny: usize,
    comment: Option<&str>,
) -> Result<()> {
    if phase.len() != nx * ny {
        return Err(Error::Format(format!(
            "phase data has {} samples, expected {}",
            phase.len(),
            nx * ny
        )));
    }
    let tau = std::f64::consts::TAU;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "P5")?;
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    writeln!(w, "{nx} {ny}")?;
    writeln!(w, "255")?;
    let bytes: Vec<u8> = phase
        .iter()
        .map(|p| ((p.rem_euclid(tau) / tau) * 255.0).round().min(255.0) as u8)
        .collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Writes a detector trace as CSV with a `position,counts` header.
pub fn write_trace_csv(path: &Path, trace: &DetectorTrace, comment: Option<&str>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    writeln!(w, "position,counts")?;
    for (p, c) in trace.positions.iter().zip(&trace.counts) {
        writeln!(w, "{p},{c}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace written by `write_trace_csv`; `#` lines are skipped and
/// no calibration is attached.
pub fn read_trace_csv(path: &Path) -> Result<DetectorTrace> {
    let (a, b) = read_two_columns(path, "position", "counts")?;
    DetectorTrace::new(a, b)
}

/// Writes an OAM spectrum as CSV with an `ell,weight` header.
pub fn write_spectrum_csv(
    path: &Path,
    spectrum: &OamSpectrum,
    comment: Option<&str>,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if let Some(c) = comment {
        for line in c.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    writeln!(w, "ell,weight")?;
    for (ell, weight) in spectrum.iter() {
        writeln!(w, "{ell},{weight}")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a spectrum written by `write_spectrum_csv`. Consecutive integer
/// ell values are required.
pub fn read_spectrum_csv(path: &Path) -> Result<OamSpectrum> {
    let (ells, weights) = read_two_columns(path, "ell", "weight")?;
    if ells.is_empty() {
        return Err(Error::Format("spectrum file has no rows".into()));
    }
    let ell_min = ells[0] as i64;
    for (k, e) in ells.iter().enumerate() {
        if (e - (ell_min + k as i64) as f64).abs() > 1e-9 {
            return Err(Error::Format("spectrum ell values must be consecutive integers".into()));
        }
    }
    let pairs: Vec<(i64, f64)> =
        ells.iter().zip(&weights).map(|(e, w)| (*e as i64, *w)).collect();
    OamSpectrum::from_pairs(&pairs)
}

fn read_two_columns(path: &Path, col_a: &str, col_b: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let r = BufReader::new(File::open(path)?);
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut saw_header = false;
    for line in r.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            let expect = format!("{col_a},{col_b}");
            if line != expect {
                return Err(Error::Format(format!(
                    "expected header `{expect}`, found `{line}`"
                )));
            }
            saw_header = true;
            continue;
        }
        let mut parts = line.split(',');
        let (x, y) = match (parts.next(), parts.next(), parts.next()) {
            (Some(x), Some(y), None) => (x, y),
            _ => return Err(Error::Format(format!("bad CSV row `{line}`"))),
        };
        a.push(
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("bad {col_a} value `{x}`")))?,
        );
        b.push(
            y.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("bad {col_b} value `{y}`")))?,
        );
    }
    if !saw_header {
        return Err(Error::Format("file has no header row".into()));
    }
    Ok((a, b))
}
