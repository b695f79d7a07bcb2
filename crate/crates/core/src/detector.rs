//! Shot-noise model: converts a continuous intensity pattern into integer
//! electron counts with a fixed total budget and a seeded RNG, so noisy
//! runs are reproducible from their recorded seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};

/// Draws Poisson counts cell-by-cell after scaling the intensity so its sum
/// equals `total_counts` in expectation. Zero cells stay exactly zero.
/// Deterministic for a given (intensity, total_counts, seed) triple.
pub fn sample_counts(intensity: &[f64], total_counts: f64, seed: u64) -> Result<Vec<f64>> {
    if !(total_counts.is_finite() && total_counts > 0.0) {
        return Err(Error::InvalidParam(format!(
            "total_counts must be positive, got {total_counts}"
        )));
    }
    let sum: f64 = intensity.iter().sum();
    if !sum.is_finite() || sum <= 0.0 {
        return Err(Error::ZeroNorm);
    }
    if intensity.iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidParam("intensity must be nonnegative".into()));
    }
    let scale = total_counts / sum;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(intensity.len());
    for &v in intensity {
        let mean = v * scale;
        if mean <= 0.0 {
            out.push(0.0);
        } else {
            let p = Poisson::new(mean)
                .map_err(|e| Error::InvalidParam(format!("poisson mean {mean}: {e}")))?;
            out.push(p.sample(&mut rng));
        }
    }
    Ok(out)
}
