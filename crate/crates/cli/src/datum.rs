//! Initial-datum construction for the named and explicit config kinds.

use nscert::field::{SpectralField, WaveVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::config::DatumSpec;
use crate::CliError;

pub fn build_datum(spec: &DatumSpec, dim: usize, seed: u64) -> Result<SpectralField, CliError> {
    match spec {
        DatumSpec::Explicit { field } => {
            if field.dim() != dim {
                return Err(CliError::Config(format!(
                    "explicit datum has dimension {}, config says {dim}",
                    field.dim()
                )));
            }
            Ok(field.clone())
        }
        DatumSpec::TaylorGreen { amplitude } => {
            if dim != 3 {
                return Err(CliError::Config(format!(
                    "the Taylor-Green datum is three-dimensional, config says dim = {dim}"
                )));
            }
            if !amplitude.is_finite() {
                return Err(CliError::Config(format!("amplitude {amplitude}")));
            }
            Ok(taylor_green(*amplitude))
        }
        DatumSpec::RandomBand { lo, hi, amplitude } => {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let raw = SpectralField::random_band(dim, *lo, *hi, &mut rng)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let norm = raw.norm(0.0);
            if norm == 0.0 {
                return Err(CliError::Config(format!(
                    "random_band [{lo}, {hi}] contains no modes in dimension {dim}"
                )));
            }
            Ok(raw.scaled(amplitude / norm))
        }
    }
}

/// u = A (sin x cos y cos z, -cos x sin y cos z, 0): eight conjugate modes at
/// k = (+-1, +-1, +-1), divergence-free by construction.  With the
/// (2pi)^{-3/2} transform convention the nonzero coefficient components at
/// k = (s1, s2, s3) are (-i s1, +i s2, 0) * (2pi)^{3/2} A / 8.
pub fn taylor_green(amplitude: f64) -> SpectralField {
    let scale = (2.0 * std::f64::consts::PI).powf(1.5) * amplitude / 8.0;
    let mut modes = Vec::new();
    for s1 in [-1i32, 1] {
        for s2 in [-1i32, 1] {
            for s3 in [-1i32, 1] {
                let k = WaveVector::from_slice(&[s1, s2, s3]);
                let c = vec![
                    Complex64::new(0.0, -s1 as f64 * scale),
                    Complex64::new(0.0, s2 as f64 * scale),
                    Complex64::new(0.0, 0.0),
                ];
                modes.push((k, c));
            }
        }
    }
    SpectralField::from_modes(3, modes).expect("fixed mode set is canonical and conjugate-closed")
}
