//! Input builders shared by the criterion benches.

use nscert::field::SpectralField;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Seeded divergence-free field with Euclidean shells in `[lo, hi]`.
pub fn band(dim: usize, lo: f64, hi: f64, seed: u64) -> SpectralField {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    SpectralField::random_band(dim, lo, hi, &mut rng).expect("band datum")
}
