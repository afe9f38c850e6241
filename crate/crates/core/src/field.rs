//! Sparse spectral representation of vector fields on the d-torus.
//!
//! A field is stored as a map from wave vectors to complex coefficient
//! vectors.  Only one representative per conjugate pair {k, -k} is kept (the
//! lexicographically positive one); the coefficient at -k is implied by the
//! reality condition v_{-k} = conj(v_k).  The zero mode is never stored:
//! every field is mean-zero by construction.
//!
//! Norms and inner products are the Sobolev family
//!
//! ```text
//!     <v|w>_s = sum_{k != 0} |k|^{2s} conj(v_k) . w_k
//! ```
//!
//! which is real for real fields; the implementation sums 2 Re(conj(v_k).w_k)
//! over stored representatives so the result is exactly real and exactly
//! symmetric in (v, w).

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Integer wave vector on the dual lattice Z^d.
///
/// Ordering is lexicographic in the components, which fixes the iteration
/// order of every field and hence the summation order of every norm.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WaveVector(Vec<i32>);

impl WaveVector {
    pub fn new(components: Vec<i32>) -> Self {
        WaveVector(components)
    }

    pub fn from_slice(components: &[i32]) -> Self {
        WaveVector(components.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[i32] {
        &self.0
    }

    /// |k|^2 as an exact integer.
    pub fn norm_sq(&self) -> i64 {
        self.0.iter().map(|&c| (c as i64) * (c as i64)).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    /// Euclidean dot product h . k as an exact integer.
    pub fn dot(&self, other: &WaveVector) -> i64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| (a as i64) * (b as i64))
            .sum()
    }

    pub fn neg(&self) -> WaveVector {
        WaveVector(self.0.iter().map(|&c| -c).collect())
    }

    pub fn infty_norm(&self) -> i32 {
        self.0.iter().map(|&c| c.abs()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    /// True when the first nonzero component is positive.  Exactly one of
    /// {k, -k} is canonical for every k != 0.
    pub fn is_canonical(&self) -> bool {
        match self.0.iter().find(|&&c| c != 0) {
            Some(&c) => c > 0,
            None => false,
        }
    }

    /// The canonical representative of {self, -self} and whether negation
    /// (hence conjugation of the coefficient) was applied.
    pub fn canonicalize(&self) -> (WaveVector, bool) {
        if self.is_canonical() {
            (self.clone(), false)
        } else {
            (self.neg(), true)
        }
    }
}

impl fmt::Debug for WaveVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k{:?}", self.0)
    }
}

impl Serialize for WaveVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for WaveVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(WaveVector(Vec::<i32>::deserialize(deserializer)?))
    }
}

pub(crate) fn conj_coeff(c: &[Complex64]) -> Vec<Complex64> {
    c.iter().map(|z| z.conj()).collect()
}

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("field dimension must be at least 1")]
    InvalidDimension,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("mode {0:?} listed more than once")]
    DuplicateMode(WaveVector),
    #[error("nonzero coefficient at the zero mode; fields are mean-zero")]
    NonzeroMean,
    #[error("non-finite coefficient at mode {0:?}")]
    NonFinite(WaveVector),
    #[error("mode {0:?} is not a canonical representative")]
    NonCanonical(WaveVector),
    #[error("coefficient at mode {k:?} has {found} components, expected {expected}")]
    CoefficientShape {
        k: WaveVector,
        expected: usize,
        found: usize,
    },
}

/// Divergence-free tolerance used when validating external data:
/// |k . v_k| <= DIV_TOL * |k| |v_k| per mode.
pub const DIV_TOL: f64 = 1e-12;

/// Mean-zero, real vector field in spectral form.
///
/// Invariants maintained by every constructor and operation:
/// * all stored wave vectors are canonical representatives, nonzero, of the
///   field's dimension;
/// * all coefficient vectors have `dim` finite components and at least one
///   nonzero component.
#[derive(Clone, PartialEq)]
pub struct SpectralField {
    dim: usize,
    coeffs: BTreeMap<WaveVector, Vec<Complex64>>,
}

impl fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpectralField(d={}, {} modes)", self.dim, self.coeffs.len())
    }
}

impl SpectralField {
    pub fn zero(dim: usize) -> Self {
        SpectralField {
            dim,
            coeffs: BTreeMap::new(),
        }
    }

    /// Builds a field from raw (wave vector, coefficient) pairs.
    ///
    /// Entries may reference either element of a conjugate pair; when both k
    /// and -k appear, the stored coefficient is the reality-symmetrized
    /// average (raw_k + conj(raw_{-k})) / 2.  Duplicate listings of the same
    /// wave vector and nonzero coefficients at k = 0 are rejected.
    pub fn from_modes<I>(dim: usize, modes: I) -> Result<Self, FieldError>
    where
        I: IntoIterator<Item = (WaveVector, Vec<Complex64>)>,
    {
        if dim == 0 {
            return Err(FieldError::InvalidDimension);
        }
        // Per canonical representative: coefficient seen at +k, at -k.
        let mut folded: BTreeMap<WaveVector, (Option<Vec<Complex64>>, Option<Vec<Complex64>>)> =
            BTreeMap::new();
        for (k, c) in modes {
            if k.dim() != dim {
                return Err(FieldError::DimensionMismatch {
                    expected: dim,
                    found: k.dim(),
                });
            }
            if c.len() != dim {
                return Err(FieldError::CoefficientShape {
                    expected: dim,
                    found: c.len(),
                    k,
                });
            }
            if !c.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                return Err(FieldError::NonFinite(k));
            }
            if k.is_zero() {
                if c.iter().any(|z| z.norm_sqr() != 0.0) {
                    return Err(FieldError::NonzeroMean);
                }
                continue;
            }
            let (rep, conjugated) = k.canonicalize();
            let slot = folded.entry(rep.clone()).or_insert((None, None));
            let side = if conjugated { &mut slot.1 } else { &mut slot.0 };
            if side.is_some() {
                return Err(FieldError::DuplicateMode(k));
            }
            *side = Some(if conjugated { conj_coeff(&c) } else { c });
        }
        let mut coeffs = BTreeMap::new();
        for (k, slot) in folded {
            let c = match slot {
                (Some(a), Some(b)) => a
                    .iter()
                    .zip(&b)
                    .map(|(x, y)| (x + y) * 0.5)
                    .collect::<Vec<_>>(),
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => unreachable!(),
            };
            if c.iter().any(|z| z.norm_sqr() != 0.0) {
                coeffs.insert(k, c);
            }
        }
        Ok(SpectralField { dim, coeffs })
    }

    /// Internal constructor: keys must already be canonical and nonzero.
    pub(crate) fn from_canonical(dim: usize, coeffs: BTreeMap<WaveVector, Vec<Complex64>>) -> Self {
        debug_assert!(coeffs
            .keys()
            .all(|k| k.is_canonical() && k.dim() == dim));
        let coeffs = coeffs
            .into_iter()
            .filter(|(_, c)| c.iter().any(|z| z.norm_sqr() != 0.0))
            .collect();
        SpectralField { dim, coeffs }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored conjugate-pair representatives.
    pub fn mode_count(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Iterates over canonical representatives in lexicographic order.
    pub fn modes(&self) -> impl Iterator<Item = (&WaveVector, &[Complex64])> {
        self.coeffs.iter().map(|(k, c)| (k, c.as_slice()))
    }

    /// Every nonzero mode, both halves of each conjugate pair.
    pub fn full_modes(&self) -> Vec<(WaveVector, Vec<Complex64>)> {
        let mut out = Vec::with_capacity(2 * self.coeffs.len());
        for (k, c) in &self.coeffs {
            out.push((k.clone(), c.clone()));
            out.push((k.neg(), conj_coeff(c)));
        }
        out
    }

    /// Coefficient at an arbitrary wave vector, resolving conjugate pairs.
    pub fn coeff(&self, k: &WaveVector) -> Option<Vec<Complex64>> {
        if k.is_canonical() {
            self.coeffs.get(k).cloned()
        } else {
            self.coeffs.get(&k.neg()).map(|c| conj_coeff(c))
        }
    }

    /// Largest |k|_infty over stored modes (0 for the zero field).
    pub fn infty_radius(&self) -> i32 {
        self.coeffs.keys().map(|k| k.infty_norm()).max().unwrap_or(0)
    }

    fn check_dim(&self, other: &SpectralField) -> Result<(), FieldError> {
        if self.dim != other.dim {
            return Err(FieldError::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    /// Sobolev inner product of order s.  Exactly real and exactly symmetric.
    pub fn inner(&self, other: &SpectralField, s: f64) -> Result<f64, FieldError> {
        self.check_dim(other)?;
        let mut acc = 0.0;
        for (k, c) in &self.coeffs {
            if let Some(d) = other.coeffs.get(k) {
                let mut re = 0.0;
                for (a, b) in c.iter().zip(d) {
                    re += a.re * b.re + a.im * b.im;
                }
                acc += 2.0 * (k.norm_sq() as f64).powf(s) * re;
            }
        }
        Ok(acc)
    }

    /// Sobolev norm ||v||_s.
    pub fn norm(&self, s: f64) -> f64 {
        let q = self
            .inner(self, s)
            .expect("inner product of a field with itself");
        q.max(0.0).sqrt()
    }

    /// Componentwise Laplacian: mode k is scaled by -|k|^2.
    pub fn laplacian(&self) -> SpectralField {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(k, c)| {
                let m = -(k.norm_sq() as f64);
                (k.clone(), c.iter().map(|z| z * m).collect())
            })
            .collect();
        SpectralField::from_canonical(self.dim, coeffs)
    }

    pub fn scaled(&self, a: f64) -> SpectralField {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(k, c)| (k.clone(), c.iter().map(|z| z * a).collect()))
            .collect();
        SpectralField::from_canonical(self.dim, coeffs)
    }

    /// a * x + y, merging mode sets.
    pub fn axpy(a: f64, x: &SpectralField, y: &SpectralField) -> Result<SpectralField, FieldError> {
        x.check_dim(y)?;
        let mut coeffs = BTreeMap::new();
        for (k, c) in &x.coeffs {
            coeffs.insert(k.clone(), c.iter().map(|z| z * a).collect::<Vec<_>>());
        }
        for (k, c) in &y.coeffs {
            match coeffs.get_mut(k) {
                Some(acc) => {
                    for (z, w) in acc.iter_mut().zip(c) {
                        *z += w;
                    }
                }
                None => {
                    coeffs.insert(k.clone(), c.clone());
                }
            }
        }
        Ok(SpectralField::from_canonical(x.dim, coeffs))
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField, FieldError> {
        SpectralField::axpy(1.0, self, other)
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField, FieldError> {
        SpectralField::axpy(-1.0, other, self)
    }

    /// Restriction to the cube |k|_infty <= m.
    pub fn truncate_cube(&self, m: i32) -> SpectralField {
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(k, _)| k.infty_norm() <= m)
            .map(|(k, c)| (k.clone(), c.clone()))
            .collect();
        SpectralField::from_canonical(self.dim, coeffs)
    }

    /// Complement of the cube restriction: modes with |k|_infty > m.
    pub fn tail_cube(&self, m: i32) -> SpectralField {
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(k, _)| k.infty_norm() > m)
            .map(|(k, c)| (k.clone(), c.clone()))
            .collect();
        SpectralField::from_canonical(self.dim, coeffs)
    }

    /// Leray projection: mode k maps to c - k (k . c) / |k|^2.
    ///
    /// Idempotent; afterwards every mode satisfies k . v_k = 0 up to
    /// rounding.  The zero mode (already absent) stays absent.
    pub fn leray_projected(&self) -> SpectralField {
        let coeffs = self
            .coeffs
            .iter()
            .map(|(k, c)| (k.clone(), leray_mode(k, c)))
            .collect();
        SpectralField::from_canonical(self.dim, coeffs)
    }

    /// Max over modes of |k . v_k| / (|k| |v_k|); zero for the zero field.
    pub fn divergence_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (k, c) in &self.coeffs {
            let mut kc = Complex64::new(0.0, 0.0);
            let mut csq = 0.0;
            for (i, z) in c.iter().enumerate() {
                kc += z * (k.components()[i] as f64);
                csq += z.norm_sqr();
            }
            let scale = (k.norm_sq() as f64).sqrt() * csq.sqrt();
            if scale > 0.0 {
                worst = worst.max(kc.norm() / scale);
            }
        }
        worst
    }

    /// Random divergence-free field with modes in the band lo <= |k| <= hi.
    ///
    /// Component coefficients are drawn i.i.d. standard complex normal in
    /// lexicographic mode order (so the result is a pure function of the RNG
    /// state), then Leray-projected.
    pub fn random_band<R: Rng + ?Sized>(
        dim: usize,
        lo: f64,
        hi: f64,
        rng: &mut R,
    ) -> Result<SpectralField, FieldError> {
        if dim == 0 {
            return Err(FieldError::InvalidDimension);
        }
        let radius = hi.floor().max(0.0) as i32;
        let mut coeffs = BTreeMap::new();
        for k in cube_lattice(dim, radius) {
            if !k.is_canonical() {
                continue;
            }
            let nsq = k.norm_sq() as f64;
            if nsq < lo * lo || nsq > hi * hi {
                continue;
            }
            let c: Vec<Complex64> = (0..dim)
                .map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(re, im)
                })
                .collect();
            coeffs.insert(k, c);
        }
        Ok(SpectralField::from_canonical(dim, coeffs).leray_projected())
    }
}

/// Leray projection of a single mode coefficient.
pub fn leray_mode(k: &WaveVector, c: &[Complex64]) -> Vec<Complex64> {
    let nsq = k.norm_sq() as f64;
    let mut kc = Complex64::new(0.0, 0.0);
    for (i, z) in c.iter().enumerate() {
        kc += z * (k.components()[i] as f64);
    }
    let factor = kc / nsq;
    c.iter()
        .enumerate()
        .map(|(i, z)| z - factor * (k.components()[i] as f64))
        .collect()
}

/// All lattice points of the cube |k|_infty <= radius in lexicographic order.
pub fn cube_lattice(dim: usize, radius: i32) -> Vec<WaveVector> {
    let mut out = Vec::new();
    let mut current = vec![-radius; dim];
    loop {
        out.push(WaveVector::new(current.clone()));
        let mut axis = dim;
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            if current[axis] < radius {
                current[axis] += 1;
                for c in current.iter_mut().skip(axis + 1) {
                    *c = -radius;
                }
                break;
            }
        }
    }
}

// --- serialization ------------------------------------------------------
//
// On-disk schema:
//     { "dim": d, "modes": [ { "k": [..], "re": [..], "im": [..] }, .. ] }
// listing canonical representatives only.

#[derive(Serialize, Deserialize)]
struct ModeRepr {
    k: Vec<i32>,
    re: Vec<f64>,
    im: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FieldRepr {
    dim: usize,
    modes: Vec<ModeRepr>,
}

impl Serialize for SpectralField {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let modes = self
            .coeffs
            .iter()
            .map(|(k, c)| ModeRepr {
                k: k.components().to_vec(),
                re: c.iter().map(|z| z.re).collect(),
                im: c.iter().map(|z| z.im).collect(),
            })
            .collect();
        FieldRepr {
            dim: self.dim,
            modes,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SpectralField {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = FieldRepr::deserialize(deserializer)?;
        let mut modes = Vec::with_capacity(repr.modes.len());
        for m in repr.modes {
            let k = WaveVector::new(m.k);
            if !k.is_canonical() {
                return Err(D::Error::custom(format!(
                    "{:?} is not a canonical mode representative",
                    k
                )));
            }
            if m.re.len() != m.im.len() {
                return Err(D::Error::custom(format!(
                    "re/im length mismatch at mode {:?}",
                    k
                )));
            }
            let c = m
                .re
                .iter()
                .zip(&m.im)
                .map(|(&re, &im)| Complex64::new(re, im))
                .collect();
            modes.push((k, c));
        }
        SpectralField::from_modes(repr.dim, modes).map_err(D::Error::custom)
    }
}
