//! Problem description shared by the approximant and certification layers.

use thiserror::Error;

use crate::field::{FieldError, SpectralField};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("dimension {0} unsupported (need 1 <= d <= 8)")]
    BadDimension(usize),
    #[error("viscosity must be finite and >= 0, got {0}")]
    BadViscosity(f64),
    #[error("base order {n} must exceed d/2 + 1 = {crit} in dimension {d}")]
    BaseOrderTooLow { n: f64, crit: f64, d: usize },
    #[error("bound order {p} must be at least the base order {n}")]
    BoundOrderBelowBase { p: f64, n: f64 },
    #[error("time horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("datum dimension {found} does not match problem dimension {expected}")]
    DatumDimension { expected: usize, found: usize },
    #[error("forcing coefficient {index} has dimension {found}, expected {expected}")]
    ForcingDimension {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Body forcing: zero, or a polynomial in time with spectral coefficients,
/// f(t) = sum_j t^j F_j.
#[derive(Clone, Debug)]
pub enum Forcing {
    Zero,
    TimePolynomial(Vec<SpectralField>),
}

impl Forcing {
    pub fn is_zero(&self) -> bool {
        match self {
            Forcing::Zero => true,
            Forcing::TimePolynomial(coeffs) => coeffs.iter().all(|c| c.is_zero()),
        }
    }

    /// Coefficient of t^j (zero field beyond the stored degree).
    pub fn coeff(&self, dim: usize, j: usize) -> SpectralField {
        match self {
            Forcing::Zero => SpectralField::zero(dim),
            Forcing::TimePolynomial(coeffs) => coeffs
                .get(j)
                .cloned()
                .unwrap_or_else(|| SpectralField::zero(dim)),
        }
    }

    pub fn degree(&self) -> usize {
        match self {
            Forcing::Zero => 0,
            Forcing::TimePolynomial(coeffs) => coeffs.len().saturating_sub(1),
        }
    }

    /// f(t) by Horner evaluation.
    pub fn eval(&self, dim: usize, t: f64) -> Result<SpectralField, FieldError> {
        match self {
            Forcing::Zero => Ok(SpectralField::zero(dim)),
            Forcing::TimePolynomial(coeffs) => {
                let mut acc = SpectralField::zero(dim);
                for c in coeffs.iter().rev() {
                    acc = SpectralField::axpy(t, &acc, c)?;
                }
                Ok(acc)
            }
        }
    }

    pub fn max_infty_radius(&self) -> i32 {
        match self {
            Forcing::Zero => 0,
            Forcing::TimePolynomial(coeffs) => {
                coeffs.iter().map(|c| c.infty_radius()).max().unwrap_or(0)
            }
        }
    }
}

/// The certification problem: dimension, viscosity, datum, forcing, the base
/// order n carrying the Riccati bound, the bound orders p >= n, and the
/// reporting horizon.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub dim: usize,
    pub nu: f64,
    pub base_order: f64,
    pub bound_orders: Vec<f64>,
    pub u0: SpectralField,
    pub forcing: Forcing,
    pub t_max: f64,
}

impl ProblemSpec {
    /// Validates parameters and Leray-projects the datum and forcing (a
    /// no-op for already divergence-free data); the equation being certified
    /// always lives in the solenoidal subspace.
    pub fn new(
        dim: usize,
        nu: f64,
        base_order: f64,
        bound_orders: Vec<f64>,
        u0: SpectralField,
        forcing: Forcing,
        t_max: f64,
    ) -> Result<Self, ProblemError> {
        if dim < 1 || dim > 8 {
            return Err(ProblemError::BadDimension(dim));
        }
        if !(nu >= 0.0) || !nu.is_finite() {
            return Err(ProblemError::BadViscosity(nu));
        }
        let crit = dim as f64 / 2.0 + 1.0;
        if !(base_order > crit) {
            return Err(ProblemError::BaseOrderTooLow {
                n: base_order,
                crit,
                d: dim,
            });
        }
        let mut bound_orders = bound_orders;
        bound_orders.sort_by(|a, b| a.partial_cmp(b).expect("finite orders"));
        bound_orders.dedup();
        for &p in &bound_orders {
            if p < base_order {
                return Err(ProblemError::BoundOrderBelowBase { p, n: base_order });
            }
        }
        if !(t_max > 0.0) || !t_max.is_finite() {
            return Err(ProblemError::BadHorizon(t_max));
        }
        if u0.dim() != dim {
            return Err(ProblemError::DatumDimension {
                expected: dim,
                found: u0.dim(),
            });
        }
        let u0 = u0.leray_projected();
        let forcing = match forcing {
            Forcing::Zero => Forcing::Zero,
            Forcing::TimePolynomial(coeffs) => {
                let mut projected = Vec::with_capacity(coeffs.len());
                for (index, c) in coeffs.into_iter().enumerate() {
                    if c.dim() != dim {
                        return Err(ProblemError::ForcingDimension {
                            index,
                            expected: dim,
                            found: c.dim(),
                        });
                    }
                    projected.push(c.leray_projected());
                }
                Forcing::TimePolynomial(projected)
            }
        };
        Ok(ProblemSpec {
            dim,
            nu,
            base_order,
            bound_orders,
            u0,
            forcing,
            t_max,
        })
    }

    /// All (p, n) constant pairs a certification of this problem needs: the
    /// diagonal pairs (n, n) and (p, p), and the couplings (p, n).
    pub fn constant_pairs(&self) -> Vec<(f64, f64)> {
        let n = self.base_order;
        let mut pairs = vec![(n, n)];
        for &p in &self.bound_orders {
            pairs.push((p, p));
            pairs.push((p, n));
        }
        pairs.sort_by(|a, b| a.partial_cmp(b).expect("finite orders"));
        pairs.dedup();
        pairs
    }
}
