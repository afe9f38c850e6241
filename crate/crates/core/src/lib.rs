//! A-posteriori certification of existence times and Sobolev error bounds for
//! incompressible Euler and Navier-Stokes flows on the d-dimensional torus.
//!
//! The library works with truncated Fourier expansions of divergence-free,
//! mean-zero velocity fields,
//!
//! ```text
//!     v(x) = (2 pi)^{-d/2} * sum_k v_k e^{i k . x},      v_{-k} = conj(v_k),
//! ```
//!
//! and certifies statements of the form "an exact solution with the given
//! initial datum exists on [0, T_c) and stays within R_p(t) of the supplied
//! approximate solution in the Sobolev norm of order p".  The ingredients:
//!
//! * [`field`] — sparse spectral fields, Sobolev inner products, the Leray
//!   projection and the bilinear advection term P(v, w).
//! * [`dense`] — dense cube-truncated fields and the convolution kernel
//!   behind both the Galerkin integrator and the bilinear term.
//! * [`tame`] — rigorous-by-construction constants for the tame product and
//!   Kato-type inequalities, obtained from truncated lattice sums.
//! * [`approximant`] — approximate solutions (zero field, spectral Galerkin,
//!   Taylor expansion in time) and their differential error.
//! * [`estimator`] — scalar time-dependent data distilled from an
//!   approximant: defect norms, initial distance, growth norms.
//! * [`control`] — the scalar control problems (a Riccati equation at the
//!   base order, linear equations at higher orders) whose solutions are the
//!   certified bounds, plus closed forms for the zero approximant.
//! * [`ode`], [`quad`] — the embedded Runge-Kutta integrator and adaptive
//!   Gauss-Kronrod quadrature used by the above.
//! * [`problem`] — the problem description (dimension, viscosity, datum,
//!   forcing, orders) shared by the solver layers.

pub mod approximant;
pub mod control;
pub mod dense;
pub mod estimator;
pub mod field;
pub mod ode;
pub mod problem;
pub mod quad;
pub mod tame;

pub use approximant::{ApproximantTrace, Provenance, TaylorCoefficients};
pub use control::{ControlSolution, GridPolicy, OrderBound, RiccatiSolution};
pub use dense::DenseField;
pub use estimator::{EstimatorSet, OrderEstimator, Sampler};
pub use field::{FieldError, SpectralField, WaveVector};
pub use problem::{Forcing, ProblemSpec};
pub use tame::{ConstantEntry, ConstantTable, LatticeTruncation};
