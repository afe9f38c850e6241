//! Approximate solutions and their differential error.
//!
//! Any C^1 curve of divergence-free fields can serve as the approximate
//! solution ua; its quality enters the bounds only through the tautological
//! estimators
//!
//! ```text
//!     eps_q(t) = || d/dt ua - nu Lap ua - P(ua, ua) - f ||_q     (defect)
//!     delta_q  = || ua(0) - u0 ||_q                              (initial distance)
//!     D_q(t)   = || ua(t) ||_q                                   (growth)
//! ```
//!
//! Three constructions are provided:
//!
//! * the zero approximant (trivial, with closed-form bounds downstream);
//! * spectral Galerkin truncation to |k|_infty <= M, integrated adaptively —
//!   derivative samples are the integrator's own right-hand side
//!   evaluations, so the trace is consistent with the dynamics it claims;
//! * a Taylor expansion in time for the inviscid equation, whose residual
//!   vanishes to the expansion order by construction.

use std::io::Write;
use std::ops::ControlFlow;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dense::{bilinear, bilinear_dense, DenseField};
use crate::estimator::{required_orders, EstimatorError, EstimatorSet, OrderEstimator, Sampler};
use crate::field::{FieldError, SpectralField};
use crate::ode::{self, OdeError, OdeOptions, OdeOutcome};
use crate::problem::{Forcing, ProblemSpec};

#[derive(Debug, Error)]
pub enum ApproximantError {
    #[error("invalid approximant parameter: {0}")]
    Param(String),
    #[error("the Taylor approximant requires nu = 0, got {0}")]
    InviscidOnly(f64),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Zero,
    Galerkin { m: i32 },
    Taylor { n: usize },
}

/// Sampled approximate solution: fields and time derivatives at increasing
/// times, starting at 0.
#[derive(Clone, Debug)]
pub struct ApproximantTrace {
    pub provenance: Provenance,
    pub dim: usize,
    /// Last sampled time; shorter than requested if the integrator stopped.
    pub horizon: f64,
    /// True when integration ended early on step collapse.
    pub collapsed: bool,
    pub times: Vec<f64>,
    pub fields: Vec<SpectralField>,
    pub derivs: Vec<SpectralField>,
}

impl ApproximantTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Field at an exact sample time (used by validation, which arranges
    /// for its comparison times to be sample times).
    pub fn field_at(&self, t: f64) -> Option<&SpectralField> {
        self.times.iter().position(|&x| x == t).map(|i| &self.fields[i])
    }

    /// Max over interior samples of the relative defect between the stored
    /// derivative and the central difference of the stored fields.  This is
    /// a second-order measure: it vanishes like the sample spacing squared,
    /// not like the integrator tolerance, so it is a consistency check for
    /// densely sampled traces.
    pub fn c1_defect(&self) -> Result<f64, FieldError> {
        let mut worst = 0.0_f64;
        for i in 1..self.len().saturating_sub(1) {
            let dt = self.times[i + 1] - self.times[i - 1];
            let diff = self.fields[i + 1].sub(&self.fields[i - 1])?.scaled(1.0 / dt);
            let defect = diff.sub(&self.derivs[i])?.norm(0.0);
            let scale = self.derivs[i].norm(0.0).max(1.0);
            worst = worst.max(defect / scale);
        }
        Ok(worst)
    }

    /// Writes the trace as a directory: `header.json` plus one JSON file
    /// per sample holding the field and its derivative.
    pub fn write_to_dir(&self, dir: &Path, nu: f64) -> Result<(), ApproximantError> {
        std::fs::create_dir_all(dir)?;
        let header = serde_json::json!({
            "d": self.dim,
            "nu": nu,
            "provenance": self.provenance,
            "T_a": self.horizon,
            "collapsed": self.collapsed,
            "times": self.times,
        });
        let mut f = std::fs::File::create(dir.join("header.json"))?;
        writeln!(f, "{}", serde_json::to_string_pretty(&header)?)?;
        for (i, t) in self.times.iter().enumerate() {
            let sample = serde_json::json!({
                "t": t,
                "field": self.fields[i],
                "derivative": self.derivs[i],
            });
            let mut f = std::fs::File::create(dir.join(format!("sample_{i:04}.json")))?;
            writeln!(f, "{}", serde_json::to_string(&sample)?)?;
        }
        Ok(())
    }
}

/// The zero approximant: ua = 0 sampled uniformly.
pub fn zero_approximant(dim: usize, horizon: f64, samples: usize) -> ApproximantTrace {
    let samples = samples.max(2);
    let times: Vec<f64> = (0..samples)
        .map(|i| horizon * i as f64 / (samples - 1) as f64)
        .collect();
    ApproximantTrace {
        provenance: Provenance::Zero,
        dim,
        horizon,
        collapsed: false,
        times,
        fields: vec![SpectralField::zero(dim); samples],
        derivs: vec![SpectralField::zero(dim); samples],
    }
}

#[derive(Clone, Debug)]
pub struct GalerkinOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Sample times the trace must contain exactly.
    pub required_times: Vec<f64>,
    /// Step floor as a fraction of the horizon.
    pub min_step_frac: f64,
}

impl Default for GalerkinOptions {
    fn default() -> Self {
        GalerkinOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            required_times: Vec::new(),
            min_step_frac: 1e-14,
        }
    }
}

/// Evolves the spectral Galerkin truncation
/// d/dt ua = nu Lap ua + Pi_M P(ua, ua) + Pi_M f from Pi_M u0 on
/// [0, horizon].
///
/// The trace records every accepted step (plus `required_times`); on step
/// collapse it ends early with `collapsed` set, and the horizon shrinks to
/// the last accepted time.
pub fn galerkin_evolve(
    spec: &ProblemSpec,
    m: i32,
    horizon: f64,
    opts: &GalerkinOptions,
) -> Result<ApproximantTrace, ApproximantError> {
    if m < 1 {
        return Err(ApproximantError::Param(format!("cube radius {m}")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(ApproximantError::Param(format!("horizon {horizon}")));
    }
    let dim = spec.dim;
    let y0 = DenseField::from_spectral(&spec.u0, m);

    // -|k|^2 per dense cell, for the viscous term.
    let lap = laplacian_multipliers(dim, m);
    let forcing_dense: Option<Vec<DenseField>> = match &spec.forcing {
        Forcing::Zero => None,
        Forcing::TimePolynomial(coeffs) => Some(
            coeffs
                .iter()
                .map(|c| DenseField::from_spectral(c, m))
                .collect(),
        ),
    };

    let nu = spec.nu;
    let rhs = |t: f64, y: &DenseField| -> DenseField {
        let mut out = bilinear_dense(y, y, m);
        if nu != 0.0 {
            let data = out.data_mut();
            let src = y.data();
            for (cell, &mult) in lap.iter().enumerate() {
                for c in 0..dim {
                    let idx = cell * dim + c;
                    data[idx] += nu * mult * src[idx];
                }
            }
        }
        if let Some(fd) = &forcing_dense {
            let mut tp = 1.0;
            for coeff in fd.iter() {
                out.axpy(tp, coeff);
                tp *= t;
            }
        }
        out
    };

    let ode_opts = OdeOptions {
        rtol: opts.rel_tol,
        atol: opts.abs_tol,
        h_min: opts.min_step_frac * horizon,
        required_times: opts.required_times.clone(),
        ..OdeOptions::default()
    };
    let mut times = Vec::new();
    let mut fields = Vec::new();
    let mut derivs = Vec::new();
    let run = ode::integrate(rhs, 0.0, horizon, &y0, &ode_opts, |t, y, dy| {
        times.push(t);
        fields.push(y.to_spectral());
        derivs.push(dy.to_spectral());
        ControlFlow::Continue(())
    })?;
    let collapsed = run.outcome == OdeOutcome::StepCollapse;
    let horizon = *times.last().expect("initial sample");
    Ok(ApproximantTrace {
        provenance: Provenance::Galerkin { m },
        dim,
        horizon,
        collapsed,
        times,
        fields,
        derivs,
    })
}

/// -|k|^2 per cell of the cube, in cell order.
fn laplacian_multipliers(dim: usize, m: i32) -> Vec<f64> {
    let side = (2 * m + 1) as usize;
    let cells = side.pow(dim as u32);
    let mut out = Vec::with_capacity(cells);
    let mut k = vec![-m; dim];
    loop {
        let nsq: i64 = k.iter().map(|&x| (x as i64) * (x as i64)).sum();
        out.push(-(nsq as f64));
        let mut axis = dim;
        let mut done = true;
        while axis > 0 {
            axis -= 1;
            if k[axis] < m {
                k[axis] += 1;
                for x in k.iter_mut().skip(axis + 1) {
                    *x = -m;
                }
                done = false;
                break;
            }
        }
        if done {
            return out;
        }
    }
}

/// Taylor coefficients in time of an inviscid solution.
#[derive(Clone, Debug)]
pub struct TaylorCoefficients {
    pub dim: usize,
    /// u_0, u_1, ..., u_N with ua(t) = sum_j t^j u_j.
    pub coeffs: Vec<SpectralField>,
}

impl TaylorCoefficients {
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// ua(t) by Horner evaluation.
    pub fn eval(&self, t: f64) -> Result<SpectralField, FieldError> {
        let mut acc = SpectralField::zero(self.dim);
        for c in self.coeffs.iter().rev() {
            acc = SpectralField::axpy(t, &acc, c)?;
        }
        Ok(acc)
    }

    /// d/dt ua(t).
    pub fn eval_deriv(&self, t: f64) -> Result<SpectralField, FieldError> {
        let mut acc = SpectralField::zero(self.dim);
        for (j, c) in self.coeffs.iter().enumerate().rev() {
            if j == 0 {
                continue;
            }
            acc = SpectralField::axpy(t, &acc, &c.scaled(j as f64))?;
        }
        Ok(acc)
    }
}

/// Builds the inviscid Taylor recursion
/// u_{j+1} = (sum_{i+l=j} P(u_i, u_l) + f_j) / (j + 1)
/// up to order N; the residual of the resulting polynomial vanishes through
/// t^{N-1}.
pub fn taylor_coefficients(
    u0: &SpectralField,
    forcing: &Forcing,
    order: usize,
) -> Result<TaylorCoefficients, ApproximantError> {
    let dim = u0.dim();
    let mut coeffs = vec![u0.clone()];
    for j in 0..order {
        let mut acc = forcing.coeff(dim, j);
        for i in 0..=j {
            let p = bilinear(&coeffs[i], &coeffs[j - i])?;
            acc = SpectralField::axpy(1.0, &p, &acc)?;
        }
        coeffs.push(acc.scaled(1.0 / (j + 1) as f64));
    }
    Ok(TaylorCoefficients { dim, coeffs })
}

/// Residual polynomial coefficients of a Taylor approximant:
/// coefficient j of (d/dt ua - P(ua, ua) - f); entries 0..N-1 are zero by
/// construction and returned for verification.
pub fn taylor_residual_coefficients(
    taylor: &TaylorCoefficients,
    forcing: &Forcing,
    through: usize,
) -> Result<Vec<SpectralField>, ApproximantError> {
    let dim = taylor.dim;
    let n = taylor.coeffs.len() - 1;
    let mut out = Vec::new();
    for j in 0..=through {
        // d/dt contributes (j+1) u_{j+1} (zero beyond the stored order).
        let mut r = if j < n {
            taylor.coeffs[j + 1].scaled((j + 1) as f64)
        } else {
            SpectralField::zero(dim)
        };
        for i in 0..=j {
            if i > n || j - i > n {
                continue;
            }
            let p = bilinear(&taylor.coeffs[i], &taylor.coeffs[j - i])?;
            r = SpectralField::axpy(-1.0, &p, &r)?;
        }
        r = r.sub(&forcing.coeff(dim, j))?;
        out.push(r);
    }
    Ok(out)
}

/// Taylor approximant for an inviscid problem, sampled uniformly.
pub fn taylor_evolve(
    spec: &ProblemSpec,
    order: usize,
    horizon: f64,
    samples: usize,
) -> Result<(TaylorCoefficients, ApproximantTrace), ApproximantError> {
    if spec.nu != 0.0 {
        return Err(ApproximantError::InviscidOnly(spec.nu));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(ApproximantError::Param(format!("horizon {horizon}")));
    }
    let taylor = taylor_coefficients(&spec.u0, &spec.forcing, order)?;
    let samples = samples.max(2);
    let times: Vec<f64> = (0..samples)
        .map(|i| horizon * i as f64 / (samples - 1) as f64)
        .collect();
    let mut fields = Vec::with_capacity(samples);
    let mut derivs = Vec::with_capacity(samples);
    for &t in &times {
        fields.push(taylor.eval(t)?);
        derivs.push(taylor.eval_deriv(t)?);
    }
    let trace = ApproximantTrace {
        provenance: Provenance::Taylor { n: order },
        dim: spec.dim,
        horizon,
        collapsed: false,
        times,
        fields,
        derivs,
    };
    Ok((taylor, trace))
}

/// The differential error of one sample:
/// e = d/dt ua - nu Lap ua - P(ua, ua) - f(t).
pub fn differential_error(
    field: &SpectralField,
    deriv: &SpectralField,
    t: f64,
    spec: &ProblemSpec,
) -> Result<SpectralField, ApproximantError> {
    let p = bilinear(field, field)?;
    let mut e = deriv.clone();
    if spec.nu != 0.0 {
        e = SpectralField::axpy(-spec.nu, &field.laplacian(), &e)?;
    }
    e = SpectralField::axpy(-1.0, &p, &e)?;
    e = SpectralField::axpy(-1.0, &spec.forcing.eval(spec.dim, t)?, &e)?;
    Ok(e)
}

/// Distills the estimator set for a trace: per required order, the defect
/// and growth norms at every sample time (linear interpolation between),
/// and the initial distance to the datum.
pub fn tautological_estimators(
    trace: &ApproximantTrace,
    spec: &ProblemSpec,
    bound_orders: &[f64],
) -> Result<EstimatorSet, ApproximantError> {
    let orders = required_orders(spec.base_order, bound_orders);
    let samples = trace.len();
    if samples == 0 {
        return Err(ApproximantError::Param("empty trace".into()));
    }
    let mut eps = vec![Vec::with_capacity(samples); orders.len()];
    let mut growth = vec![Vec::with_capacity(samples); orders.len()];
    for i in 0..samples {
        let e = differential_error(&trace.fields[i], &trace.derivs[i], trace.times[i], spec)?;
        for (qi, &q) in orders.iter().enumerate() {
            eps[qi].push(e.norm(q));
            growth[qi].push(trace.fields[i].norm(q));
        }
    }
    let initial_gap = trace.fields[0].sub(&spec.u0)?;
    let mut entries = Vec::with_capacity(orders.len());
    for (qi, &q) in orders.iter().enumerate() {
        let to_sampler = |values: Vec<f64>| -> Sampler {
            if samples == 1 {
                Sampler::Constant(values[0])
            } else {
                Sampler::Linear {
                    times: trace.times.clone(),
                    values,
                }
            }
        };
        entries.push(OrderEstimator {
            order: q,
            initial_distance: initial_gap.norm(q),
            defect: to_sampler(std::mem::take(&mut eps[qi])),
            growth: to_sampler(std::mem::take(&mut growth[qi])),
        });
    }
    Ok(EstimatorSet::new(
        spec.base_order,
        bound_orders.to_vec(),
        trace.horizon,
        entries,
    )?)
}
