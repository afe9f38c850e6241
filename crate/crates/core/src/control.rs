//! The scalar control problems whose solutions are the certified bounds.
//!
//! Given estimator data for an approximate solution ua, the distance
//! R_n(t) >= ||u(t) - ua(t)||_n to the exact solution obeys the Riccati
//! differential inequality
//!
//! ```text
//!     R_n' <= -nu R_n + (G_n D_n + K_n D_{n+1}) R_n + G_n R_n^2 + eps_n,
//!     R_n(0) = delta_n,
//! ```
//!
//! solved here as an equality (the worst case).  Its maximal existence time
//! is the certified T_c.  At higher orders p >= n the bound is linear and
//! has the integrating-factor form
//!
//! ```text
//!     R_p(t) = e^{-nu t + A(t)} (delta_p + int_0^t e^{nu s - A(s)} eps_p(s) ds),
//!     A(t)   = int_0^t (G_p D_p + K_p D_{p+1} + G_pn R_n)(s) ds,
//! ```
//!
//! evaluated cell by cell in the normalized form
//! `R(t_{j+1}) = R(t_j) e^{-nu dt + dA} + local source` so no large
//! exponentials are ever materialized.
//!
//! For the zero approximant with zero forcing everything collapses to
//! closed forms (`zero_tc`, `zero_rn`, `zero_rp`), which double as the
//! reference values the numerical path is tested against.

use std::ops::ControlFlow;

use serde::Serialize;
use thiserror::Error;

use crate::estimator::{EstimatorError, EstimatorSet, Sampler};
use crate::ode::{self, OdeError, OdeOptions, OdeOutcome};
use crate::quad;
use crate::tame::ConstantTable;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("invalid control parameter: {0}")]
    Param(String),
    #[error("t = {t} is beyond the certified span [0, {t_c})")]
    BeyondCertified { t: f64, t_c: f64 },
    #[error("estimator set lacks order {0}")]
    MissingOrder(f64),
    #[error("control solution became non-finite: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Integration and quadrature tolerances plus divergence thresholds for the
/// control solvers.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GridPolicy {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// R_n above this value counts as blow-up.
    pub blowup_cap: f64,
    /// Step floor as a fraction of the horizon; collapsing to it counts as
    /// blow-up too.
    pub min_step_frac: f64,
    pub quad_rel_tol: f64,
    pub quad_abs_tol: f64,
}

impl Default for GridPolicy {
    fn default() -> Self {
        GridPolicy {
            rel_tol: 1e-10,
            abs_tol: 1e-14,
            blowup_cap: 1e12,
            min_step_frac: 1e-14,
            quad_rel_tol: 1e-10,
            quad_abs_tol: 1e-14,
        }
    }
}

// --- closed forms for the zero approximant ------------------------------

/// e_nu(t) = (1 - e^{-nu t}) / nu, continued by t at nu = 0.  The expm1
/// route keeps full precision down to nu t = 0, where the direct form
/// cancels catastrophically.
pub fn e_nu(nu: f64, t: f64) -> f64 {
    debug_assert!(nu >= 0.0 && t >= 0.0);
    if nu == 0.0 {
        t
    } else {
        -(-nu * t).exp_m1() / nu
    }
}

fn check_zero_params(nu: f64, g_n: f64, u0n: f64) -> Result<(), ControlError> {
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(ControlError::Param(format!("viscosity {nu}")));
    }
    if !(g_n > 0.0) || !g_n.is_finite() {
        return Err(ControlError::Param(format!("Kato constant {g_n}")));
    }
    if !(u0n >= 0.0) || !u0n.is_finite() {
        return Err(ControlError::Param(format!("datum norm {u0n}")));
    }
    Ok(())
}

/// Certified existence time for the zero approximant with zero forcing:
/// infinite for nu > 0 with ||u0||_n <= nu / G_n, otherwise
/// -(1/nu) log(1 - nu / (G_n ||u0||_n)), with the nu = 0 limit
/// 1 / (G_n ||u0||_n) (infinite for the zero datum).
pub fn zero_tc(nu: f64, g_n: f64, u0n: f64) -> Result<f64, ControlError> {
    check_zero_params(nu, g_n, u0n)?;
    if u0n == 0.0 {
        return Ok(f64::INFINITY);
    }
    if nu == 0.0 {
        return Ok(1.0 / (g_n * u0n));
    }
    if u0n <= nu / g_n {
        return Ok(f64::INFINITY);
    }
    Ok(-(1.0 - nu / (g_n * u0n)).ln() / nu)
}

/// Base-order bound for the zero approximant:
/// R_n(t) = ||u0||_n e^{-nu t} / (1 - G_n ||u0||_n e_nu(t)), valid on
/// [0, T_c).
pub fn zero_rn(nu: f64, g_n: f64, u0n: f64, t: f64) -> Result<f64, ControlError> {
    check_zero_params(nu, g_n, u0n)?;
    if !(t >= 0.0) {
        return Err(ControlError::Param(format!("time {t}")));
    }
    let denom = 1.0 - g_n * u0n * e_nu(nu, t);
    if denom <= 0.0 {
        let t_c = zero_tc(nu, g_n, u0n)?;
        return Err(ControlError::BeyondCertified { t, t_c });
    }
    Ok(u0n * (-nu * t).exp() / denom)
}

/// Order-p bound for the zero approximant:
/// R_p(t) = ||u0||_p e^{-nu t} / (1 - G_n ||u0||_n e_nu(t))^{G_pn / G_n}.
pub fn zero_rp(
    nu: f64,
    g_n: f64,
    g_pn: f64,
    u0n: f64,
    u0p: f64,
    t: f64,
) -> Result<f64, ControlError> {
    check_zero_params(nu, g_n, u0n)?;
    if !(g_pn > 0.0) || !g_pn.is_finite() {
        return Err(ControlError::Param(format!("coupling constant {g_pn}")));
    }
    if !(u0p >= 0.0) || !u0p.is_finite() {
        return Err(ControlError::Param(format!("datum norm {u0p}")));
    }
    if !(t >= 0.0) {
        return Err(ControlError::Param(format!("time {t}")));
    }
    let denom = 1.0 - g_n * u0n * e_nu(nu, t);
    if denom <= 0.0 {
        let t_c = zero_tc(nu, g_n, u0n)?;
        return Err(ControlError::BeyondCertified { t, t_c });
    }
    Ok(u0p * (-nu * t).exp() / denom.powf(g_pn / g_n))
}

// --- the Riccati solver -------------------------------------------------

/// Base-order control solution: R_n on its accepted time grid, with enough
/// derivative data for quintic Hermite evaluation between grid points.
#[derive(Clone, Debug)]
pub struct RiccatiSolution {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Right-hand side at each grid point (the actual integrator samples).
    pub derivs: Vec<f64>,
    /// Second derivatives at the left/right end of each segment, computed
    /// from the differentiated right-hand side with the segment's sampler
    /// slopes (samplers are linear inside a segment).
    seg_d2: Vec<(f64, f64)>,
    /// Last certified time: the horizon, or the last accepted step before
    /// divergence.
    pub t_c: f64,
    pub blew_up: bool,
}

impl RiccatiSolution {
    /// R_n(t), clamped to the sample span.  Quintic Hermite interpolation:
    /// the error is far below the integrator tolerance, so downstream
    /// quadrature sees a smooth function.
    pub fn eval(&self, t: f64) -> f64 {
        let times = &self.times;
        if t <= times[0] {
            return self.values[0];
        }
        let last = times.len() - 1;
        if t >= times[last] {
            return self.values[last];
        }
        let i = times.partition_point(|&x| x <= t) - 1;
        let h = times[i + 1] - times[i];
        let u = (t - times[i]) / h;
        let (d2a, d2b) = self.seg_d2[i];
        let u2 = u * u;
        let u3 = u2 * u;
        let u4 = u3 * u;
        let u5 = u4 * u;
        let h0 = 1.0 - 10.0 * u3 + 15.0 * u4 - 6.0 * u5;
        let h1 = u - 6.0 * u3 + 8.0 * u4 - 3.0 * u5;
        let h2 = 0.5 * u2 - 1.5 * u3 + 1.5 * u4 - 0.5 * u5;
        let h3 = 10.0 * u3 - 15.0 * u4 + 6.0 * u5;
        let h4 = -4.0 * u3 + 7.0 * u4 - 3.0 * u5;
        let h5 = 0.5 * u3 - u4 + 0.5 * u5;
        h0 * self.values[i]
            + h1 * h * self.derivs[i]
            + h2 * h * h * d2a
            + h3 * self.values[i + 1]
            + h4 * h * self.derivs[i + 1]
            + h5 * h * h * d2b
    }
}

/// Solves the base-order Riccati control equation on [0, t_end].
///
/// Sampler kink times are forced onto the step grid, so the right-hand side
/// is smooth within every accepted step.  Divergence is detected by the
/// value cap or by step collapse; either way `t_c` is the last accepted
/// time, a safe under-estimate of the true blow-up time.
pub fn solve_riccati_control(
    est: &EstimatorSet,
    nu: f64,
    k_n: f64,
    g_n: f64,
    t_end: f64,
    policy: &GridPolicy,
) -> Result<RiccatiSolution, ControlError> {
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(ControlError::Param(format!("viscosity {nu}")));
    }
    if !(g_n > 0.0) || !(k_n >= 0.0) {
        return Err(ControlError::Param(format!(
            "constants K_n = {k_n}, G_n = {g_n}"
        )));
    }
    if !(t_end > 0.0) || t_end > est.horizon() * (1.0 + 1e-12) {
        return Err(ControlError::Param(format!(
            "span {t_end} outside the estimator horizon {}",
            est.horizon()
        )));
    }
    let n = est.base_order();
    let e_n = est
        .entry(n)
        .ok_or(ControlError::MissingOrder(n))?
        .clone();
    let e_n1 = est
        .entry(n + 1.0)
        .ok_or(ControlError::MissingOrder(n + 1.0))?
        .clone();

    let rhs = |t: f64, r: &f64| -> f64 {
        let growth = g_n * e_n.growth.eval(t) + k_n * e_n1.growth.eval(t);
        (-nu + growth) * r + g_n * r * r + e_n.defect.eval(t)
    };

    let opts = OdeOptions {
        rtol: policy.rel_tol,
        atol: policy.abs_tol,
        h_min: policy.min_step_frac * t_end,
        required_times: est.kink_mesh(0.0, t_end),
        ..OdeOptions::default()
    };

    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut derivs = Vec::new();
    let cap = policy.blowup_cap;
    let run = ode::integrate(
        rhs,
        0.0,
        t_end,
        &e_n.initial_distance,
        &opts,
        |t, y, dy| {
            times.push(t);
            values.push(*y);
            derivs.push(*dy);
            if *y > cap {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        },
    )?;
    let blew_up = match run.outcome {
        OdeOutcome::Completed => false,
        OdeOutcome::Halted | OdeOutcome::StepCollapse => true,
    };
    let t_c = *times.last().expect("at least the initial sample");
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ControlError::NonFinite("R_n".into()));
    }

    // Segment second derivatives from the differentiated right-hand side.
    let slope = |s: &Sampler, t: f64| -> f64 {
        match s {
            Sampler::Constant(_) => 0.0,
            Sampler::Linear { times, values } => {
                if t <= times[0] || t >= times[times.len() - 1] {
                    return 0.0;
                }
                let i = times.partition_point(|&x| x <= t) - 1;
                (values[i + 1] - values[i]) / (times[i + 1] - times[i])
            }
        }
    };
    let mut seg_d2 = Vec::with_capacity(times.len().saturating_sub(1));
    for i in 0..times.len().saturating_sub(1) {
        let mid = 0.5 * (times[i] + times[i + 1]);
        let s_dn = slope(&e_n.growth, mid);
        let s_dn1 = slope(&e_n1.growth, mid);
        let s_eps = slope(&e_n.defect, mid);
        let d2_at = |t: f64, y: f64, dy: f64| -> f64 {
            let growth = g_n * e_n.growth.eval(t) + k_n * e_n1.growth.eval(t);
            let dt_part = (g_n * s_dn + k_n * s_dn1) * y + s_eps;
            let dr_part = -nu + growth + 2.0 * g_n * y;
            dt_part + dr_part * dy
        };
        seg_d2.push((
            d2_at(times[i], values[i], derivs[i]),
            d2_at(times[i + 1], values[i + 1], derivs[i + 1]),
        ));
    }

    Ok(RiccatiSolution {
        times,
        values,
        derivs,
        seg_d2,
        t_c,
        blew_up,
    })
}

// --- the linear order-p solver ------------------------------------------

/// Order-p bound on the base grid: R_p values and the exponent A_p.
#[derive(Clone, Debug)]
pub struct OrderBound {
    pub order: f64,
    /// R_p at each base-solution grid point.
    pub values: Vec<f64>,
    /// A_p at each base-solution grid point.
    pub exponents: Vec<f64>,
}

/// Propagates the linear order-p bound along the base solution's grid.
///
/// Per cell, dA is an adaptive Gauss-Kronrod integral of the coefficient
/// g_p D_p + k_p D_{p+1} + g_pn R_n (smooth there: kinks sit on grid
/// points), and the defect source is integrated in the end-normalized form
/// so exponentials stay cell-sized.
pub fn solve_linear_control(
    est: &EstimatorSet,
    rn: &RiccatiSolution,
    nu: f64,
    p: f64,
    k_p: f64,
    g_p: f64,
    g_pn: f64,
    policy: &GridPolicy,
) -> Result<OrderBound, ControlError> {
    if !(g_p > 0.0) || !(k_p >= 0.0) || !(g_pn > 0.0) {
        return Err(ControlError::Param(format!(
            "constants K_p = {k_p}, G_p = {g_p}, G_pn = {g_pn}"
        )));
    }
    let e_p = est.entry(p).ok_or(ControlError::MissingOrder(p))?;
    let e_p1 = est
        .entry(p + 1.0)
        .ok_or(ControlError::MissingOrder(p + 1.0))?;

    let coeff = |s: f64| -> f64 {
        g_p * e_p.growth.eval(s) + k_p * e_p1.growth.eval(s) + g_pn * rn.eval(s)
    };

    let grid = &rn.times;
    let mut exponents = Vec::with_capacity(grid.len());
    let mut values = Vec::with_capacity(grid.len());
    exponents.push(0.0);
    values.push(e_p.initial_distance);

    for j in 0..grid.len() - 1 {
        let (a, b) = (grid[j], grid[j + 1]);
        let da = quad::integrate(&mut |s| coeff(s), a, b, policy.quad_rel_tol, policy.quad_abs_tol)
            .value;
        // Source, normalized to the cell end:
        //   int_a^b e^{-nu (b - s) + (dA - int_a^s coeff)} eps_p(s) ds.
        let mut integrand = |s: f64| -> f64 {
            let a_to_s =
                quad::integrate(&mut |u| coeff(u), a, s, policy.quad_rel_tol, policy.quad_abs_tol)
                    .value;
            (-nu * (b - s) + (da - a_to_s)).exp() * e_p.defect.eval(s)
        };
        let src = quad::integrate(
            &mut integrand,
            a,
            b,
            policy.quad_rel_tol,
            policy.quad_abs_tol,
        )
        .value;
        let prev = *values.last().expect("seeded");
        let next = prev * (-nu * (b - a) + da).exp() + src;
        if !next.is_finite() {
            return Err(ControlError::NonFinite(format!("R_{p} at t = {b}")));
        }
        values.push(next);
        exponents.push(exponents[j] + da);
    }

    Ok(OrderBound {
        order: p,
        values,
        exponents,
    })
}

// --- assembled solution -------------------------------------------------

/// Full control solution: base bound, higher-order bounds, certified time.
#[derive(Clone, Debug)]
pub struct ControlSolution {
    pub base_order: f64,
    pub t_c: f64,
    pub blew_up: bool,
    /// True when the small-data criterion certifies the bound for all time.
    pub global: bool,
    pub times: Vec<f64>,
    /// R_n at `times`.
    pub base_values: Vec<f64>,
    pub orders: Vec<OrderBound>,
}

impl ControlSolution {
    pub fn from_parts(rn: &RiccatiSolution, base_order: f64, orders: Vec<OrderBound>) -> Self {
        ControlSolution {
            base_order,
            t_c: rn.t_c,
            blew_up: rn.blew_up,
            global: false,
            times: rn.times.clone(),
            base_values: rn.values.clone(),
            orders,
        }
    }

    /// CSV columns: t, R_n, then R_p, A_p per bound order.
    pub fn to_csv(&self) -> String {
        let mut out = format!("t,R_{}", self.base_order);
        for b in &self.orders {
            out.push_str(&format!(",R_{},A_{}", b.order, b.order));
        }
        out.push('\n');
        for (i, &t) in self.times.iter().enumerate() {
            out.push_str(&format!("{},{}", t, self.base_values[i]));
            for b in &self.orders {
                out.push_str(&format!(",{},{}", b.values[i], b.exponents[i]));
            }
            out.push('\n');
        }
        out
    }

    /// JSON summary: certified time (the string "inf" when infinite),
    /// divergence flag, the constants used, and the solver tolerances.
    pub fn summary_json(&self, constants: &ConstantTable, policy: &GridPolicy) -> serde_json::Value {
        let t_c = if self.t_c.is_infinite() {
            serde_json::Value::String("inf".into())
        } else {
            serde_json::json!(self.t_c)
        };
        serde_json::json!({
            "T_c": t_c,
            "blew_up": self.blew_up,
            "certified_globally": self.global,
            "constants_used": constants,
            "tolerances": policy,
        })
    }
}

/// Closed-form control solution for the zero approximant with zero forcing,
/// sampled on a uniform grid up to min(horizon, just below T_c).
pub struct ZeroBound {
    pub p: f64,
    pub g_pn: f64,
    pub u0p: f64,
}

pub fn zero_control_solution(
    nu: f64,
    g_n: f64,
    u0n: f64,
    base_order: f64,
    bounds: &[ZeroBound],
    horizon: f64,
    samples: usize,
) -> Result<ControlSolution, ControlError> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(ControlError::Param(format!("horizon {horizon}")));
    }
    let samples = samples.max(2);
    let t_c = zero_tc(nu, g_n, u0n)?;
    let blew_up = t_c <= horizon;
    let global = t_c.is_infinite() && nu > 0.0;
    let t_last = if blew_up {
        t_c * (1.0 - 1e-9)
    } else {
        horizon
    };
    let times: Vec<f64> = (0..samples)
        .map(|i| t_last * i as f64 / (samples - 1) as f64)
        .collect();
    let base_values = times
        .iter()
        .map(|&t| zero_rn(nu, g_n, u0n, t))
        .collect::<Result<Vec<_>, _>>()?;
    let mut orders = Vec::new();
    for b in bounds {
        let values = times
            .iter()
            .map(|&t| zero_rp(nu, g_n, b.g_pn, u0n, b.u0p, t))
            .collect::<Result<Vec<_>, _>>()?;
        // A_p(t) = nu t + log(R_p / ||u0||_p) when the datum norm is
        // nonzero; the exponent integral in closed form.
        let exponents = times
            .iter()
            .map(|&t| {
                let denom = 1.0 - g_n * u0n * e_nu(nu, t);
                // + 0.0 normalizes the -0.0 arising at t = 0.
                -(b.g_pn / g_n) * denom.ln() + 0.0
            })
            .collect();
        orders.push(OrderBound {
            order: b.p,
            values,
            exponents,
        });
    }
    Ok(ControlSolution {
        base_order,
        t_c,
        blew_up,
        global,
        times,
        base_values,
        orders,
    })
}
