//! Embedded Runge-Kutta 5(4) integration with adaptive steps.
//!
//! One integrator serves both state spaces used by the library: the scalar
//! Riccati control equation and the dense spectral Galerkin system.  Both
//! demand reproducibility, so everything that influences the step sequence
//! is deterministic: the error measure is a max norm over scalar components
//! (adding zero components never changes a step), the controller is a fixed
//! PI rule, and caller-required sample times are hit exactly by clamping.
//!
//! | piece       | choice                                              |
//! |-------------|-----------------------------------------------------|
//! | tableau     | Dormand-Prince 5(4), first-same-as-last             |
//! | error norm  | max_i |e_i| / (atol + rtol * max(|y0_i|, |y1_i|))   |
//! | controller  | h *= 0.9 * err^-0.17 * err_prev^0.04, in [0.2, 5]   |
//! | blow-up     | rejected step at the floor h_min => StepCollapse    |

use std::ops::ControlFlow;

use thiserror::Error;

use crate::dense::DenseField;

/// State vector usable by the integrator.
pub trait OdeState: Clone {
    /// self += a * other.
    fn axpy(&mut self, a: f64, other: &Self);
    /// self *= a.
    fn scale(&mut self, a: f64);
    /// Max over scalar components of |self_i| / (atol + rtol * max(|y0_i|, |y1_i|)),
    /// where `self` holds the local error estimate.
    fn scaled_error_max(&self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64;
}

impl OdeState for f64 {
    fn axpy(&mut self, a: f64, other: &Self) {
        *self += a * other;
    }

    fn scale(&mut self, a: f64) {
        *self *= a;
    }

    fn scaled_error_max(&self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64 {
        self.abs() / (atol + rtol * y0.abs().max(y1.abs()))
    }
}

impl OdeState for DenseField {
    fn axpy(&mut self, a: f64, other: &Self) {
        DenseField::axpy(self, a, other);
    }

    fn scale(&mut self, a: f64) {
        DenseField::scale(self, a);
    }

    fn scaled_error_max(&self, y0: &Self, y1: &Self, atol: f64, rtol: f64) -> f64 {
        let mut worst = 0.0_f64;
        for ((e, a), b) in self.data().iter().zip(y0.data()).zip(y1.data()) {
            let sc_re = atol + rtol * a.re.abs().max(b.re.abs());
            let sc_im = atol + rtol * a.im.abs().max(b.im.abs());
            worst = worst.max(e.re.abs() / sc_re).max(e.im.abs() / sc_im);
        }
        worst
    }
}

#[derive(Clone, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Smallest permitted step; a rejected step at this size is reported as
    /// blow-up rather than retried forever.
    pub h_min: f64,
    pub max_steps: usize,
    /// Times the integrator must land on exactly (sorted internally).
    pub required_times: Vec<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-12,
            h_min: 1e-14,
            max_steps: 10_000_000,
            required_times: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OdeOutcome {
    /// Reached the end of the interval.
    Completed,
    /// The observer requested a stop.
    Halted,
    /// Step size collapsed to the floor; the solution is leaving every
    /// bounded set (or the problem is stiffer than the floor allows).
    StepCollapse,
}

#[derive(Debug)]
pub struct OdeRun<S> {
    pub outcome: OdeOutcome,
    /// Last accepted time.
    pub t_end: f64,
    /// State at `t_end`.
    pub y: S,
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("integration span is empty or not finite: [{0}, {1}]")]
    BadSpan(f64, f64),
    #[error("step budget of {0} exhausted")]
    StepLimit(usize),
    #[error("right-hand side produced a non-finite error estimate at t = {0}")]
    NonFinite(f64),
}

// Dormand-Prince coefficients.
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const A7: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
/// Difference between the 5th and embedded 4th order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates dy/dt = f(t, y) over [t0, t1].
///
/// The observer sees (t, y, f(t, y)) at t0 and after every accepted step;
/// returning `ControlFlow::Break(())` stops the run with outcome `Halted`.
/// Derivative samples are the actual right-hand side evaluations of the
/// accepted trajectory (the first-same-as-last stage), never re-evaluated.
pub fn integrate<S, F, O>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: &S,
    opts: &OdeOptions,
    mut observer: O,
) -> Result<OdeRun<S>, OdeError>
where
    S: OdeState,
    F: FnMut(f64, &S) -> S,
    O: FnMut(f64, &S, &S) -> ControlFlow<()>,
{
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(OdeError::BadSpan(t0, t1));
    }
    let span = t1 - t0;
    let mut required: Vec<f64> = opts
        .required_times
        .iter()
        .copied()
        .filter(|&t| t > t0 && t <= t1)
        .collect();
    required.sort_by(|a, b| a.partial_cmp(b).expect("finite required times"));
    required.dedup();
    let mut req_idx = 0usize;

    let mut t = t0;
    let mut y = y0.clone();
    let mut k1 = f(t, &y);
    let mut rhs_evals = 1usize;

    if let ControlFlow::Break(()) = observer(t, &y, &k1) {
        return Ok(OdeRun {
            outcome: OdeOutcome::Halted,
            t_end: t,
            y,
            accepted: 0,
            rejected: 0,
            rhs_evals,
        });
    }

    // Initial step size: the classic two-probe estimate.
    let mut h = {
        let d0 = norm_like(&y, &y, opts);
        let d1 = norm_like(&k1, &y, opts);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6 * span
        } else {
            0.01 * (d0 / d1)
        };
        let mut probe = y.clone();
        probe.axpy(h0, &k1);
        let f1 = f(t + h0, &probe);
        rhs_evals += 1;
        let mut diff = f1;
        diff.axpy(-1.0, &k1);
        let d2 = norm_like(&diff, &y, opts) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6 * span)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(span)
    };

    let mut err_prev: f64 = 1.0;
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut just_rejected = false;

    loop {
        if accepted + rejected >= opts.max_steps {
            return Err(OdeError::StepLimit(opts.max_steps));
        }
        h = h.min(t1 - t);
        // Land exactly on the next required time when it is within reach.
        let mut hit_req = false;
        if req_idx < required.len() {
            let gap = required[req_idx] - t;
            if h >= gap * (1.0 - 1e-12) {
                h = gap;
                hit_req = true;
            }
        }
        let t_new = if hit_req {
            required[req_idx]
        } else if t + h >= t1 {
            t1
        } else {
            t + h
        };
        let h_eff = t_new - t;

        // Stages.
        let mut y2 = y.clone();
        y2.axpy(h_eff * A2[0], &k1);
        let k2 = f(t + C[0] * h_eff, &y2);
        let mut y3 = y.clone();
        y3.axpy(h_eff * A3[0], &k1);
        y3.axpy(h_eff * A3[1], &k2);
        let k3 = f(t + C[1] * h_eff, &y3);
        let mut y4 = y.clone();
        y4.axpy(h_eff * A4[0], &k1);
        y4.axpy(h_eff * A4[1], &k2);
        y4.axpy(h_eff * A4[2], &k3);
        let k4 = f(t + C[2] * h_eff, &y4);
        let mut y5 = y.clone();
        y5.axpy(h_eff * A5[0], &k1);
        y5.axpy(h_eff * A5[1], &k2);
        y5.axpy(h_eff * A5[2], &k3);
        y5.axpy(h_eff * A5[3], &k4);
        let k5 = f(t + C[3] * h_eff, &y5);
        let mut y6 = y.clone();
        y6.axpy(h_eff * A6[0], &k1);
        y6.axpy(h_eff * A6[1], &k2);
        y6.axpy(h_eff * A6[2], &k3);
        y6.axpy(h_eff * A6[3], &k4);
        y6.axpy(h_eff * A6[4], &k5);
        let k6 = f(t + C[4] * h_eff, &y6);
        let mut y_new = y.clone();
        y_new.axpy(h_eff * A7[0], &k1);
        y_new.axpy(h_eff * A7[2], &k3);
        y_new.axpy(h_eff * A7[3], &k4);
        y_new.axpy(h_eff * A7[4], &k5);
        y_new.axpy(h_eff * A7[5], &k6);
        let k7 = f(t_new, &y_new);
        rhs_evals += 6;

        // err = h * sum E_i k_i, accumulated from exact products (folding
        // the leading coefficient into the clone would cancel near 1 and
        // put a rounding floor under the estimate).
        let mut err_state = k1.clone();
        err_state.scale(h_eff * E[0]);
        err_state.axpy(h_eff * E[2], &k3);
        err_state.axpy(h_eff * E[3], &k4);
        err_state.axpy(h_eff * E[4], &k5);
        err_state.axpy(h_eff * E[5], &k6);
        err_state.axpy(h_eff * E[6], &k7);
        let err = err_state.scaled_error_max(&y, &y_new, opts.atol, opts.rtol);
        if !err.is_finite() {
            return Err(OdeError::NonFinite(t));
        }

        if err <= 1.0 {
            t = t_new;
            y = y_new;
            k1 = k7;
            accepted += 1;
            if hit_req {
                req_idx += 1;
            }
            if let ControlFlow::Break(()) = observer(t, &y, &k1) {
                return Ok(OdeRun {
                    outcome: OdeOutcome::Halted,
                    t_end: t,
                    y,
                    accepted,
                    rejected,
                    rhs_evals,
                });
            }
            if t >= t1 {
                return Ok(OdeRun {
                    outcome: OdeOutcome::Completed,
                    t_end: t,
                    y,
                    accepted,
                    rejected,
                    rhs_evals,
                });
            }
            let fac_max = if just_rejected { 1.0 } else { 5.0 };
            let fac = if err == 0.0 {
                fac_max
            } else {
                (0.9 * err.powf(-0.17) * err_prev.powf(0.04)).clamp(0.2, fac_max)
            };
            err_prev = err.max(1e-4);
            just_rejected = false;
            h = (h_eff * fac).max(opts.h_min);
        } else {
            rejected += 1;
            // Compare the controller's step, not h_eff: rounding t + h onto
            // the time grid can push h_eff a few ulp(t) past the floor and
            // would otherwise retry the same step forever.
            if h <= opts.h_min * (1.0 + 1e-9) || h_eff <= 0.0 {
                return Ok(OdeRun {
                    outcome: OdeOutcome::StepCollapse,
                    t_end: t,
                    y,
                    accepted,
                    rejected,
                    rhs_evals,
                });
            }
            just_rejected = true;
            let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            h = (h_eff * fac).max(opts.h_min);
        }
    }
}

/// Scaled max magnitude used by the startup step estimate: reuses the error
/// measure with the state itself as the reference.
fn norm_like<S: OdeState>(v: &S, reference: &S, opts: &OdeOptions) -> f64 {
    v.scaled_error_max(reference, reference, opts.atol, opts.rtol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_scalar<F: FnMut(f64, &f64) -> f64>(
        f: F,
        t1: f64,
        y0: f64,
        opts: &OdeOptions,
    ) -> OdeRun<f64> {
        integrate(f, 0.0, t1, &y0, opts, |_, _, _| ControlFlow::Continue(()))
            .expect("integration succeeds")
    }

    #[test]
    fn exponential_decay_matches_closed_form() {
        let opts = OdeOptions::default();
        let run = run_scalar(|_, y| -y, 3.0, 1.0, &opts);
        assert_eq!(run.outcome, OdeOutcome::Completed);
        assert!((run.y - (-3.0_f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn logistic_growth_high_accuracy() {
        // y' = y(1-y), y(0)=0.1, y(t) = 1/(1+9e^{-t}).
        let opts = OdeOptions {
            rtol: 1e-12,
            atol: 1e-14,
            ..OdeOptions::default()
        };
        let run = run_scalar(|_, y| y * (1.0 - y), 5.0, 0.1, &opts);
        let exact = 1.0 / (1.0 + 9.0 * (-5.0_f64).exp());
        assert!((run.y - exact).abs() < 1e-11);
    }

    #[test]
    fn required_times_are_hit_exactly() {
        let req = vec![0.1, 0.25, 0.7, 0.70000001, 1.0];
        let opts = OdeOptions {
            required_times: req.clone(),
            ..OdeOptions::default()
        };
        let mut seen = Vec::new();
        integrate(
            |_, y: &f64| -y,
            0.0,
            1.0,
            &1.0,
            &opts,
            |t, _, _| {
                seen.push(t);
                ControlFlow::Continue(())
            },
        )
        .unwrap();
        for r in req {
            assert!(
                seen.iter().any(|&t| t == r),
                "required time {} missing from {:?}",
                r,
                seen
            );
        }
    }

    #[test]
    fn blow_up_collapses_step_near_singularity() {
        // y' = y^2 from 1 blows up at t = 1.
        let opts = OdeOptions {
            h_min: 1e-13,
            ..OdeOptions::default()
        };
        let run = run_scalar(|_, y| y * y, 2.0, 1.0, &opts);
        assert_eq!(run.outcome, OdeOutcome::StepCollapse);
        assert!(run.t_end > 0.999 && run.t_end < 1.0);
        assert!(run.y > 1e10);
    }

    #[test]
    fn observer_can_halt() {
        let opts = OdeOptions::default();
        let run = integrate(
            |_, y: &f64| *y,
            0.0,
            10.0,
            &1.0,
            &opts,
            |_, y, _| {
                if *y > 5.0 {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            },
        )
        .unwrap();
        assert_eq!(run.outcome, OdeOutcome::Halted);
        assert!(run.y > 5.0 && run.y < 7.0);
        assert!(run.t_end < 2.0);
    }

    #[test]
    fn derivative_samples_are_rhs_evaluations() {
        let opts = OdeOptions::default();
        let mut ok = true;
        integrate(
            |_, y: &f64| 2.0 * y,
            0.0,
            1.0,
            &1.0,
            &opts,
            |_, y, dy| {
                ok &= *dy == 2.0 * *y;
                ControlFlow::Continue(())
            },
        )
        .unwrap();
        assert!(ok, "observer derivative must equal f(t, y) exactly");
    }

    #[test]
    fn tolerance_controls_error() {
        let loose = run_scalar(
            |t, _| (5.0 * t).sin() * 5.0,
            2.0,
            0.0,
            &OdeOptions {
                rtol: 1e-5,
                atol: 1e-7,
                ..OdeOptions::default()
            },
        );
        let tight = run_scalar(
            |t, _| (5.0 * t).sin() * 5.0,
            2.0,
            0.0,
            &OdeOptions {
                rtol: 1e-11,
                atol: 1e-13,
                ..OdeOptions::default()
            },
        );
        let exact = 1.0 - (10.0_f64).cos();
        assert!((tight.y - exact).abs() < (loose.y - exact).abs().max(1e-13));
        assert!((tight.y - exact).abs() < 1e-10);
    }

    #[test]
    fn identical_inputs_identical_steps() {
        let opts = OdeOptions::default();
        let collect = || {
            let mut ts = Vec::new();
            integrate(
                |t, y: &f64| (t * *y).cos(),
                0.0,
                4.0,
                &0.3,
                &opts,
                |t, _, _| {
                    ts.push(t);
                    ControlFlow::Continue(())
                },
            )
            .unwrap();
            ts
        };
        assert_eq!(collect(), collect());
    }
}
