//! Scalar estimator data distilled from an approximate solution.
//!
//! The control equations consume three ingredients per Sobolev order q:
//!
//! * `initial_distance` — delta_q = ||ua(0) - u0||_q,
//! * `defect`           — eps_q(t) = ||d/dt ua - nu Lap ua - P(ua, ua) - f||_q,
//! * `growth`           — D_q(t) = ||ua(t)||_q,
//!
//! each either constant in time (closed-form approximants) or sampled on a
//! grid and interpolated linearly.  A set carries the base order n and the
//! bound orders p, and guarantees that every order q any solver will ask
//! for — n, n+1, each p, each p+1 — is present.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("estimator set is missing order {0}")]
    MissingOrder(f64),
    #[error("sample grid invalid: {0}")]
    BadGrid(String),
    #[error("estimator values must be finite and nonnegative ({0})")]
    BadValue(String),
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("bound order {p} must be at least the base order {n}")]
    OrderBelowBase { p: f64, n: f64 },
}

/// Scalar function of time: constant, or piecewise linear on a sample grid
/// (clamped outside it).
#[derive(Clone, Debug)]
pub enum Sampler {
    Constant(f64),
    Linear { times: Vec<f64>, values: Vec<f64> },
}

impl Sampler {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Sampler::Constant(v) => *v,
            Sampler::Linear { times, values } => {
                if t <= times[0] {
                    return values[0];
                }
                if t >= times[times.len() - 1] {
                    return values[values.len() - 1];
                }
                let i = times.partition_point(|&x| x <= t) - 1;
                let (t0, t1) = (times[i], times[i + 1]);
                let w = (t - t0) / (t1 - t0);
                values[i] + (values[i + 1] - values[i]) * w
            }
        }
    }

    /// Interior kink locations (where the derivative may jump).
    pub fn kinks(&self) -> &[f64] {
        match self {
            Sampler::Constant(_) => &[],
            Sampler::Linear { times, .. } => times,
        }
    }

    fn validate(&self, what: &str) -> Result<(), EstimatorError> {
        match self {
            Sampler::Constant(v) => {
                if !v.is_finite() || *v < 0.0 {
                    return Err(EstimatorError::BadValue(format!("{what}: {v}")));
                }
            }
            Sampler::Linear { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(EstimatorError::BadGrid(format!(
                        "{what}: {} times vs {} values",
                        times.len(),
                        values.len()
                    )));
                }
                if !times.windows(2).all(|w| w[0] < w[1]) {
                    return Err(EstimatorError::BadGrid(format!(
                        "{what}: times not strictly increasing"
                    )));
                }
                if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
                    return Err(EstimatorError::BadValue(format!("{what}: {bad}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct OrderEstimator {
    pub order: f64,
    pub initial_distance: f64,
    pub defect: Sampler,
    pub growth: Sampler,
}

#[derive(Clone, Debug)]
pub struct EstimatorSet {
    base_order: f64,
    bound_orders: Vec<f64>,
    horizon: f64,
    /// Sorted by order; covers exactly `required_orders`.
    entries: Vec<OrderEstimator>,
}

/// The orders a solver will query for base order n and bound orders P:
/// {n, n+1} and {p, p+1} for each p, sorted and deduplicated.
pub fn required_orders(base_order: f64, bound_orders: &[f64]) -> Vec<f64> {
    let mut qs = vec![base_order, base_order + 1.0];
    for &p in bound_orders {
        qs.push(p);
        qs.push(p + 1.0);
    }
    qs.sort_by(|a, b| a.partial_cmp(b).expect("finite orders"));
    qs.dedup();
    qs
}

impl EstimatorSet {
    pub fn new(
        base_order: f64,
        bound_orders: Vec<f64>,
        horizon: f64,
        entries: Vec<OrderEstimator>,
    ) -> Result<Self, EstimatorError> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(EstimatorError::BadHorizon(horizon));
        }
        for &p in &bound_orders {
            if p < base_order {
                return Err(EstimatorError::OrderBelowBase { p, n: base_order });
            }
        }
        let mut entries = entries;
        entries.sort_by(|a, b| a.order.partial_cmp(&b.order).expect("finite orders"));
        let set = EstimatorSet {
            base_order,
            bound_orders,
            horizon,
            entries,
        };
        for e in &set.entries {
            if !e.initial_distance.is_finite() || e.initial_distance < 0.0 {
                return Err(EstimatorError::BadValue(format!(
                    "initial distance at order {}: {}",
                    e.order, e.initial_distance
                )));
            }
            e.defect.validate("defect")?;
            e.growth.validate("growth")?;
        }
        for q in required_orders(set.base_order, &set.bound_orders) {
            if set.entry(q).is_none() {
                return Err(EstimatorError::MissingOrder(q));
            }
        }
        Ok(set)
    }

    pub fn base_order(&self) -> f64 {
        self.base_order
    }

    pub fn bound_orders(&self) -> &[f64] {
        &self.bound_orders
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn entry(&self, order: f64) -> Option<&OrderEstimator> {
        self.entries.iter().find(|e| e.order == order)
    }

    pub fn entries(&self) -> &[OrderEstimator] {
        &self.entries
    }

    /// All sampler kink times in [a, b], plus the endpoints, sorted and
    /// deduplicated: the mesh on which estimator-driven integrands are
    /// piecewise smooth.
    pub fn kink_mesh(&self, a: f64, b: f64) -> Vec<f64> {
        let mut mesh = vec![a, b];
        for e in &self.entries {
            for s in [&e.defect, &e.growth] {
                for &t in s.kinks() {
                    if t > a && t < b {
                        mesh.push(t);
                    }
                }
            }
        }
        mesh.sort_by(|x, y| x.partial_cmp(y).expect("finite mesh"));
        mesh.dedup();
        mesh
    }

    /// CSV with columns `t, eps_q, D_q` per order (ascending), evaluated on
    /// the union of all sample grids (or the horizon endpoints when every
    /// sampler is constant).
    pub fn to_csv(&self) -> String {
        let grid = {
            let mesh = self.kink_mesh(0.0, self.horizon);
            if mesh.len() <= 2 {
                vec![0.0, self.horizon]
            } else {
                mesh
            }
        };
        let mut out = String::from("t");
        for e in &self.entries {
            out.push_str(&format!(",eps_{},D_{}", e.order, e.order));
        }
        out.push('\n');
        for &t in &grid {
            out.push_str(&format!("{}", t));
            for e in &self.entries {
                out.push_str(&format!(",{},{}", e.defect.eval(t), e.growth.eval(t)));
            }
            out.push('\n');
        }
        out
    }
}
