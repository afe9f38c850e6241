//! Run configuration: a single JSON document describing the problem, the
//! approximant, the constants source, and the output location.
//!
//! ```json
//! {
//!   "dim": 3, "nu": 0.5, "n": 3.0, "orders": [4.0],
//!   "datum": { "kind": "taylor_green", "amplitude": 0.8 },
//!   "forcing": "zero",
//!   "approximant": { "kind": "galerkin", "M": 8, "T_a": 0.2 },
//!   "constants": { "H": 40, "Kmax": 20, "tail_margin": 1.1 },
//!   "T_max": 10.0, "seed": 0, "out_dir": "out",
//!   "validation": { "ref_M": 16 }
//! }
//! ```

use std::path::{Path, PathBuf};

use nscert::field::SpectralField;
use nscert::problem::{Forcing, ProblemSpec};
use nscert::tame::LatticeTruncation;
use serde::Deserialize;

use crate::datum::build_datum;
use crate::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub dim: usize,
    pub nu: f64,
    /// Base Sobolev order carrying the Riccati bound.
    pub n: f64,
    /// Bound orders p >= n.
    #[serde(default)]
    pub orders: Vec<f64>,
    pub datum: DatumSpec,
    #[serde(default)]
    pub forcing: ForcingSpec,
    pub approximant: ApproximantSpec,
    pub constants: ConstantsSpec,
    /// Certification never extends past this time.
    #[serde(rename = "T_max", default = "default_t_max")]
    pub t_max: f64,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Present when a refined reference comparison is requested.
    #[serde(default)]
    pub validation: Option<ValidationSpec>,
}

fn default_t_max() -> f64 {
    10.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatumSpec {
    /// Canonical modes given literally.
    Explicit { field: SpectralField },
    /// The classic single-scale vortex (d = 3 only):
    /// u = A (sin x cos y cos z, -cos x sin y cos z, 0).
    TaylorGreen { amplitude: f64 },
    /// Seeded random divergence-free field supported on lo <= |k| <= hi,
    /// normalized to unit L^2 norm and scaled by `amplitude`.
    RandomBand { lo: f64, hi: f64, amplitude: f64 },
}

#[derive(Clone, Debug, Default)]
pub enum ForcingSpec {
    /// The JSON string "zero".
    #[default]
    Zero,
    /// Polynomial in time: f(t) = sum_j t^j F_j.
    Taylor { taylor: Vec<SpectralField> },
}

// Hand-written: a derived untagged enum can neither match a unit variant
// against the string "zero" (unit variants only match null) nor report a
// usable error for a malformed taylor array.
impl<'de> Deserialize<'de> for ForcingSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error as _;
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::String(s) if s == "zero" => Ok(ForcingSpec::Zero),
            serde_json::Value::Object(map) if map.len() == 1 && map.contains_key("taylor") => {
                let taylor =
                    Vec::<SpectralField>::deserialize(&map["taylor"]).map_err(D::Error::custom)?;
                Ok(ForcingSpec::Taylor { taylor })
            }
            other => Err(D::Error::custom(format!(
                "forcing must be \"zero\" or {{\"taylor\": [...]}}, got {other}"
            ))),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ApproximantSpec {
    Zero,
    Galerkin {
        #[serde(rename = "M")]
        m: i32,
        #[serde(rename = "T_a")]
        t_a: f64,
        /// Integrator relative tolerance (default 1e-10).
        rel_tol: Option<f64>,
    },
    Taylor {
        #[serde(rename = "N")]
        order: usize,
        #[serde(rename = "T_a")]
        t_a: f64,
        /// Trace sample count (default 65).
        samples: Option<usize>,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum ConstantsSpec {
    /// Compute in-process at this truncation.
    Inline {
        #[serde(rename = "H")]
        h: u32,
        #[serde(rename = "Kmax")]
        kmax: u32,
        tail_margin: f64,
    },
    /// Load from a cache directory; never compute (a miss is exit code 3).
    Cache { cache_path: PathBuf },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSpec {
    /// Reference Galerkin resolution; must exceed the approximant's.
    #[serde(rename = "ref_M")]
    pub ref_m: i32,
    /// Comparison grid intervals over the certified span (default 20).
    #[serde(default = "default_grid_intervals")]
    pub grid_intervals: usize,
}

fn default_grid_intervals() -> usize {
    20
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Config =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Structural checks beyond what deserialization enforces.  Order
    /// constraints (n > d/2 + 1, p >= n) are left to [`ProblemSpec::new`]
    /// so they are stated in one place.
    fn validate(&self) -> Result<(), CliError> {
        match &self.approximant {
            ApproximantSpec::Zero => {}
            ApproximantSpec::Galerkin { m, t_a, rel_tol } => {
                if *m < 1 {
                    return Err(CliError::Config(format!("galerkin M must be >= 1, got {m}")));
                }
                if !(*t_a > 0.0) || !t_a.is_finite() {
                    return Err(CliError::Config(format!("T_a must be positive, got {t_a}")));
                }
                if let Some(r) = rel_tol {
                    if !(*r > 0.0) || !r.is_finite() {
                        return Err(CliError::Config(format!("rel_tol must be positive, got {r}")));
                    }
                }
            }
            ApproximantSpec::Taylor { t_a, .. } => {
                if self.nu != 0.0 {
                    return Err(CliError::Config(format!(
                        "the Taylor approximant requires nu = 0, got {}",
                        self.nu
                    )));
                }
                if !(*t_a > 0.0) || !t_a.is_finite() {
                    return Err(CliError::Config(format!("T_a must be positive, got {t_a}")));
                }
            }
        }
        if let DatumSpec::RandomBand { lo, hi, amplitude } = &self.datum {
            if !(*lo >= 0.0) || !(hi >= lo) || !amplitude.is_finite() {
                return Err(CliError::Config(format!(
                    "random_band needs 0 <= lo <= hi and finite amplitude, got lo={lo} hi={hi} amplitude={amplitude}"
                )));
            }
        }
        if let Some(v) = &self.validation {
            let approx_m = match &self.approximant {
                ApproximantSpec::Galerkin { m, .. } => *m,
                // The zero and Taylor approximants have no resolution; any
                // reference strictly finer than the datum works.
                _ => 0,
            };
            if v.ref_m <= approx_m {
                return Err(CliError::Config(format!(
                    "reference resolution ref_M = {} must exceed the approximant's M = {approx_m}",
                    v.ref_m
                )));
            }
            if v.grid_intervals == 0 {
                return Err(CliError::Config("validation grid needs >= 1 interval".into()));
            }
        }
        Ok(())
    }

    /// Problem description with the datum materialized and projected.
    pub fn problem(&self) -> Result<ProblemSpec, CliError> {
        let u0 = build_datum(&self.datum, self.dim, self.seed)?;
        let forcing = match &self.forcing {
            ForcingSpec::Zero => Forcing::Zero,
            ForcingSpec::Taylor { taylor } => Forcing::TimePolynomial(taylor.clone()),
        };
        ProblemSpec::new(
            self.dim,
            self.nu,
            self.n,
            self.orders.clone(),
            u0,
            forcing,
            self.t_max,
        )
        .map_err(|e| CliError::Config(e.to_string()))
    }

    /// Truncation parameters for the inline constants mode.
    pub fn truncation(&self) -> Option<LatticeTruncation> {
        match &self.constants {
            ConstantsSpec::Inline { h, kmax, tail_margin } => Some(LatticeTruncation {
                sum_radius: *h,
                sup_radius: *kmax,
                tail_margin: *tail_margin,
            }),
            ConstantsSpec::Cache { .. } => None,
        }
    }

    /// Approximant horizon clamped to the certification window.
    pub fn horizon(&self) -> f64 {
        match &self.approximant {
            ApproximantSpec::Zero => self.t_max,
            ApproximantSpec::Galerkin { t_a, .. } | ApproximantSpec::Taylor { t_a, .. } => {
                t_a.min(self.t_max)
            }
        }
    }
}
