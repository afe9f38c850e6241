//! Report assembly and file emission.
//!
//! `report.json` is a pure function of the config and seed: field order is
//! fixed by struct declaration, floats serialize shortest-round-trip, and
//! wall-clock data lives in the separate `timings.json`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nscert::approximant::Provenance;
use nscert::estimator::EstimatorSet;
use nscert::problem::{Forcing, ProblemSpec};
use nscert::tame::ConstantTable;
use serde::Serialize;

use crate::config::{ApproximantSpec, Config, DatumSpec};
use crate::CliError;

#[derive(Serialize)]
pub struct Report {
    pub config: ConfigEcho,
    pub constants: ConstantsBlock,
    pub approximant: Option<ApproximantBlock>,
    pub certification: Option<CertificationBlock>,
    pub validation: Option<ValidationBlock>,
    pub caveats: Vec<String>,
    /// Set when the pipeline stopped early; the present sections are valid.
    pub error: Option<String>,
    pub files: FileRefs,
}

#[derive(Serialize)]
pub struct ConfigEcho {
    pub dim: usize,
    pub nu: f64,
    pub n: f64,
    pub orders: Vec<f64>,
    #[serde(rename = "T_max")]
    pub t_max: f64,
    pub seed: u64,
    pub datum: String,
    /// ||u0||_q for the certified orders.
    pub datum_norms: BTreeMap<String, f64>,
    pub forcing: String,
    pub approximant: String,
}

#[derive(Serialize)]
pub struct ConstantsBlock {
    /// "computed" or "cache".
    pub source: &'static str,
    #[serde(flatten)]
    pub table: ConstantTable,
    /// The constants are truncated-lattice estimates, not certified bounds;
    /// entries whose sup sat near the search boundary are listed here.
    pub caveats: Vec<String>,
}

#[derive(Serialize)]
pub struct ApproximantBlock {
    pub provenance: Provenance,
    pub samples: usize,
    pub horizon: f64,
    pub collapsed: bool,
}

#[derive(Serialize)]
pub struct CertificationBlock {
    /// Certified existence horizon; "inf" when global.
    #[serde(rename = "T_c")]
    pub t_c: TcJson,
    pub certified_globally: bool,
    pub blew_up: bool,
    pub closed_form: bool,
    pub base_order: f64,
    pub grid_points: usize,
    /// delta_q per certified order.
    pub delta: BTreeMap<String, f64>,
    /// R_q at the last grid point.
    pub final_values: BTreeMap<String, f64>,
}

#[derive(Serialize)]
pub struct ValidationBlock {
    #[serde(rename = "reference_M")]
    pub reference_m: i32,
    pub reference_rel_tol: f64,
    pub grid_points: usize,
    /// Grid points actually compared (inside the certified span).
    pub compared_points: usize,
    pub per_order: Vec<OrderValidation>,
    pub pass: bool,
    pub caveats: Vec<String>,
}

#[derive(Serialize)]
pub struct OrderValidation {
    pub order: f64,
    /// max over the grid of ||u_ref - ua||_q / R_q.
    pub max_ratio: f64,
    /// Where the max was attained.
    pub at_t: f64,
}

#[derive(Serialize)]
pub struct FileRefs {
    pub bounds: Option<String>,
    pub estimators: Option<String>,
    pub timings: String,
}

/// T_c with the +infinity convention spelled "inf".
pub struct TcJson(pub f64);

impl Serialize for TcJson {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl Report {
    pub fn start(
        cfg: &Config,
        spec: &ProblemSpec,
        table: &ConstantTable,
        source: &'static str,
    ) -> Report {
        let mut datum_norms = BTreeMap::new();
        let mut orders = vec![spec.base_order];
        orders.extend_from_slice(&spec.bound_orders);
        for q in orders {
            datum_norms.insert(format!("{q}"), spec.u0.norm(q));
        }
        let constant_caveats = table
            .entries
            .iter()
            .filter(|e| !e.plateau)
            .map(|e| {
                format!(
                    "sup for (p, n) = ({}, {}) sat outside the inner two thirds of the \
                     search ball; the constant may still be climbing with Kmax",
                    e.p, e.n
                )
            })
            .collect();
        Report {
            config: ConfigEcho {
                dim: cfg.dim,
                nu: cfg.nu,
                n: cfg.n,
                orders: spec.bound_orders.clone(),
                t_max: cfg.t_max,
                seed: cfg.seed,
                datum: describe_datum(&cfg.datum),
                datum_norms,
                forcing: describe_forcing(&spec.forcing),
                approximant: describe_approximant(&cfg.approximant),
            },
            constants: ConstantsBlock {
                source,
                table: table.clone(),
                caveats: constant_caveats,
            },
            approximant: None,
            certification: None,
            validation: None,
            caveats: vec![
                "inequality constants are truncated-lattice estimates; truncation metadata \
                 is recorded under constants"
                    .into(),
            ],
            error: None,
            files: FileRefs {
                bounds: None,
                estimators: None,
                timings: "timings.json".into(),
            },
        }
    }

    pub fn write(&self, out_dir: &Path) -> Result<(), CliError> {
        let mut f = std::fs::File::create(out_dir.join("report.json"))?;
        writeln!(f, "{}", serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn describe_datum(d: &DatumSpec) -> String {
    match d {
        DatumSpec::Explicit { field } => format!("explicit({} canonical modes)", field.mode_count()),
        DatumSpec::TaylorGreen { amplitude } => format!("taylor_green(amplitude={amplitude})"),
        DatumSpec::RandomBand { lo, hi, amplitude } => {
            format!("random_band(|k| in [{lo}, {hi}], amplitude={amplitude})")
        }
    }
}

fn describe_forcing(f: &Forcing) -> String {
    match f {
        Forcing::Zero => "zero".into(),
        Forcing::TimePolynomial(coeffs) => format!("taylor(degree {})", coeffs.len().saturating_sub(1)),
    }
}

fn describe_approximant(a: &ApproximantSpec) -> String {
    match a {
        ApproximantSpec::Zero => "zero".into(),
        ApproximantSpec::Galerkin { m, t_a, .. } => format!("galerkin(M={m}, T_a={t_a})"),
        ApproximantSpec::Taylor { order, t_a, .. } => format!("taylor(N={order}, T_a={t_a})"),
    }
}

/// CSV with one row per sample time: `t`, then `eps_q,D_q` per order.
pub fn estimators_csv(est: &EstimatorSet, times: &[f64]) -> String {
    let mut header = String::from("t");
    for e in est.entries() {
        header.push_str(&format!(",eps_{},D_{}", e.order, e.order));
    }
    let mut out = header;
    out.push('\n');
    for &t in times {
        out.push_str(&format!("{t}"));
        for e in est.entries() {
            out.push_str(&format!(",{},{}", e.defect.eval(t), e.growth.eval(t)));
        }
        out.push('\n');
    }
    out
}

/// Wall-clock stage log, written as `timings.json` so the report proper
/// stays byte-deterministic.
#[derive(Default)]
pub struct Timings {
    stages: Vec<(String, f64)>,
}

impl Timings {
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.stages.push((stage.into(), t0.elapsed().as_secs_f64()));
        out
    }

    pub fn write(&self, out_dir: &Path, total_seconds: f64) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Stage<'a> {
            stage: &'a str,
            seconds: f64,
        }
        #[derive(Serialize)]
        struct File<'a> {
            stages: Vec<Stage<'a>>,
            total_seconds: f64,
        }
        let doc = File {
            stages: self
                .stages
                .iter()
                .map(|(s, secs)| Stage {
                    stage: s,
                    seconds: *secs,
                })
                .collect(),
            total_seconds,
        };
        let mut f = std::fs::File::create(out_dir.join("timings.json"))?;
        writeln!(f, "{}", serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    }
}
