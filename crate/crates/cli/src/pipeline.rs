//! End-to-end certification: datum -> approximant -> estimators ->
//! constants -> control bounds -> report files, with the exit-code contract
//! from [`crate::CliError`].

use std::path::Path;
use std::time::Instant;

use nscert::approximant::{
    galerkin_evolve, taylor_coefficients, tautological_estimators, ApproximantTrace,
    GalerkinOptions, Provenance, TaylorCoefficients,
};
use nscert::control::{
    e_nu, solve_linear_control, solve_riccati_control, zero_rn, zero_rp, zero_tc, GridPolicy,
};
use nscert::estimator::EstimatorSet;
use nscert::field::SpectralField;
use nscert::problem::ProblemSpec;
use nscert::tame::{compute_constants, ConstantTable};
use nscert::{ControlSolution, OrderBound};

use crate::config::{ApproximantSpec, Config, ConstantsSpec};
use crate::report::{
    estimators_csv, ApproximantBlock, CertificationBlock, Report, TcJson, Timings,
};
use crate::validate::run_validation;
use crate::CliError;

/// Reference-integrator tolerances for validation runs.  The reference only
/// has to resolve distances down to the certified bounds, which sit orders of
/// magnitude above these; tightening further buys no sharper ratios, it just
/// slows the fine-resolution run.
pub const REF_REL_TOL: f64 = 1e-10;
pub const REF_ABS_TOL: f64 = 1e-12;

pub struct CertifyOutcome {
    pub report: Report,
    /// The approximant integrator stopped early; the report is complete over
    /// the shortened horizon, and the run exits with code 4.
    pub collapsed: bool,
}

/// Runs the pipeline and writes `report.json`, `bounds.csv`,
/// `estimators.csv`, and `timings.json` into `out_dir`.
///
/// On an integrator failure a partial `report.json` (with its `error` field
/// set) is still written before the error is returned.
pub fn run_certification(
    cfg: &Config,
    out_dir: &Path,
    with_validation: bool,
) -> Result<CertifyOutcome, CliError> {
    std::fs::create_dir_all(out_dir)?;
    let mut timings = Timings::default();
    let total = Instant::now();

    let spec = cfg.problem()?;
    let horizon = cfg.horizon();
    let vspec = match (with_validation, &cfg.validation) {
        (false, _) => None,
        (true, Some(v)) => Some(v),
        (true, None) => {
            return Err(CliError::Config(
                "validation requested but the config has no validation block".into(),
            ))
        }
    };
    // The comparison grid is fixed before any integration and threaded into
    // every run as exact sample times.
    let vgrid: Option<Vec<f64>> = vspec.map(|v| uniform_grid(horizon, v.grid_intervals));

    let constants = timings.time("constants", || obtain_constants(cfg, &spec))?;
    let mut report = Report::start(cfg, &spec, &constants.table, constants.source);

    let built = match timings.time("approximant", || build_approximant(cfg, &spec, horizon, &vgrid))
    {
        Ok(b) => b,
        Err(e) => return fail_partial(report, &timings, total, out_dir, e),
    };
    let trace = &built.trace;
    report.approximant = Some(ApproximantBlock {
        provenance: trace.provenance.clone(),
        samples: trace.len(),
        horizon: trace.horizon,
        collapsed: trace.collapsed,
    });
    if trace.collapsed {
        report.caveats.push(format!(
            "approximant integration collapsed at t = {}; certification covers the shortened horizon",
            trace.horizon
        ));
    }

    let est = match timings.time("estimators", || {
        tautological_estimators(trace, &spec, &spec.bound_orders)
            .map_err(|e| CliError::Integrator(e.to_string()))
    }) {
        Ok(e) => e,
        Err(e) => return fail_partial(report, &timings, total, out_dir, e),
    };

    let closed_form = matches!(cfg.approximant, ApproximantSpec::Zero) && spec.forcing.is_zero();
    let control = match timings.time("control", || {
        if closed_form {
            solve_closed_form(&spec, &constants.table, &vgrid)
        } else {
            solve_by_integration(&spec, &constants.table, &est)
        }
    }) {
        Ok(c) => c,
        Err(e) => return fail_partial(report, &timings, total, out_dir, e),
    };
    report.certification = Some(certification_block(&spec, &est, &control, closed_form));

    if let Some(v) = vspec {
        let vgrid = vgrid.as_deref().expect("grid exists when validating");
        let outcome = timings.time("validation", || {
            run_validation(&spec, v, vgrid, &built, &control, closed_form, &constants.table)
        });
        match outcome {
            Ok(block) => report.validation = Some(block),
            Err(e) => return fail_partial(report, &timings, total, out_dir, e),
        }
    }

    timings.time("emit", || -> Result<(), CliError> {
        std::fs::write(out_dir.join("bounds.csv"), control.solution.to_csv())?;
        std::fs::write(
            out_dir.join("estimators.csv"),
            estimators_csv(&est, &trace.times),
        )?;
        Ok(())
    })?;
    report.files.bounds = Some("bounds.csv".into());
    report.files.estimators = Some("estimators.csv".into());

    report.write(out_dir)?;
    timings.write(out_dir, total.elapsed().as_secs_f64())?;
    Ok(CertifyOutcome {
        collapsed: trace.collapsed,
        report,
    })
}

/// Computes constants and writes per-pair cache files; the `constants`
/// subcommand.  Requires the inline constants mode.
pub fn run_constants(cfg: &Config, out_dir: &Path) -> Result<ConstantTable, CliError> {
    let spec = cfg.problem()?;
    let trunc = cfg.truncation().ok_or_else(|| {
        CliError::Config("the constants subcommand needs inline {H, Kmax, tail_margin}".into())
    })?;
    trunc.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let table = compute_constants(spec.dim, &spec.constant_pairs(), trunc)
        .map_err(|e| CliError::Constants(e.to_string()))?;
    table
        .write_cache(out_dir)
        .map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;
    Ok(table)
}

fn fail_partial(
    mut report: Report,
    timings: &Timings,
    total: Instant,
    out_dir: &Path,
    err: CliError,
) -> Result<CertifyOutcome, CliError> {
    report.error = Some(err.to_string());
    // Emission errors would shadow the root cause; the partial report is
    // best-effort.
    let _ = report.write(out_dir);
    let _ = timings.write(out_dir, total.elapsed().as_secs_f64());
    Err(err)
}

pub struct ObtainedConstants {
    pub table: ConstantTable,
    pub source: &'static str,
}

fn obtain_constants(cfg: &Config, spec: &ProblemSpec) -> Result<ObtainedConstants, CliError> {
    let pairs = spec.constant_pairs();
    match &cfg.constants {
        ConstantsSpec::Inline { .. } => {
            let trunc = cfg.truncation().expect("inline mode");
            trunc.validate().map_err(|e| CliError::Config(e.to_string()))?;
            let table = compute_constants(spec.dim, &pairs, trunc)
                .map_err(|e| CliError::Constants(e.to_string()))?;
            Ok(ObtainedConstants {
                table,
                source: "computed",
            })
        }
        ConstantsSpec::Cache { cache_path } => {
            let trunc = discover_truncation(cache_path, spec.dim, &pairs)?;
            let table = ConstantTable::load_cache(cache_path, spec.dim, &pairs, trunc)
                .map_err(|e| CliError::Constants(e.to_string()))?;
            Ok(ObtainedConstants {
                table,
                source: "cache",
            })
        }
    }
}

/// Finds the unique truncation whose cache files cover every requested
/// (p, n) pair.  The actual loading (and key verification) stays in
/// [`ConstantTable::load_cache`].
fn discover_truncation(
    dir: &Path,
    dim: usize,
    pairs: &[(f64, f64)],
) -> Result<nscert::LatticeTruncation, CliError> {
    let listing = std::fs::read_dir(dir).map_err(|e| {
        CliError::Constants(format!("cache directory {}: {e}", dir.display()))
    })?;
    // truncation triple -> pairs covered
    let mut seen: Vec<(nscert::LatticeTruncation, Vec<(f64, f64)>)> = Vec::new();
    for entry in listing {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let Ok(text) = std::fs::read_to_string(&path) else {
            continue;
        };
        let Ok(v) = serde_json::from_str::<serde_json::Value>(&text) else {
            continue;
        };
        let (Some(d), Some(p), Some(n), Some(h), Some(kmax), Some(margin)) = (
            v.get("d").and_then(|x| x.as_u64()),
            v.get("p").and_then(|x| x.as_f64()),
            v.get("n").and_then(|x| x.as_f64()),
            v.get("H").and_then(|x| x.as_u64()),
            v.get("Kmax").and_then(|x| x.as_u64()),
            v.get("tail_margin").and_then(|x| x.as_f64()),
        ) else {
            continue;
        };
        if d as usize != dim || !pairs.contains(&(p, n)) {
            continue;
        }
        let trunc = nscert::LatticeTruncation {
            sum_radius: h as u32,
            sup_radius: kmax as u32,
            tail_margin: margin,
        };
        match seen.iter_mut().find(|(t, _)| *t == trunc) {
            Some((_, covered)) => {
                if !covered.contains(&(p, n)) {
                    covered.push((p, n));
                }
            }
            None => seen.push((trunc, vec![(p, n)])),
        }
    }
    let mut complete: Vec<_> = seen
        .into_iter()
        .filter(|(_, covered)| covered.len() == pairs.len())
        .map(|(t, _)| t)
        .collect();
    match complete.len() {
        0 => Err(CliError::Constants(format!(
            "no cached table in {} covers all {} requested order pairs; \
             run the constants subcommand first",
            dir.display(),
            pairs.len()
        ))),
        1 => Ok(complete.pop().expect("one element")),
        _ => Err(CliError::Constants(format!(
            "multiple truncations in {} cover the requested pairs; keep one per directory",
            dir.display()
        ))),
    }
}

pub struct BuiltApproximant {
    pub trace: ApproximantTrace,
    pub taylor: Option<TaylorCoefficients>,
}

impl BuiltApproximant {
    /// ua(t) for arbitrary t when a closed form exists, else the exact trace
    /// sample (validation arranges for its grid to be sampled).
    pub fn eval(&self, t: f64) -> Result<SpectralField, CliError> {
        match (&self.trace.provenance, &self.taylor) {
            (Provenance::Zero, _) => Ok(SpectralField::zero(self.trace.dim)),
            (Provenance::Taylor { .. }, Some(coeffs)) => coeffs
                .eval(t)
                .map_err(|e| CliError::Integrator(e.to_string())),
            _ => self
                .trace
                .field_at(t)
                .cloned()
                .ok_or_else(|| CliError::Integrator(format!("no trace sample at t = {t}"))),
        }
    }
}

fn build_approximant(
    cfg: &Config,
    spec: &ProblemSpec,
    horizon: f64,
    vgrid: &Option<Vec<f64>>,
) -> Result<BuiltApproximant, CliError> {
    match &cfg.approximant {
        ApproximantSpec::Zero => {
            let times = merged_times(horizon, 128, vgrid.as_deref());
            let zero = SpectralField::zero(spec.dim);
            let len = times.len();
            Ok(BuiltApproximant {
                trace: ApproximantTrace {
                    provenance: Provenance::Zero,
                    dim: spec.dim,
                    horizon,
                    collapsed: false,
                    times,
                    fields: vec![zero.clone(); len],
                    derivs: vec![zero; len],
                },
                taylor: None,
            })
        }
        ApproximantSpec::Galerkin { m, t_a, rel_tol } => {
            let rel = rel_tol.unwrap_or(1e-10);
            let opts = GalerkinOptions {
                rel_tol: rel,
                abs_tol: rel * 1e-2,
                required_times: vgrid.clone().unwrap_or_default(),
                min_step_frac: 1e-14,
            };
            let trace = galerkin_evolve(spec, *m, t_a.min(horizon), &opts)
                .map_err(|e| CliError::Integrator(e.to_string()))?;
            Ok(BuiltApproximant {
                trace,
                taylor: None,
            })
        }
        ApproximantSpec::Taylor { order, t_a, samples } => {
            let coeffs = taylor_coefficients(&spec.u0, &spec.forcing, *order)
                .map_err(|e| CliError::Integrator(e.to_string()))?;
            let intervals = samples.unwrap_or(65).max(2) - 1;
            let times = merged_times(t_a.min(horizon), intervals, vgrid.as_deref());
            let mut fields = Vec::with_capacity(times.len());
            let mut derivs = Vec::with_capacity(times.len());
            for &t in &times {
                fields.push(coeffs.eval(t).map_err(|e| CliError::Integrator(e.to_string()))?);
                derivs.push(
                    coeffs
                        .eval_deriv(t)
                        .map_err(|e| CliError::Integrator(e.to_string()))?,
                );
            }
            Ok(BuiltApproximant {
                trace: ApproximantTrace {
                    provenance: Provenance::Taylor { n: *order },
                    dim: spec.dim,
                    horizon: *times.last().expect("nonempty grid"),
                    collapsed: false,
                    times,
                    fields,
                    derivs,
                },
                taylor: Some(coeffs),
            })
        }
    }
}

/// Uniform grid hitting 0 and `end` exactly.  The fraction is formed before
/// scaling so grids whose interval counts divide each other share points
/// bitwise (i/(a*m) and (i/a)/m round identically: same real quotient).
pub fn uniform_grid(end: f64, intervals: usize) -> Vec<f64> {
    (0..=intervals)
        .map(|i| end * (i as f64 / intervals as f64))
        .collect()
}

fn merged_times(horizon: f64, intervals: usize, extra: Option<&[f64]>) -> Vec<f64> {
    let mut times = uniform_grid(horizon, intervals.max(1));
    if let Some(ex) = extra {
        times.extend(ex.iter().copied().filter(|&t| t >= 0.0 && t <= horizon));
    }
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
    times.dedup();
    times
}

pub struct ControlOutcome {
    pub solution: ControlSolution,
    /// Closed-form existence horizon (finite or +infinity); equals the
    /// solver horizon for the integrated path.
    pub t_c: f64,
}

/// Zero approximant, zero forcing: the bound curves have closed forms, and
/// T_c may genuinely be +infinity (small or zero data).
fn solve_closed_form(
    spec: &ProblemSpec,
    table: &ConstantTable,
    vgrid: &Option<Vec<f64>>,
) -> Result<ControlOutcome, CliError> {
    let n = spec.base_order;
    let g_n = table
        .diagonal(n)
        .ok_or_else(|| CliError::Constants(format!("missing diagonal constants at order {n}")))?
        .g_pn;
    let u0n = spec.u0.norm(n);
    let t_c =
        zero_tc(spec.nu, g_n, u0n).map_err(|e| CliError::Integrator(e.to_string()))?;
    // Curves are sampled strictly inside the certified span.
    let t_end = if t_c.is_finite() {
        (t_c * (1.0 - 1e-3)).min(spec.t_max)
    } else {
        spec.t_max
    };
    let times: Vec<f64> = match vgrid {
        Some(g) => g.iter().copied().filter(|&t| t <= t_end).collect(),
        None => uniform_grid(t_end, 200),
    };
    let mut base_values = Vec::with_capacity(times.len());
    for &t in &times {
        base_values
            .push(zero_rn(spec.nu, g_n, u0n, t).map_err(|e| CliError::Integrator(e.to_string()))?);
    }
    let mut orders = Vec::new();
    for &p in &spec.bound_orders {
        let g_pn = table
            .get(p, n)
            .ok_or_else(|| CliError::Constants(format!("missing constants for pair ({p}, {n})")))?
            .g_pn;
        let u0p = spec.u0.norm(p);
        let mut values = Vec::with_capacity(times.len());
        let mut exponents = Vec::with_capacity(times.len());
        for &t in &times {
            values.push(
                zero_rp(spec.nu, g_n, g_pn, u0n, u0p, t)
                    .map_err(|e| CliError::Integrator(e.to_string()))?,
            );
            // A_p = G_pn int_0^t R_n = -(G_pn / G_n) log(1 - G_n u0n e_nu).
            let a = if u0n == 0.0 {
                0.0
            } else {
                -(g_pn / g_n) * (1.0 - g_n * u0n * e_nu(spec.nu, t)).ln()
            };
            exponents.push(a);
        }
        orders.push(OrderBound {
            order: p,
            values,
            exponents,
        });
    }
    Ok(ControlOutcome {
        solution: ControlSolution {
            base_order: n,
            t_c,
            // The bound genuinely diverges only if that happens inside the
            // reporting window; a finite T_c beyond T_max is still a
            // horizon-limited certificate.
            blew_up: t_c <= spec.t_max,
            global: t_c.is_infinite(),
            times,
            base_values,
            orders,
        },
        t_c,
    })
}

fn solve_by_integration(
    spec: &ProblemSpec,
    table: &ConstantTable,
    est: &EstimatorSet,
) -> Result<ControlOutcome, CliError> {
    let n = spec.base_order;
    let diag = table
        .diagonal(n)
        .ok_or_else(|| CliError::Constants(format!("missing diagonal constants at order {n}")))?;
    let policy = GridPolicy::default();
    let t_end = est.horizon();
    let rn = solve_riccati_control(est, spec.nu, diag.k_pn, diag.g_pn, t_end, &policy)
        .map_err(|e| CliError::Integrator(e.to_string()))?;
    let mut orders = Vec::new();
    for &p in &spec.bound_orders {
        let dp = table
            .get(p, p)
            .ok_or_else(|| CliError::Constants(format!("missing constants for pair ({p}, {p})")))?;
        let cpl = table
            .get(p, n)
            .ok_or_else(|| CliError::Constants(format!("missing constants for pair ({p}, {n})")))?;
        orders.push(
            solve_linear_control(est, &rn, spec.nu, p, dp.k_pn, dp.g_pn, cpl.g_pn, &policy)
                .map_err(|e| CliError::Integrator(e.to_string()))?,
        );
    }
    let t_c = rn.t_c;
    Ok(ControlOutcome {
        solution: ControlSolution::from_parts(&rn, n, orders),
        t_c,
    })
}

fn certification_block(
    spec: &ProblemSpec,
    est: &EstimatorSet,
    control: &ControlOutcome,
    closed_form: bool,
) -> CertificationBlock {
    let sol = &control.solution;
    let mut delta = std::collections::BTreeMap::new();
    let mut final_values = std::collections::BTreeMap::new();
    let mut key_orders = vec![spec.base_order];
    key_orders.extend_from_slice(&spec.bound_orders);
    for q in key_orders {
        if let Some(e) = est.entry(q) {
            delta.insert(format!("{q}"), e.initial_distance);
        }
        let last = if q == spec.base_order {
            sol.base_values.last().copied()
        } else {
            sol.orders
                .iter()
                .find(|b| b.order == q)
                .and_then(|b| b.values.last().copied())
        };
        if let Some(v) = last {
            final_values.insert(format!("{q}"), v);
        }
    }
    CertificationBlock {
        t_c: TcJson(control.t_c),
        certified_globally: sol.global,
        blew_up: sol.blew_up,
        closed_form,
        base_order: spec.base_order,
        grid_points: sol.times.len(),
        delta,
        final_values,
    }
}
