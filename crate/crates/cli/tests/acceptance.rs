//! End-to-end acceptance checks for the certification pipeline.
//!
//! This target runs without the libtest harness: the checks execute
//! sequentially (several assert wall-clock budgets that parallel scheduling
//! would skew) and each prints exactly one PASS/FAIL line.  A failing check
//! panics; the runner turns the panic into its FAIL line and the process
//! exits nonzero so `cargo test` reports the target as failed.
//!
//! `cargo test --test acceptance -- --only 3,7` runs a subset by number.

use std::collections::BTreeMap;
use std::panic::AssertUnwindSafe;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nscert::approximant::{
    galerkin_evolve, tautological_estimators, taylor_coefficients, taylor_residual_coefficients,
    GalerkinOptions,
};
use nscert::control::{
    solve_linear_control, solve_riccati_control, zero_rn, zero_rp, zero_tc, GridPolicy,
};
use nscert::dense::bilinear;
use nscert::estimator::{required_orders, EstimatorSet, OrderEstimator, Sampler};
use nscert::field::{SpectralField, WaveVector};
use nscert::problem::{Forcing, ProblemSpec};
use nscert::tame::{compute_constants, ConstantTable, LatticeTruncation, PairEvaluator};
use nscert_cli::config::{Config, DatumSpec};
use nscert_cli::datum::{build_datum, taylor_green};
use nscert_cli::pipeline::run_certification;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde_json::json;
use tempfile::TempDir;

/// Constant tables shared by the checks, plus a disk cache of the d = 3
/// table for pipeline runs that load constants instead of computing them.
struct Shared {
    d3: ConstantTable,
    d2: ConstantTable,
    cache: TempDir,
}

fn build_shared() -> Shared {
    let trunc = LatticeTruncation::default();
    let d3 = compute_constants(
        3,
        &[(3.0, 3.0), (4.0, 3.0), (4.0, 4.0), (5.0, 3.0), (5.0, 5.0)],
        trunc,
    )
    .expect("d = 3 constant table");
    let d2 = compute_constants(2, &[(2.5, 2.5), (3.5, 2.5)], trunc).expect("d = 2 constant table");
    let cache = tempfile::tempdir().expect("cache dir");
    d3.write_cache(cache.path()).expect("write cache");
    Shared { d3, d2, cache }
}

/// Criteria selected by a `--only 1,4,7` argument; `None` means all.
fn selection() -> Option<Vec<usize>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut iter = args.iter();
    while let Some(a) = iter.next() {
        let list = match a.strip_prefix("--only=") {
            Some(rest) => rest.to_owned(),
            None if a == "--only" => iter.next().expect("--only needs a list").clone(),
            None => continue,
        };
        let picked = list
            .split(',')
            .map(|x| x.trim().parse::<usize>().expect("criterion number"))
            .collect();
        return Some(picked);
    }
    None
}

fn main() {
    println!("acceptance: certification pipeline end-to-end checks");
    let only = selection();
    let total = Instant::now();
    let t0 = Instant::now();
    let shared = build_shared();
    println!(
        "fixtures: constant tables at the default truncation (d = 3, d = 2) [{:6.1} s]",
        t0.elapsed().as_secs_f64()
    );

    let checks: [(&str, fn(&Shared) -> String); 10] = [
        (
            "integrator matches closed forms for the zero approximant",
            c01_closed_form_agreement,
        ),
        (
            "small data certify globally with nonincreasing bounds",
            c02_small_data_global,
        ),
        (
            "inviscid certified horizon matches 1/(G_n ||u0||_n)",
            c03_euler_horizon,
        ),
        (
            "product and Kato inequalities hold on random pairs",
            c04_tame_inequalities,
        ),
        (
            "bilinear term matches a brute-force convolution",
            c05_convolution_oracle,
        ),
        (
            "general constant path reduces to the diagonal forms",
            c06_diagonal_consistency,
        ),
        (
            "Galerkin certification bounds a finer reference",
            c07_galerkin_end_to_end,
        ),
        (
            "Taylor residual vanishes through t^(N-1), bounds stay finite",
            c08_taylor_residual,
        ),
        (
            "single-mode flow: pure decay, zero residual, zero bound",
            c09_single_mode,
        ),
        (
            "fixed-seed runs produce byte-identical outputs",
            c10_determinism,
        ),
    ];

    // Panics are reported as FAIL lines; silence the default hook's trace.
    let prev_hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut failures = 0usize;
    let mut ran = 0usize;
    for (i, (title, check)) in checks.iter().enumerate() {
        if only.as_ref().is_some_and(|sel| !sel.contains(&(i + 1))) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(AssertUnwindSafe(|| check(&shared)));
        let dt = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => {
                println!("criterion {:>2}: PASS [{dt:6.1} s] {title} -- {detail}", i + 1)
            }
            Err(payload) => {
                failures += 1;
                let msg = payload
                    .downcast_ref::<String>()
                    .map(String::as_str)
                    .or_else(|| payload.downcast_ref::<&str>().copied())
                    .unwrap_or("panic");
                println!("criterion {:>2}: FAIL [{dt:6.1} s] {title} -- {msg}", i + 1);
            }
        }
    }
    std::panic::set_hook(prev_hook);

    if failures > 0 {
        println!("acceptance: {failures} of {ran} criteria FAILED");
        std::process::exit(1);
    }
    println!(
        "acceptance: all {ran} criteria passed [{:.1} s total]",
        total.elapsed().as_secs_f64()
    );
}

// --- helpers -------------------------------------------------------------

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

/// Constant-in-time estimators for the zero approximant: the distance to the
/// datum is the full datum norm, the defect and growth vanish.
fn zero_approximant_estimators(
    u0: &SpectralField,
    n: f64,
    bounds: &[f64],
    horizon: f64,
) -> EstimatorSet {
    let entries = required_orders(n, bounds)
        .into_iter()
        .map(|q| OrderEstimator {
            order: q,
            initial_distance: u0.norm(q),
            defect: Sampler::Constant(0.0),
            growth: Sampler::Constant(0.0),
        })
        .collect();
    EstimatorSet::new(n, bounds.to_vec(), horizon, entries).expect("estimator set")
}

fn parse_config(value: serde_json::Value) -> Config {
    Config::from_json(&value.to_string()).expect("config parses")
}

/// Parses a numeric CSV with a single header line.
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).expect("read csv");
    let mut lines = text.lines();
    let header = lines
        .next()
        .expect("csv header")
        .split(',')
        .map(str::to_owned)
        .collect();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|x| x.parse::<f64>().expect("csv number"))
                .collect()
        })
        .collect();
    (header, rows)
}

// --- criterion 1 ---------------------------------------------------------

/// Zero approximant, zero forcing, d = 3, n = 3, nu = 1: the Riccati
/// integrator must reproduce the closed-form base bound and blow-up time,
/// and the quadrature propagation the closed-form order-p bounds, for a
/// subcritical and a supercritical datum.
fn c01_closed_form_agreement(sh: &Shared) -> String {
    let t0 = Instant::now();
    let diag3 = sh.d3.diagonal(3.0).expect("diagonal (3,3)");
    let (k3, g3) = (diag3.k_pn, diag3.g_pn);
    let nu = 1.0;
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    let raw = SpectralField::random_band(3, 1.0, 6.0, &mut rng).expect("datum band");
    // Tight tolerances: the comparison span reaches deep into the stiff
    // region ahead of blow-up where default tolerances would be marginal.
    let policy = GridPolicy {
        rel_tol: 1e-12,
        abs_tol: 1e-15,
        quad_rel_tol: 1e-12,
        quad_abs_tol: 1e-15,
        ..GridPolicy::default()
    };

    let mut worst_rn = 0.0f64;
    let mut worst_rp = 0.0f64;
    let mut worst_tc = 0.0f64;
    for theta in [0.5, 2.0] {
        let u0 = raw.scaled(theta * nu / g3 / raw.norm(3.0));
        let u0n = u0.norm(3.0);
        let tc = zero_tc(nu, g3, u0n).expect("closed-form horizon");
        if tc.is_finite() {
            // Probe run past the closed-form blow-up: only the detected t_c
            // matters here, so the order-p bounds are not propagated across
            // the dense near-divergence grid.
            let probe_end = 1.2 * tc;
            let est = zero_approximant_estimators(&u0, 3.0, &[4.0, 5.0], probe_end);
            let probe =
                solve_riccati_control(&est, nu, k3, g3, probe_end, &policy).expect("riccati");
            assert!(probe.blew_up, "no blow-up detected below t = {probe_end}");
            let e = rel_err(probe.t_c, tc);
            assert!(e <= 1e-8, "t_c = {} vs closed form {tc}: rel err {e:.2e}", probe.t_c);
            worst_tc = worst_tc.max(e);
        }
        // Comparison run over the certified span.
        let span = if tc.is_finite() { 0.95 * tc } else { 3.0 };
        let est = zero_approximant_estimators(&u0, 3.0, &[4.0, 5.0], span);
        let rn = solve_riccati_control(&est, nu, k3, g3, span, &policy).expect("riccati");
        assert!(!rn.blew_up, "spurious blow-up inside the certified span");
        for i in 0..=50 {
            let t = span * (i as f64 / 50.0);
            let e = rel_err(rn.eval(t), zero_rn(nu, g3, u0n, t).expect("zero_rn"));
            assert!(e <= 1e-8, "R_3({t}) off by {e:.2e} (theta = {theta})");
            worst_rn = worst_rn.max(e);
        }
        for p in [4.0, 5.0] {
            let dp = sh.d3.diagonal(p).expect("diagonal");
            let g_pn = sh.d3.get(p, 3.0).expect("coupling").g_pn;
            let ob = solve_linear_control(&est, &rn, nu, p, dp.k_pn, dp.g_pn, g_pn, &policy)
                .expect("linear bound");
            let u0p = u0.norm(p);
            for (i, &t) in rn.times.iter().enumerate() {
                let e = rel_err(ob.values[i], zero_rp(nu, g3, g_pn, u0n, u0p, t).expect("zero_rp"));
                assert!(e <= 1e-8, "R_{p}({t}) off by {e:.2e} (theta = {theta})");
                worst_rp = worst_rp.max(e);
            }
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    assert!(dt < 5.0, "runtime {dt:.2} s exceeds the 5 s budget");
    format!("max rel err: R_n {worst_rn:.1e}, R_p {worst_rp:.1e}, t_c {worst_tc:.1e}")
}

// --- criterion 2 ---------------------------------------------------------

/// A datum below the small-data threshold must certify for all time, with
/// every reported bound curve nonincreasing and below the datum norm of its
/// order.  The inequalities are exact; no tolerance.
fn c02_small_data_global(sh: &Shared) -> String {
    let g3 = sh.d3.diagonal(3.0).expect("diagonal").g_pn;
    let g53 = sh.d3.get(5.0, 3.0).expect("coupling").g_pn;
    let nu = 1.0;
    let mut rng = ChaCha12Rng::seed_from_u64(202);
    let raw = SpectralField::random_band(3, 1.0, 4.0, &mut rng).expect("datum band");
    // Scaled so even the strongest coupling keeps every order decaying; this
    // sits well below the base-order global-existence threshold nu / G_3.
    let u0 = raw.scaled(0.5 * nu / g53 / raw.norm(3.0));
    assert!(u0.norm(3.0) <= nu / g3, "datum not below the small-data threshold");

    let out = tempfile::tempdir().expect("out dir");
    let cfg = parse_config(json!({
        "dim": 3, "nu": nu, "n": 3.0, "orders": [4.0, 5.0],
        "datum": { "kind": "explicit", "field": serde_json::to_value(&u0).unwrap() },
        "approximant": { "kind": "zero" },
        "constants": { "cache_path": sh.cache.path() },
        "T_max": 10.0,
        "out_dir": out.path(),
    }));
    let outcome = run_certification(&cfg, out.path(), false).expect("certification");
    let cert = outcome.report.certification.as_ref().expect("certification block");
    assert!(cert.t_c.0.is_infinite(), "expected an infinite horizon, got {}", cert.t_c.0);
    assert!(cert.certified_globally, "global flag not set");
    let text = std::fs::read_to_string(out.path().join("report.json")).expect("report");
    assert!(text.contains("\"T_c\": \"inf\""), "report does not state T_c = inf");

    let norms = &outcome.report.config.datum_norms;
    let (header, rows) = read_csv(&out.path().join("bounds.csv"));
    assert_eq!(header, ["t", "R_3", "R_4", "A_4", "R_5", "A_5"], "unexpected csv layout");
    for (col, q) in [(1usize, "3"), (2, "4"), (4, "5")] {
        let u0q = norms[q];
        let mut prev = f64::INFINITY;
        for row in &rows {
            let v = row[col];
            assert!(v <= u0q, "R_{q}({}) = {v} above the datum norm {u0q}", row[0]);
            assert!(v <= prev, "R_{q} increases at t = {}", row[0]);
            prev = v;
        }
    }
    format!(
        "T_c = inf; R_q nonincreasing and <= ||u0||_q on {} grid points for q in {{3, 4, 5}}",
        rows.len()
    )
}

// --- criterion 3 ---------------------------------------------------------

/// With nu = 0 and the zero approximant the certified horizon has the closed
/// form 1/(G_n ||u0||_n); the reported value must match it to 1e-6 relative
/// across 20 random data.
fn c03_euler_horizon(sh: &Shared) -> String {
    let t0 = Instant::now();
    let g3 = sh.d3.diagonal(3.0).expect("diagonal").g_pn;
    let band = DatumSpec::RandomBand {
        lo: 1.0,
        hi: 3.0,
        amplitude: 1.0,
    };
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let out = tempfile::tempdir().expect("out dir");
        let cfg = parse_config(json!({
            "dim": 3, "nu": 0.0, "n": 3.0,
            "datum": { "kind": "random_band", "lo": 1.0, "hi": 3.0, "amplitude": 1.0 },
            "approximant": { "kind": "zero" },
            "constants": { "cache_path": sh.cache.path() },
            "T_max": 10.0, "seed": seed,
            "out_dir": out.path(),
        }));
        let outcome = run_certification(&cfg, out.path(), false).expect("certification");
        let tc = outcome.report.certification.expect("certification block").t_c.0;
        // Reconstruct the seeded datum independently of the pipeline run.
        let u0 = build_datum(&band, 3, seed).expect("datum");
        let e = rel_err(tc, 1.0 / (g3 * u0.norm(3.0)));
        assert!(e <= 1e-6, "seed {seed}: T_c = {tc} off by {e:.2e}");
        worst = worst.max(e);
    }
    let dt = t0.elapsed().as_secs_f64();
    assert!(dt < 5.0, "runtime {dt:.2} s exceeds the 5 s budget");
    format!("20 random data, max rel err {worst:.1e}")
}

// --- criterion 4 ---------------------------------------------------------

/// Both certified product inequalities, checked directly against the exact
/// bilinear term on seeded random pairs:
///   |<P(v,w) | w>_p| <= (G_pn/2) (||v||_p ||w||_n + ||v||_n ||w||_p) ||w||_p
///   ||P(v,w)||_p    <= (K_pn/2) (||v||_p ||w||_{n+1} + ||v||_n ||w||_{p+1})
fn c04_tame_inequalities(sh: &Shared) -> String {
    let t0 = Instant::now();
    let cases: [(usize, &ConstantTable, &[(f64, f64)]); 2] = [
        (3, &sh.d3, &[(3.0, 3.0), (4.0, 3.0), (5.0, 3.0)]),
        (2, &sh.d2, &[(2.5, 2.5), (3.5, 2.5)]),
    ];
    let mut logged = Vec::new();
    for (dim, table, pairs) in cases {
        for &(p, n) in pairs {
            let e = table.get(p, n).expect("table entry");
            let mut rng = ChaCha12Rng::seed_from_u64(4000 + 100 * dim as u64 + (10.0 * p) as u64);
            let (mut max_g, mut max_k) = (0.0f64, 0.0f64);
            for trial in 0..1000 {
                let v = SpectralField::random_band(dim, 1.0, 6.0, &mut rng).expect("v");
                let w = SpectralField::random_band(dim, 1.0, 6.0, &mut rng).expect("w");
                let pw = bilinear(&v, &w).expect("bilinear");
                let lhs_g = pw.inner(&w, p).expect("inner").abs();
                let rhs_g =
                    0.5 * e.g_pn * (v.norm(p) * w.norm(n) + v.norm(n) * w.norm(p)) * w.norm(p);
                let lhs_k = pw.norm(p);
                let rhs_k =
                    0.5 * e.k_pn * (v.norm(p) * w.norm(n + 1.0) + v.norm(n) * w.norm(p + 1.0));
                let (rg, rk) = (lhs_g / rhs_g, lhs_k / rhs_k);
                assert!(
                    rg <= 1.0 && rk <= 1.0,
                    "d = {dim}, (p, n) = ({p}, {n}), trial {trial}: ratios G {rg:.4}, K {rk:.4}"
                );
                max_g = max_g.max(rg);
                max_k = max_k.max(rk);
            }
            logged.push(format!("d{dim} ({p},{n}) G {max_g:.3} K {max_k:.3}"));
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    assert!(dt < 120.0, "runtime {dt:.1} s exceeds the 2 min budget");
    format!("1000 pairs each, max ratios: {}", logged.join("; "))
}

// --- criterion 5 ---------------------------------------------------------

/// The bilinear term written as a plain double sum over all mode pairs,
/// with an inline per-mode projection.
fn brute_force_bilinear(v: &SpectralField, w: &SpectralField) -> SpectralField {
    let dim = v.dim();
    let scale = (2.0 * std::f64::consts::PI).powf(-(dim as f64) / 2.0);
    let mut acc: BTreeMap<Vec<i32>, Vec<Complex64>> = BTreeMap::new();
    for (h, vc) in v.full_modes() {
        for (m, wc) in w.full_modes() {
            let k: Vec<i32> = h
                .components()
                .iter()
                .zip(m.components())
                .map(|(a, b)| a + b)
                .collect();
            if k.iter().all(|&x| x == 0) {
                continue;
            }
            // (v_h . i m) w_m
            let mut dot = Complex64::new(0.0, 0.0);
            for j in 0..dim {
                dot += vc[j] * m.components()[j] as f64;
            }
            let dot = dot * Complex64::new(0.0, 1.0);
            let slot = acc
                .entry(k)
                .or_insert_with(|| vec![Complex64::new(0.0, 0.0); dim]);
            for (c, &wcc) in wc.iter().enumerate() {
                slot[c] += dot * wcc;
            }
        }
    }
    let modes = acc.into_iter().map(|(k, c)| {
        let k2: f64 = k.iter().map(|&x| (x as f64) * (x as f64)).sum();
        let mut kc = Complex64::new(0.0, 0.0);
        for j in 0..dim {
            kc += c[j] * k[j] as f64;
        }
        let out: Vec<Complex64> = (0..dim)
            .map(|j| -scale * (c[j] - kc * (k[j] as f64) / k2))
            .collect();
        (WaveVector::new(k), out)
    });
    SpectralField::from_modes(dim, modes).expect("oracle field")
}

fn c05_convolution_oracle(_sh: &Shared) -> String {
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for (dim, seed) in [(2usize, 510u64), (3, 530)] {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        for trial in 0..100 {
            let v = SpectralField::random_band(dim, 1.0, 4.0, &mut rng).expect("v");
            let w = SpectralField::random_band(dim, 1.0, 4.0, &mut rng).expect("w");
            let fast = bilinear(&v, &w).expect("bilinear");
            let oracle = brute_force_bilinear(&v, &w);
            let e = fast.sub(&oracle).expect("diff").norm(0.0) / fast.norm(0.0);
            assert!(e <= 1e-12, "d = {dim}, trial {trial}: rel err {e:.2e}");
            worst = worst.max(e);
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    assert!(dt < 30.0, "runtime {dt:.1} s exceeds the 30 s budget");
    format!("200 pairs, max rel err {worst:.1e}")
}

// --- criterion 6 ---------------------------------------------------------

/// The diagonal (p = n) lattice functionals written directly:
///   F_K(k) = |k|^{2n} sum_h C^2 / (|h|^n |k-h|^{n+1})^2
///   F_G(k) = sum_h (|k|^n - |k-h|^n)^2 C^2 / (|h|^n |k-h|^n)^2
/// over 0 != h != k, |h| <= H, with C^2 = (|h|^2 |k|^2 - (h.k)^2) / |h|^2.
fn diagonal_sums(dim: usize, n: f64, trunc: &LatticeTruncation, k: &WaveVector) -> (f64, f64) {
    let hr = trunc.sum_radius as i64;
    let side = (2 * hr + 1) as usize;
    let total = side.pow(dim as u32);
    let k2 = k.norm_sq();
    let kc = k.components();
    let pk = (k2 as f64).powf(n / 2.0);
    let (mut kk, mut gg) = (0.0f64, 0.0f64);
    let mut h = vec![0i64; dim];
    for idx in 0..total {
        let mut rem = idx;
        for a in (0..dim).rev() {
            h[a] = (rem % side) as i64 - hr;
            rem /= side;
        }
        let r2h: i64 = h.iter().map(|x| x * x).sum();
        if r2h == 0 || r2h > hr * hr {
            continue;
        }
        let hk: i64 = h.iter().zip(kc).map(|(x, &kj)| x * kj as i64).sum();
        let r2m = k2 - 2 * hk + r2h;
        if r2m == 0 {
            continue;
        }
        let gram = r2h * k2 - hk * hk;
        if gram == 0 {
            continue;
        }
        let c2 = gram as f64 / r2h as f64;
        let hn = (r2h as f64).powf(n / 2.0);
        let mn = (r2m as f64).powf(n / 2.0);
        let mn1 = (r2m as f64).powf((n + 1.0) / 2.0);
        let x = hn * mn1;
        kk += c2 / (x * x);
        let y = hn * mn;
        let dif = pk - mn;
        gg += dif * dif * c2 / (y * y);
    }
    ((k2 as f64).powf(n) * kk, gg)
}

fn c06_diagonal_consistency(sh: &Shared) -> String {
    let cases: [(&ConstantTable, usize, &[f64]); 2] =
        [(&sh.d3, 3, &[3.0, 4.0, 5.0]), (&sh.d2, 2, &[2.5])];
    let mut worst = 0.0f64;
    let mut count = 0usize;
    for (table, dim, diagonals) in cases {
        let trunc = table.trunc;
        let prefactor = (2.0 * std::f64::consts::PI).powf(-(dim as f64) / 2.0);
        for &n in diagonals {
            let entry = table.diagonal(n).expect("diagonal entry");
            let mut probes = vec![entry.argmax_k.clone(), entry.argmax_k_g.clone()];
            for comps in [[1, 0, 0], [1, 1, 0], [2, 1, 0], [3, 2, 1]] {
                probes.push(WaveVector::from_slice(&comps[..dim]));
            }
            for k in &probes {
                let ev = PairEvaluator::with_k_capacity(dim, n, n, trunc, k.norm_sq())
                    .expect("evaluator");
                let (kk_gen, gg_gen) = ev.eval(k).expect("general path");
                let (kk_diag, gg_diag) = diagonal_sums(dim, n, &trunc, k);
                let (ek, eg) = (rel_err(kk_gen, kk_diag), rel_err(gg_gen, gg_diag));
                assert!(
                    ek <= 1e-14 && eg <= 1e-14,
                    "d = {dim}, n = {n}, k = {k:?}: deviations K {ek:.2e}, G {eg:.2e}"
                );
                worst = worst.max(ek).max(eg);
                count += 1;
            }
            // The tabulated constants equal the diagonal forms assembled at
            // the recorded argmax points.
            let (kk_at, _) = diagonal_sums(dim, n, &trunc, &entry.argmax_k);
            let (_, gg_at) = diagonal_sums(dim, n, &trunc, &entry.argmax_k_g);
            let k_n = prefactor * (trunc.tail_margin * kk_at).sqrt();
            let g_n = prefactor * (trunc.tail_margin * gg_at).sqrt();
            let (ek, eg) = (rel_err(k_n, entry.k_pn), rel_err(g_n, entry.g_pn));
            assert!(
                ek <= 1e-14 && eg <= 1e-14,
                "d = {dim}, n = {n}: table deviations K {ek:.2e}, G {eg:.2e}"
            );
            worst = worst.max(ek).max(eg);
        }
    }
    format!("{count} probe points and 4 table rows, max rel deviation {worst:.1e}")
}

// --- criterion 7 ---------------------------------------------------------

/// Full pipeline with validation: a Galerkin approximant at M = 8 certified
/// against a finer M = 16 reference; the measured distance must stay below
/// the certified bound at every grid point for both orders.
fn c07_galerkin_end_to_end(sh: &Shared) -> String {
    let t0 = Instant::now();
    // Single-scale vortex plus a small tail outside the approximant's
    // resolution, so the certified bound (rather than reference noise)
    // dominates the comparison from t = 0 on.
    let vortex = taylor_green(0.8);
    let mut rng = ChaCha12Rng::seed_from_u64(707);
    let tail_raw = SpectralField::random_band(3, 9.0, 12.0, &mut rng).expect("tail band");
    let tail = tail_raw.scaled(1e-4 / tail_raw.norm(3.0));
    let u0 = vortex.add(&tail).expect("datum");

    let out = tempfile::tempdir().expect("out dir");
    let cfg = parse_config(json!({
        "dim": 3, "nu": 0.5, "n": 3.0, "orders": [4.0],
        "datum": { "kind": "explicit", "field": serde_json::to_value(&u0).unwrap() },
        "approximant": { "kind": "galerkin", "M": 8, "T_a": 0.2 },
        "constants": { "cache_path": sh.cache.path() },
        "T_max": 0.2,
        "validation": { "ref_M": 16, "grid_intervals": 20 },
        "out_dir": out.path(),
    }));
    let outcome = run_certification(&cfg, out.path(), true).expect("certification");
    assert!(!outcome.collapsed, "approximant integration collapsed");
    let cert = outcome.report.certification.as_ref().expect("certification block");
    assert!(!cert.blew_up, "bound blew up before the horizon");
    assert!(cert.t_c.0 >= 0.2 - 1e-12, "certified only to {}", cert.t_c.0);
    let val = outcome.report.validation.as_ref().expect("validation block");
    assert_eq!(val.grid_points, 21, "grid size");
    assert_eq!(val.compared_points, 21, "not compared on the full grid");
    assert!(val.pass, "validation reported failure");
    let mut detail = Vec::new();
    for ov in &val.per_order {
        assert!(
            ov.max_ratio <= 1.0,
            "order {}: distance/bound ratio {} at t = {}",
            ov.order,
            ov.max_ratio,
            ov.at_t
        );
        detail.push(format!("q={} max ratio {:.3} at t={:.2}", ov.order, ov.max_ratio, ov.at_t));
    }
    // Stage split from the timing sidecar, to keep the runtime accountable.
    let timings: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(out.path().join("timings.json")).expect("timings.json"),
    )
    .expect("timings parse");
    for s in timings["stages"].as_array().expect("stages") {
        let secs = s["seconds"].as_f64().unwrap_or(0.0);
        if secs >= 1.0 {
            detail.push(format!("{} {:.0}s", s["stage"].as_str().unwrap_or("?"), secs));
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    assert!(dt < 600.0, "runtime {dt:.0} s exceeds the 10 min budget");
    detail.join(", ")
}

// --- criterion 8 ---------------------------------------------------------

/// The inviscid Taylor recursion makes the residual's coefficients of
/// t^0..t^{N-1} vanish; pushed through the pipeline, its tautological
/// estimators must yield finite bound curves on a short horizon.
fn c08_taylor_residual(sh: &Shared) -> String {
    let u0 = taylor_green(0.3);
    let mut worst_coeff = 0.0f64;
    for order in [1usize, 2, 3] {
        let taylor = taylor_coefficients(&u0, &Forcing::Zero, order).expect("coefficients");
        let res =
            taylor_residual_coefficients(&taylor, &Forcing::Zero, order - 1).expect("residual");
        for (j, r) in res.iter().enumerate() {
            let nrm = r.norm(0.0);
            assert!(nrm <= 1e-12, "N = {order}: t^{j} residual coefficient norm {nrm:.2e}");
            worst_coeff = worst_coeff.max(nrm);
        }
    }

    let mut finals = Vec::new();
    for order in [1usize, 2, 3] {
        let out = tempfile::tempdir().expect("out dir");
        let cfg = parse_config(json!({
            "dim": 3, "nu": 0.0, "n": 3.0, "orders": [4.0],
            "datum": { "kind": "taylor_green", "amplitude": 0.05 },
            "approximant": { "kind": "taylor", "N": order, "T_a": 0.1, "samples": 41 },
            "constants": { "cache_path": sh.cache.path() },
            "T_max": 0.1,
            "out_dir": out.path(),
        }));
        let outcome = run_certification(&cfg, out.path(), false).expect("certification");
        let cert = outcome.report.certification.as_ref().expect("certification block");
        let r3 = cert.final_values["3"];
        let r4 = cert.final_values["4"];
        assert!(r3.is_finite() && r4.is_finite(), "non-finite final bounds");
        let (_, rows) = read_csv(&out.path().join("bounds.csv"));
        for row in &rows {
            assert!(row.iter().all(|x| x.is_finite()), "non-finite bound at t = {}", row[0]);
            assert!(row[1] < 1e6, "R_3({}) = {} reached the 1e6 guard", row[0], row[1]);
        }
        finals.push(format!("N={order} R_3(T)={r3:.1e}"));
    }
    format!("residual coefficients <= {worst_coeff:.1e}; {}", finals.join(", "))
}

// --- criterion 9 ---------------------------------------------------------

/// A single conjugate pair with coefficient orthogonal to its wave vector
/// kills the nonlinearity: the Galerkin flow is pure viscous decay, the
/// residual vanishes, and the certified bound stays at the roundoff level
/// with a zero datum-error channel.
fn c09_single_mode(sh: &Shared) -> String {
    let a = 0.1;
    let k = WaveVector::new(vec![1, 0, 0]);
    let c = vec![
        Complex64::new(0.0, 0.0),
        Complex64::new(a, 0.0),
        Complex64::new(0.0, a),
    ];
    let u0 = SpectralField::from_modes(3, [(k, c)]).expect("datum");
    let nu = 1.0;
    let horizon = 0.5;
    let spec = ProblemSpec::new(3, nu, 3.0, vec![], u0.clone(), Forcing::Zero, horizon)
        .expect("problem");
    let opts = GalerkinOptions {
        rel_tol: 1e-12,
        abs_tol: 1e-14,
        ..GalerkinOptions::default()
    };
    let trace = galerkin_evolve(&spec, 2, horizon, &opts).expect("galerkin");
    assert!(!trace.collapsed, "integration collapsed");

    let mut worst_decay = 0.0f64;
    for (i, &t) in trace.times.iter().enumerate() {
        // |k|^2 = 1: the exact solution is e^{-nu t} u0.
        let exact = u0.scaled((-nu * t).exp());
        let e = trace.fields[i].sub(&exact).expect("diff").norm(3.0);
        assert!(e <= 1e-9, "decay error {e:.2e} at t = {t}");
        worst_decay = worst_decay.max(e);
    }

    let est = tautological_estimators(&trace, &spec, &[]).expect("estimators");
    let mut worst_eps = 0.0f64;
    for q in [3.0, 4.0] {
        match &est.entry(q).expect("entry").defect {
            Sampler::Constant(v) => worst_eps = worst_eps.max(*v),
            Sampler::Linear { values, .. } => {
                for &v in values {
                    worst_eps = worst_eps.max(v);
                }
            }
        }
    }
    assert!(worst_eps <= 1e-9, "residual norm {worst_eps:.2e}");
    let delta = est.entry(3.0).expect("entry").initial_distance;
    assert_eq!(delta, 0.0, "resolved datum must have zero initial distance");

    let diag = sh.d3.diagonal(3.0).expect("diagonal");
    let rn = solve_riccati_control(&est, nu, diag.k_pn, diag.g_pn, horizon, &GridPolicy::default())
        .expect("riccati");
    let max_rn = rn.values.iter().cloned().fold(0.0f64, f64::max);
    assert!(max_rn <= 1e-8, "R_3 reached {max_rn:.2e}");
    format!(
        "decay err {worst_decay:.1e}, residual {worst_eps:.1e}, delta = 0, max R_3 {max_rn:.1e}"
    )
}

// --- criterion 10 --------------------------------------------------------

/// The installed binary, run twice with the same seeded config (and once
/// more with a different thread count), must write byte-identical
/// report.json and bounds.csv.
fn c10_determinism(_sh: &Shared) -> String {
    let dir = tempfile::tempdir().expect("work dir");
    let cfg_path = dir.path().join("config.json");
    let cfg = json!({
        "dim": 3, "nu": 1.0, "n": 3.0, "orders": [4.0],
        "datum": { "kind": "random_band", "lo": 1.0, "hi": 3.0, "amplitude": 0.7 },
        "approximant": { "kind": "galerkin", "M": 4, "T_a": 0.1 },
        "constants": { "H": 8, "Kmax": 4, "tail_margin": 1.1 },
        "T_max": 0.1, "seed": 12345,
        "out_dir": dir.path().join("out_default"),
    });
    std::fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).expect("write config");

    let bin = env!("CARGO_BIN_EXE_nscert");
    let mut outputs: Vec<(Vec<u8>, Vec<u8>)> = Vec::new();
    for (name, extra) in [("a", &[][..]), ("b", &[]), ("c", &["--threads", "2"])] {
        let out = dir.path().join(format!("out_{name}"));
        let run = Command::new(bin)
            .args(["certify", "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out)
            .args(extra)
            .output()
            .expect("spawn binary");
        assert!(
            run.status.success(),
            "run {name} failed: {}",
            String::from_utf8_lossy(&run.stderr)
        );
        let report = std::fs::read(out.join("report.json")).expect("report.json");
        let bounds = std::fs::read(out.join("bounds.csv")).expect("bounds.csv");
        outputs.push((report, bounds));
    }
    assert_eq!(outputs[0], outputs[1], "repeated runs differ");
    assert_eq!(outputs[0], outputs[2], "thread count changed the output");
    format!(
        "3 runs identical (report.json {} B, bounds.csv {} B)",
        outputs[0].0.len(),
        outputs[0].1.len()
    )
}
