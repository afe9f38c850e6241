//! Constants for the tame product and Kato-type inequalities.
//!
//! The certification machinery needs numbers K_pn and G_pn such that, for
//! divergence-free mean-zero fields and orders p >= n above the critical
//! index,
//!
//! ```text
//!     ||P(v,w)||_p        <= 1/2 K_pn (||v||_p ||w||_{n+1} + ||v||_n ||w||_{p+1}),
//!     |<P(v,w)|w>_p|      <= 1/2 G_pn (||v||_p ||w||_n + ||v||_n ||w||_p) ||w||_p.
//! ```
//!
//! Both arise as (2 pi)^{-d/2} sqrt(sup_k F(k)) for lattice functionals F
//! built from the coupling coefficient C_{h,k} = |h /\ k| / |h|:
//!
//! ```text
//!   F_K(k) = 4 |k|^{2p} sum_{h != 0, k} C_{h,k}^2 / (|h|^p |k-h|^{n+1} + |h|^n |k-h|^{p+1})^2
//!   F_G(k) = 4 sum_{h != 0, k} (|k|^p - |k-h|^p)^2 C_{h,k}^2 / (|h|^p |k-h|^n + |h|^n |k-h|^p)^2
//! ```
//!
//! The implementation truncates the h-sum to the ball |h| <= H and the sup
//! to |k| <= Kmax, then multiplies the sup by a tail margin >= 1 before the
//! square root.  Truncated sums are lower bounds (all summands are >= 0),
//! so the margin is the knob that buys back the discarded tail; the
//! `plateau` diagnostic records whether the sup was attained well inside
//! the search ball.  Computed values are therefore empirical upper
//! estimates, not certified enclosures, and are reported as such.
//!
//! Everything is deterministic: summation order over h is lexicographic,
//! the sup scan runs over symmetry-class representatives in a fixed order,
//! and ties keep the earliest representative.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dense::bilinear;
use crate::field::{FieldError, SpectralField, WaveVector};

#[derive(Debug, Error)]
pub enum TameError {
    #[error("lattice truncation invalid: {0}")]
    Truncation(String),
    #[error("orders p = {p}, n = {n} invalid in dimension {d}: need p >= n > d/2 + 1")]
    Orders { p: f64, n: f64, d: usize },
    #[error("wave vector {0:?} lies outside the sup search ball")]
    OutsideSupBall(WaveVector),
    #[error("coupling coefficient requires h != 0")]
    ZeroSource,
    #[error("lattice sum produced a non-finite value at {0:?}")]
    NonFinite(WaveVector),
    #[error("no cached table for ({p}, {n}) at {path}")]
    CacheMiss { p: f64, n: f64, path: PathBuf },
    #[error("cached table at {path} does not match the requested key")]
    CacheKeyMismatch { path: PathBuf },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Truncation radii for the lattice sums.
///
/// `sum_radius` (H) bounds the summation ball, `sup_radius` (Kmax) the sup
/// search ball; H >= 2 Kmax keeps the sum truncation error subordinate to
/// the sup truncation.  `tail_margin` >= 1 multiplies the sup before the
/// square root.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeTruncation {
    #[serde(rename = "H")]
    pub sum_radius: u32,
    #[serde(rename = "Kmax")]
    pub sup_radius: u32,
    pub tail_margin: f64,
}

impl Default for LatticeTruncation {
    fn default() -> Self {
        LatticeTruncation {
            sum_radius: 40,
            sup_radius: 20,
            tail_margin: 1.1,
        }
    }
}

impl LatticeTruncation {
    pub fn validate(&self) -> Result<(), TameError> {
        if self.sup_radius < 1 {
            return Err(TameError::Truncation("sup radius must be >= 1".into()));
        }
        if self.sum_radius < 2 * self.sup_radius {
            return Err(TameError::Truncation(format!(
                "sum radius {} must be at least twice the sup radius {}",
                self.sum_radius, self.sup_radius
            )));
        }
        if self.sum_radius > 30_000 {
            return Err(TameError::Truncation(
                "sum radius above 30000 overflows the integer lattice arithmetic".into(),
            ));
        }
        if !(self.tail_margin >= 1.0) || !self.tail_margin.is_finite() {
            return Err(TameError::Truncation("tail margin must be >= 1".into()));
        }
        Ok(())
    }
}

/// C_{h,k} = |h /\ k| / |h| via the exact integer Gram identity
/// |h /\ k|^2 = |h|^2 |k|^2 - (h . k)^2.
pub fn coupling_coefficient(h: &WaveVector, k: &WaveVector) -> Result<f64, TameError> {
    if h.is_zero() {
        return Err(TameError::ZeroSource);
    }
    let h2 = h.norm_sq();
    let k2 = k.norm_sq();
    let hk = h.dot(k);
    let gram = h2 * k2 - hk * hk;
    debug_assert!(gram >= 0);
    Ok((gram.max(0) as f64 / h2 as f64).sqrt())
}

/// Evaluates both lattice functionals for one (p, n) pair, sharing the
/// power tables and the summation loop so that diagonal (p = n) values and
/// off-diagonal values come from one code path.
pub struct PairEvaluator {
    dim: usize,
    p: f64,
    n: f64,
    trunc: LatticeTruncation,
    /// r^2 -> r^p, r^n, r^{n+1}, r^{p+1}; indexed by the integer |.|^2.
    t_p: Vec<f64>,
    t_n: Vec<f64>,
    t_n1: Vec<f64>,
    t_p1: Vec<f64>,
    max_k_sq: i64,
}

/// Enforces p >= n > d/2 + 1, the regime in which the truncated sups
/// actually bound the full lattice functionals and products of Sobolev
/// fields stay in the algebra.  Required wherever certification constants
/// are assembled.
pub fn validate_orders(dim: usize, p: f64, n: f64) -> Result<(), TameError> {
    let ok = p.is_finite() && n.is_finite() && p >= n && n > dim as f64 / 2.0 + 1.0;
    if ok {
        Ok(())
    } else {
        Err(TameError::Orders { p, n, d: dim })
    }
}

/// Well-formedness only: the truncated sums are computable for any finite
/// p >= n >= 0, which the raw per-mode evaluator permits (useful for
/// diagnostics and cross-checks outside the certified regime).
fn validate_pair_orders(dim: usize, p: f64, n: f64) -> Result<(), TameError> {
    let ok = p.is_finite() && n.is_finite() && p >= n && n >= 0.0;
    if ok {
        Ok(())
    } else {
        Err(TameError::Orders { p, n, d: dim })
    }
}

impl PairEvaluator {
    pub fn new(dim: usize, p: f64, n: f64, trunc: LatticeTruncation) -> Result<Self, TameError> {
        Self::with_k_capacity(dim, p, n, trunc, trunc.sup_radius as i64 * trunc.sup_radius as i64)
    }

    /// As `new`, but sized to admit evaluation at any |k|^2 <= max_k_sq.
    pub fn with_k_capacity(
        dim: usize,
        p: f64,
        n: f64,
        trunc: LatticeTruncation,
        max_k_sq: i64,
    ) -> Result<Self, TameError> {
        trunc.validate()?;
        validate_pair_orders(dim, p, n)?;
        let h = trunc.sum_radius as i64;
        let kmax = (max_k_sq as f64).sqrt().ceil() as i64;
        let r2_cap = ((h + kmax) * (h + kmax) + 1) as usize;
        let table = |e: f64| -> Vec<f64> {
            (0..r2_cap).map(|r2| (r2 as f64).powf(e / 2.0)).collect()
        };
        Ok(PairEvaluator {
            dim,
            p,
            n,
            trunc,
            t_p: table(p),
            t_n: table(n),
            t_n1: table(n + 1.0),
            t_p1: table(p + 1.0),
            max_k_sq,
        })
    }

    pub fn orders(&self) -> (f64, f64) {
        (self.p, self.n)
    }

    /// (F_K(k), F_G(k)) with the h-sum truncated to |h| <= H.
    ///
    /// Monotone nondecreasing in H at fixed k: every summand is >= 0.
    pub fn eval(&self, k: &WaveVector) -> Result<(f64, f64), TameError> {
        if k.dim() != self.dim {
            return Err(TameError::Orders {
                p: self.p,
                n: self.n,
                d: k.dim(),
            });
        }
        let k2 = k.norm_sq();
        if k2 == 0 || k2 > self.max_k_sq {
            return Err(TameError::OutsideSupBall(k.clone()));
        }
        let h_rad = self.trunc.sum_radius as i64;
        let h2_max = h_rad * h_rad;
        let pk = self.t_p[k2 as usize];
        let k2p = (k2 as f64).powf(self.p);

        let dim = self.dim;
        let kc = k.components();
        let mut kk_acc = 0.0_f64;
        let mut gg_acc = 0.0_f64;

        // Odometer over the outer axes; the last axis is the inner loop with
        // incremental |h|^2 and h.k updates.
        let hr = h_rad as i32;
        let mut outer = vec![-hr; dim.saturating_sub(1)];
        loop {
            let mut r2_pre: i64 = 0;
            let mut hk_pre: i64 = 0;
            for (a, &ha) in outer.iter().enumerate() {
                r2_pre += (ha as i64) * (ha as i64);
                hk_pre += (ha as i64) * (kc[a] as i64);
            }
            let k_last = kc[dim - 1] as i64;
            for h_last in -hr..=hr {
                let hl = h_last as i64;
                let r2h = r2_pre + hl * hl;
                if r2h == 0 || r2h > h2_max {
                    continue;
                }
                let hk = hk_pre + hl * k_last;
                let r2m = k2 - 2 * hk + r2h;
                if r2m == 0 {
                    continue; // h == k
                }
                let gram = r2h * k2 - hk * hk;
                if gram == 0 {
                    continue; // h parallel to k
                }
                let c2 = gram as f64 / r2h as f64;
                let (r2h, r2m) = (r2h as usize, r2m as usize);
                let dk = self.t_p[r2h] * self.t_n1[r2m] + self.t_n[r2h] * self.t_p1[r2m];
                kk_acc += c2 / (dk * dk);
                let dg = self.t_p[r2h] * self.t_n[r2m] + self.t_n[r2h] * self.t_p[r2m];
                let dif = pk - self.t_p[r2m];
                gg_acc += dif * dif * c2 / (dg * dg);
            }
            // Advance outer axes (none for d = 1).
            let mut axis = outer.len();
            let mut done = true;
            while axis > 0 {
                axis -= 1;
                if outer[axis] < hr {
                    outer[axis] += 1;
                    for a in outer.iter_mut().skip(axis + 1) {
                        *a = -hr;
                    }
                    done = false;
                    break;
                }
            }
            if done {
                break;
            }
        }
        let kk = 4.0 * k2p * kk_acc;
        let gg = 4.0 * gg_acc;
        if !kk.is_finite() || !gg.is_finite() {
            return Err(TameError::NonFinite(k.clone()));
        }
        Ok((kk, gg))
    }
}

/// F_K(k) alone; see [`PairEvaluator::eval`].
pub fn kk_pn_at_k(
    k: &WaveVector,
    p: f64,
    n: f64,
    trunc: LatticeTruncation,
) -> Result<f64, TameError> {
    let ev = PairEvaluator::with_k_capacity(k.dim(), p, n, trunc, k.norm_sq().max(1))?;
    Ok(ev.eval(k)?.0)
}

/// F_G(k) alone; see [`PairEvaluator::eval`].
pub fn gg_pn_at_k(
    k: &WaveVector,
    p: f64,
    n: f64,
    trunc: LatticeTruncation,
) -> Result<f64, TameError> {
    let ev = PairEvaluator::with_k_capacity(k.dim(), p, n, trunc, k.norm_sq().max(1))?;
    Ok(ev.eval(k)?.1)
}

/// One (p, n) row of a constant table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstantEntry {
    pub p: f64,
    pub n: f64,
    #[serde(rename = "K_pn")]
    pub k_pn: f64,
    #[serde(rename = "G_pn")]
    pub g_pn: f64,
    /// Where the sup of the product functional was attained.
    pub argmax_k: WaveVector,
    /// Where the sup of the Kato-type functional was attained.
    pub argmax_k_g: WaveVector,
    /// True when both sups were attained at |k| <= (2/3) Kmax, i.e. safely
    /// inside the search ball.
    pub plateau: bool,
}

/// Constants for a set of (p, n) pairs at one truncation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstantTable {
    pub dim: usize,
    pub trunc: LatticeTruncation,
    /// Sorted by (p, n).
    pub entries: Vec<ConstantEntry>,
}

impl ConstantTable {
    pub fn get(&self, p: f64, n: f64) -> Option<&ConstantEntry> {
        self.entries.iter().find(|e| e.p == p && e.n == n)
    }

    /// Diagonal constants (K_n, G_n) = (K_nn, G_nn).
    pub fn diagonal(&self, n: f64) -> Option<&ConstantEntry> {
        self.get(n, n)
    }
}

/// Representatives of the symmetry classes of the sup search ball: both
/// functionals are invariant under coordinate permutations and sign flips
/// (lattice automorphisms preserve |h|, |k - h| and |h /\ k|), so one sorted
/// nonnegative representative per class suffices.  Ordered by (|k|^2, lex).
fn sup_representatives(dim: usize, sup_radius: u32) -> Vec<WaveVector> {
    let r = sup_radius as i32;
    let r2 = (r as i64) * (r as i64);
    let mut reps = Vec::new();
    let mut k = vec![0i32; dim];
    collect_reps(&mut k, 0, r, r2, &mut reps);
    reps.sort_by(|a, b| {
        a.norm_sq()
            .cmp(&b.norm_sq())
            .then_with(|| a.components().cmp(b.components()))
    });
    reps
}

fn collect_reps(k: &mut Vec<i32>, axis: usize, bound: i32, r2: i64, out: &mut Vec<WaveVector>) {
    if axis == k.len() {
        let v = WaveVector::from_slice(k);
        if !v.is_zero() && v.norm_sq() <= r2 {
            out.push(v);
        }
        return;
    }
    for c in 0..=bound {
        k[axis] = c;
        collect_reps(k, axis + 1, c, r2, out);
    }
    k[axis] = 0;
}

struct SupScan {
    best: f64,
    /// Index into the representative list; ties keep the earliest.
    idx: usize,
}

/// Computes a constant table for the given (p, n) pairs.
///
/// Duplicate pairs are collapsed.  The sup scan parallelizes over
/// representatives; the reduction is a max with index tie-breaking, so the
/// result is independent of thread count.
pub fn compute_constants(
    dim: usize,
    pairs: &[(f64, f64)],
    trunc: LatticeTruncation,
) -> Result<ConstantTable, TameError> {
    trunc.validate()?;
    let mut wanted: Vec<(f64, f64)> = Vec::new();
    for &(p, n) in pairs {
        validate_orders(dim, p, n)?;
        if !wanted.contains(&(p, n)) {
            wanted.push((p, n));
        }
    }
    wanted.sort_by(|a, b| a.partial_cmp(b).expect("finite orders"));

    let reps = sup_representatives(dim, trunc.sup_radius);
    let prefactor = (2.0 * std::f64::consts::PI).powf(-(dim as f64) / 2.0);
    let plateau_r2 = {
        let r = 2.0 * trunc.sup_radius as f64 / 3.0;
        r * r
    };

    let mut entries = Vec::with_capacity(wanted.len());
    for &(p, n) in &wanted {
        let ev = PairEvaluator::new(dim, p, n, trunc)?;
        let values: Result<Vec<(f64, f64)>, TameError> =
            reps.par_iter().map(|k| ev.eval(k)).collect();
        let values = values?;
        let mut kk = SupScan { best: -1.0, idx: 0 };
        let mut gg = SupScan { best: -1.0, idx: 0 };
        for (i, &(vk, vg)) in values.iter().enumerate() {
            if vk > kk.best {
                kk = SupScan { best: vk, idx: i };
            }
            if vg > gg.best {
                gg = SupScan { best: vg, idx: i };
            }
        }
        let plateau = reps[kk.idx].norm_sq() as f64 <= plateau_r2
            && reps[gg.idx].norm_sq() as f64 <= plateau_r2;
        entries.push(ConstantEntry {
            p,
            n,
            k_pn: prefactor * (trunc.tail_margin * kk.best).sqrt(),
            g_pn: prefactor * (trunc.tail_margin * gg.best).sqrt(),
            argmax_k: reps[kk.idx].clone(),
            argmax_k_g: reps[gg.idx].clone(),
            plateau,
        });
    }
    Ok(ConstantTable {
        dim,
        trunc,
        entries,
    })
}

// --- disk cache ---------------------------------------------------------
//
// One JSON file per (d, p, n, truncation) key:
//     { "d": .., "p": .., "n": .., "H": .., "Kmax": .., "tail_margin": ..,
//       "K_pn": .., "G_pn": .., "argmax_k": [..], "argmax_k_g": [..],
//       "plateau": .. }

#[derive(Serialize, Deserialize)]
struct CacheRepr {
    d: usize,
    p: f64,
    n: f64,
    #[serde(rename = "H")]
    sum_radius: u32,
    #[serde(rename = "Kmax")]
    sup_radius: u32,
    tail_margin: f64,
    #[serde(rename = "K_pn")]
    k_pn: f64,
    #[serde(rename = "G_pn")]
    g_pn: f64,
    argmax_k: WaveVector,
    argmax_k_g: WaveVector,
    plateau: bool,
}

pub fn cache_file_name(dim: usize, p: f64, n: f64, trunc: &LatticeTruncation) -> String {
    format!(
        "tame_d{}_p{}_n{}_H{}_K{}_m{}.json",
        dim, p, n, trunc.sum_radius, trunc.sup_radius, trunc.tail_margin
    )
}

impl ConstantTable {
    /// Writes one cache file per entry; returns the paths.
    pub fn write_cache(&self, dir: &Path) -> Result<Vec<PathBuf>, TameError> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for e in &self.entries {
            let repr = CacheRepr {
                d: self.dim,
                p: e.p,
                n: e.n,
                sum_radius: self.trunc.sum_radius,
                sup_radius: self.trunc.sup_radius,
                tail_margin: self.trunc.tail_margin,
                k_pn: e.k_pn,
                g_pn: e.g_pn,
                argmax_k: e.argmax_k.clone(),
                argmax_k_g: e.argmax_k_g.clone(),
                plateau: e.plateau,
            };
            let path = dir.join(cache_file_name(self.dim, e.p, e.n, &self.trunc));
            let mut text = serde_json::to_string_pretty(&repr)?;
            text.push('\n');
            std::fs::write(&path, text)?;
            paths.push(path);
        }
        Ok(paths)
    }

    /// Loads every requested pair from the cache directory; any miss or key
    /// mismatch is an error (no silent recompute).
    pub fn load_cache(
        dir: &Path,
        dim: usize,
        pairs: &[(f64, f64)],
        trunc: LatticeTruncation,
    ) -> Result<Self, TameError> {
        trunc.validate()?;
        let mut wanted: Vec<(f64, f64)> = Vec::new();
        for &(p, n) in pairs {
            validate_orders(dim, p, n)?;
            if !wanted.contains(&(p, n)) {
                wanted.push((p, n));
            }
        }
        wanted.sort_by(|a, b| a.partial_cmp(b).expect("finite orders"));
        let mut entries = Vec::new();
        for &(p, n) in &wanted {
            let path = dir.join(cache_file_name(dim, p, n, &trunc));
            if !path.exists() {
                return Err(TameError::CacheMiss { p, n, path });
            }
            let repr: CacheRepr = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
            let key_ok = repr.d == dim
                && repr.p == p
                && repr.n == n
                && repr.sum_radius == trunc.sum_radius
                && repr.sup_radius == trunc.sup_radius
                && repr.tail_margin == trunc.tail_margin;
            if !key_ok {
                return Err(TameError::CacheKeyMismatch { path });
            }
            entries.push(ConstantEntry {
                p,
                n,
                k_pn: repr.k_pn,
                g_pn: repr.g_pn,
                argmax_k: repr.argmax_k,
                argmax_k_g: repr.argmax_k_g,
                plateau: repr.plateau,
            });
        }
        Ok(ConstantTable {
            dim,
            trunc,
            entries,
        })
    }

    /// Cache-first lookup: loads hits, computes and stores misses.
    pub fn load_or_compute(
        dir: Option<&Path>,
        dim: usize,
        pairs: &[(f64, f64)],
        trunc: LatticeTruncation,
    ) -> Result<Self, TameError> {
        let dir = match dir {
            Some(d) => d,
            None => return compute_constants(dim, pairs, trunc),
        };
        match Self::load_cache(dir, dim, pairs, trunc) {
            Ok(t) => Ok(t),
            Err(TameError::CacheMiss { .. }) => {
                let t = compute_constants(dim, pairs, trunc)?;
                t.write_cache(dir)?;
                Ok(t)
            }
            Err(e) => Err(e),
        }
    }
}

/// Observed-over-allowed ratios for both inequalities on a concrete pair of
/// fields: (product ratio, Kato ratio).  Values <= 1 mean the inequalities
/// hold for this pair; NaN when a denominator degenerates.
pub fn inequality_ratios(
    v: &SpectralField,
    w: &SpectralField,
    p: f64,
    n: f64,
    k_pn: f64,
    g_pn: f64,
) -> Result<(f64, f64), FieldError> {
    let pw = bilinear(v, w)?;
    let prod_lhs = pw.norm(p);
    let prod_rhs = 0.5 * k_pn * (v.norm(p) * w.norm(n + 1.0) + v.norm(n) * w.norm(p + 1.0));
    let kato_lhs = pw.inner(w, p)?.abs();
    let kato_rhs = 0.5 * g_pn * (v.norm(p) * w.norm(n) + v.norm(n) * w.norm(p)) * w.norm(p);
    Ok((prod_lhs / prod_rhs, kato_lhs / kato_rhs))
}
