//! Dense cube-truncated spectral fields and the advection convolution.
//!
//! Fields restricted to the cube |k|_infty <= radius are stored as a flat
//! complex array over all lattice points of the cube (component-minor).  This
//! is the working representation for the Galerkin integrator and for the
//! bilinear term
//!
//! ```text
//!     mode k of (v . grad w) = (2 pi)^{-d/2} sum_{h+m=k} i (v_h . m) w_m,
//! ```
//!
//! whose cost is quadratic in the cube volume.  Two structural symmetries
//! keep both cost and rounding under control:
//!
//! * only lexicographically positive output modes are accumulated (their
//!   index set is a disjoint union of d axis-aligned boxes, so the inner
//!   loops stay contiguous); negative modes are filled in as conjugates,
//!   which enforces the reality condition exactly;
//! * per output mode the sources h are visited in one fixed lexicographic
//!   order, so results are reproducible bit for bit.

use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::field::{leray_mode, FieldError, SpectralField, WaveVector};

/// Dense field on the cube |k|_infty <= radius.  `data[cell * dim + c]` is
/// component c at the cell's lattice point; cells are ordered
/// lexicographically in k, i.e. last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseField {
    dim: usize,
    radius: i32,
    side: usize,
    /// Cell strides (in cells, not scalars) per axis; last axis has stride 1.
    strides: Vec<usize>,
    data: Vec<Complex64>,
}

impl DenseField {
    pub fn zeros(dim: usize, radius: i32) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        assert!(radius >= 0, "radius must be nonnegative");
        let side = 2 * radius as usize + 1;
        let mut strides = vec![1usize; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * side;
        }
        let cells = side.pow(dim as u32);
        DenseField {
            dim,
            radius,
            side,
            strides,
            data: vec![Complex64::new(0.0, 0.0); cells * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> i32 {
        self.radius
    }

    fn cell_of(&self, k: &[i32]) -> usize {
        let mut cell = 0usize;
        for (a, &c) in k.iter().enumerate() {
            debug_assert!(c.abs() <= self.radius);
            cell += (c + self.radius) as usize * self.strides[a];
        }
        cell
    }

    /// Populates the cube from a sparse field, discarding modes outside it.
    pub fn from_spectral(f: &SpectralField, radius: i32) -> Self {
        let mut out = DenseField::zeros(f.dim(), radius);
        for (k, c) in f.modes() {
            if k.infty_norm() > radius {
                continue;
            }
            let cell = out.cell_of(k.components());
            for (i, z) in c.iter().enumerate() {
                out.data[cell * out.dim + i] = *z;
            }
            let neg: Vec<i32> = k.components().iter().map(|&x| -x).collect();
            let cell = out.cell_of(&neg);
            for (i, z) in c.iter().enumerate() {
                out.data[cell * out.dim + i] = z.conj();
            }
        }
        out
    }

    /// Extracts the nonzero modes as a sparse field (canonical halves only).
    pub fn to_spectral(&self) -> SpectralField {
        let mut coeffs = BTreeMap::new();
        let dim = self.dim;
        for (k, cell) in self.canonical_cells() {
            let c = &self.data[cell * dim..cell * dim + dim];
            if c.iter().any(|z| z.norm_sqr() != 0.0) {
                coeffs.insert(WaveVector::new(k), c.to_vec());
            }
        }
        SpectralField::from_canonical(dim, coeffs)
    }

    /// self += a * other (cube shapes must agree).
    pub fn axpy(&mut self, a: f64, other: &DenseField) {
        assert_eq!(self.data.len(), other.data.len());
        for (x, y) in self.data.iter_mut().zip(&other.data) {
            *x += a * y;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for x in self.data.iter_mut() {
            *x *= a;
        }
    }

    pub(crate) fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Lexicographically positive cells, as (lattice point, cell index).
    fn canonical_cells(&self) -> Vec<(Vec<i32>, usize)> {
        let mut out = Vec::new();
        for b in canonical_boxes(self.dim, self.radius) {
            let mut k = b.lo.clone();
            loop {
                out.push((k.clone(), self.cell_of(&k)));
                if !b.advance(&mut k) {
                    break;
                }
            }
        }
        out
    }

    /// In-place P = -Leray(.) on every nonzero cell; the zero mode is
    /// cleared.  Applied identically on both halves of each conjugate pair
    /// (the projection matrix is real, so conjugate symmetry is preserved
    /// bit for bit).
    pub fn project_negate(&mut self) {
        let dim = self.dim;
        let radius = self.radius;
        let mut k = vec![-radius; dim];
        let mut cell = 0usize;
        loop {
            let c = &mut self.data[cell * dim..cell * dim + dim];
            if k.iter().all(|&x| x == 0) {
                for z in c.iter_mut() {
                    *z = Complex64::new(0.0, 0.0);
                }
            } else if c.iter().any(|z| z.norm_sqr() != 0.0) {
                let nsq: i64 = k.iter().map(|&x| (x as i64) * (x as i64)).sum();
                let mut kc = Complex64::new(0.0, 0.0);
                for (i, z) in c.iter().enumerate() {
                    kc += *z * (k[i] as f64);
                }
                let factor = kc / (nsq as f64);
                for (i, z) in c.iter_mut().enumerate() {
                    *z = -(*z - factor * (k[i] as f64));
                }
            }
            cell += 1;
            let mut axis = dim;
            let mut done = true;
            while axis > 0 {
                axis -= 1;
                if k[axis] < radius {
                    k[axis] += 1;
                    for x in k.iter_mut().skip(axis + 1) {
                        *x = -radius;
                    }
                    done = false;
                    break;
                }
            }
            if done {
                break;
            }
        }
    }
}

/// Axis-aligned box of lattice points, inclusive bounds.
struct LatticeBox {
    lo: Vec<i32>,
    hi: Vec<i32>,
}

impl LatticeBox {
    /// Advances k in lexicographic order within the box; false at the end.
    fn advance(&self, k: &mut [i32]) -> bool {
        let mut axis = k.len();
        while axis > 0 {
            axis -= 1;
            if k[axis] < self.hi[axis] {
                k[axis] += 1;
                for a in axis + 1..k.len() {
                    k[a] = self.lo[a];
                }
                return true;
            }
        }
        false
    }
}

/// Partition of the lexicographically positive cube modes into d boxes:
/// box j fixes axes < j to 0, axis j to [1, radius], later axes free.
fn canonical_boxes(dim: usize, radius: i32) -> Vec<LatticeBox> {
    let mut boxes = Vec::new();
    if radius == 0 {
        return boxes;
    }
    for j in 0..dim {
        let mut lo = vec![0i32; dim];
        let mut hi = vec![0i32; dim];
        lo[j] = 1;
        hi[j] = radius;
        for a in j + 1..dim {
            lo[a] = -radius;
            hi[a] = radius;
        }
        boxes.push(LatticeBox { lo, hi });
    }
    boxes
}

/// The advection term (v . grad w) truncated to |k|_infty <= out_radius,
/// including the (2 pi)^{-d/2} convolution prefactor.  The mean mode of the
/// output is dropped.
///
/// Exact (no aliasing) whenever out_radius >= v.radius + w.radius; smaller
/// values compute the plain spectral truncation of the product, which is
/// what a Galerkin right-hand side needs.
pub fn advect(v: &DenseField, w: &DenseField, out_radius: i32) -> DenseField {
    assert_eq!(v.dim, w.dim, "advect: dimension mismatch");
    let dim = v.dim;
    let mut out = DenseField::zeros(dim, out_radius);

    // Sources: nonzero cells of v in lexicographic order.
    let mut sources: Vec<(Vec<i32>, Vec<Complex64>)> = Vec::new();
    {
        let mut h = vec![-v.radius; dim];
        let mut cell = 0usize;
        loop {
            let c = &v.data[cell * dim..cell * dim + dim];
            if c.iter().any(|z| z.norm_sqr() != 0.0) {
                sources.push((h.clone(), c.to_vec()));
            }
            cell += 1;
            let mut axis = dim;
            let mut done = true;
            while axis > 0 {
                axis -= 1;
                if h[axis] < v.radius {
                    h[axis] += 1;
                    for x in h.iter_mut().skip(axis + 1) {
                        *x = -v.radius;
                    }
                    done = false;
                    break;
                }
            }
            if done {
                break;
            }
        }
    }

    for b in canonical_boxes(dim, out_radius) {
        for (h, vh) in &sources {
            accumulate_box(&mut out, w, &b, h, vh);
        }
    }

    // Mirror half: out(-k) = conj(out(k)), and apply the prefactor.
    let scale = (2.0 * std::f64::consts::PI).powf(-(dim as f64) / 2.0);
    for (k, cell) in out.canonical_cells() {
        let neg: Vec<i32> = k.iter().map(|&x| -x).collect();
        let ncell = out.cell_of(&neg);
        for c in 0..dim {
            let z = out.data[cell * dim + c] * scale;
            out.data[cell * dim + c] = z;
            out.data[ncell * dim + c] = z.conj();
        }
    }
    out
}

/// Accumulates sum_m i (v_h . m) w_m into out(h + m) for all m with
/// |m|_infty <= w.radius and h + m inside `b`.
fn accumulate_box(
    out: &mut DenseField,
    w: &DenseField,
    b: &LatticeBox,
    h: &[i32],
    vh: &[Complex64],
) {
    let dim = out.dim;
    // Window of m per axis.
    let mut lo = vec![0i32; dim];
    let mut hi = vec![0i32; dim];
    for a in 0..dim {
        lo[a] = (-w.radius).max(b.lo[a] - h[a]);
        hi[a] = w.radius.min(b.hi[a] - h[a]);
        if lo[a] > hi[a] {
            return;
        }
    }
    let run = (hi[dim - 1] - lo[dim - 1] + 1) as usize;
    let step_re = vh[dim - 1].re;
    let step_im = vh[dim - 1].im;
    let m_start = lo[dim - 1] as f64;

    // Outer odometer over axes 0..dim-1.
    let mut m = lo.clone();
    loop {
        let mut w_cell = (m[dim - 1] + w.radius) as usize;
        let mut o_cell = (h[dim - 1] + m[dim - 1] + out.radius) as usize;
        // Dot over the outer axes only; the inner loop adds step * m_last
        // afresh per cell, so the value at a given mode never depends on
        // where the window was clamped.
        let mut dot_re = 0.0;
        let mut dot_im = 0.0;
        for a in 0..dim - 1 {
            w_cell += (m[a] + w.radius) as usize * w.strides[a];
            o_cell += (h[a] + m[a] + out.radius) as usize * out.strides[a];
            dot_re += vh[a].re * m[a] as f64;
            dot_im += vh[a].im * m[a] as f64;
        }
        let w_run = &w.data[w_cell * dim..(w_cell + run) * dim];
        let o_run = &mut out.data[o_cell * dim..(o_cell + run) * dim];
        match dim {
            2 => inner_run::<2>(o_run, w_run, dot_re, dot_im, step_re, step_im, m_start),
            3 => inner_run::<3>(o_run, w_run, dot_re, dot_im, step_re, step_im, m_start),
            _ => inner_run_dyn(dim, o_run, w_run, dot_re, dot_im, step_re, step_im, m_start),
        }

        // Advance the outer axes only.
        let mut axis = dim - 1;
        let mut done = true;
        while axis > 0 {
            axis -= 1;
            if m[axis] < hi[axis] {
                m[axis] += 1;
                for a in axis + 1..dim - 1 {
                    m[a] = lo[a];
                }
                done = false;
                break;
            }
        }
        if done {
            break;
        }
    }
}

/// Contiguous run along the last axis: out_m += i * dot(m) * w_m, with
/// dot(m) = dot_outer + v_h[last] * m_last.  The last-axis index advances by
/// exact +1.0 increments, so dot(m) is a fixed function of the mode alone.
/// i * (a + ib) = (-b + ia).
#[inline]
fn inner_run<const D: usize>(
    out: &mut [Complex64],
    w: &[Complex64],
    dot_re: f64,
    dot_im: f64,
    step_re: f64,
    step_im: f64,
    mut mf: f64,
) {
    for (oc, wc) in out.chunks_exact_mut(D).zip(w.chunks_exact(D)) {
        let s_re = -(dot_im + step_im * mf);
        let s_im = dot_re + step_re * mf;
        for c in 0..D {
            let wr = wc[c].re;
            let wi = wc[c].im;
            oc[c].re += s_re * wr - s_im * wi;
            oc[c].im += s_re * wi + s_im * wr;
        }
        mf += 1.0;
    }
}

#[inline]
fn inner_run_dyn(
    dim: usize,
    out: &mut [Complex64],
    w: &[Complex64],
    dot_re: f64,
    dot_im: f64,
    step_re: f64,
    step_im: f64,
    mut mf: f64,
) {
    for (oc, wc) in out.chunks_exact_mut(dim).zip(w.chunks_exact(dim)) {
        let s_re = -(dot_im + step_im * mf);
        let s_im = dot_re + step_re * mf;
        for c in 0..dim {
            let wr = wc[c].re;
            let wi = wc[c].im;
            oc[c].re += s_re * wr - s_im * wi;
            oc[c].im += s_re * wi + s_im * wr;
        }
        mf += 1.0;
    }
}

/// Leray-projected advection truncated to a cube:
/// the modes |k|_infty <= out_radius of P(v, w) = -Leray(v . grad w).
pub fn bilinear_dense(v: &DenseField, w: &DenseField, out_radius: i32) -> DenseField {
    let mut conv = advect(v, w, out_radius);
    conv.project_negate();
    conv
}

/// The bilinear map P(v, w) = -Leray(v . grad w) on sparse fields, exact:
/// the output cube covers the Minkowski sum of the two mode sets.
pub fn bilinear(v: &SpectralField, w: &SpectralField) -> Result<SpectralField, FieldError> {
    if v.dim() != w.dim() {
        return Err(FieldError::DimensionMismatch {
            expected: v.dim(),
            found: w.dim(),
        });
    }
    if v.is_zero() || w.is_zero() {
        return Ok(SpectralField::zero(v.dim()));
    }
    let rv = v.infty_radius();
    let rw = w.infty_radius();
    let dv = DenseField::from_spectral(v, rv);
    let dw = DenseField::from_spectral(w, rw);
    let conv = advect(&dv, &dw, rv + rw);
    let dim = v.dim();
    let mut coeffs = BTreeMap::new();
    for (k, cell) in conv.canonical_cells() {
        let c = &conv.data[cell * dim..cell * dim + dim];
        if c.iter().any(|z| z.norm_sqr() != 0.0) {
            let kv = WaveVector::new(k);
            let p: Vec<Complex64> = leray_mode(&kv, c).iter().map(|z| -z).collect();
            if p.iter().any(|z| z.norm_sqr() != 0.0) {
                coeffs.insert(kv, p);
            }
        }
    }
    Ok(SpectralField::from_canonical(dim, coeffs))
}
