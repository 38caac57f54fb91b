//! Matrix-free Lindblad right-hand side on split real/imaginary storage.
//!
//! Operators built from local spin and ladder terms are banded in the product
//! basis, so every product with the d×d density matrix is a set of shifted,
//! scaled column slices (O(bands·d²)) instead of an O(d³) matrix product.
//! Real and imaginary parts live in separate column-major arrays so that the
//! inner loops vectorize. On x86-64 the step is additionally compiled for
//! AVX2 and selected at run time; no reductions are reordered, so both paths
//! give bitwise identical results.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::units::PhysicalConstants;

const TILE: usize = 8;

/// Column-major d×d complex matrix with separate real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Split {
    pub d: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Split {
    pub fn zeros(d: usize) -> Self {
        Self { d, re: vec![0.0; d * d], im: vec![0.0; d * d] }
    }

    pub fn from_matrix(m: &DMatrix<C64>) -> Self {
        let d = m.nrows();
        Self { d, re: m.iter().map(|c| c.re).collect(), im: m.iter().map(|c| c.im).collect() }
    }

    pub fn to_matrix(&self) -> DMatrix<C64> {
        DMatrix::from_iterator(self.d, self.d, self.re.iter().zip(&self.im).map(|(&r, &i)| C64::new(r, i)))
    }

    pub fn trace(&self) -> C64 {
        (0..self.d).map(|i| C64::new(self.re[i * self.d + i], self.im[i * self.d + i])).sum()
    }

    /// `self = a + s·b`
    #[inline(always)]
    pub fn set_axpy(&mut self, a: &Split, s: f64, b: &Split) {
        for (o, (x, y)) in self.re.iter_mut().zip(a.re.iter().zip(&b.re)) {
            *o = x + s * y;
        }
        for (o, (x, y)) in self.im.iter_mut().zip(a.im.iter().zip(&b.im)) {
            *o = x + s * y;
        }
    }

    /// `self += s·b`
    #[inline(always)]
    pub fn axpy(&mut self, s: f64, b: &Split) {
        for (o, y) in self.re.iter_mut().zip(&b.re) {
            *o += s * y;
        }
        for (o, y) in self.im.iter_mut().zip(&b.im) {
            *o += s * y;
        }
    }

    /// Fills the strict upper triangle with the conjugate of the lower one.
    #[inline(always)]
    pub fn mirror_lower(&mut self) {
        let d = self.d;
        for jb in (0..d).step_by(TILE) {
            let je = (jb + TILE).min(d);
            for ib in (jb..d).step_by(TILE) {
                let ie = (ib + TILE).min(d);
                for j in jb..je {
                    for i in ib.max(j + 1)..ie {
                        self.re[i * d + j] = self.re[j * d + i];
                        self.im[i * d + j] = -self.im[j * d + i];
                    }
                }
            }
        }
        for i in 0..d {
            self.im[i * d + i] = 0.0;
        }
    }

    /// ρ ← (ρ + ρ†)/2.
    #[inline(always)]
    pub fn hermitize(&mut self) {
        let d = self.d;
        for jb in (0..d).step_by(TILE) {
            let je = (jb + TILE).min(d);
            for ib in (jb..d).step_by(TILE) {
                let ie = (ib + TILE).min(d);
                for j in jb..je {
                    for i in ib.max(j + 1)..ie {
                        let (lo, up) = (j * d + i, i * d + j);
                        let re = 0.5 * (self.re[lo] + self.re[up]);
                        let im = 0.5 * (self.im[lo] - self.im[up]);
                        self.re[lo] = re;
                        self.re[up] = re;
                        self.im[lo] = im;
                        self.im[up] = -im;
                    }
                }
            }
        }
        for i in 0..d {
            self.im[i * d + i] = 0.0;
        }
    }
}

/// Which parts of a band's coefficients are nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Real,
    Imag,
    Complex,
}

/// `d += c ⊙ x` on equal-length complex slices.
#[inline(always)]
fn band_acc(kind: Kind, cr: &[f64], ci: &[f64], xr: &[f64], xi: &[f64], dr: &mut [f64], di: &mut [f64]) {
    let n = dr.len();
    let (cr, ci, xr, xi, di) = (&cr[..n], &ci[..n], &xr[..n], &xi[..n], &mut di[..n]);
    match kind {
        Kind::Real => {
            for t in 0..n {
                dr[t] += cr[t] * xr[t];
                di[t] += cr[t] * xi[t];
            }
        }
        Kind::Imag => {
            for t in 0..n {
                dr[t] -= ci[t] * xi[t];
                di[t] += ci[t] * xr[t];
            }
        }
        Kind::Complex => {
            for t in 0..n {
                dr[t] += cr[t] * xr[t] - ci[t] * xi[t];
                di[t] += cr[t] * xi[t] + ci[t] * xr[t];
            }
        }
    }
}

/// `d += s · x` with a complex scalar `s`.
#[inline(always)]
fn scalar_acc(s: C64, xr: &[f64], xi: &[f64], dr: &mut [f64], di: &mut [f64]) {
    let n = dr.len();
    let (xr, xi, di) = (&xr[..n], &xi[..n], &mut di[..n]);
    if s.im == 0.0 {
        for t in 0..n {
            dr[t] += s.re * xr[t];
            di[t] += s.re * xi[t];
        }
    } else if s.re == 0.0 {
        for t in 0..n {
            dr[t] -= s.im * xi[t];
            di[t] += s.im * xr[t];
        }
    } else {
        for t in 0..n {
            dr[t] += s.re * xr[t] - s.im * xi[t];
            di[t] += s.re * xi[t] + s.im * xr[t];
        }
    }
}

/// `d += s · (c ⊙ x)` with a complex scalar `s`.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn scaled_band_acc(s: C64, kind: Kind, cr: &[f64], ci: &[f64], xr: &[f64], xi: &[f64], dr: &mut [f64], di: &mut [f64]) {
    let n = dr.len();
    let (cr, ci, xr, xi, di) = (&cr[..n], &ci[..n], &xr[..n], &xi[..n], &mut di[..n]);
    if kind == Kind::Real && s.im == 0.0 {
        for t in 0..n {
            let c = s.re * cr[t];
            dr[t] += c * xr[t];
            di[t] += c * xi[t];
        }
    } else {
        for t in 0..n {
            let pr = cr[t] * xr[t] - ci[t] * xi[t];
            let pi = cr[t] * xi[t] + ci[t] * xr[t];
            dr[t] += s.re * pr - s.im * pi;
            di[t] += s.re * pi + s.im * pr;
        }
    }
}

/// One diagonal of a matrix: `A[i, i + offset] = coeffs[i - start]`.
#[derive(Debug, Clone)]
pub(crate) struct Band {
    pub offset: isize,
    pub start: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    kind: Kind,
}

impl Band {
    fn new(offset: isize, start: usize, re: Vec<f64>, im: Vec<f64>) -> Self {
        let kind = if im.iter().all(|&x| x == 0.0) {
            Kind::Real
        } else if re.iter().all(|&x| x == 0.0) {
            Kind::Imag
        } else {
            Kind::Complex
        };
        Self { offset, start, re, im, kind }
    }

    fn end(&self) -> usize {
        self.start + self.re.len()
    }

    fn coeff(&self, row: usize) -> C64 {
        C64::new(self.re[row - self.start], self.im[row - self.start])
    }

    /// Source row (or column) index paired with `row`.
    fn partner(&self, row: usize) -> usize {
        (row as isize + self.offset) as usize
    }

    /// `dst[i] += s · A[i, i+offset] · src[i + offset]` on rows `≥ first`.
    #[inline(always)]
    fn column_acc(&self, first: usize, src: (&[f64], &[f64]), dst: (&mut [f64], &mut [f64]), scale: Option<C64>) {
        self.range_acc(self.start.max(first), self.end(), src, dst, scale);
    }

    /// As [`Band::column_acc`] on rows `lo..hi` (inside the band).
    #[inline(always)]
    fn range_acc(
        &self,
        lo: usize,
        hi: usize,
        src: (&[f64], &[f64]),
        dst: (&mut [f64], &mut [f64]),
        scale: Option<C64>,
    ) {
        if lo >= hi {
            return;
        }
        let (k0, k1) = (lo - self.start, hi - self.start);
        let (s0, s1) = (self.partner(lo), self.partner(hi));
        let (cr, ci) = (&self.re[k0..k1], &self.im[k0..k1]);
        let (xr, xi) = (&src.0[s0..s1], &src.1[s0..s1]);
        let (dr, di) = (&mut dst.0[lo..hi], &mut dst.1[lo..hi]);
        match scale {
            None => band_acc(self.kind, cr, ci, xr, xi, dr, di),
            Some(s) => scaled_band_acc(s, self.kind, cr, ci, xr, xi, dr, di),
        }
    }
}

/// `(cr, ci, xr, xi)`: coefficient and operand, split into real and imaginary parts.
type Term<'a> = (&'a [f64], &'a [f64], &'a [f64], &'a [f64]);

/// `d += Σ_k c_k ⊙ x_k` over four terms.
#[inline(always)]
fn band_acc4(kind: Kind, t: [Term<'_>; 4], dr: &mut [f64], di: &mut [f64]) {
    let n = dr.len();
    let di = &mut di[..n];
    let [a, b, c, e] = t.map(|(cr, ci, xr, xi)| (&cr[..n], &ci[..n], &xr[..n], &xi[..n]));
    match kind {
        Kind::Imag => {
            for i in 0..n {
                dr[i] = dr[i] - a.1[i] * a.3[i] - b.1[i] * b.3[i] - c.1[i] * c.3[i] - e.1[i] * e.3[i];
                di[i] = di[i] + a.1[i] * a.2[i] + b.1[i] * b.2[i] + c.1[i] * c.2[i] + e.1[i] * e.2[i];
            }
        }
        Kind::Real => {
            for i in 0..n {
                dr[i] = dr[i] + a.0[i] * a.2[i] + b.0[i] * b.2[i] + c.0[i] * c.2[i] + e.0[i] * e.2[i];
                di[i] = di[i] + a.0[i] * a.3[i] + b.0[i] * b.3[i] + c.0[i] * c.3[i] + e.0[i] * e.3[i];
            }
        }
        Kind::Complex => {
            for i in 0..n {
                dr[i] = dr[i]
                    + (a.0[i] * a.2[i] - a.1[i] * a.3[i])
                    + (b.0[i] * b.2[i] - b.1[i] * b.3[i])
                    + (c.0[i] * c.2[i] - c.1[i] * c.3[i])
                    + (e.0[i] * e.2[i] - e.1[i] * e.3[i]);
                di[i] = di[i]
                    + (a.0[i] * a.3[i] + a.1[i] * a.2[i])
                    + (b.0[i] * b.3[i] + b.1[i] * b.2[i])
                    + (c.0[i] * c.3[i] + c.1[i] * c.2[i])
                    + (e.0[i] * e.3[i] + e.1[i] * e.2[i]);
            }
        }
    }
}

/// `d += Σ_k s_k · x_k` over four terms with complex scalars.
#[inline(always)]
fn scalar_acc4(s: [C64; 4], x: [(&[f64], &[f64]); 4], dr: &mut [f64], di: &mut [f64]) {
    let n = dr.len();
    let di = &mut di[..n];
    let [a, b, c, e] = x.map(|(xr, xi)| (&xr[..n], &xi[..n]));
    if s.iter().all(|z| z.re == 0.0) {
        let (sa, sb, sc, se) = (s[0].im, s[1].im, s[2].im, s[3].im);
        for i in 0..n {
            dr[i] = dr[i] - sa * a.1[i] - sb * b.1[i] - sc * c.1[i] - se * e.1[i];
            di[i] = di[i] + sa * a.0[i] + sb * b.0[i] + sc * c.0[i] + se * e.0[i];
        }
    } else {
        let [sa, sb, sc, se] = s;
        for i in 0..n {
            dr[i] = dr[i]
                + (sa.re * a.0[i] - sa.im * a.1[i])
                + (sb.re * b.0[i] - sb.im * b.1[i])
                + (sc.re * c.0[i] - sc.im * c.1[i])
                + (se.re * e.0[i] - se.im * e.1[i]);
            di[i] = di[i]
                + (sa.re * a.1[i] + sa.im * a.0[i])
                + (sb.re * b.1[i] + sb.im * b.0[i])
                + (sc.re * c.1[i] + sc.im * c.0[i])
                + (se.re * e.1[i] + se.im * e.0[i]);
        }
    }
}

/// Nonzero diagonals of a square matrix.
#[derive(Debug, Clone)]
pub(crate) struct Banded {
    pub dim: usize,
    pub bands: Vec<Band>,
}

impl Banded {
    pub fn from_dense(m: &DMatrix<C64>) -> Self {
        let d = m.nrows();
        let zero = C64::new(0.0, 0.0);
        let mut bands = Vec::new();
        for offset in -(d as isize - 1)..=(d as isize - 1) {
            let at = |i: usize| m[(i, (i as isize + offset) as usize)];
            let lo = if offset < 0 { (-offset) as usize } else { 0 };
            let hi = if offset > 0 { d - offset as usize } else { d };
            let Some(first) = (lo..hi).find(|&i| at(i) != zero) else { continue };
            let last = (first..hi).rev().find(|&i| at(i) != zero).expect("first nonzero exists");
            bands.push(Band::new(
                offset,
                first,
                (first..=last).map(|i| at(i).re).collect(),
                (first..=last).map(|i| at(i).im).collect(),
            ));
        }
        Self { dim: d, bands }
    }

    /// Splits off the main diagonal (returned densely) from the other bands.
    pub fn split_diagonal(mut self) -> (Vec<C64>, Self) {
        let mut diag = vec![C64::new(0.0, 0.0); self.dim];
        if let Some(pos) = self.bands.iter().position(|b| b.offset == 0) {
            let band = self.bands.remove(pos);
            for (i, d) in diag.iter_mut().enumerate().take(band.end()).skip(band.start) {
                *d = band.coeff(i);
            }
        }
        (diag, self)
    }

    /// `out += A† · A`
    pub fn gram_acc(&self, out: &mut DMatrix<C64>) {
        for b1 in &self.bands {
            for b2 in &self.bands {
                let lo = b1.start.max(b2.start);
                let hi = b1.end().min(b2.end());
                for l in lo..hi {
                    out[(b1.partner(l), b2.partner(l))] += b1.coeff(l).conj() * b2.coeff(l);
                }
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }
}

/// Compiled Lindblad generator
/// `L ρ = G ρ + (G ρ)† + Σ_c C ρ C†` with `G = −i·c₂π·H − ½ Σ C†C`,
/// valid for Hermitian ρ. In the interaction frame the diagonal of H is
/// removed from G and applied exactly by [`PhaseMap`].
#[derive(Debug, Clone)]
pub(crate) struct Liouvillian {
    pub dim: usize,
    /// Diagonal of G.
    g_re: Vec<f64>,
    g_im: Vec<f64>,
    /// Off-diagonal bands of G.
    g_off: Banded,
    /// `g_off` bands (sorted by offset) fused four at a time.
    groups: Vec<([usize; 4], Kind)>,
    jumps: Vec<Banded>,
    /// Diagonal of H in cm⁻¹ (for the interaction frame).
    pub energies_cm1: Vec<f64>,
}

impl Liouvillian {
    pub fn new(hamiltonian: &DMatrix<C64>, collapse: &[&DMatrix<C64>], interaction_frame: bool) -> Self {
        let d = hamiltonian.nrows();
        let angular = PhysicalConstants::ANGULAR;
        let jumps: Vec<Banded> = collapse.iter().map(|c| Banded::from_dense(c)).filter(|b| !b.is_empty()).collect();
        let mut decay = DMatrix::<C64>::zeros(d, d);
        for jump in &jumps {
            jump.gram_acc(&mut decay);
        }
        let mut g = hamiltonian * C64::new(0.0, -angular) - decay * C64::new(0.5, 0.0);
        let energies_cm1: Vec<f64> = (0..d).map(|i| hamiltonian[(i, i)].re).collect();
        if interaction_frame {
            for i in 0..d {
                g[(i, i)] += C64::new(0.0, angular * energies_cm1[i]);
            }
        }
        let (g_diag, mut g_off) = Banded::from_dense(&g).split_diagonal();
        g_off.bands.sort_by_key(|b| b.offset);
        let groups = (0..g_off.bands.len() / 4)
            .map(|q| {
                let idx = [4 * q, 4 * q + 1, 4 * q + 2, 4 * q + 3];
                let kinds: Vec<Kind> = idx.iter().map(|&i| g_off.bands[i].kind).collect();
                let kind = if kinds.iter().all(|&k| k == Kind::Imag) {
                    Kind::Imag
                } else if kinds.iter().all(|&k| k == Kind::Real) {
                    Kind::Real
                } else {
                    Kind::Complex
                };
                (idx, kind)
            })
            .collect();
        Self {
            dim: d,
            g_re: g_diag.iter().map(|c| c.re).collect(),
            g_im: g_diag.iter().map(|c| c.im).collect(),
            g_off,
            groups,
            jumps,
            energies_cm1,
        }
    }

    /// `out = L ρ` for Hermitian ρ, in one pass over the output columns.
    /// Only the lower triangle is computed; the upper one follows by
    /// Hermitian symmetry.
    #[inline(always)]
    pub fn apply(&self, rho: &Split, out: &mut Split) {
        let d = self.dim;
        // Spin-flip terms pair column j with columns near j ± d/2; visiting
        // both halves together keeps the source columns cache resident.
        let half = if d.is_multiple_of(2) { d / 2 } else { d };
        for jj in 0..d {
            let j = if half < d { jj / 2 + (jj % 2) * half } else { jj };
            let col = j * d..(j + 1) * d;
            let (xr, xi) = (&rho.re[col.clone()], &rho.im[col.clone()]);
            let (or, oi) = (&mut out.re[col.clone()], &mut out.im[col]);
            // (g_i + conj(g_j)) ρ[i,j]
            {
                let (gr_j, gi_j) = (self.g_re[j], self.g_im[j]);
                let (gr, gi) = (&self.g_re[j..], &self.g_im[j..]);
                let (xr, xi) = (&xr[j..], &xi[j..]);
                let (or, oi) = (&mut or[j..], &mut oi[j..]);
                let n = or.len();
                let (gr, gi, xr, xi, oi) = (&gr[..n], &gi[..n], &xr[..n], &xi[..n], &mut oi[..n]);
                for t in 0..n {
                    let ar = gr[t] + gr_j;
                    let ai = gi[t] - gi_j;
                    or[t] = ar * xr[t] - ai * xi[t];
                    oi[t] = ar * xi[t] + ai * xr[t];
                }
            }
            // G ρ
            let bands = &self.g_off.bands;
            for &(idx, kind) in &self.groups {
                let m = idx.map(|b| &bands[b]);
                let lo = m.iter().map(|b| b.start.max(j)).max().unwrap_or(j);
                let hi = m.iter().map(|b| b.end()).min().unwrap_or(j);
                if lo + 8 > hi {
                    for b in m {
                        b.column_acc(j, (xr, xi), (&mut *or, &mut *oi), None);
                    }
                    continue;
                }
                let terms = m.map(|b| {
                    let (k, p) = (lo - b.start, b.partner(lo));
                    (&b.re[k..], &b.im[k..], &xr[p..], &xi[p..])
                });
                band_acc4(kind, terms, &mut or[lo..hi], &mut oi[lo..hi]);
                for b in m {
                    b.range_acc(b.start.max(j), lo, (xr, xi), (&mut *or, &mut *oi), None);
                    b.range_acc(hi, b.end(), (xr, xi), (&mut *or, &mut *oi), None);
                }
            }
            for b in &bands[4 * self.groups.len()..] {
                b.column_acc(j, (xr, xi), (&mut *or, &mut *oi), None);
            }
            // ρ G†
            let column = |k: usize| (&rho.re[k * d + j..(k + 1) * d], &rho.im[k * d + j..(k + 1) * d]);
            let mut pending: [(C64, usize); 4] = [(C64::new(0.0, 0.0), 0); 4];
            let mut n_pending = 0;
            for band in bands {
                if (band.start..band.end()).contains(&j) {
                    pending[n_pending] = (band.coeff(j).conj(), band.partner(j));
                    n_pending += 1;
                    if n_pending == 4 {
                        scalar_acc4(pending.map(|p| p.0), pending.map(|p| column(p.1)), &mut or[j..], &mut oi[j..]);
                        n_pending = 0;
                    }
                }
            }
            for &(sc, k) in &pending[..n_pending] {
                let (yr, yi) = column(k);
                scalar_acc(sc, yr, yi, &mut or[j..], &mut oi[j..]);
            }
            // Σ C ρ C†
            for jump in &self.jumps {
                for right in &jump.bands {
                    if !(right.start..right.end()).contains(&j) {
                        continue;
                    }
                    let s = right.coeff(j).conj();
                    let k = right.partner(j);
                    let y = (&rho.re[k * d..(k + 1) * d], &rho.im[k * d..(k + 1) * d]);
                    for left in &jump.bands {
                        left.column_acc(j, y, (&mut *or, &mut *oi), Some(s));
                    }
                }
            }
        }
        out.mirror_lower();
    }

    /// Largest angular frequency (rad/ps) the integrator has to resolve.
    ///
    /// Lab frame: Gershgorin bound on the spread of H. Interaction frame: the
    /// fastest Bohr frequency among pairs connected by off-diagonal terms,
    /// or the coupling strength itself when that is larger.
    pub fn fastest_frequency(hamiltonian: &DMatrix<C64>, interaction_frame: bool) -> f64 {
        let d = hamiltonian.nrows();
        let e: Vec<f64> = (0..d).map(|i| hamiltonian[(i, i)].re).collect();
        let radius: Vec<f64> =
            (0..d).map(|i| (0..d).filter(|&j| j != i).map(|j| hamiltonian[(i, j)].norm()).sum()).collect();
        let spread_cm1 = if interaction_frame {
            let mut bohr = 0.0f64;
            for j in 0..d {
                for i in 0..d {
                    if i != j && hamiltonian[(i, j)].norm() > 0.0 {
                        bohr = bohr.max((e[i] - e[j]).abs());
                    }
                }
            }
            bohr.max(2.0 * radius.iter().cloned().fold(0.0, f64::max))
        } else {
            let hi = (0..d).map(|i| e[i] + radius[i]).fold(f64::NEG_INFINITY, f64::max);
            let lo = (0..d).map(|i| e[i] - radius[i]).fold(f64::INFINITY, f64::min);
            hi - lo
        };
        PhysicalConstants::rad_per_ps(spread_cm1)
    }
}

/// Exact evolution under the diagonal of H over half a step and a full step:
/// `ρ[i,j] ← exp(−i c₂π (E_i − E_j) t) ρ[i,j]`, with the factors formed
/// on the fly from per-level phases.
#[derive(Debug, Clone)]
pub(crate) struct Rotation {
    half_re: Vec<f64>,
    half_im: Vec<f64>,
    full_re: Vec<f64>,
    full_im: Vec<f64>,
}

impl Rotation {
    pub fn new(energies_cm1: &[f64], step_ps: f64) -> Self {
        let phase = |t: f64| -> Vec<C64> {
            energies_cm1.iter().map(|&e| C64::from_polar(1.0, -PhysicalConstants::rad_per_ps(e) * t)).collect()
        };
        let (half, full) = (phase(0.5 * step_ps), phase(step_ps));
        Self {
            half_re: half.iter().map(|c| c.re).collect(),
            half_im: half.iter().map(|c| c.im).collect(),
            full_re: full.iter().map(|c| c.re).collect(),
            full_im: full.iter().map(|c| c.im).collect(),
        }
    }

    #[inline(always)]
    fn column_factors(&self, j: usize) -> ((f64, f64), (f64, f64)) {
        ((self.half_re[j], -self.half_im[j]), (self.full_re[j], -self.full_im[j]))
    }

    /// `dst = E½ (x + s·y)`
    #[inline(always)]
    pub fn half_of_axpy(&self, x: &Split, s: f64, y: &Split, dst: &mut Split) {
        let d = x.d;
        for j in 0..d {
            let ((cr, ci), _) = self.column_factors(j);
            let c = j * d..(j + 1) * d;
            let (xr, xi, yr, yi) = (&x.re[c.clone()], &x.im[c.clone()], &y.re[c.clone()], &y.im[c.clone()]);
            let (or, oi) = (&mut dst.re[c.clone()], &mut dst.im[c]);
            let (ur, ui) = (&self.half_re[..d], &self.half_im[..d]);
            for i in 0..d {
                let (er, ei) = (ur[i] * cr - ui[i] * ci, ur[i] * ci + ui[i] * cr);
                let (ar, ai) = (xr[i] + s * yr[i], xi[i] + s * yi[i]);
                or[i] = er * ar - ei * ai;
                oi[i] = er * ai + ei * ar;
            }
        }
    }

    /// `dst = E½ x + s·y`
    #[inline(always)]
    pub fn half_plus(&self, x: &Split, s: f64, y: &Split, dst: &mut Split) {
        let d = x.d;
        for j in 0..d {
            let ((cr, ci), _) = self.column_factors(j);
            let c = j * d..(j + 1) * d;
            let (xr, xi, yr, yi) = (&x.re[c.clone()], &x.im[c.clone()], &y.re[c.clone()], &y.im[c.clone()]);
            let (or, oi) = (&mut dst.re[c.clone()], &mut dst.im[c]);
            let (ur, ui) = (&self.half_re[..d], &self.half_im[..d]);
            for i in 0..d {
                let (er, ei) = (ur[i] * cr - ui[i] * ci, ur[i] * ci + ui[i] * cr);
                or[i] = er * xr[i] - ei * xi[i] + s * yr[i];
                oi[i] = er * xi[i] + ei * xr[i] + s * yi[i];
            }
        }
    }

    /// `dst = E x + s·E½ y`
    #[inline(always)]
    pub fn full_plus_half(&self, x: &Split, s: f64, y: &Split, dst: &mut Split) {
        let d = x.d;
        for j in 0..d {
            let ((hr, hi), (fr, fi)) = self.column_factors(j);
            let c = j * d..(j + 1) * d;
            let (xr, xi, yr, yi) = (&x.re[c.clone()], &x.im[c.clone()], &y.re[c.clone()], &y.im[c.clone()]);
            let (or, oi) = (&mut dst.re[c.clone()], &mut dst.im[c]);
            let (ur, ui) = (&self.half_re[..d], &self.half_im[..d]);
            let (vr, vi) = (&self.full_re[..d], &self.full_im[..d]);
            for i in 0..d {
                let (er, ei) = (ur[i] * hr - ui[i] * hi, ur[i] * hi + ui[i] * hr);
                let (gr, gi) = (vr[i] * fr - vi[i] * fi, vr[i] * fi + vi[i] * fr);
                or[i] = gr * xr[i] - gi * xi[i] + s * (er * yr[i] - ei * yi[i]);
                oi[i] = gr * xi[i] + gi * xr[i] + s * (er * yi[i] + ei * yr[i]);
            }
        }
    }

    /// `u ← E (u + sa·a) + sbc·E½ (b + c) + sd·d`
    #[inline(always)]
    #[allow(clippy::too_many_arguments)]
    pub fn lawson_update(
        &self,
        u: &mut Split,
        sa: f64,
        a: &Split,
        sbc: f64,
        b: &Split,
        c: &Split,
        sd: f64,
        dd: &Split,
    ) {
        let d = u.d;
        for j in 0..d {
            let ((hr, hi), (fr, fi)) = self.column_factors(j);
            let r = j * d..(j + 1) * d;
            let (ar, ai) = (&a.re[r.clone()], &a.im[r.clone()]);
            let (br, bi) = (&b.re[r.clone()], &b.im[r.clone()]);
            let (cr, ci) = (&c.re[r.clone()], &c.im[r.clone()]);
            let (dr, di) = (&dd.re[r.clone()], &dd.im[r.clone()]);
            let (or, oi) = (&mut u.re[r.clone()], &mut u.im[r]);
            let (ur, ui) = (&self.half_re[..d], &self.half_im[..d]);
            let (vr, vi) = (&self.full_re[..d], &self.full_im[..d]);
            for i in 0..d {
                let (er, ei) = (ur[i] * hr - ui[i] * hi, ur[i] * hi + ui[i] * hr);
                let (gr, gi) = (vr[i] * fr - vi[i] * fi, vr[i] * fi + vi[i] * fr);
                let (xr, xi) = (or[i] + sa * ar[i], oi[i] + sa * ai[i]);
                let (yr, yi) = (br[i] + cr[i], bi[i] + ci[i]);
                or[i] = gr * xr - gi * xi + sbc * (er * yr - ei * yi) + sd * dr[i];
                oi[i] = gr * xi + gi * xr + sbc * (er * yi + ei * yr) + sd * di[i];
            }
        }
    }
}

/// Whether the AVX2 build of the step may be used on this machine.
pub(crate) fn avx2_available() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::arch::is_x86_feature_detected!("avx2")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, d: usize, density: f64) -> DMatrix<C64> {
        DMatrix::from_fn(d, d, |_, _| {
            if rng.gen::<f64>() < density {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    #[test]
    fn gram_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &d in &[1usize, 2, 5, 12] {
            let a = random_matrix(&mut rng, d, 0.4);
            let mut gram = DMatrix::zeros(d, d);
            Banded::from_dense(&a).gram_acc(&mut gram);
            assert!((gram - a.adjoint() * &a).norm() < 1e-12);
        }
    }

    #[test]
    fn split_diagonal_keeps_off_bands() {
        let c = |x: f64| C64::new(x, 0.0);
        let a = DMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), c(0.0), c(3.0)]);
        let (diag, off) = Banded::from_dense(&a).split_diagonal();
        assert_eq!(diag, vec![c(1.0), c(3.0)]);
        assert_eq!(off.bands.len(), 1);
        assert_eq!(off.bands[0].offset, 1);
    }

    #[test]
    fn band_kinds_are_detected() {
        let c = |r: f64, i: f64| C64::new(r, i);
        let a = DMatrix::from_row_slice(
            3,
            3,
            &[
                c(0.0, 0.0),
                c(1.0, 0.0),
                c(0.0, 0.0),
                c(0.0, 2.0),
                c(0.0, 0.0),
                c(1.0, 1.0),
                c(0.0, 0.0),
                c(0.0, -1.0),
                c(0.0, 0.0),
            ],
        );
        let kinds: Vec<(isize, Kind)> = Banded::from_dense(&a).bands.iter().map(|b| (b.offset, b.kind)).collect();
        assert_eq!(kinds, vec![(-1, Kind::Imag), (1, Kind::Complex)]);
    }

    #[test]
    fn hermitize_symmetrizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = 70;
        let a = random_matrix(&mut rng, d, 1.0);
        let mut s = Split::from_matrix(&a);
        s.hermitize();
        let expect = (&a + a.adjoint()) * C64::new(0.5, 0.0);
        assert!((s.to_matrix() - expect).norm() < 1e-13);
    }

    #[test]
    fn rotation_matches_unitary_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = 6;
        let e: Vec<f64> = (0..d).map(|_| rng.gen_range(-300.0..300.0)).collect();
        let x = random_matrix(&mut rng, d, 1.0);
        let y = random_matrix(&mut rng, d, 1.0);
        let h = 0.37;
        let u = |t: f64| {
            DMatrix::from_fn(d, d, |i, j| {
                if i == j {
                    C64::from_polar(1.0, -PhysicalConstants::rad_per_ps(e[i]) * t)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
        };
        let conj = |m: &DMatrix<C64>, t: f64| u(t) * m * u(t).adjoint();
        let rot = Rotation::new(&e, h);
        let (xs, ys) = (Split::from_matrix(&x), Split::from_matrix(&y));
        let mut out = Split::zeros(d);
        let s = C64::new(0.3, 0.0);

        rot.half_of_axpy(&xs, 0.3, &ys, &mut out);
        assert!((out.to_matrix() - conj(&(&x + &y * s), 0.5 * h)).norm() < 1e-12);
        rot.half_plus(&xs, 0.3, &ys, &mut out);
        assert!((out.to_matrix() - (conj(&x, 0.5 * h) + &y * s)).norm() < 1e-12);
        rot.full_plus_half(&xs, 0.3, &ys, &mut out);
        assert!((out.to_matrix() - (conj(&x, h) + conj(&y, 0.5 * h) * s)).norm() < 1e-12);

        let mut us = xs.clone();
        rot.lawson_update(&mut us, 0.1, &ys, 0.2, &ys, &xs, 0.3, &ys);
        let c = |v: f64| C64::new(v, 0.0);
        let expect = conj(&(&x + &y * c(0.1)), h) + conj(&(&y + &x), 0.5 * h) * c(0.2) + &y * c(0.3);
        assert!((us.to_matrix() - expect).norm() < 1e-12);
    }

    #[test]
    fn apply_matches_dense_generator() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for (d, density) in [(1usize, 1.0), (9, 0.5), (40, 0.15), (64, 0.05)] {
            let h0 = random_matrix(&mut rng, d, density);
            let h = (&h0 + h0.adjoint()) * C64::new(50.0, 0.0);
            let c1 = random_matrix(&mut rng, d, density);
            let c2 = random_matrix(&mut rng, d, density);
            let r0 = random_matrix(&mut rng, d, 1.0);
            let rho = &r0 * r0.adjoint();
            let mi = C64::new(0.0, -PhysicalConstants::ANGULAR);
            for interaction in [false, true] {
                let mut hh = h.clone();
                if interaction {
                    hh.set_diagonal(&nalgebra::DVector::zeros(d));
                }
                let mut expect = (&hh * &rho - &rho * &hh) * mi;
                for c in [&c1, &c2] {
                    let cdc = c.adjoint() * c;
                    expect += c * &rho * c.adjoint() - (&cdc * &rho + &rho * &cdc) * C64::new(0.5, 0.0);
                }
                let l = Liouvillian::new(&h, &[&c1, &c2], interaction);
                let mut out = Split::zeros(d);
                l.apply(&Split::from_matrix(&rho), &mut out);
                assert!((out.to_matrix() - &expect).norm() < 1e-10 * (1.0 + expect.norm()), "d = {d}");
            }
        }
    }
}
