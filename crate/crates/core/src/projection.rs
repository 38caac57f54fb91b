//! Projection of the spin-phonon coupling onto a few collective modes.
//!
//! The 3×M derivative-coupling matrix is factored by SVD. Its right-singular
//! vectors span the only vibrational directions the spin can see; completing
//! them to an orthogonal frame and diagonalizing the force-constant matrix
//! block by block yields
//!
//! * P ≤ 3 primary modes X_k that carry all of the spin coupling,
//! * M − P residual modes Y_q with no direct spin coupling,
//! * bilinear couplings γ_kq between the two sets (the only off-diagonal
//!   force constants left).

use nalgebra::{DMatrix, Matrix3, SymmetricEigen};

use crate::error::{Error, Result};

/// Default relative threshold below which singular values count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Normal modes and their spin-phonon derivative couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct RawVibrationalModel {
    /// ω_n in cm⁻¹.
    pub frequencies_cm1: Vec<f64>,
    /// g′_αn, 3×M, rows x, y, z, in cm⁻¹ at `reference_field_t`.
    pub coupling_cm1: DMatrix<f64>,
    pub reference_field_t: f64,
}

impl RawVibrationalModel {
    pub fn new(frequencies_cm1: Vec<f64>, coupling_cm1: DMatrix<f64>, reference_field_t: f64) -> Result<Self> {
        let model = Self { frequencies_cm1, coupling_cm1, reference_field_t };
        model.validate()?;
        Ok(model)
    }

    pub fn num_modes(&self) -> usize {
        self.frequencies_cm1.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.frequencies_cm1.len();
        if m < 3 {
            return Err(Error::Dimension(format!("need at least 3 normal modes, got {m}")));
        }
        if self.coupling_cm1.nrows() != 3 || self.coupling_cm1.ncols() != m {
            return Err(Error::Dimension(format!(
                "coupling matrix is {}x{}, expected 3x{m}",
                self.coupling_cm1.nrows(),
                self.coupling_cm1.ncols()
            )));
        }
        if let Some((n, w)) = self.frequencies_cm1.iter().enumerate().find(|(_, w)| !(**w > 0.0) || !w.is_finite()) {
            return Err(Error::Domain(format!("frequency of mode {} must be positive, got {w}", n + 1)));
        }
        if self.coupling_cm1.iter().any(|g| !g.is_finite()) {
            return Err(Error::Domain("coupling matrix contains non-finite entries".into()));
        }
        if !(self.reference_field_t > 0.0) {
            return Err(Error::Domain(format!("reference field must be positive, got {}", self.reference_field_t)));
        }
        Ok(())
    }
}

/// g′ = U·diag(σ)·Vᵀ with σ descending and each V column's largest-magnitude
/// entry positive.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSvd {
    pub u: Matrix3<f64>,
    pub singular_values: [f64; 3],
    /// M×3, orthonormal columns.
    pub v: DMatrix<f64>,
}

impl CouplingSvd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = DMatrix::<f64>::zeros(3, 3);
        for a in 0..3 {
            for i in 0..3 {
                us[(a, i)] = self.u[(a, i)] * self.singular_values[i];
            }
        }
        us * self.v.transpose()
    }
}

pub fn svd_coupling(g_prime: &DMatrix<f64>) -> Result<CouplingSvd> {
    if g_prime.nrows() != 3 {
        return Err(Error::Dimension(format!("coupling must have 3 rows, got {}", g_prime.nrows())));
    }
    let m = g_prime.ncols();
    if m < 3 {
        return Err(Error::Dimension(format!("need at least 3 modes, got {m}")));
    }
    if g_prime.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("coupling contains non-finite entries".into()));
    }
    // U from the 3×3 Gram matrix, then V = g′ᵀU/σ. Exact to rounding even
    // for nearly degenerate σ, where bidiagonal SVD converges loosely.
    let eig = SymmetricEigen::new(g_prime * g_prime.transpose());
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut u = Matrix3::zeros();
    let mut v = DMatrix::<f64>::zeros(m, 3);
    let mut sigma = [0.0; 3];
    for (dst, &src) in order.iter().enumerate() {
        let ui = eig.eigenvectors.column(src).into_owned();
        let mut col = g_prime.transpose() * &ui;
        sigma[dst] = col.norm();
        let resolved = sigma[dst] > NULL_SINGULAR * sigma[0].max(f64::MIN_POSITIVE);
        if !resolved {
            // null direction: any unit vector orthogonal to the previous columns
            let best = (0..m)
                .max_by(|&a, &b| residual_weight(&v, dst, a).total_cmp(&residual_weight(&v, dst, b)))
                .expect("m ≥ 3");
            col.fill(0.0);
            col[best] = 1.0;
        }
        for _ in 0..2 {
            for prev in 0..dst {
                let overlap = v.column(prev).dot(&col);
                col.axpy(-overlap, &v.column(prev), 1.0);
            }
        }
        col /= col.norm();
        let sign = sign_of_dominant(col.as_slice());
        v.column_mut(dst).copy_from(&(col * sign));
        u.column_mut(dst).copy_from(&(ui * sign));
    }
    Ok(CouplingSvd { u, singular_values: sigma, v })
}

/// Singular values below this fraction of the largest are treated as zero
/// when building V.
const NULL_SINGULAR: f64 = 1e-13;

/// Squared norm of unit vector `e_i` after removing its overlap with the
/// first `cols` columns of `v`.
fn residual_weight(v: &DMatrix<f64>, cols: usize, i: usize) -> f64 {
    1.0 - (0..cols).map(|c| v[(i, c)] * v[(i, c)]).sum::<f64>()
}

/// +1 if the largest-magnitude entry (first one on ties) is non-negative.
fn sign_of_dominant(x: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for &e in x {
        if e.abs() > best.abs() {
            best = e;
        }
    }
    if best < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Primary/residual decomposition of the vibrational problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    /// ω_k in cm⁻¹, ascending.
    pub primary_freqs_cm1: Vec<f64>,
    /// g′_αk, 3×P, cm⁻¹.
    pub primary_couplings_cm1: DMatrix<f64>,
    /// ω_q in cm⁻¹, ascending.
    pub residual_freqs_cm1: Vec<f64>,
    /// γ_kq, P×(M−P), cm⁻².
    pub bilinear_couplings_cm2: DMatrix<f64>,
    /// M×M orthogonal; column j expresses projected coordinate j (primaries
    /// first) in the original normal modes.
    pub rotation: DMatrix<f64>,
}

impl ProjectionResult {
    /// Primary modes only, with no residual bath and an identity rotation.
    pub fn primaries_only(freqs_cm1: Vec<f64>, couplings_cm1: DMatrix<f64>) -> Result<Self> {
        let p = freqs_cm1.len();
        let result = Self {
            rotation: DMatrix::identity(p, p),
            bilinear_couplings_cm2: DMatrix::zeros(p, 0),
            residual_freqs_cm1: Vec::new(),
            primary_couplings_cm1: couplings_cm1,
            primary_freqs_cm1: freqs_cm1,
        };
        result.validate()?;
        Ok(result)
    }

    pub fn num_primary(&self) -> usize {
        self.primary_freqs_cm1.len()
    }

    pub fn num_residual(&self) -> usize {
        self.residual_freqs_cm1.len()
    }

    /// Shape and sign checks; does not test orthogonality of `rotation`.
    pub fn validate(&self) -> Result<()> {
        let p = self.num_primary();
        let q = self.num_residual();
        if p == 0 {
            return Err(Error::Dimension("projection has no primary modes".into()));
        }
        if self.primary_couplings_cm1.shape() != (3, p) {
            return Err(Error::Dimension(format!(
                "primary couplings are {:?}, expected (3, {p})",
                self.primary_couplings_cm1.shape()
            )));
        }
        if self.bilinear_couplings_cm2.shape() != (p, q) {
            return Err(Error::Dimension(format!(
                "bilinear couplings are {:?}, expected ({p}, {q})",
                self.bilinear_couplings_cm2.shape()
            )));
        }
        if self.rotation.shape() != (p + q, p + q) {
            return Err(Error::Dimension(format!(
                "rotation is {:?}, expected ({n}, {n})",
                self.rotation.shape(),
                n = p + q
            )));
        }
        for (kind, freqs) in [("primary", &self.primary_freqs_cm1), ("residual", &self.residual_freqs_cm1)] {
            if let Some(w) = freqs.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
                return Err(Error::UnstableMode(format!("{kind} frequency {w} is not positive")));
            }
        }
        Ok(())
    }

    /// Force-constant matrix in projected coordinates:
    /// `[[diag ω_k², γ], [γᵀ, diag ω_q²]]`.
    pub fn force_constants(&self) -> DMatrix<f64> {
        let p = self.num_primary();
        let m = p + self.num_residual();
        let mut k = DMatrix::zeros(m, m);
        for (i, w) in self.primary_freqs_cm1.iter().enumerate() {
            k[(i, i)] = w * w;
        }
        for (j, w) in self.residual_freqs_cm1.iter().enumerate() {
            k[(p + j, p + j)] = w * w;
        }
        k.view_mut((0, p), (p, m - p)).copy_from(&self.bilinear_couplings_cm2);
        k.view_mut((p, 0), (m - p, p)).copy_from(&self.bilinear_couplings_cm2.transpose());
        k
    }
}

/// Splits the vibrational problem into primary and residual modes.
pub fn project(model: &RawVibrationalModel, rank_tol: f64) -> Result<ProjectionResult> {
    if !(rank_tol > 0.0 && rank_tol < 1.0) {
        return Err(Error::Domain(format!("rank_tol must lie in (0, 1), got {rank_tol}")));
    }
    model.validate()?;
    let m = model.num_modes();
    let svd = svd_coupling(&model.coupling_cm1)?;
    let sigma_max = svd.singular_values[0];
    if !(sigma_max > 0.0) {
        return Err(Error::Domain("coupling matrix is identically zero".into()));
    }
    let p = svd.singular_values.iter().filter(|&&s| s > rank_tol * sigma_max).count();

    let frame = complete_frame(&svd.v.columns(0, p).into_owned(), m)?;

    // K = R₀ᵀ · diag(ω²) · R₀
    let mut scaled = frame.clone();
    for (n, w) in model.frequencies_cm1.iter().enumerate() {
        scaled.row_mut(n).scale_mut(w * w);
    }
    let k = frame.transpose() * scaled;

    let (primary_sq, primary_vecs) = sorted_eigen(k.view((0, 0), (p, p)).into_owned());
    let (residual_sq, residual_vecs) = sorted_eigen(k.view((p, p), (m - p, m - p)).into_owned());
    for (kind, values) in [("primary", &primary_sq), ("residual", &residual_sq)] {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Error::UnstableMode(format!(
                "{kind} block eigenvalue {} is {v:e} (ω² must be positive)",
                i + 1
            )));
        }
    }

    let mut sub = DMatrix::zeros(m, m);
    sub.view_mut((0, 0), (p, p)).copy_from(&primary_vecs);
    sub.view_mut((p, p), (m - p, m - p)).copy_from(&residual_vecs);
    let rotation = frame * sub;

    let gamma = primary_vecs.transpose() * k.view((0, p), (p, m - p)) * &residual_vecs;
    let couplings = &model.coupling_cm1 * rotation.columns(0, p);

    Ok(ProjectionResult {
        primary_freqs_cm1: primary_sq.iter().map(|v| v.sqrt()).collect(),
        primary_couplings_cm1: couplings,
        residual_freqs_cm1: residual_sq.iter().map(|v| v.sqrt()).collect(),
        bilinear_couplings_cm2: gamma,
        rotation,
    })
}

/// Rescales the spin-phonon couplings from the reference field to the
/// simulation field; couplings are linear in B.
pub fn scale_to_field(result: &ProjectionResult, field_sim_t: f64, field_ref_t: f64) -> Result<ProjectionResult> {
    if !(field_ref_t > 0.0) {
        return Err(Error::Domain(format!("reference field must be positive, got {field_ref_t}")));
    }
    let mut out = result.clone();
    out.primary_couplings_cm1 *= field_sim_t / field_ref_t;
    Ok(out)
}

/// Orthogonal M×M matrix whose leading columns are `leading` (orthonormal),
/// completed by Gram-Schmidt against the standard basis in index order.
fn complete_frame(leading: &DMatrix<f64>, m: usize) -> Result<DMatrix<f64>> {
    const ACCEPT: f64 = 1e-6;
    let p = leading.ncols();
    let mut frame = DMatrix::zeros(m, m);
    frame.columns_mut(0, p).copy_from(leading);
    let mut filled = p;
    for e in 0..m {
        if filled == m {
            break;
        }
        let mut w = nalgebra::DVector::<f64>::zeros(m);
        w[e] = 1.0;
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for c in 0..filled {
                let col = frame.column(c);
                let proj = col.dot(&w);
                w.axpy(-proj, &col, 1.0);
            }
        }
        let norm = w.norm();
        if norm > ACCEPT {
            frame.column_mut(filled).copy_from(&(w / norm));
            filled += 1;
        }
    }
    if filled != m {
        return Err(Error::Dimension("could not complete orthogonal frame".into()));
    }
    Ok(frame)
}

/// Eigenpairs of a symmetric matrix, ascending, eigenvector signs fixed so
/// the largest-magnitude component is positive.
fn sorted_eigen(block: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = block.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(block);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut vecs = DMatrix::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        vals.push(eig.eigenvalues[src]);
        let col: Vec<f64> = eig.eigenvectors.column(src).iter().copied().collect();
        let sign = sign_of_dominant(&col);
        for i in 0..n {
            vecs[(i, dst)] = sign * col[i];
        }
    }
    (vals, vecs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_singular_values() {
        let u = [1.0, 2.0, 2.0]; // |u| = 3
        let v = [0.0, 2.0, 0.0, 0.0]; // |v| = 2
        let g = DMatrix::from_fn(3, 4, |a, n| u[a] * v[n]);
        let svd = svd_coupling(&g).unwrap();
        assert!((svd.singular_values[0] - 6.0).abs() < 1e-12);
        assert!(svd.singular_values[1].abs() < 1e-12);
        assert!(svd.singular_values[2].abs() < 1e-12);
        assert!((svd.reconstruct() - &g).norm() < 1e-12);
        assert!(svd.v[(1, 0)] > 0.0);
    }

    #[test]
    fn diagonal_coupling_singular_values() {
        let mut g = DMatrix::zeros(3, 5);
        g[(0, 0)] = 1.0;
        g[(1, 1)] = 2.0;
        g[(2, 2)] = 3.0;
        let svd = svd_coupling(&g).unwrap();
        for (s, e) in svd.singular_values.iter().zip([3.0, 2.0, 1.0]) {
            assert!((s - e).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_modes() {
        assert!(svd_coupling(&DMatrix::zeros(3, 2)).is_err());
        assert!(svd_coupling(&DMatrix::zeros(2, 4)).is_err());
    }

    #[test]
    fn already_block_diagonal() {
        let g = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0]);
        let model = RawVibrationalModel::new(vec![120.0; 3], g, 1.0).unwrap();
        let proj = project(&model, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(proj.num_primary(), 3);
        assert_eq!(proj.num_residual(), 0);
        assert_eq!(proj.bilinear_couplings_cm2.shape(), (3, 0));
        for w in &proj.primary_freqs_cm1 {
            assert!((w - 120.0).abs() < 1e-10);
        }
    }

    #[test]
    fn four_mode_hand_computed() {
        let g = DMatrix::from_row_slice(3, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 3.0, 0.0]);
        let model = RawVibrationalModel::new(vec![100.0, 150.0, 200.0, 150.0], g, 1.0).unwrap();
        let proj = project(&model, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(proj.num_primary(), 3);
        assert_eq!(proj.residual_freqs_cm1.len(), 1);
        assert!((proj.residual_freqs_cm1[0] - 150.0).abs() < 1e-10);
        assert!(proj.bilinear_couplings_cm2.iter().all(|g| g.abs() < 1e-10));
        let expect = [100.0, 150.0, 200.0];
        for (w, e) in proj.primary_freqs_cm1.iter().zip(expect) {
            assert!((w - e).abs() < 1e-10);
        }
        // mode at 100 cm⁻¹ couples through σ_x with strength 1
        assert!((proj.primary_couplings_cm1[(0, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_tol_bounds() {
        let g = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0]);
        let model = RawVibrationalModel::new(vec![100.0; 3], g, 1.0).unwrap();
        assert!(project(&model, 0.0).is_err());
        assert!(project(&model, 1.0).is_err());
    }

    #[test]
    fn rank_deficient_coupling() {
        // only σ_z couples, to a single collective direction
        let mut g = DMatrix::zeros(3, 5);
        for n in 0..5 {
            g[(2, n)] = 1.0;
        }
        let model = RawVibrationalModel::new(vec![80.0, 90.0, 100.0, 110.0, 120.0], g, 1.0).unwrap();
        let proj = project(&model, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(proj.num_primary(), 1);
        assert_eq!(proj.num_residual(), 4);
        // mean-square frequency of the uniform combination
        let mean_sq: f64 = [80.0f64, 90.0, 100.0, 110.0, 120.0].iter().map(|w| w * w).sum::<f64>() / 5.0;
        assert!((proj.primary_freqs_cm1[0] - mean_sq.sqrt()).abs() < 1e-9);
        assert!((proj.primary_couplings_cm1[(2, 0)].abs() - 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn unstable_mode_rejected() {
        let p = ProjectionResult::primaries_only(vec![100.0, -1.0], DMatrix::zeros(3, 2));
        assert!(matches!(p, Err(Error::UnstableMode(_))));
    }

    #[test]
    fn invalid_raw_models() {
        assert!(RawVibrationalModel::new(vec![1.0, 2.0], DMatrix::zeros(3, 2), 1.0).is_err());
        assert!(RawVibrationalModel::new(vec![1.0, 2.0, 0.0], DMatrix::zeros(3, 3), 1.0).is_err());
        assert!(RawVibrationalModel::new(vec![1.0, 2.0, 3.0], DMatrix::zeros(3, 4), 1.0).is_err());
        assert!(RawVibrationalModel::new(vec![1.0, 2.0, 3.0], DMatrix::zeros(3, 3), 0.0).is_err());
    }

    #[test]
    fn field_scaling() {
        let g = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, 0.0, 0.25, 2.0, 0.0]);
        let base = ProjectionResult::primaries_only(vec![100.0, 200.0], g.clone()).unwrap();
        assert_eq!(scale_to_field(&base, 1.0, 1.0).unwrap(), base);
        let doubled = scale_to_field(&base, 2.0, 1.0).unwrap();
        assert_eq!(doubled.primary_couplings_cm1, &g * 2.0);
        let strong = scale_to_field(&base, 200.0, 1.0).unwrap();
        assert_eq!(strong.primary_couplings_cm1, &g * 200.0);
        assert_eq!(strong.primary_freqs_cm1, base.primary_freqs_cm1);
        assert!(scale_to_field(&base, 2.0, 0.0).is_err());
    }
}
