use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::layout::HilbertLayout;
use crate::error::{Error, Result};

const TRACE_TOL: f64 = 1e-10;
const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues down to this value count as numerically zero.
pub const PSD_TOL: f64 = 1e-9;

/// Dense complex operator on a tensor-product space.
#[derive(Debug, Clone, PartialEq)]
pub struct QOperator {
    layout: HilbertLayout,
    data: DMatrix<C64>,
}

impl QOperator {
    pub fn new(layout: HilbertLayout, data: DMatrix<C64>) -> Result<Self> {
        let d = layout.total_dim();
        if data.nrows() != d || data.ncols() != d {
            return Err(Error::Dimension(format!("matrix is {}x{}, layout needs {d}x{d}", data.nrows(), data.ncols())));
        }
        Ok(Self { layout, data })
    }

    pub fn zeros(layout: HilbertLayout) -> Self {
        let d = layout.total_dim();
        Self { layout, data: DMatrix::zeros(d, d) }
    }

    pub fn identity(layout: HilbertLayout) -> Self {
        let d = layout.total_dim();
        Self { layout, data: DMatrix::identity(d, d) }
    }

    /// Single-subsystem operator from a real matrix given row by row.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let layout = HilbertLayout::single(n)?;
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("rows must form a square matrix".into()));
        }
        let data = DMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j], 0.0));
        Ok(Self { layout, data })
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &DMatrix<C64> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<C64> {
        self.data
    }

    pub fn trace(&self) -> C64 {
        self.data.trace()
    }

    pub fn adjoint(&self) -> Self {
        Self { layout: self.layout.clone(), data: self.data.adjoint() }
    }

    /// max |A − A†| over entries.
    pub fn hermitian_deviation(&self) -> f64 {
        hermitian_deviation(&self.data)
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self { layout: self.layout.clone(), data: &self.data * factor }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_layout(other)?;
        Ok(Self { layout: self.layout.clone(), data: &self.data + &other.data })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_layout(other)?;
        Ok(Self { layout: self.layout.clone(), data: &self.data - &other.data })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_same_layout(other)?;
        Ok(Self { layout: self.layout.clone(), data: &self.data * &other.data })
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.check_same_layout(other)?;
        Ok(Self { layout: self.layout.clone(), data: &self.data * &other.data - &other.data * &self.data })
    }

    /// Tensor product; the result's layout is `self.layout ++ other.layout`.
    pub fn kron(&self, other: &Self) -> Self {
        let mut dims = self.layout.dims().to_vec();
        dims.extend_from_slice(other.layout.dims());
        let layout = HilbertLayout::new(dims).expect("concatenated valid layouts are valid");
        Self { layout, data: self.data.kronecker(&other.data) }
    }

    /// Expectation value Tr(A·ρ).
    pub fn expectation(&self, rho: &DensityMatrix) -> Result<C64> {
        self.check_same_layout(rho.as_operator())?;
        let a = &self.data;
        let r = rho.data();
        let d = self.dim();
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..d {
            for i in 0..d {
                acc += a[(i, j)] * r[(j, i)];
            }
        }
        Ok(acc)
    }

    /// Partial trace over every subsystem not listed in `keep`.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        let keep = self.layout.normalize_subset(keep)?;
        let sub = self.layout.sub_layout(&keep)?;
        let data = partial_trace_matrix(&self.data, &self.layout, &keep);
        Ok(Self { layout: sub, data })
    }

    fn check_same_layout(&self, other: &Self) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::Dimension(format!(
                "layout mismatch: {:?} vs {:?}",
                self.layout.dims(),
                other.layout.dims()
            )));
        }
        Ok(())
    }
}

pub(crate) fn hermitian_deviation(m: &DMatrix<C64>) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..d {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `keep` must be sorted, deduplicated and valid.
pub(crate) fn partial_trace_matrix(data: &DMatrix<C64>, layout: &HilbertLayout, keep: &[usize]) -> DMatrix<C64> {
    let dims = layout.dims();
    let kept_dim: usize = keep.iter().map(|&s| dims[s]).product();
    let d = layout.total_dim();
    // Split every full index into (kept index, traced index).
    let mut kept_of = vec![0usize; d];
    let mut traced_of = vec![0usize; d];
    let mut traced_dim = 1usize;
    for (s, &ds) in dims.iter().enumerate() {
        if keep.binary_search(&s).is_err() {
            traced_dim *= ds;
        }
    }
    for i in 0..d {
        let levels = layout.levels_of(i);
        let (mut k, mut t) = (0usize, 0usize);
        for (s, (&l, &ds)) in levels.iter().zip(dims).enumerate() {
            if keep.binary_search(&s).is_ok() {
                k = k * ds + l;
            } else {
                t = t * ds + l;
            }
        }
        kept_of[i] = k;
        traced_of[i] = t;
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::with_capacity(kept_dim); traced_dim];
    for i in 0..d {
        groups[traced_of[i]].push(i);
    }
    let mut out = DMatrix::<C64>::zeros(kept_dim, kept_dim);
    for group in &groups {
        for &j in group {
            let kj = kept_of[j];
            for &i in group {
                out[(kept_of[i], kj)] += data[(i, j)];
            }
        }
    }
    out
}

/// Axis of a Pauli matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PauliAxis {
    X,
    Y,
    Z,
    Identity,
}

impl PauliAxis {
    pub const XYZ: [PauliAxis; 3] = [PauliAxis::X, PauliAxis::Y, PauliAxis::Z];
}

/// Pauli matrix with σ_z = diag(+1, −1); basis index 0 is spin-up (excited).
pub fn pauli(axis: PauliAxis) -> QOperator {
    let z = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let entries = match axis {
        PauliAxis::X => [z, one, one, z],
        PauliAxis::Y => [z, -i, i, z],
        PauliAxis::Z => [one, z, z, -one],
        PauliAxis::Identity => [one, z, z, one],
    };
    let layout = HilbertLayout::single(2).expect("dim 2 is valid");
    QOperator { layout, data: DMatrix::from_row_slice(2, 2, &entries) }
}

/// Truncated bosonic annihilation operator, a[m, m+1] = √(m+1).
pub fn annihilation(n_fock: usize) -> Result<QOperator> {
    if n_fock < 2 {
        return Err(Error::Dimension(format!("Fock truncation {n_fock} < 2")));
    }
    let layout = HilbertLayout::single(n_fock)?;
    let mut data = DMatrix::zeros(n_fock, n_fock);
    for m in 0..n_fock - 1 {
        data[(m, m + 1)] = C64::new(((m + 1) as f64).sqrt(), 0.0);
    }
    Ok(QOperator { layout, data })
}

pub fn creation(n_fock: usize) -> Result<QOperator> {
    Ok(annihilation(n_fock)?.adjoint())
}

pub fn number(n_fock: usize) -> Result<QOperator> {
    let layout = HilbertLayout::single(n_fock)?;
    let data =
        DMatrix::from_fn(n_fock, n_fock, |i, j| if i == j { C64::new(i as f64, 0.0) } else { C64::new(0.0, 0.0) });
    Ok(QOperator { layout, data })
}

/// Lifts a single-subsystem operator to `I ⊗ … ⊗ op ⊗ … ⊗ I`.
pub fn embed(op: &QOperator, layout: &HilbertLayout, site: usize) -> Result<QOperator> {
    layout.check_site(site)?;
    let target = layout.dims()[site];
    if op.dim() != target {
        return Err(Error::Dimension(format!(
            "operator of dimension {} cannot act on subsystem {site} of dimension {target}",
            op.dim()
        )));
    }
    let dims = layout.dims();
    let left: usize = dims[..site].iter().product();
    let right: usize = dims[site + 1..].iter().product();
    let mut data = DMatrix::<C64>::identity(left, left).kronecker(&op.data);
    data = data.kronecker(&DMatrix::<C64>::identity(right, right));
    QOperator::new(layout.clone(), data)
}

/// Density matrix: unit trace, Hermitian, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(QOperator);

impl DensityMatrix {
    /// Validates trace, Hermiticity and positivity.
    pub fn new(op: QOperator) -> Result<Self> {
        let tr = op.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let herm = op.hermitian_deviation();
        if herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {herm:e})")));
        }
        let rho = Self(op);
        let min = rho.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::Positivity(min));
        }
        Ok(rho)
    }

    /// Wraps an operator without validation, e.g. a state read back from a
    /// trajectory archive that carries integration error.
    pub fn from_operator_unchecked(op: QOperator) -> Self {
        Self(op)
    }

    /// Projector onto the product basis state with the given levels.
    pub fn basis_state(layout: &HilbertLayout, levels: &[usize]) -> Result<Self> {
        let idx = layout.index_of(levels)?;
        let mut op = QOperator::zeros(layout.clone());
        op.data[(idx, idx)] = C64::new(1.0, 0.0);
        Ok(Self(op))
    }

    /// |ψ⟩⟨ψ| for a normalized state vector.
    pub fn pure(layout: &HilbertLayout, psi: &[C64]) -> Result<Self> {
        if psi.len() != layout.total_dim() {
            return Err(Error::Dimension(format!(
                "state vector has {} entries, layout needs {}",
                psi.len(),
                layout.total_dim()
            )));
        }
        let norm2: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
        if (norm2 - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("state vector norm² {norm2} differs from 1")));
        }
        let d = psi.len();
        let data = DMatrix::from_fn(d, d, |i, j| psi[i] * psi[j].conj());
        Ok(Self(QOperator::new(layout.clone(), data)?))
    }

    /// ρ₁ ⊗ ρ₂ ⊗ …
    pub fn product(factors: &[&DensityMatrix]) -> Result<Self> {
        let (first, rest) = factors.split_first().ok_or_else(|| Error::Dimension("product of zero states".into()))?;
        let mut op = first.0.clone();
        for f in rest {
            op = op.kron(&f.0);
        }
        Ok(Self(op))
    }

    pub fn as_operator(&self) -> &QOperator {
        &self.0
    }

    pub fn into_operator(self) -> QOperator {
        self.0
    }

    pub fn layout(&self) -> &HilbertLayout {
        self.0.layout()
    }

    pub fn data(&self) -> &DMatrix<C64> {
        self.0.data()
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// Tr ρ².
    pub fn purity(&self) -> f64 {
        self.data().iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(self.data())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        Ok(Self(self.0.partial_trace(keep)?))
    }

    /// Diagonal element `level` of the reduced state of `subsystem`.
    pub fn population(&self, subsystem: usize, level: usize) -> Result<f64> {
        subsystem_populations(self.data(), self.layout(), subsystem)?
            .get(level)
            .copied()
            .ok_or_else(|| Error::Index(format!("level {level} out of range for subsystem {subsystem}")))
    }
}

/// All diagonal populations of one subsystem's reduced state.
pub(crate) fn subsystem_populations(data: &DMatrix<C64>, layout: &HilbertLayout, subsystem: usize) -> Result<Vec<f64>> {
    layout.check_site(subsystem)?;
    let dim = layout.dims()[subsystem];
    let stride = layout.strides()[subsystem];
    let mut pops = vec![0.0; dim];
    for i in 0..layout.total_dim() {
        pops[(i / stride) % dim] += data[(i, i)].re;
    }
    Ok(pops)
}

pub(crate) fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    // Symmetrize first so round-off in the input cannot leak into the solver.
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    h.symmetric_eigenvalues().iter().copied().collect()
}
