//! Spin + primary-mode Hamiltonian, thermal collapse operators and Lindblad
//! propagation of the composite density matrix.

mod kernel;
mod propagate;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::projection::ProjectionResult;
use crate::quantum::{
    annihilation, bose_occupation, number, pauli, DensityMatrix, HilbertLayout, PauliAxis, QOperator,
};
use crate::units::PhysicalConstants;

pub use propagate::{propagate, Integrator, ObservableRecord, PropagationOptions, Trajectory, POSITIVITY_TOL};

pub(crate) use kernel::{Liouvillian, Split};

/// Default cap on the composite Hilbert-space dimension.
pub const DEFAULT_MAX_DIM: usize = 4096;

/// Diagonal g-tensor and applied field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinParameters {
    pub g: [f64; 3],
    pub field_t: [f64; 3],
}

impl SpinParameters {
    pub fn new(g: [f64; 3], field_t: [f64; 3]) -> Result<Self> {
        let spin = Self { g, field_t };
        spin.validate()?;
        Ok(spin)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.g.iter().find(|g| !(**g > 0.0 && **g < 4.0)) {
            return Err(Error::Domain(format!("g-tensor component {g} outside (0, 4)")));
        }
        if self.field_t.iter().any(|b| !b.is_finite()) {
            return Err(Error::Domain("magnetic field must be finite".into()));
        }
        Ok(())
    }

    /// |B| in Tesla.
    pub fn field_magnitude(&self) -> f64 {
        self.field_t.iter().map(|b| b * b).sum::<f64>().sqrt()
    }

    /// Zeeman coefficients μ_B·g_α·B_α in cm⁻¹.
    pub fn zeeman_coefficients(&self) -> [f64; 3] {
        std::array::from_fn(|a| PhysicalConstants::zeeman_energy(self.g[a], self.field_t[a]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianOptions {
    /// Use S_α = σ_α/2 in the Zeeman term (splitting g·μ_B·B); otherwise σ_α.
    pub zeeman_spin_half: bool,
    pub max_dim: usize,
}

impl Default for HamiltonianOptions {
    fn default() -> Self {
        Self { zeeman_spin_half: true, max_dim: DEFAULT_MAX_DIM }
    }
}

/// Kronecker product of local operators placed at distinct sites, identity
/// elsewhere.
pub fn embed_product(layout: &HilbertLayout, factors: &[(usize, &QOperator)]) -> Result<QOperator> {
    let mut local: Vec<Option<&QOperator>> = vec![None; layout.num_subsystems()];
    for &(site, op) in factors {
        layout.check_site(site)?;
        if op.dim() != layout.dims()[site] {
            return Err(Error::Dimension(format!(
                "operator of dimension {} cannot act on subsystem {site} of dimension {}",
                op.dim(),
                layout.dims()[site]
            )));
        }
        if local[site].replace(op).is_some() {
            return Err(Error::Index(format!("two factors on subsystem {site}")));
        }
    }
    let mut data = DMatrix::<C64>::identity(1, 1);
    for (site, op) in local.iter().enumerate() {
        data = match op {
            Some(op) => data.kronecker(op.data()),
            None => {
                let n = layout.dims()[site];
                data.kronecker(&DMatrix::identity(n, n))
            }
        };
    }
    QOperator::new(layout.clone(), data)
}

/// H_s = Σ_α μ_B B_α g_α S_α + Σ_αk g′_αk σ_α (a_k + a_k†) + Σ_k ω_k (a_k†a_k + ½), in cm⁻¹,
/// on the layout `[2, n_fock, …, n_fock]`.
pub fn build_hamiltonian(
    spin: &SpinParameters,
    projection: &ProjectionResult,
    n_fock: usize,
    options: &HamiltonianOptions,
) -> Result<QOperator> {
    spin.validate()?;
    projection.validate()?;
    let n_modes = projection.num_primary();
    let layout = HilbertLayout::spin_with_modes(n_modes, n_fock)?;
    if layout.total_dim() > options.max_dim {
        return Err(Error::Dimension(format!(
            "composite dimension {} exceeds the cap of {}",
            layout.total_dim(),
            options.max_dim
        )));
    }
    let spin_scale = if options.zeeman_spin_half { 0.5 } else { 1.0 };
    let mut h = QOperator::zeros(layout.clone());

    let mut zeeman = QOperator::zeros(HilbertLayout::single(2)?);
    for (axis, coef) in PauliAxis::XYZ.iter().zip(spin.zeeman_coefficients()) {
        zeeman = zeeman.add(&pauli(*axis).scale(C64::new(coef * spin_scale, 0.0)))?;
    }
    h = h.add(&embed_product(&layout, &[(0, &zeeman)])?)?;

    let a = annihilation(n_fock)?;
    let position = a.add(&a.adjoint())?;
    let n_op = number(n_fock)?;
    let half = QOperator::identity(HilbertLayout::single(n_fock)?).scale(C64::new(0.5, 0.0));
    for k in 0..n_modes {
        let site = k + 1;
        let mut spin_part = QOperator::zeros(HilbertLayout::single(2)?);
        for (alpha, axis) in PauliAxis::XYZ.iter().enumerate() {
            let g = projection.primary_couplings_cm1[(alpha, k)];
            spin_part = spin_part.add(&pauli(*axis).scale(C64::new(g, 0.0)))?;
        }
        h = h.add(&embed_product(&layout, &[(0, &spin_part), (site, &position)])?)?;
        let omega = projection.primary_freqs_cm1[k];
        let oscillator = n_op.add(&half)?.scale(C64::new(omega, 0.0));
        h = h.add(&embed_product(&layout, &[(site, &oscillator)])?)?;
    }
    Ok(h)
}

/// ω (a†a + ½) on a single truncated mode.
pub fn oscillator_hamiltonian(omega_cm1: f64, n_fock: usize) -> Result<QOperator> {
    let n_op = number(n_fock)?;
    let half = QOperator::identity(HilbertLayout::single(n_fock)?).scale(C64::new(0.5, 0.0));
    Ok(n_op.add(&half)?.scale(C64::new(omega_cm1, 0.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CollapseKind {
    /// C_{k,−}: de-excitation, ∝ a_k.
    Emission,
    /// C_{k,+}: excitation, ∝ a_k†.
    Absorption,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseOperator {
    /// Primary-mode index (0-based).
    pub mode: usize,
    pub kind: CollapseKind,
    /// Squared prefactor in ps⁻¹: (n+1)/T_vib or n/T_vib.
    pub rate_per_ps: f64,
    /// Full-space operator including the prefactor, in ps^{-1/2}.
    pub operator: QOperator,
}

/// Thermal collapse operators for modes that occupy the last
/// `rates_per_ps.len()` subsystems of `layout`.
///
/// Modes with zero rate get no operators; at T = 0 only C_{k,−} is emitted.
pub fn build_collapse_ops(
    layout: &HilbertLayout,
    rates_per_ps: &[f64],
    mode_freqs_cm1: &[f64],
    temperature_k: f64,
) -> Result<Vec<CollapseOperator>> {
    if rates_per_ps.len() != mode_freqs_cm1.len() {
        return Err(Error::Dimension(format!("{} rates for {} modes", rates_per_ps.len(), mode_freqs_cm1.len())));
    }
    let n_modes = rates_per_ps.len();
    if n_modes > layout.num_subsystems() {
        return Err(Error::Dimension(format!(
            "{n_modes} modes do not fit a layout of {} subsystems",
            layout.num_subsystems()
        )));
    }
    let first_site = layout.num_subsystems() - n_modes;
    let mut ops = Vec::new();
    for (k, (&rate, &omega)) in rates_per_ps.iter().zip(mode_freqs_cm1).enumerate() {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::Domain(format!("rate of mode {} must be non-negative, got {rate}", k + 1)));
        }
        if rate == 0.0 {
            continue;
        }
        let n = bose_occupation(omega, temperature_k)?;
        let site = first_site + k;
        let a = annihilation(layout.dims()[site])?;
        for (kind, weight, local) in
            [(CollapseKind::Emission, n + 1.0, a.clone()), (CollapseKind::Absorption, n, a.adjoint())]
        {
            if weight == 0.0 {
                continue;
            }
            let r = weight * rate;
            let op = embed_product(layout, &[(site, &local.scale(C64::new(r.sqrt(), 0.0)))])?;
            ops.push(CollapseOperator { mode: k, kind, rate_per_ps: r, operator: op });
        }
    }
    Ok(ops)
}

/// Hamiltonian plus collapse operators on a common layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladModel {
    layout: HilbertLayout,
    hamiltonian: QOperator,
    collapse: Vec<CollapseOperator>,
    temperature_k: f64,
}

impl LindbladModel {
    pub fn new(hamiltonian: QOperator, collapse: Vec<CollapseOperator>, temperature_k: f64) -> Result<Self> {
        let dev = hamiltonian.hermitian_deviation();
        if dev > 1e-10 {
            return Err(Error::Domain(format!("Hamiltonian is not Hermitian (deviation {dev:e})")));
        }
        if let Some(c) = collapse.iter().find(|c| c.operator.layout() != hamiltonian.layout()) {
            return Err(Error::Dimension(format!(
                "collapse operator for mode {} has layout {:?}, Hamiltonian {:?}",
                c.mode + 1,
                c.operator.layout().dims(),
                hamiltonian.layout().dims()
            )));
        }
        Ok(Self { layout: hamiltonian.layout().clone(), hamiltonian, collapse, temperature_k })
    }

    /// Spin + primary modes with thermal damping at the given per-mode rates.
    pub fn assemble(
        spin: &SpinParameters,
        projection: &ProjectionResult,
        n_fock: usize,
        rates_per_ps: &[f64],
        temperature_k: f64,
        options: &HamiltonianOptions,
    ) -> Result<Self> {
        let h = build_hamiltonian(spin, projection, n_fock, options)?;
        let ops = build_collapse_ops(h.layout(), rates_per_ps, &projection.primary_freqs_cm1, temperature_k)?;
        Self::new(h, ops, temperature_k)
    }

    /// A single damped oscillator on its own.
    pub fn single_mode(omega_cm1: f64, n_fock: usize, rate_per_ps: f64, temperature_k: f64) -> Result<Self> {
        let h = oscillator_hamiltonian(omega_cm1, n_fock)?;
        let ops = build_collapse_ops(h.layout(), &[rate_per_ps], &[omega_cm1], temperature_k)?;
        Self::new(h, ops, temperature_k)
    }

    pub fn layout(&self) -> &HilbertLayout {
        &self.layout
    }

    pub fn hamiltonian(&self) -> &QOperator {
        &self.hamiltonian
    }

    pub fn collapse_ops(&self) -> &[CollapseOperator] {
        &self.collapse
    }

    pub fn temperature_k(&self) -> f64 {
        self.temperature_k
    }

    pub(crate) fn liouvillian(&self, interaction_frame: bool) -> Liouvillian {
        let ops: Vec<&DMatrix<C64>> = self.collapse.iter().map(|c| c.operator.data()).collect();
        Liouvillian::new(self.hamiltonian.data(), &ops, interaction_frame)
    }
}

/// dρ/dt in ps⁻¹: −i c₂π [H, ρ] + Σ (C ρ C† − ½{C†C, ρ}).
pub fn lindblad_rhs(model: &LindbladModel, rho: &DensityMatrix) -> Result<QOperator> {
    if rho.layout() != model.layout() {
        return Err(Error::Dimension(format!(
            "state layout {:?} does not match model layout {:?}",
            rho.layout().dims(),
            model.layout().dims()
        )));
    }
    let l = model.liouvillian(false);
    let d = rho.dim();
    let mut out = Split::zeros(d);
    l.apply(&Split::from_matrix(rho.data()), &mut out);
    QOperator::new(model.layout().clone(), out.to_matrix())
}
