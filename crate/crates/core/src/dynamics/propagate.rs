//! Fixed-step RK4 propagation with per-step Hermitization and trace control.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::kernel::{avx2_available, Liouvillian, Rotation, Split};
use super::LindbladModel;
use crate::error::{Error, Result};
use crate::quantum::{mutual_information_within, subsystem_populations, DensityMatrix, HilbertLayout, QOperator};

/// Trace drift that aborts a run at any step.
pub const TRACE_ABORT_TOL: f64 = 1e-6;
/// Trace drift allowed at recorded steps.
pub const TRACE_RECORD_TOL: f64 = 1e-8;
/// Most negative eigenvalue tolerated at recorded steps.
pub const POSITIVITY_TOL: f64 = 1e-7;

/// Phase per step allowed against the fastest frequency the integrator sees.
const LAB_PHASE_PER_STEP: f64 = 0.05;
const INTERACTION_PHASE_PER_STEP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Integrator {
    /// RK4 in the frame rotating with the diagonal of H (integrating factor).
    #[default]
    InteractionRk4,
    /// Classical RK4 on the full right-hand side.
    Rk4,
}

impl Integrator {
    fn phase_per_step(self) -> f64 {
        match self {
            Integrator::InteractionRk4 => INTERACTION_PHASE_PER_STEP,
            Integrator::Rk4 => LAB_PHASE_PER_STEP,
        }
    }

    /// Largest stable step (ps) for a Hamiltonian in cm⁻¹.
    pub fn max_step_ps(self, hamiltonian: &DMatrix<C64>) -> f64 {
        let omega = Liouvillian::fastest_frequency(hamiltonian, self == Integrator::InteractionRk4);
        if omega > 0.0 {
            self.phase_per_step() / omega
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationOptions {
    pub t_max_ps: f64,
    pub dt_ps: f64,
    /// Record every `stride`-th step (step 0 included).
    pub stride: usize,
    pub store_states: bool,
    pub integrator: Integrator,
    /// Primary modes (0-based) whose mutual information with subsystem 0 is recorded.
    pub mutual_information_modes: Vec<usize>,
    pub check_positivity: bool,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self {
            t_max_ps: 1000.0,
            dt_ps: 0.01,
            stride: 100,
            store_states: false,
            integrator: Integrator::default(),
            mutual_information_modes: Vec::new(),
            check_positivity: true,
        }
    }
}

/// Observables at one recorded step.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableRecord {
    /// Diagonal populations of every subsystem's reduced state.
    pub populations: Vec<Vec<f64>>,
    pub purity: f64,
    /// |Tr ρ − 1|.
    pub trace_error: f64,
    /// ⟨H⟩ in cm⁻¹.
    pub energy_cm1: f64,
    /// I(subsystem 0 : mode k) in nats, aligned with the requested modes.
    pub mutual_information: Vec<f64>,
}

impl ObservableRecord {
    /// Excited (level 0) population of the spin.
    pub fn spin_excited(&self) -> f64 {
        self.populations[0][0]
    }

    /// Ground population of primary mode `k` (0-based), assuming a leading spin.
    pub fn mode_ground(&self, k: usize) -> f64 {
        self.populations[k + 1][0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub layout: HilbertLayout,
    /// Integration step actually used (ps).
    pub dt_ps: f64,
    /// Integration steps between records.
    pub stride: usize,
    pub integrator: Integrator,
    pub times_ps: Vec<f64>,
    pub records: Vec<ObservableRecord>,
    pub states: Option<Vec<DensityMatrix>>,
    pub initial_state: DensityMatrix,
    pub mutual_information_modes: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times_ps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_ps.is_empty()
    }

    /// Spacing of the recorded grid (ps).
    pub fn record_interval_ps(&self) -> f64 {
        self.dt_ps * self.stride as f64
    }
}

struct Stepper {
    l: Liouvillian,
    integrator: Integrator,
    rotation: Option<Rotation>,
    h: f64,
    k: [Split; 4],
    tmp: Split,
    avx2: bool,
}

impl Stepper {
    fn new(model: &LindbladModel, integrator: Integrator, h: f64) -> Self {
        let interaction = integrator == Integrator::InteractionRk4;
        let l = model.liouvillian(interaction);
        let d = l.dim;
        let rotation = interaction.then(|| Rotation::new(&l.energies_cm1, h));
        let buf = || Split::zeros(d);
        Self { l, integrator, rotation, h, k: [buf(), buf(), buf(), buf()], tmp: buf(), avx2: avx2_available() }
    }

    fn step(&mut self, u: &mut Split) {
        #[cfg(target_arch = "x86_64")]
        if self.avx2 {
            // SAFETY: AVX2 support was detected at construction.
            unsafe { self.step_avx2(u) };
            return;
        }
        self.step_generic(u);
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn step_avx2(&mut self, u: &mut Split) {
        self.step_generic(u);
    }

    #[inline(always)]
    fn step_generic(&mut self, u: &mut Split) {
        match self.integrator {
            Integrator::Rk4 => self.step_rk4(u),
            Integrator::InteractionRk4 => self.step_lawson(u),
        }
    }

    #[inline(always)]
    fn step_rk4(&mut self, u: &mut Split) {
        let h = self.h;
        let [k1, k2, k3, k4] = &mut self.k;
        self.l.apply(u, k1);
        self.tmp.set_axpy(u, 0.5 * h, k1);
        self.l.apply(&self.tmp, k2);
        self.tmp.set_axpy(u, 0.5 * h, k2);
        self.l.apply(&self.tmp, k3);
        self.tmp.set_axpy(u, h, k3);
        self.l.apply(&self.tmp, k4);
        u.axpy(h / 6.0, k1);
        u.axpy(h / 3.0, k2);
        u.axpy(h / 3.0, k3);
        u.axpy(h / 6.0, k4);
    }

    /// Integrating-factor RK4 with E(t) the exact diagonal rotation:
    /// a = N(u), b = N(E½(u + h/2 a)), c = N(E½u + h/2 b), d = N(Eu + h E½c),
    /// u ← E(u + h/6 a) + h/3 E½(b + c) + h/6 d.
    #[inline(always)]
    fn step_lawson(&mut self, u: &mut Split) {
        let h = self.h;
        let rot = self.rotation.as_ref().expect("interaction frame");
        let [a, b, c, dd] = &mut self.k;
        self.l.apply(u, a);
        rot.half_of_axpy(u, 0.5 * h, a, &mut self.tmp);
        self.l.apply(&self.tmp, b);
        rot.half_plus(u, 0.5 * h, b, &mut self.tmp);
        self.l.apply(&self.tmp, c);
        rot.full_plus_half(u, h, c, &mut self.tmp);
        self.l.apply(&self.tmp, dd);
        rot.lawson_update(u, h / 6.0, a, h / 3.0, b, c, h / 6.0, dd);
    }
}

fn check_positive(m: &DMatrix<C64>, step: usize) -> Result<()> {
    let d = m.nrows();
    let shifted = m + DMatrix::<C64>::identity(d, d) * C64::new(POSITIVITY_TOL, 0.0);
    if shifted.cholesky().is_some() {
        return Ok(());
    }
    let min = crate::quantum::hermitian_eigenvalues(m).into_iter().fold(f64::INFINITY, f64::min);
    if min < -POSITIVITY_TOL {
        return Err(Error::NumericalAbort {
            step,
            reason: format!("density matrix lost positivity (min eigenvalue {min:e})"),
        });
    }
    Ok(())
}

fn validate(model: &LindbladModel, rho0: &DensityMatrix, opts: &PropagationOptions) -> Result<()> {
    if rho0.layout() != model.layout() {
        return Err(Error::Dimension(format!(
            "initial state layout {:?} does not match model layout {:?}",
            rho0.layout().dims(),
            model.layout().dims()
        )));
    }
    if !(opts.dt_ps > 0.0) || !opts.dt_ps.is_finite() {
        return Err(Error::Domain(format!("time step must be positive, got {}", opts.dt_ps)));
    }
    if !(opts.t_max_ps >= 0.0) || !opts.t_max_ps.is_finite() {
        return Err(Error::Domain(format!("t_max must be non-negative, got {}", opts.t_max_ps)));
    }
    if opts.stride == 0 {
        return Err(Error::Domain("record stride must be at least 1".into()));
    }
    let n_sub = model.layout().num_subsystems();
    if let Some(k) = opts.mutual_information_modes.iter().find(|&&k| k + 1 >= n_sub) {
        return Err(Error::Index(format!("mutual information requested for missing mode {}", k + 1)));
    }
    Ok(())
}

/// Integrates ρ from 0 to `t_max_ps`, recording every `stride` steps.
///
/// A step too large for the chosen integrator is split into equal substeps;
/// the recorded time grid is unchanged.
pub fn propagate(model: &LindbladModel, rho0: &DensityMatrix, opts: &PropagationOptions) -> Result<Trajectory> {
    validate(model, rho0, opts)?;
    let h_max = opts.integrator.max_step_ps(model.hamiltonian().data());
    let substeps = if opts.dt_ps > h_max { (opts.dt_ps / h_max).ceil() as usize } else { 1 };
    if substeps > 1 {
        log::warn!(
            "time step {} ps exceeds the stable limit {:.3e} ps; using {} substeps",
            opts.dt_ps,
            h_max,
            substeps
        );
    }
    let dt = opts.dt_ps / substeps as f64;
    let stride = opts.stride * substeps;
    let n_steps = ((opts.t_max_ps / opts.dt_ps).round() as usize) * substeps;

    let layout = model.layout().clone();
    let mut stepper = Stepper::new(model, opts.integrator, dt);
    // Every stage maps exactly Hermitian matrices to exactly Hermitian ones,
    // so symmetrizing once keeps the state Hermitian to the last bit.
    let mut u = Split::from_matrix(rho0.data());
    u.hermitize();
    let hamiltonian = model.hamiltonian().data();

    let n_records = n_steps / stride + 1;
    let mut times = Vec::with_capacity(n_records);
    let mut records = Vec::with_capacity(n_records);
    let mut states = opts.store_states.then(|| Vec::with_capacity(n_records));

    for step in 0..=n_steps {
        if step > 0 {
            stepper.step(&mut u);
            let tr = u.trace();
            let err = (tr - C64::new(1.0, 0.0)).norm();
            if !(err <= TRACE_ABORT_TOL) {
                return Err(Error::NumericalAbort {
                    step,
                    reason: format!("trace drifted to {tr} (|Tr ρ − 1| = {err:e})"),
                });
            }
        }
        if step % stride != 0 {
            continue;
        }
        let m = u.to_matrix();
        let trace_error = (u.trace() - C64::new(1.0, 0.0)).norm();
        if trace_error > TRACE_RECORD_TOL {
            return Err(Error::NumericalAbort {
                step,
                reason: format!("|Tr ρ − 1| = {trace_error:e} at a recorded step"),
            });
        }
        if opts.check_positivity && step > 0 {
            check_positive(&m, step)?;
        }
        let rho = DensityMatrix::from_operator_unchecked(QOperator::new(layout.clone(), m)?);
        records.push(observe(&rho, hamiltonian, &opts.mutual_information_modes, trace_error, step)?);
        times.push(step as f64 * dt);
        if let Some(s) = states.as_mut() {
            s.push(rho);
        }
    }

    Ok(Trajectory {
        layout,
        dt_ps: dt,
        stride,
        integrator: opts.integrator,
        times_ps: times,
        records,
        states,
        initial_state: rho0.clone(),
        mutual_information_modes: opts.mutual_information_modes.clone(),
    })
}

fn observe(
    rho: &DensityMatrix,
    hamiltonian: &DMatrix<C64>,
    mi_modes: &[usize],
    trace_error: f64,
    step: usize,
) -> Result<ObservableRecord> {
    let layout = rho.layout();
    let data = rho.data();
    let populations =
        (0..layout.num_subsystems()).map(|s| subsystem_populations(data, layout, s)).collect::<Result<Vec<_>>>()?;
    let energy_cm1 = hamiltonian.iter().zip(data.transpose().iter()).map(|(h, r)| (h * r).re).sum();
    let mutual_information = mi_modes
        .iter()
        .map(|&k| {
            let pair = rho.partial_trace(&[0, k + 1])?;
            mutual_information_within(&pair, &[0], POSITIVITY_TOL)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| match e {
            Error::Positivity(v) => {
                Error::NumericalAbort { step, reason: format!("reduced state lost positivity (eigenvalue {v:e})") }
            }
            other => other,
        })?;
    Ok(ObservableRecord { populations, purity: rho.purity(), trace_error, energy_cm1, mutual_information })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{HamiltonianOptions, SpinParameters};
    use crate::projection::ProjectionResult;
    use crate::quantum::thermal_state;

    fn opts(t_max: f64, dt: f64, stride: usize) -> PropagationOptions {
        PropagationOptions { t_max_ps: t_max, dt_ps: dt, stride, ..Default::default() }
    }

    fn small_model(rates: &[f64], temperature: f64) -> LindbladModel {
        let spin = SpinParameters::new([2.0, 2.0, 1.987], [0.0, 0.0, 200.0]).unwrap();
        let g = DMatrix::from_row_slice(3, 2, &[0.75, 0.2, 0.0, 0.0, 0.3, 0.4]);
        let proj = ProjectionResult::primaries_only(vec![190.0, 260.0], g).unwrap();
        LindbladModel::assemble(&spin, &proj, 3, rates, temperature, &HamiltonianOptions::default()).unwrap()
    }

    #[test]
    fn frozen_dynamics() {
        let layout = HilbertLayout::new(vec![2, 3]).unwrap();
        let model = LindbladModel::new(QOperator::zeros(layout.clone()), vec![], 0.0).unwrap();
        let rho0 = DensityMatrix::basis_state(&layout, &[0, 1]).unwrap();
        for integrator in [Integrator::Rk4, Integrator::InteractionRk4] {
            let o = PropagationOptions { integrator, store_states: true, ..opts(1.0, 0.1, 1) };
            let traj = propagate(&model, &rho0, &o).unwrap();
            assert_eq!(traj.len(), 11);
            for s in traj.states.as_ref().unwrap() {
                assert_eq!(s.data(), rho0.data());
            }
        }
    }

    #[test]
    fn single_mode_decay_matches_exponential() {
        let tv = 5.0;
        for integrator in [Integrator::Rk4, Integrator::InteractionRk4] {
            let model = LindbladModel::single_mode(185.51, 3, 1.0 / tv, 0.0).unwrap();
            let rho0 = DensityMatrix::basis_state(model.layout(), &[1]).unwrap();
            let o = PropagationOptions { integrator, ..opts(tv, 0.01, 100) };
            let traj = propagate(&model, &rho0, &o).unwrap();
            let last = traj.records.last().unwrap();
            assert!((traj.times_ps.last().unwrap() - tv).abs() < 1e-9);
            let excited = last.populations[0][1];
            let expect = (-1.0f64).exp();
            assert!(((excited - expect) / expect).abs() < 1e-6, "{integrator:?}: {excited}");
        }
    }

    #[test]
    fn unitary_run_conserves_purity_and_energy() {
        let model = small_model(&[0.0, 0.0], 0.0);
        let rho0 = DensityMatrix::basis_state(model.layout(), &[0, 0, 0]).unwrap();
        let traj = propagate(&model, &rho0, &opts(20.0, 0.0025, 200)).unwrap();
        let h_norm = model.hamiltonian().data().norm();
        let e0 = traj.records[0].energy_cm1;
        for r in &traj.records {
            assert!(r.trace_error < 1e-8);
            assert!((r.purity - 1.0).abs() < 1e-8);
            assert!((r.energy_cm1 - e0).abs() / h_norm < 1e-7);
        }
    }

    #[test]
    fn integrators_agree() {
        let model = small_model(&[0.1, 0.05], 65.0);
        let rho0 = DensityMatrix::basis_state(model.layout(), &[0, 0, 0]).unwrap();
        let lab = PropagationOptions { integrator: Integrator::Rk4, ..opts(2.0, 0.001, 200) };
        let rot = PropagationOptions { integrator: Integrator::InteractionRk4, ..opts(2.0, 0.001, 200) };
        let a = propagate(&model, &rho0, &lab).unwrap();
        let b = propagate(&model, &rho0, &rot).unwrap();
        for (ra, rb) in a.records.iter().zip(&b.records) {
            for (pa, pb) in ra.populations.iter().flatten().zip(rb.populations.iter().flatten()) {
                assert!((pa - pb).abs() < 1e-8, "{pa} vs {pb}");
            }
        }
    }

    #[test]
    fn halving_dt_is_converged() {
        let model = small_model(&[0.1, 0.05], 65.0);
        let rho0 = DensityMatrix::basis_state(model.layout(), &[0, 0, 0]).unwrap();
        let coarse = propagate(&model, &rho0, &opts(20.0, 0.01, 100)).unwrap();
        let fine = propagate(&model, &rho0, &opts(20.0, 0.005, 200)).unwrap();
        assert_eq!(coarse.times_ps.len(), fine.times_ps.len());
        for (rc, rf) in coarse.records.iter().zip(&fine.records) {
            for (pc, pf) in rc.populations.iter().flatten().zip(rf.populations.iter().flatten()) {
                assert!((pc - pf).abs() < 1e-6);
            }
            assert!((rc.purity - rf.purity).abs() < 1e-6);
        }
    }

    #[test]
    fn decoupled_modes_thermalize() {
        let spin = SpinParameters::new([2.0; 3], [0.0, 0.0, 100.0]).unwrap();
        let proj = ProjectionResult::primaries_only(vec![120.0, 200.0], DMatrix::zeros(3, 2)).unwrap();
        let (t, rates) = (150.0, [1.0 / 2.0, 1.0 / 3.0]);
        let model = LindbladModel::assemble(&spin, &proj, 4, &rates, t, &HamiltonianOptions::default()).unwrap();
        let rho0 = DensityMatrix::basis_state(model.layout(), &[0, 1, 0]).unwrap();
        let traj =
            propagate(&model, &rho0, &PropagationOptions { store_states: true, ..opts(30.0, 0.01, 3000) }).unwrap();
        let last = traj.states.unwrap().pop().unwrap();
        for (k, &w) in proj.primary_freqs_cm1.iter().enumerate() {
            let marginal = last.partial_trace(&[k + 1]).unwrap();
            let gibbs = thermal_state(w, t, 4).unwrap();
            assert!((marginal.data() - gibbs.data()).camax() < 1e-5);
        }
        let spin_state = last.partial_trace(&[0]).unwrap();
        assert!((spin_state.data()[(0, 0)].re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn clamps_oversized_steps() {
        let model = small_model(&[0.0, 0.0], 0.0);
        let rho0 = DensityMatrix::basis_state(model.layout(), &[0, 0, 0]).unwrap();
        let traj = propagate(&model, &rho0, &opts(1.0, 0.1, 1)).unwrap();
        assert!(traj.dt_ps < 0.1);
        assert_eq!(traj.len(), 11);
        assert!((traj.times_ps[10] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_options() {
        let model = small_model(&[0.0, 0.0], 0.0);
        let rho0 = DensityMatrix::basis_state(model.layout(), &[0, 0, 0]).unwrap();
        assert!(propagate(&model, &rho0, &opts(1.0, 0.0, 1)).is_err());
        assert!(propagate(&model, &rho0, &opts(1.0, 0.01, 0)).is_err());
        let bad_mi = PropagationOptions { mutual_information_modes: vec![2], ..opts(1.0, 0.01, 1) };
        assert!(propagate(&model, &rho0, &bad_mi).is_err());
        let other = DensityMatrix::basis_state(&HilbertLayout::new(vec![2, 2]).unwrap(), &[0, 0]).unwrap();
        assert!(propagate(&model, &other, &opts(1.0, 0.01, 1)).is_err());
    }

    #[test]
    fn mutual_information_starts_at_zero_and_grows() {
        let model = small_model(&[0.0, 0.0], 0.0);
        let rho0 = DensityMatrix::basis_state(model.layout(), &[0, 0, 0]).unwrap();
        let o = PropagationOptions { mutual_information_modes: vec![0, 1], ..opts(5.0, 0.0025, 40) };
        let traj = propagate(&model, &rho0, &o).unwrap();
        assert!(traj.records[0].mutual_information.iter().all(|&i| i.abs() < 1e-10));
        let bound = 2.0 * 2f64.ln();
        assert!(traj.records.iter().flat_map(|r| &r.mutual_information).all(|&i| (0.0..=bound).contains(&i)));
        assert!(traj.records.iter().any(|r| r.mutual_information[0] > 1e-4));
    }
}
