use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::layout::HilbertLayout;
use super::operator::{DensityMatrix, QOperator};
use crate::error::{Error, Result};
use crate::units::PhysicalConstants;

fn check_args(omega_cm1: f64, temperature_k: f64) -> Result<()> {
    if !(omega_cm1 > 0.0) || !omega_cm1.is_finite() {
        return Err(Error::Domain(format!("oscillator frequency must be positive, got {omega_cm1}")));
    }
    if !(temperature_k >= 0.0) || !temperature_k.is_finite() {
        return Err(Error::Domain(format!("temperature must be non-negative, got {temperature_k}")));
    }
    Ok(())
}

/// Bose-Einstein occupation n(ω) = 1/(exp(ω/k_BT) − 1); exactly 0 at T = 0.
pub fn bose_occupation(omega_cm1: f64, temperature_k: f64) -> Result<f64> {
    check_args(omega_cm1, temperature_k)?;
    if temperature_k == 0.0 {
        return Ok(0.0);
    }
    let x = omega_cm1 / PhysicalConstants::thermal_energy(temperature_k);
    Ok(1.0 / x.exp_m1())
}

/// Boltzmann populations of a truncated oscillator, renormalized over the
/// retained levels.
pub fn thermal_populations(omega_cm1: f64, temperature_k: f64, n_fock: usize) -> Result<Vec<f64>> {
    check_args(omega_cm1, temperature_k)?;
    if n_fock < 2 {
        return Err(Error::Dimension(format!("Fock truncation {n_fock} < 2")));
    }
    let mut pops = vec![0.0; n_fock];
    if temperature_k == 0.0 {
        pops[0] = 1.0;
        return Ok(pops);
    }
    let x = omega_cm1 / PhysicalConstants::thermal_energy(temperature_k);
    for (m, p) in pops.iter_mut().enumerate() {
        *p = (-(m as f64) * x).exp();
    }
    let z: f64 = pops.iter().sum();
    pops.iter_mut().for_each(|p| *p /= z);
    Ok(pops)
}

/// Diagonal Gibbs state of a single truncated oscillator.
pub fn thermal_state(omega_cm1: f64, temperature_k: f64, n_fock: usize) -> Result<DensityMatrix> {
    let pops = thermal_populations(omega_cm1, temperature_k, n_fock)?;
    let data =
        DMatrix::from_fn(n_fock, n_fock, |i, j| if i == j { C64::new(pops[i], 0.0) } else { C64::new(0.0, 0.0) });
    let op = QOperator::new(HilbertLayout::single(n_fock)?, data)?;
    Ok(DensityMatrix::from_operator_unchecked(op))
}
