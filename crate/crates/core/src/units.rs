//! Unit conventions.
//!
//! Energies and angular frequencies are both carried in cm⁻¹ (ħ = 1), times
//! in ps. Every conversion between the two goes through [`PhysicalConstants`].

/// Fixed physical constants and the cm⁻¹ ↔ ps conversions built on them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants;

impl PhysicalConstants {
    /// Boltzmann constant, cm⁻¹/K.
    pub const BOLTZMANN: f64 = 0.6950348;
    /// Bohr magneton, cm⁻¹/T.
    pub const BOHR_MAGNETON: f64 = 0.46686447;
    /// rad·ps⁻¹ per cm⁻¹ (2πc).
    pub const ANGULAR: f64 = 0.18836516;

    /// k_B·T in cm⁻¹.
    #[inline]
    pub fn thermal_energy(temperature_k: f64) -> f64 {
        Self::BOLTZMANN * temperature_k
    }

    /// Angular frequency in rad/ps for an energy in cm⁻¹.
    #[inline]
    pub fn rad_per_ps(energy_cm1: f64) -> f64 {
        Self::ANGULAR * energy_cm1
    }

    /// Rate in ps⁻¹ for a rate expressed in cm⁻¹.
    #[inline]
    pub fn per_ps(rate_cm1: f64) -> f64 {
        Self::ANGULAR * rate_cm1
    }

    /// Zeeman energy μ_B·g·B in cm⁻¹.
    #[inline]
    pub fn zeeman_energy(g: f64, field_t: f64) -> f64 {
        Self::BOHR_MAGNETON * g * field_t
    }
}
