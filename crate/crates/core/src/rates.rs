//! Golden-rule relaxation of the primary modes into the residual bath.
//!
//! The rate of the 1 → 0 transition of primary mode k is
//!
//! ```text
//! 1/T_k = (π/ω_k) Σ_q γ_kq²/(2ω_q) · [(1 + n_q)·δ(ω_k − ω_q) + n_q·δ(ω_q − ω_k)]
//! ```
//!
//! evaluated in cm⁻¹ with the deltas replaced by a normalized lineshape, then
//! converted once to ps⁻¹.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::projection::ProjectionResult;
use crate::quantum::bose_occupation;
use crate::units::PhysicalConstants;

/// Default broadening width in cm⁻¹.
pub const DEFAULT_WIDTH_CM1: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Lineshape {
    /// Width is the standard deviation.
    #[default]
    Gaussian,
    /// Width is the half width at half maximum.
    Lorentzian,
}

impl Lineshape {
    /// Unit-area lineshape evaluated at detuning `x` (cm⁻¹), in cm.
    pub fn eval(self, x: f64, width: f64) -> f64 {
        match self {
            Lineshape::Gaussian => {
                let z = x / width;
                (-0.5 * z * z).exp() / (width * (2.0 * PI).sqrt())
            }
            Lineshape::Lorentzian => width / (PI * (x * x + width * width)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Broadening {
    pub lineshape: Lineshape,
    pub width_cm1: f64,
}

impl Default for Broadening {
    fn default() -> Self {
        Self { lineshape: Lineshape::Gaussian, width_cm1: DEFAULT_WIDTH_CM1 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RateRequest<'a> {
    pub projection: &'a ProjectionResult,
    pub temperature_k: f64,
    pub broadening: Broadening,
}

impl RateRequest<'_> {
    fn validate(&self) -> Result<()> {
        if !(self.broadening.width_cm1 > 0.0) || !self.broadening.width_cm1.is_finite() {
            return Err(Error::Domain(format!("broadening width must be positive, got {}", self.broadening.width_cm1)));
        }
        if !(self.temperature_k >= 0.0) || !self.temperature_k.is_finite() {
            return Err(Error::Domain(format!("temperature must be non-negative, got {}", self.temperature_k)));
        }
        Ok(())
    }
}

/// Per-mode relaxation rates and lifetimes.
#[derive(Debug, Clone, PartialEq)]
pub struct RateResult {
    /// 1/T_vib,k in ps⁻¹.
    pub rates_per_ps: Vec<f64>,
    /// T_vib,k in ps; infinite where the rate is zero.
    pub lifetimes_ps: Vec<f64>,
}

impl RateResult {
    pub fn from_rates(rates_per_ps: Vec<f64>) -> Self {
        let lifetimes_ps = rates_per_ps.iter().map(|&r| if r > 0.0 { 1.0 / r } else { f64::INFINITY }).collect();
        Self { rates_per_ps, lifetimes_ps }
    }
}

/// 1/T_vib,k in ps⁻¹ for primary mode `k` (0-based).
pub fn relaxation_rate(req: &RateRequest<'_>, k: usize) -> Result<f64> {
    req.validate()?;
    let proj = req.projection;
    if k >= proj.num_primary() {
        return Err(Error::Index(format!("primary mode {k} out of range ({} primaries)", proj.num_primary())));
    }
    let wk = proj.primary_freqs_cm1[k];
    let Broadening { lineshape, width_cm1 } = req.broadening;
    let mut sum = 0.0;
    for (q, &wq) in proj.residual_freqs_cm1.iter().enumerate() {
        let gamma = proj.bilinear_couplings_cm2[(k, q)];
        let n = bose_occupation(wq, req.temperature_k)?;
        let emission = (1.0 + n) * lineshape.eval(wk - wq, width_cm1);
        let absorption = n * lineshape.eval(wq - wk, width_cm1);
        sum += gamma * gamma / (2.0 * wq) * (emission + absorption);
    }
    Ok(PhysicalConstants::per_ps(PI / wk * sum))
}

pub fn relaxation_rates(req: &RateRequest<'_>) -> Result<RateResult> {
    let rates = (0..req.projection.num_primary()).map(|k| relaxation_rate(req, k)).collect::<Result<Vec<_>>>()?;
    Ok(RateResult::from_rates(rates))
}

/// Rates of every primary mode at each temperature of an ascending grid.
pub fn rate_temperature_scan(
    projection: &ProjectionResult,
    broadening: Broadening,
    temperatures_k: &[f64],
) -> Result<Vec<(f64, RateResult)>> {
    if temperatures_k.is_empty() {
        return Err(Error::Domain("temperature grid is empty".into()));
    }
    if temperatures_k.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("temperature grid must be strictly ascending".into()));
    }
    temperatures_k
        .iter()
        .map(|&t| {
            let req = RateRequest { projection, temperature_k: t, broadening };
            Ok((t, relaxation_rates(&req)?))
        })
        .collect()
}

/// Thermal position autocorrelation ⟨Y_q(t) Y_q(0)⟩ of a harmonic bath mode
/// (ħ = 1, mass-weighted), with `t` in ps.
pub fn correlation_function(omega_q_cm1: f64, temperature_k: f64, t_ps: f64) -> Result<C64> {
    let n = bose_occupation(omega_q_cm1, temperature_k)?;
    let phase = PhysicalConstants::rad_per_ps(omega_q_cm1) * t_ps;
    let forward = C64::from_polar(1.0 + n, -phase);
    let backward = C64::from_polar(n, phase);
    Ok((forward + backward) / (2.0 * omega_q_cm1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    /// One primary mode with explicit residual channels.
    pub(crate) fn channels(wk: f64, residual: &[(f64, f64)]) -> ProjectionResult {
        let q = residual.len();
        let mut gamma = DMatrix::zeros(1, q);
        for (j, (_, g)) in residual.iter().enumerate() {
            gamma[(0, j)] = *g;
        }
        ProjectionResult {
            primary_freqs_cm1: vec![wk],
            primary_couplings_cm1: DMatrix::zeros(3, 1),
            residual_freqs_cm1: residual.iter().map(|(w, _)| *w).collect(),
            bilinear_couplings_cm2: gamma,
            rotation: DMatrix::identity(q + 1, q + 1),
        }
    }

    fn gauss(width: f64) -> Broadening {
        Broadening { lineshape: Lineshape::Gaussian, width_cm1: width }
    }

    #[test]
    fn lineshapes_are_normalized() {
        for shape in [Lineshape::Gaussian, Lineshape::Lorentzian] {
            let h = 0.001;
            let area: f64 = (-2_000_000..=2_000_000).map(|i| shape.eval(i as f64 * h, 3.0) * h).sum();
            let tol = if shape == Lineshape::Gaussian { 1e-10 } else { 2e-3 };
            assert!((area - 1.0).abs() < tol, "{shape:?}: {area}");
        }
    }

    #[test]
    fn empty_bath_has_no_decay() {
        let proj = ProjectionResult::primaries_only(vec![185.0], DMatrix::zeros(3, 1)).unwrap();
        let req = RateRequest { projection: &proj, temperature_k: 65.0, broadening: gauss(5.0) };
        assert_eq!(relaxation_rate(&req, 0).unwrap(), 0.0);
        let res = relaxation_rates(&req).unwrap();
        assert!(res.lifetimes_ps[0].is_infinite());
    }

    #[test]
    fn resonant_channel_closed_form() {
        let proj = channels(185.0, &[(185.0, 500.0)]);
        let req = RateRequest { projection: &proj, temperature_k: 65.0, broadening: gauss(5.0) };
        let rate = relaxation_rate(&req, 0).unwrap();
        let n = 1.0 / (185.0f64 / (0.6950348 * 65.0)).exp_m1();
        let rate_cm1 = PI / 185.0 * (500.0 * 500.0 / 370.0) * (1.0 + 2.0 * n) / (5.0 * (2.0 * PI).sqrt());
        assert!((rate_cm1 - 0.947).abs() < 1e-3, "{rate_cm1}");
        assert!((rate - rate_cm1 * 0.18836516).abs() < 1e-14);
        assert!((rate - 0.178).abs() < 1e-3);
        assert!((1.0 / rate - 5.6).abs() < 0.05);

        let cold = RateRequest { temperature_k: 0.0, ..req };
        let spont = relaxation_rate(&cold, 0).unwrap();
        assert!((rate / spont - (1.0 + 2.0 * n)).abs() < 1e-12);
    }

    #[test]
    fn invalid_requests() {
        let proj = channels(185.0, &[(185.0, 500.0)]);
        let req = RateRequest { projection: &proj, temperature_k: 65.0, broadening: gauss(0.0) };
        assert!(relaxation_rate(&req, 0).is_err());
        let req = RateRequest { projection: &proj, temperature_k: -1.0, broadening: gauss(1.0) };
        assert!(relaxation_rate(&req, 0).is_err());
        let req = RateRequest { projection: &proj, temperature_k: 1.0, broadening: gauss(1.0) };
        assert!(matches!(relaxation_rate(&req, 1), Err(Error::Index(_))));
    }

    #[test]
    fn scan_grid_checks() {
        let proj = channels(185.0, &[(180.0, 300.0), (195.0, 200.0)]);
        assert!(rate_temperature_scan(&proj, gauss(5.0), &[]).is_err());
        assert!(rate_temperature_scan(&proj, gauss(5.0), &[20.0, 10.0]).is_err());
        let grid: Vec<f64> = (1..=30).map(|i| 10.0 * i as f64).collect();
        let scan = rate_temperature_scan(&proj, gauss(5.0), &grid).unwrap();
        assert_eq!(scan.len(), 30);
        assert!(scan.windows(2).all(|w| w[1].1.rates_per_ps[0] >= w[0].1.rates_per_ps[0]));
        assert!(scan.iter().zip(&grid).all(|((t, _), g)| t == g));
    }

    #[test]
    fn correlation_limits() {
        let w = 185.0;
        let c0 = correlation_function(w, 65.0, 0.0).unwrap();
        let n = bose_occupation(w, 65.0).unwrap();
        assert!((c0.re - (1.0 + 2.0 * n) / (2.0 * w)).abs() < 1e-15);
        assert_eq!(c0.im, 0.0);
        let cold = correlation_function(w, 0.0, 3.7).unwrap();
        assert!((cold.norm() - 1.0 / (2.0 * w)).abs() < 1e-15);
        let phase = -0.18836516 * w * 3.7;
        assert!((cold.arg() - phase.sin().atan2(phase.cos())).abs() < 1e-12);
        assert!(correlation_function(0.0, 1.0, 1.0).is_err());
    }
}
