//! Reductions of trajectories: population series, thermal detrending,
//! mutual-information series and spectral period estimates.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

use crate::dynamics::{propagate, Integrator, LindbladModel, PropagationOptions, Trajectory, POSITIVITY_TOL};
use crate::error::{Error, Result};
use crate::quantum::{mutual_information_within, DensityMatrix};

/// Slack allowed outside [0, 1] for populations.
pub const POPULATION_SLACK: f64 = 1e-7;
/// Minimum number of samples for spectral analysis.
pub const MIN_SPECTRAL_SAMPLES: usize = 32;

const GRID_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSeries {
    pub times_ps: Vec<f64>,
    pub values: Vec<f64>,
    pub label: String,
}

impl ObservableSeries {
    pub fn new(times_ps: Vec<f64>, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if times_ps.len() != values.len() {
            return Err(Error::Dimension(format!("{} times but {} values", times_ps.len(), values.len())));
        }
        Ok(Self { times_ps, values, label: label.into() })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Mean of the values.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len().max(1) as f64
    }

    /// Largest |value|.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Uniform sample spacing, or an error when the grid is not uniform.
    pub fn uniform_spacing(&self) -> Result<f64> {
        if self.times_ps.len() < 2 {
            return Err(Error::Analysis("at least two samples are needed for a spacing".into()));
        }
        let n = self.times_ps.len();
        let dt = (self.times_ps[n - 1] - self.times_ps[0]) / (n - 1) as f64;
        if !(dt > 0.0) {
            return Err(Error::Analysis("time grid is not increasing".into()));
        }
        let uniform = self.times_ps.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= GRID_TOL * dt);
        if !uniform {
            return Err(Error::Analysis("time grid is not uniform".into()));
        }
        Ok(dt)
    }
}

/// Population of `level` in the reduced state of `subsystem` at every recorded step.
pub fn population_series(traj: &Trajectory, subsystem: usize, level: usize) -> Result<ObservableSeries> {
    traj.layout.check_site(subsystem)?;
    let dim = traj.layout.dims()[subsystem];
    if level >= dim {
        return Err(Error::Index(format!("level {level} out of range for subsystem {subsystem} of dimension {dim}")));
    }
    let values: Vec<f64> = traj.records.iter().map(|r| r.populations[subsystem][level]).collect();
    if let Some(v) = values.iter().find(|v| !(-POPULATION_SLACK..=1.0 + POPULATION_SLACK).contains(*v)) {
        return Err(Error::Analysis(format!("population {v} outside [0, 1]")));
    }
    let label = match (subsystem, level) {
        (0, 0) if traj.layout.dims()[0] == 2 => "spin_rho11".to_string(),
        (0, l) => format!("sub0_rho{l}{l}"),
        (s, l) => format!("mode{s}_rho{l}{l}"),
    };
    ObservableSeries::new(traj.times_ps.clone(), values, label)
}

/// δρ(t) = ρ(t) − ρ(0).
pub fn delta_rho_initial(series: &ObservableSeries) -> Result<ObservableSeries> {
    let first = *series.values.first().ok_or_else(|| Error::Analysis("empty series".into()))?;
    let values = series.values.iter().map(|v| v - first).collect();
    ObservableSeries::new(series.times_ps.clone(), values, format!("delta_{}", series.label))
}

/// Mode-alone thermal relaxation used as the detrending reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalReference {
    pub freq_cm1: f64,
    pub temperature_k: f64,
    pub lifetime_ps: f64,
}

/// Ground-population deviation of primary mode `mode` (0-based) from its
/// mode-alone thermal relaxation, on the trajectory's own grid.
///
/// The reference run starts from the mode's reduced initial state and uses
/// the trajectory's step, stride and integrator.
pub fn detrend_thermal(
    traj: &Trajectory,
    mode: usize,
    mode_freq_cm1: f64,
    temperature_k: f64,
    lifetime_ps: f64,
    n_fock: usize,
) -> Result<ObservableSeries> {
    let site = mode + 1;
    traj.layout.check_site(site)?;
    if traj.layout.dims()[site] != n_fock {
        return Err(Error::Dimension(format!(
            "mode {} has {} levels in the trajectory, {n_fock} requested",
            mode + 1,
            traj.layout.dims()[site]
        )));
    }
    let values = traj.records.iter().map(|r| r.populations[site][0]).collect();
    let series = ObservableSeries::new(traj.times_ps.clone(), values, format!("mode{site}_rho00"))?;
    let reference = ThermalReference { freq_cm1: mode_freq_cm1, temperature_k, lifetime_ps };
    let rho0 = traj.initial_state.partial_trace(&[site])?;
    detrend_series(&series, &reference, &rho0, traj.dt_ps, traj.stride, traj.integrator)
}

/// Subtracts the ground population of a mode-alone thermal relaxation from
/// `series`, a recorded ground-population series of that mode.
///
/// The reference starts from `initial` and is propagated with step `dt_ps`,
/// recording every `stride` steps; its grid must coincide with the series'.
pub fn detrend_series(
    series: &ObservableSeries,
    reference: &ThermalReference,
    initial: &DensityMatrix,
    dt_ps: f64,
    stride: usize,
    integrator: Integrator,
) -> Result<ObservableSeries> {
    let lifetime = reference.lifetime_ps;
    if !(lifetime > 0.0) || !lifetime.is_finite() {
        return Err(Error::Domain(format!("{} has no finite lifetime ({lifetime})", series.label)));
    }
    let t_max = *series.times_ps.last().ok_or_else(|| Error::Analysis("empty series".into()))?;
    let model = LindbladModel::single_mode(reference.freq_cm1, initial.dim(), 1.0 / lifetime, reference.temperature_k)?;
    let opts = PropagationOptions {
        t_max_ps: t_max,
        dt_ps,
        stride,
        store_states: false,
        integrator,
        mutual_information_modes: Vec::new(),
        check_positivity: false,
    };
    let thermal = propagate(&model, initial, &opts)?;
    let grid_ok = thermal.times_ps.len() == series.times_ps.len()
        && thermal.times_ps.iter().zip(&series.times_ps).all(|(a, b)| (a - b).abs() <= GRID_TOL * dt_ps);
    if !grid_ok {
        return Err(Error::Analysis(format!(
            "reference grid ({} points) does not match the series grid ({} points)",
            thermal.times_ps.len(),
            series.times_ps.len()
        )));
    }
    let values = series.values.iter().zip(&thermal.records).map(|(v, th)| v - th.populations[0][0]).collect();
    ObservableSeries::new(series.times_ps.clone(), values, format!("detrended_{}", series.label))
}

/// I(spin : mode) at every recorded step, from stored states or, failing
/// that, from values recorded during propagation.
pub fn mutual_info_series(traj: &Trajectory, mode: usize) -> Result<ObservableSeries> {
    let site = mode + 1;
    traj.layout.check_site(site)?;
    let label = format!("MI_spin_mode{}", mode + 1);
    if let Some(states) = &traj.states {
        let values = states
            .iter()
            .map(|rho| mutual_information_within(&rho.partial_trace(&[0, site])?, &[0], POSITIVITY_TOL))
            .collect::<Result<Vec<_>>>()?;
        return ObservableSeries::new(traj.times_ps.clone(), values, label);
    }
    let column = traj
        .mutual_information_modes
        .iter()
        .position(|&k| k == mode)
        .ok_or_else(|| Error::Analysis("mutual information needs stored states".into()))?;
    let values = traj.records.iter().map(|r| r.mutual_information[column]).collect();
    ObservableSeries::new(traj.times_ps.clone(), values, label)
}

/// One-sided power spectrum of a mean-removed, Hann-windowed series.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    /// Frequencies in ps⁻¹ (bin 0 is DC).
    pub frequencies_per_ps: Vec<f64>,
    pub power: Vec<f64>,
}

impl PowerSpectrum {
    /// Largest power among bins whose period lies in `band` (ps), DC excluded.
    pub fn peak_power(&self, band: Option<(f64, f64)>) -> Option<f64> {
        self.band_bins(band).map(|k| self.power[k]).fold(None, |m, p| Some(m.map_or(p, |m: f64| m.max(p))))
    }

    fn band_bins(&self, band: Option<(f64, f64)>) -> impl Iterator<Item = usize> + '_ {
        let (f_lo, f_hi) = match band {
            Some((p_lo, p_hi)) => (1.0 / p_hi, 1.0 / p_lo),
            None => (0.0, f64::INFINITY),
        };
        (1..self.power.len()).filter(move |&k| {
            let f = self.frequencies_per_ps[k];
            f >= f_lo && f <= f_hi
        })
    }
}

/// Zero-padding factor applied before the transform.
const PADDING: usize = 4;

pub fn power_spectrum(series: &ObservableSeries) -> Result<PowerSpectrum> {
    let n = series.len();
    if n < MIN_SPECTRAL_SAMPLES {
        return Err(Error::Analysis(format!("series has {n} samples, at least {MIN_SPECTRAL_SAMPLES} are needed")));
    }
    let dt = series.uniform_spacing()?;
    let mean = series.mean();
    let m = (n * PADDING).next_power_of_two();
    let mut buf = vec![C64::new(0.0, 0.0); m];
    for (i, v) in series.values.iter().enumerate() {
        let w = 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
        buf[i] = C64::new((v - mean) * w, 0.0);
    }
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let half = m / 2 + 1;
    let frequencies_per_ps = (0..half).map(|k| k as f64 / (m as f64 * dt)).collect();
    let power = buf[..half].iter().map(|c| c.norm_sqr()).collect();
    Ok(PowerSpectrum { frequencies_per_ps, power })
}

/// Period (ps) of the strongest non-DC spectral peak, optionally restricted
/// to periods inside `band`.
pub fn dominant_period(series: &ObservableSeries, band: Option<(f64, f64)>) -> Result<f64> {
    if let Some((lo, hi)) = band {
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Domain(format!("invalid period band ({lo}, {hi})")));
        }
    }
    let spectrum = power_spectrum(series)?;
    let scale = series.values.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
    let peak = spectrum
        .band_bins(band)
        .max_by(|&a, &b| spectrum.power[a].total_cmp(&spectrum.power[b]))
        .filter(|&k| spectrum.power[k] > 1e-24 * scale)
        .ok_or_else(|| Error::Analysis("no non-DC peak".into()))?;
    let p = &spectrum.power;
    let offset = if peak >= 2 && peak + 1 < p.len() && p[peak - 1] > 0.0 && p[peak + 1] > 0.0 {
        let (a, b, c) = (p[peak - 1].ln(), p[peak].ln(), p[peak + 1].ln());
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        }
    } else {
        0.0
    };
    let df = spectrum.frequencies_per_ps[1];
    Ok(1.0 / ((peak as f64 + offset) * df))
}
