//! Simulation configuration: JSON with unit-suffixed field names.
//!
//! Relative paths inside a configuration resolve against the directory of
//! the configuration file.

#![allow(non_snake_case)]

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spinphonon::dynamics::SpinParameters;
use spinphonon::projection::{project, scale_to_field, ProjectionResult, RawVibrationalModel, DEFAULT_RANK_TOL};
use spinphonon::rates::{relaxation_rates, Broadening, Lineshape, RateRequest};

use crate::error::{CliError, CliResult};
use crate::formats::{parse_coupling, parse_frequencies, parse_json, read_text, InputHash, ProjectionDoc};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinConfig {
    pub g_diag: [f64; 3],
    pub field_T: [f64; 3],
    /// Field at which the vibrational couplings were computed.
    pub reference_field_T: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilesInput {
    pub frequencies: PathBuf,
    pub coupling: PathBuf,
    #[serde(default)]
    pub rank_tol: Option<f64>,
}

/// Primary modes given directly, with their lifetimes (`null` = undamped).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimariesInput {
    pub freqs_cm1: Vec<f64>,
    /// 3 rows (x, y, z) × P.
    pub couplings_cm1: Vec<Vec<f64>>,
    pub lifetimes_ps: Vec<Option<f64>>,
}

/// Exactly one of the fields must be present.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VibrationalInput {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub files: Option<FilesInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<ProjectionDoc>,
    /// Path to a document written by `project`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primaries: Option<PrimariesInput>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineshapeName {
    #[default]
    Gaussian,
    Lorentzian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BroadeningConfig {
    pub lineshape: LineshapeName,
    pub width_cm1: f64,
}

impl Default for BroadeningConfig {
    fn default() -> Self {
        let b = Broadening::default();
        Self { lineshape: LineshapeName::Gaussian, width_cm1: b.width_cm1 }
    }
}

impl BroadeningConfig {
    pub fn to_core(self) -> Broadening {
        let lineshape = match self.lineshape {
            LineshapeName::Gaussian => Lineshape::Gaussian,
            LineshapeName::Lorentzian => Lineshape::Lorentzian,
        };
        Broadening { lineshape, width_cm1: self.width_cm1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_max_ps: f64,
    pub dt_ps: f64,
    pub record_stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservablesConfig {
    /// Record I(spin : mode k) for every primary mode.
    #[serde(default)]
    pub mutual_information: bool,
    /// Write the state archive.
    #[serde(default)]
    pub store_states: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub trajectory: Option<PathBuf>,
    #[serde(default)]
    pub states: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub spin: SpinConfig,
    pub vibrations: VibrationalInput,
    pub temperature_K: f64,
    #[serde(default)]
    pub broadening: BroadeningConfig,
    pub fock_levels: usize,
    pub time: TimeConfig,
    #[serde(default)]
    pub observables: ObservablesConfig,
    /// Level of each subsystem at t = 0 (spin first, 0 = excited).
    #[serde(default)]
    pub initial_levels: Option<Vec<usize>>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn positive(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::validation(format!("{name} must be positive and finite, got {v}")))
    }
}

impl SimulationConfig {
    /// Checks everything that does not need the input files.
    pub fn validate(&self) -> CliResult<()> {
        SpinParameters::new(self.spin.g_diag, self.spin.field_T)
            .map_err(|e| CliError::validation(format!("spin: {e}")))?;
        positive("spin.reference_field_T", self.spin.reference_field_T)?;
        if !(self.temperature_K >= 0.0 && self.temperature_K.is_finite()) {
            return Err(CliError::validation(format!(
                "temperature_K must be non-negative, got {}",
                self.temperature_K
            )));
        }
        positive("broadening.width_cm1", self.broadening.width_cm1)?;
        if self.fock_levels < 2 {
            return Err(CliError::validation(format!("fock_levels must be at least 2, got {}", self.fock_levels)));
        }
        positive("time.t_max_ps", self.time.t_max_ps)?;
        positive("time.dt_ps", self.time.dt_ps)?;
        if self.time.dt_ps > self.time.t_max_ps {
            return Err(CliError::validation("time.dt_ps exceeds time.t_max_ps"));
        }
        if self.time.record_stride == 0 {
            return Err(CliError::validation("time.record_stride must be at least 1"));
        }
        let v = &self.vibrations;
        let present = [v.files.is_some(), v.projection.is_some(), v.projection_file.is_some(), v.primaries.is_some()];
        if present.iter().filter(|&&p| p).count() != 1 {
            return Err(CliError::validation(
                "vibrations: give exactly one of `files`, `projection`, `projection_file`, `primaries`",
            ));
        }
        if let Some(p) = &v.primaries {
            if p.lifetimes_ps.len() != p.freqs_cm1.len() {
                return Err(CliError::validation(format!(
                    "vibrations.primaries: {} lifetimes for {} modes",
                    p.lifetimes_ps.len(),
                    p.freqs_cm1.len()
                )));
            }
            for (k, t) in p.lifetimes_ps.iter().enumerate() {
                if let Some(t) = t {
                    positive(&format!("vibrations.primaries.lifetimes_ps[{k}]"), *t)?;
                }
            }
            for (k, w) in p.freqs_cm1.iter().enumerate() {
                positive(&format!("vibrations.primaries.freqs_cm1[{k}]"), *w)?;
            }
        }
        if let Some(files) = &v.files {
            if let Some(tol) = files.rank_tol {
                if !(tol > 0.0 && tol < 1.0) {
                    return Err(CliError::validation(format!(
                        "vibrations.files.rank_tol must lie in (0, 1), got {tol}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Everything the dynamics needs, resolved from a configuration file.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub config: SimulationConfig,
    pub base_dir: PathBuf,
    pub spin: SpinParameters,
    /// Projection scaled to the simulation field.
    pub projection: ProjectionResult,
    pub rates_per_ps: Vec<f64>,
    pub config_sha256: String,
}

impl ResolvedConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = read_text(path)?;
        let config: SimulationConfig = parse_json(path, &text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::resolve(config, &base_dir, text.as_bytes())
    }

    /// `raw` is the configuration as written; it and every referenced input
    /// file feed the hash.
    pub fn resolve(config: SimulationConfig, base_dir: &Path, raw: &[u8]) -> CliResult<Self> {
        config.validate()?;
        let mut hash = InputHash::new();
        hash.add("config", raw);
        let spin = SpinParameters::new(config.spin.g_diag, config.spin.field_T)?;
        let v = &config.vibrations;
        let (reference, lifetimes) = if let Some(files) = &v.files {
            let fpath = base_dir.join(&files.frequencies);
            let cpath = base_dir.join(&files.coupling);
            let (ftext, ctext) = (read_text(&fpath)?, read_text(&cpath)?);
            hash.add("frequencies", ftext.as_bytes());
            hash.add("coupling", ctext.as_bytes());
            let model = RawVibrationalModel::new(
                parse_frequencies(&fpath, &ftext)?,
                parse_coupling(&cpath, &ctext)?,
                config.spin.reference_field_T,
            )?;
            (project(&model, files.rank_tol.unwrap_or(DEFAULT_RANK_TOL))?, None)
        } else if let Some(doc) = &v.projection {
            (doc_at_reference(doc, &config)?, None)
        } else if let Some(file) = &v.projection_file {
            let ppath = base_dir.join(file);
            let ptext = read_text(&ppath)?;
            hash.add("projection", ptext.as_bytes());
            let doc: ProjectionDoc = parse_json(&ppath, &ptext)?;
            (doc_at_reference(&doc, &config)?, None)
        } else {
            let p = v.primaries.as_ref().expect("validated: one input present");
            let n = p.freqs_cm1.len();
            if p.couplings_cm1.len() != 3 || p.couplings_cm1.iter().any(|r| r.len() != n) {
                return Err(CliError::validation(format!(
                    "vibrations.primaries.couplings_cm1 must be 3 rows of {n} values"
                )));
            }
            let g = nalgebra::DMatrix::from_fn(3, n, |a, k| p.couplings_cm1[a][k]);
            (ProjectionResult::primaries_only(p.freqs_cm1.clone(), g)?, Some(p.lifetimes_ps.clone()))
        };
        let projection = scale_to_field(&reference, spin.field_magnitude(), config.spin.reference_field_T)?;
        let rates_per_ps = match lifetimes {
            Some(l) => l.iter().map(|t| t.map_or(0.0, |t| 1.0 / t)).collect(),
            None => {
                // the residual bath does not depend on the field
                let req = RateRequest {
                    projection: &reference,
                    temperature_k: config.temperature_K,
                    broadening: config.broadening.to_core(),
                };
                relaxation_rates(&req)?.rates_per_ps
            }
        };
        if let Some(levels) = &config.initial_levels {
            let expect = projection.num_primary() + 1;
            if levels.len() != expect {
                return Err(CliError::validation(format!(
                    "initial_levels has {} entries, expected {expect}",
                    levels.len()
                )));
            }
            if levels[0] > 1 || levels[1..].iter().any(|&l| l >= config.fock_levels) {
                return Err(CliError::validation(format!("initial_levels {levels:?} out of range")));
            }
        }
        Ok(Self { config_sha256: hash.hex(), base_dir: base_dir.to_path_buf(), spin, projection, rates_per_ps, config })
    }

    pub fn n_modes(&self) -> usize {
        self.projection.num_primary()
    }

    pub fn initial_levels(&self) -> Vec<usize> {
        self.config.initial_levels.clone().unwrap_or_else(|| vec![0; self.n_modes() + 1])
    }

    pub fn lifetimes_ps(&self) -> Vec<f64> {
        self.rates_per_ps.iter().map(|r| if *r > 0.0 { 1.0 / r } else { f64::INFINITY }).collect()
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }
}

fn doc_at_reference(doc: &ProjectionDoc, config: &SimulationConfig) -> CliResult<ProjectionResult> {
    let result = doc.to_result()?;
    // bring the couplings to the configuration's reference field
    Ok(scale_to_field(&result, config.spin.reference_field_T, doc.reference_field_T)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn primaries_json() -> String {
        r#"{
  "spin": {"g_diag": [2.0, 2.0, 1.987], "field_T": [0.0, 0.0, 200.0], "reference_field_T": 200.0},
  "vibrations": {"primaries": {
    "freqs_cm1": [195.0, 240.0],
    "couplings_cm1": [[0.2, 0.4], [0.1, 0.2], [0.05, 0.1]],
    "lifetimes_ps": [43.3, null]
  }},
  "temperature_K": 65.0,
  "fock_levels": 3,
  "time": {"t_max_ps": 1.0, "dt_ps": 0.01, "record_stride": 10}
}"#
        .to_string()
    }

    fn load(text: &str) -> CliResult<ResolvedConfig> {
        let config: SimulationConfig = parse_json(Path::new("cfg.json"), text)?;
        ResolvedConfig::resolve(config, Path::new("."), text.as_bytes())
    }

    #[test]
    fn primaries_resolve_to_lifetimes() {
        let r = load(&primaries_json()).unwrap();
        assert_eq!(r.n_modes(), 2);
        assert_eq!(r.rates_per_ps, vec![1.0 / 43.3, 0.0]);
        assert!(r.lifetimes_ps()[1].is_infinite());
        assert_eq!(r.initial_levels(), vec![0, 0, 0]);
        assert_eq!(r.projection.primary_couplings_cm1[(0, 1)], 0.4);
    }

    #[test]
    fn hash_follows_the_bytes() {
        let a = load(&primaries_json()).unwrap().config_sha256;
        let b = load(&primaries_json().replace("65.0", "65.00")).unwrap().config_sha256;
        assert_ne!(a, b);
        assert_eq!(a, load(&primaries_json()).unwrap().config_sha256);
    }

    #[test]
    fn rejects_bad_inputs() {
        let base = primaries_json();
        for (from, to) in [
            ("\"dt_ps\": 0.01", "\"dt_ps\": -0.01"),
            ("\"fock_levels\": 3", "\"fock_levels\": 1"),
            ("[43.3, null]", "[43.3]"),
            ("[43.3, null]", "[0.0, null]"),
            ("\"temperature_K\": 65.0", "\"temperature_K\": -1.0"),
            ("\"record_stride\": 10", "\"record_stride\": 0"),
            ("\"g_diag\": [2.0, 2.0, 1.987]", "\"g_diag\": [2.0, 2.0, 0.0]"),
        ] {
            let text = base.replace(from, to);
            assert!(matches!(load(&text), Err(CliError::Validation(_))), "{to}");
        }
        // unknown field and a second vibrational input
        let typo = base.replace("\"temperature_K\"", "\"temperature_k\"");
        assert!(matches!(load(&typo), Err(CliError::Parse { .. })));
        let both = base.replace("\"vibrations\": {", "\"vibrations\": {\"projection_file\": \"p.json\", ");
        assert!(matches!(load(&both), Err(CliError::Validation(_))));
        let levels = base.replace("\"fock_levels\": 3", "\"fock_levels\": 3, \"initial_levels\": [0, 3, 0]");
        assert!(matches!(load(&levels), Err(CliError::Validation(_))));
    }
}
