//! Text input formats, the projection document and output provenance.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spinphonon::projection::ProjectionResult;

use crate::error::{CliError, CliResult};

pub const TOOL_NAME: &str = "spinphonon";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Non-empty lines that are not `#` comments, with 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('#')
    })
}

/// Parses a finite number; `column` is 1-based and points at the field.
fn number(path: &Path, line: usize, column: usize, field: &str) -> CliResult<f64> {
    let token = field.trim();
    let column = column + (field.len() - field.trim_start().len());
    match token.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(CliError::parse(path, line, column, format!("non-finite value {v}"))),
        Err(_) if token.is_empty() => Err(CliError::parse(path, line, column, "empty field")),
        Err(_) => Err(CliError::parse(path, line, column, format!("cannot parse `{token}` as a number"))),
    }
}

/// One frequency (cm⁻¹) per line.
pub fn parse_frequencies(path: &Path, text: &str) -> CliResult<Vec<f64>> {
    let mut freqs = Vec::new();
    for (line, content) in data_lines(text) {
        let w = number(path, line, 1, content)?;
        if w.is_nan() || w <= 0.0 {
            return Err(CliError::parse(path, line, 1, format!("frequency {w} must be positive")));
        }
        freqs.push(w);
    }
    if freqs.is_empty() {
        return Err(CliError::parse(path, 1, 1, "no frequencies found"));
    }
    Ok(freqs)
}

/// Comma-separated coupling matrix: rows x, y, z; one column per mode (cm⁻¹).
pub fn parse_coupling(path: &Path, text: &str) -> CliResult<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut last_line = 1;
    for (line, content) in data_lines(text) {
        last_line = line;
        if rows.len() == 3 {
            return Err(CliError::parse(path, line, 1, "coupling has more than 3 rows"));
        }
        let mut column = 1;
        let mut row = Vec::new();
        for field in content.split(',') {
            row.push(number(path, line, column, field)?);
            column += field.chars().count() + 1;
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(CliError::parse(
                    path,
                    line,
                    1,
                    format!("row has {} columns, the first row has {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.len() != 3 {
        return Err(CliError::parse(path, last_line, 1, format!("coupling has {} rows, expected 3", rows.len())));
    }
    let m = rows[0].len();
    Ok(DMatrix::from_fn(3, m, |a, n| rows[a][n]))
}

/// JSON document of type `T`; syntax and schema errors carry line and column.
pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> CliResult<T> {
    serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        let message = match message.rfind(" at line ") {
            Some(i) => message[..i].to_string(),
            None => message,
        };
        CliError::parse(path, e.line(), e.column(), message)
    })
}

/// SHA-256 over labelled inputs; identifies what an output was made from.
#[derive(Debug, Clone, Default)]
pub struct InputHash(Sha256);

impl InputHash {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, label: &str, bytes: &[u8]) {
        for part in [label.as_bytes(), bytes] {
            self.0.update((part.len() as u64).to_le_bytes());
            self.0.update(part);
        }
    }

    pub fn hex(&self) -> String {
        format!("{:x}", self.0.clone().finalize())
    }
}

/// Comment line opening every text output.
pub fn provenance_line(config_sha256: &str) -> String {
    format!("# {TOOL_NAME} {TOOL_VERSION} config_sha256={config_sha256}\n")
}

/// Shortest round-trip rendering; infinities as `inf`.
pub fn fmt_value(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v:?}")
    }
}

/// Fixed-point rendering without a sign on zero.
pub fn fmt_fixed(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Projection result as stored on disk. Matrices are lists of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct ProjectionDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_sha256: Option<String>,
    /// Field at which the couplings were computed.
    pub reference_field_T: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singular_values_cm1: Option<Vec<f64>>,
    pub primary_freqs_cm1: Vec<f64>,
    /// 3 rows (x, y, z) × P.
    pub primary_couplings_cm1: Vec<Vec<f64>>,
    #[serde(default)]
    pub residual_freqs_cm1: Vec<f64>,
    /// P rows × Q.
    #[serde(default)]
    pub bilinear_couplings_cm2: Vec<Vec<f64>>,
    /// M × M; omitted for inline primaries-only documents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<Vec<Vec<f64>>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> CliResult<DMatrix<f64>> {
    // an empty P×0 block may be written as P empty rows or as no rows at all
    if ncols == 0 && (rows.is_empty() || rows.iter().all(|r| r.is_empty())) {
        return Ok(DMatrix::zeros(nrows, 0));
    }
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        let shape: Vec<usize> = rows.iter().map(|r| r.len()).collect();
        return Err(CliError::validation(format!(
            "{what}: expected {nrows} rows of {ncols} values, got row lengths {shape:?}"
        )));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::validation(format!("{what}: non-finite entry")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl ProjectionDoc {
    pub fn from_result(result: &ProjectionResult, reference_field_t: f64) -> Self {
        Self {
            generator: None,
            config_sha256: None,
            reference_field_T: reference_field_t,
            rank_tol: None,
            singular_values_cm1: None,
            primary_freqs_cm1: result.primary_freqs_cm1.clone(),
            primary_couplings_cm1: rows_of(&result.primary_couplings_cm1),
            residual_freqs_cm1: result.residual_freqs_cm1.clone(),
            bilinear_couplings_cm2: rows_of(&result.bilinear_couplings_cm2),
            rotation: Some(rows_of(&result.rotation)),
        }
    }

    pub fn to_result(&self) -> CliResult<ProjectionResult> {
        if !(self.reference_field_T > 0.0 && self.reference_field_T.is_finite()) {
            return Err(CliError::validation(format!(
                "reference_field_T must be positive, got {}",
                self.reference_field_T
            )));
        }
        let p = self.primary_freqs_cm1.len();
        let q = self.residual_freqs_cm1.len();
        let couplings = matrix_from_rows(&self.primary_couplings_cm1, 3, p, "primary_couplings_cm1")?;
        let bilinear = matrix_from_rows(&self.bilinear_couplings_cm2, p, q, "bilinear_couplings_cm2")?;
        let rotation = match &self.rotation {
            Some(rows) => matrix_from_rows(rows, p + q, p + q, "rotation")?,
            None => DMatrix::identity(p + q, p + q),
        };
        let result = ProjectionResult {
            primary_freqs_cm1: self.primary_freqs_cm1.clone(),
            primary_couplings_cm1: couplings,
            residual_freqs_cm1: self.residual_freqs_cm1.clone(),
            bilinear_couplings_cm2: bilinear,
            rotation,
        };
        result.validate()?;
        Ok(result)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("projection documents always serialize");
        s.push('\n');
        s
    }
}
