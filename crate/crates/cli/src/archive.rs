//! Binary state archive.
//!
//! Little-endian. Header: magic `SPPH`, then `version`, `total_dim`,
//! `n_steps` (recorded states) and `stride` (integration steps between
//! records), each u32. Each record is its time (f64, ps) followed by the
//! row-major density matrix as (re, im) f64 pairs.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{CliError, CliResult};
use crate::formats::write_bytes;

pub const MAGIC: &[u8; 4] = b"SPPH";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct StateArchive {
    pub stride: u32,
    pub times_ps: Vec<f64>,
    pub states: Vec<DMatrix<C64>>,
}

impl StateArchive {
    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |m| m.nrows())
    }

    pub fn to_bytes(&self) -> CliResult<Vec<u8>> {
        let d = self.dim();
        if self.times_ps.len() != self.states.len() || self.states.iter().any(|m| m.shape() != (d, d)) {
            return Err(CliError::validation("archive records have inconsistent shapes"));
        }
        let count = |v: usize, what: &str| {
            u32::try_from(v).map_err(|_| CliError::validation(format!("{what} {v} does not fit the archive header")))
        };
        let mut out = Vec::with_capacity(HEADER_LEN + self.states.len() * (8 + 16 * d * d));
        out.extend_from_slice(MAGIC);
        for v in [VERSION, count(d, "dimension")?, count(self.states.len(), "record count")?, self.stride] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for (t, m) in self.times_ps.iter().zip(&self.states) {
            out.extend_from_slice(&t.to_le_bytes());
            for i in 0..d {
                for j in 0..d {
                    let z = m[(i, j)];
                    out.extend_from_slice(&z.re.to_le_bytes());
                    out.extend_from_slice(&z.im.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> CliResult<Self> {
        let bad = |msg: String| CliError::validation(format!("{}: {msg}", path.display()));
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(bad("not a state archive (missing SPPH header)".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
        let (version, d, n, stride) = (word(0), word(1) as usize, word(2) as usize, word(3));
        if version != VERSION {
            return Err(bad(format!("unsupported archive version {version}")));
        }
        let record = 8 + 16 * d * d;
        let expect = HEADER_LEN + n * record;
        if bytes.len() != expect {
            return Err(bad(format!("archive holds {} bytes, header implies {expect}", bytes.len())));
        }
        let f = |at: usize| f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
        let mut times_ps = Vec::with_capacity(n);
        let mut states = Vec::with_capacity(n);
        for r in 0..n {
            let base = HEADER_LEN + r * record;
            times_ps.push(f(base));
            states.push(DMatrix::from_fn(d, d, |i, j| {
                let at = base + 8 + 16 * (i * d + j);
                C64::new(f(at), f(at + 8))
            }));
        }
        Ok(Self { stride, times_ps, states })
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        write_bytes(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(path, &bytes)
    }
}
