use super::operator::{hermitian_eigenvalues, partial_trace_matrix, DensityMatrix, PSD_TOL};
use crate::error::{Error, Result};

/// −Σ λ ln λ (nats) over a spectrum, with 0·ln 0 = 0.
///
/// Eigenvalues in [−1e-9, 0) are treated as zero; anything more negative is
/// a positivity violation.
pub fn entropy_of_spectrum(eigenvalues: &[f64]) -> Result<f64> {
    spectrum_entropy(eigenvalues, PSD_TOL)
}

fn spectrum_entropy(eigenvalues: &[f64], tol: f64) -> Result<f64> {
    let mut s = 0.0;
    for &l in eigenvalues {
        if l < -tol {
            return Err(Error::Positivity(l));
        }
        if l > 0.0 {
            s -= l * l.ln();
        }
    }
    Ok(s.max(0.0))
}

/// von Neumann entropy S(ρ) = −Tr ρ ln ρ in nats.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    entropy_of_spectrum(&rho.eigenvalues())
}

/// Quantum mutual information I(A:B) = S(A) + S(B) − S(AB) in nats, where A
/// is `subsystem_a` and B every other subsystem of the layout.
pub fn mutual_information(rho: &DensityMatrix, subsystem_a: &[usize]) -> Result<f64> {
    mutual_information_within(rho, subsystem_a, PSD_TOL)
}

/// [`mutual_information`] with eigenvalues in [−`tol`, 0) treated as zero,
/// for states carrying integration error.
pub fn mutual_information_within(rho: &DensityMatrix, subsystem_a: &[usize], tol: f64) -> Result<f64> {
    let layout = rho.layout();
    let a = layout.normalize_subset(subsystem_a)?;
    let b: Vec<usize> = (0..layout.num_subsystems()).filter(|s| a.binary_search(s).is_err()).collect();
    if b.is_empty() {
        return Err(Error::Index("bipartition leaves subsystem B empty".into()));
    }
    let rho_a = partial_trace_matrix(rho.data(), layout, &a);
    let rho_b = partial_trace_matrix(rho.data(), layout, &b);
    let s_a = spectrum_entropy(&hermitian_eigenvalues(&rho_a), tol)?;
    let s_b = spectrum_entropy(&hermitian_eigenvalues(&rho_b), tol)?;
    let s_ab = spectrum_entropy(&rho.eigenvalues(), tol)?;
    let info = s_a + s_b - s_ab;
    if info < -tol {
        return Err(Error::Analysis(format!("negative mutual information {info:e}")));
    }
    Ok(info.max(0.0))
}
