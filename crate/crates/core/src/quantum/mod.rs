//! Dense operator algebra on spin ⊗ truncated-Fock product spaces.

mod entropy;
mod layout;
mod operator;
mod thermal;

pub use entropy::{entropy_of_spectrum, mutual_information, mutual_information_within, von_neumann_entropy};
pub use layout::HilbertLayout;
pub use operator::{annihilation, creation, embed, number, pauli, DensityMatrix, PauliAxis, QOperator, PSD_TOL};
pub use thermal::{bose_occupation, thermal_populations, thermal_state};

pub(crate) use operator::{hermitian_eigenvalues, subsystem_populations};
