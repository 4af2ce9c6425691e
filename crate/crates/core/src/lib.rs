//! Eigenvalue estimation with powers of the sine of a Hamiltonian.
//!
//! A reference state is filtered by `sin^n(H tau)`; the normalized energy of
//! the filtered state is assembled from the moments
//! `<phi0|cos(2 H tau m)|phi0>` and `<phi0|H cos(2 H tau m)|phi0>`, which a
//! single-ancilla circuit measures. The crate contains the Pauli-string
//! Hamiltonian model, a dense statevector simulator, second-order Trotter
//! circuits, the moment circuit with its noise models, the extended-precision
//! estimator, an exact dense oracle, a Monte-Carlo model of the
//! post-selection variant and the experiment drivers.

pub mod direct;
pub mod error;
pub mod estimator;
pub mod evolution;
pub mod experiments;
pub mod extended;
pub mod hamiltonian;
pub mod oracle;
pub mod sigma;
pub mod statevector;

pub use error::{PshoError, Result};
pub use estimator::{PshoEstimate, EstimatorConfig};
pub use evolution::{EvolutionMode, GateSequence};
pub use extended::ExtendedReal;
pub use hamiltonian::{Axis, Hamiltonian, HermitianMatrix, PauliTerm};
pub use oracle::Spectrum;
pub use sigma::{MomentTable, NoiseSpec};
pub use statevector::{Control, OneQubitGate, StateVector};

/// Chemical accuracy in hartree.
pub const CHEMICAL_ACCURACY: f64 = 0.0016;
