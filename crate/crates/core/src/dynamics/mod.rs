//! Exact dynamics of Heisenberg rings and of a driven, dissipative qubit,
//! together with the single-qubit diagnostics used everywhere else.
//!
//! Basis convention: qubit 0 is the most significant bit of the Fock index,
//! i.e. states are ordered as the Kronecker product `q0 ⊗ q1 ⊗ … ⊗ q(N-1)`.

mod bloch;
mod hamiltonian;
mod lindblad;
mod spectrum;
mod state;

pub use bloch::{fidelity, reduce_all, reduce_to_bloch, single_particle_entropy, trace_distance, BlochVector};
pub use hamiltonian::{build_heisenberg_ring, evolve_pure, Evolver, Hamiltonian, MAX_QUBITS, MIN_QUBITS};
pub use lindblad::{Lindblad, LindbladParams, Qubit2};
pub use spectrum::{spectrum_frequencies, SpectrumInfo, DEFAULT_DEGENERACY_TOL};
pub use state::{sample_product_state, sample_random_state, PureState};

pub use num_complex::Complex64 as C64;

/// Pauli matrices as row-major 2×2 arrays, in the order x, y, z.
pub fn pauli() -> [[[C64; 2]; 2]; 3] {
    let o = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    [[[o, one], [one, o]], [[o, -i], [i, o]], [[one, o], [o, -one]]]
}
