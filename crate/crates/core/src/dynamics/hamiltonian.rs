use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{PureState, C64};
use crate::error::{Error, Result};

pub const MIN_QUBITS: usize = 2;
/// Dense storage bound: `2^7 = 128` basis states.
pub const MAX_QUBITS: usize = 7;

/// Hermitian Hamiltonian with its eigendecomposition `H V = V diag(ε)`.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    matrix: DMatrix<C64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<C64>,
    num_qubits: usize,
}

impl Hamiltonian {
    /// Diagonalize a Hermitian matrix acting on `num_qubits` qubits.
    pub fn from_matrix(matrix: DMatrix<C64>) -> Result<Self> {
        let dim = matrix.nrows();
        if dim != matrix.ncols() || dim < 2 || !dim.is_power_of_two() {
            return Err(Error::size(format!(
                "Hamiltonian must be square with 2^N rows, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let herm_err = (&matrix - matrix.adjoint()).camax();
        if herm_err > 1e-12 * matrix.camax().max(1.0) {
            return Err(Error::validation(format!("matrix is not Hermitian (max deviation {herm_err:e})")));
        }
        let eig = SymmetricEigen::new(matrix.clone());
        // Sort ascending so spectra and eigenvector columns have a stable order.
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let eigenvalues = DVector::from_fn(dim, |i, _| eig.eigenvalues[order[i]]);
        let eigenvectors = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(Self {
            matrix,
            eigenvalues,
            eigenvectors,
            num_qubits: dim.trailing_zeros() as usize,
        })
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Unitary matrix whose columns are the eigenvectors.
    pub fn eigenvectors(&self) -> &DMatrix<C64> {
        &self.eigenvectors
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Precompute the eigenbasis coefficients of `psi0` for repeated evaluation.
    pub fn evolver(&self, psi0: &PureState) -> Result<Evolver<'_>> {
        if psi0.dim() != self.dim() {
            return Err(Error::size(format!(
                "state dimension {} does not match Hamiltonian dimension {}",
                psi0.dim(),
                self.dim()
            )));
        }
        Ok(Evolver {
            hamiltonian: self,
            coefficients: self.eigenvectors.ad_mul(psi0.amplitudes()),
        })
    }
}

/// Heisenberg ring `H = -(J/2) Σ_j σ(j)·σ(j+1 mod N)`.
///
/// The sum runs over all `N` periodic bonds, so for `N = 2` the single
/// physical bond is counted twice.
pub fn build_heisenberg_ring(num_qubits: usize, coupling: f64) -> Result<Hamiltonian> {
    if !(MIN_QUBITS..=MAX_QUBITS).contains(&num_qubits) {
        return Err(Error::size(format!(
            "ring size {num_qubits} outside supported range {MIN_QUBITS}..={MAX_QUBITS}"
        )));
    }
    if coupling == 0.0 || !coupling.is_finite() {
        return Err(Error::validation(format!("coupling J must be finite and non-zero, got {coupling}")));
    }
    let n = num_qubits;
    let dim = 1usize << n;
    let mut h = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
    let scale = -0.5 * coupling;
    for j in 0..n {
        let k = (j + 1) % n;
        let mj = 1usize << (n - 1 - j);
        let mk = 1usize << (n - 1 - k);
        for i in 0..dim {
            let bj = i & mj != 0;
            let bk = i & mk != 0;
            // σz σz
            h[(i, i)] += scale * if bj == bk { 1.0 } else { -1.0 };
            // σx σx + σy σy = 2 (σ+σ- + σ-σ+)
            if bj != bk {
                h[(i ^ mj ^ mk, i)] += scale * 2.0;
            }
        }
    }
    Hamiltonian::from_matrix(h)
}

/// `ψ(t) = V e^{-iεt} V† ψ0`.
pub fn evolve_pure(psi0: &PureState, t: f64, hamiltonian: &Hamiltonian) -> Result<PureState> {
    Ok(hamiltonian.evolver(psi0)?.at(t))
}

/// A state expanded in the eigenbasis of a Hamiltonian, ready for evaluation
/// at arbitrary times.
#[derive(Debug, Clone)]
pub struct Evolver<'a> {
    hamiltonian: &'a Hamiltonian,
    coefficients: DVector<C64>,
}

impl Evolver<'_> {
    pub fn at(&self, t: f64) -> PureState {
        let phased = DVector::from_fn(self.coefficients.len(), |i, _| {
            let phase = -self.hamiltonian.eigenvalues[i] * t;
            self.coefficients[i] * C64::new(phase.cos(), phase.sin())
        });
        PureState::from_parts_unchecked(
            &self.hamiltonian.eigenvectors * phased,
            self.hamiltonian.num_qubits,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{fidelity, pauli, sample_random_state};

    fn kron_site(op: &[[C64; 2]; 2], site: usize, n: usize) -> DMatrix<C64> {
        let mut m = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
        for q in 0..n {
            let f = if q == site {
                DMatrix::from_fn(2, 2, |r, c| op[r][c])
            } else {
                DMatrix::identity(2, 2)
            };
            m = m.kronecker(&f);
        }
        m
    }

    #[test]
    fn matches_kronecker_construction() {
        for n in 2..=5 {
            let h = build_heisenberg_ring(n, 0.7).unwrap();
            let dim = 1 << n;
            let mut oracle = DMatrix::from_element(dim, dim, C64::new(0.0, 0.0));
            for j in 0..n {
                for p in pauli().iter() {
                    oracle += kron_site(p, j, n) * kron_site(p, (j + 1) % n, n);
                }
            }
            oracle *= C64::new(-0.35, 0.0);
            assert!((h.matrix() - oracle).camax() < 1e-14, "N={n}");
        }
    }

    #[test]
    fn two_site_spectrum_is_triplet_singlet() {
        let h = build_heisenberg_ring(2, 1.0).unwrap();
        let e = h.eigenvalues();
        for (got, want) in e.iter().zip([-1.0, -1.0, -1.0, 3.0]) {
            assert!((got - want).abs() < 1e-12, "{e:?}");
        }
    }

    #[test]
    fn three_site_is_traceless() {
        let h = build_heisenberg_ring(3, 1.0).unwrap();
        assert!(h.matrix().trace().norm() < 1e-12);
    }

    #[test]
    fn eigendecomposition_is_consistent() {
        for n in 2..=6 {
            let h = build_heisenberg_ring(n, 1.0).unwrap();
            let v = h.eigenvectors();
            let dim = h.dim();
            let unitarity = (v.ad_mul(v) - DMatrix::<C64>::identity(dim, dim)).camax();
            assert!(unitarity < 1e-10, "N={n} unitarity {unitarity}");
            let d = DMatrix::from_diagonal(&h.eigenvalues().map(|x| C64::new(x, 0.0)));
            let resid = (h.matrix() * v - v * d).camax();
            assert!(resid < 1e-10, "N={n} residual {resid}");
            assert!((h.matrix() - h.matrix().adjoint()).camax() < 1e-12);
        }
    }

    #[test]
    fn size_and_coupling_errors() {
        assert!(matches!(build_heisenberg_ring(1, 1.0), Err(Error::Size(_))));
        assert!(matches!(build_heisenberg_ring(8, 1.0), Err(Error::Size(_))));
        assert!(build_heisenberg_ring(3, 0.0).is_err());
    }

    #[test]
    fn evolution_identities() {
        let h = build_heisenberg_ring(3, 1.0).unwrap();
        let psi = sample_random_state(3, 9).unwrap();
        assert!((evolve_pure(&psi, 0.0, &h).unwrap().amplitudes() - psi.amplitudes()).camax() < 1e-14);
        // eigenstate picks up a phase only
        let col = h.eigenvectors().column(4).into_owned();
        let eigen = PureState::new(col.clone()).unwrap();
        let t = 1.3;
        let out = evolve_pure(&eigen, t, &h).unwrap();
        let phase = -h.eigenvalues()[4] * t;
        let want = col * C64::new(phase.cos(), phase.sin());
        assert!((out.amplitudes() - want).camax() < 1e-12);
        // dimension mismatch
        let other = sample_random_state(2, 1).unwrap();
        assert!(matches!(evolve_pure(&other, 1.0, &h), Err(Error::Size(_))));
    }

    #[test]
    fn fidelity_periods_small_rings() {
        use std::f64::consts::PI;
        for (n, period) in [(2usize, PI / 2.0), (3, 2.0 * PI / 3.0), (4, PI)] {
            let h = build_heisenberg_ring(n, 1.0).unwrap();
            let psi = sample_random_state(n, 17).unwrap();
            let back = evolve_pure(&psi, period, &h).unwrap();
            let f = fidelity(&psi, &back).unwrap();
            assert!((f - 1.0).abs() < 1e-8, "N={n} F={f}");
        }
    }
}
