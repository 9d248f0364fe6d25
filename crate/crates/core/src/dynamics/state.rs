use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use super::C64;
use crate::error::{Error, Result};
use crate::seed;

const NORM_TOL: f64 = 1e-10;

/// Normalized amplitude vector over the `2^N` Fock basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: DVector<C64>,
    num_qubits: usize,
}

impl PureState {
    /// Wrap an already normalized amplitude vector.
    pub fn new(amplitudes: DVector<C64>) -> Result<Self> {
        let num_qubits = qubits_for_len(amplitudes.len())?;
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::validation(format!("state norm is {norm}, expected 1")));
        }
        Ok(Self {
            amplitudes,
            num_qubits,
        })
    }

    /// Normalize and wrap. Fails on a zero vector.
    pub fn normalized(mut amplitudes: DVector<C64>) -> Result<Self> {
        let num_qubits = qubits_for_len(amplitudes.len())?;
        let norm = amplitudes.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::validation("cannot normalize a zero or non-finite vector"));
        }
        amplitudes.unscale_mut(norm);
        Ok(Self {
            amplitudes,
            num_qubits,
        })
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        let dim = 1usize << num_qubits;
        if index >= dim {
            return Err(Error::size(format!("basis index {index} >= dimension {dim}")));
        }
        let mut amplitudes = DVector::from_element(dim, C64::new(0.0, 0.0));
        amplitudes[index] = C64::new(1.0, 0.0);
        Ok(Self {
            amplitudes,
            num_qubits,
        })
    }

    pub(crate) fn from_parts_unchecked(amplitudes: DVector<C64>, num_qubits: usize) -> Self {
        debug_assert_eq!(amplitudes.len(), 1 << num_qubits);
        Self {
            amplitudes,
            num_qubits,
        }
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> DVector<C64> {
        self.amplitudes
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &PureState) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::size(format!(
                "inner product of states with dimensions {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// Permute qubit labels: qubit `q` of the result is qubit `perm[q]` of `self`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_qubits;
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::validation(format!("{perm:?} is not a permutation of {n} qubits")));
        }
        let mut out = DVector::from_element(self.dim(), C64::new(0.0, 0.0));
        for (i, amp) in self.amplitudes.iter().enumerate() {
            let mut j = 0usize;
            for (q, &src) in perm.iter().enumerate() {
                let bit = (i >> (n - 1 - src)) & 1;
                j |= bit << (n - 1 - q);
            }
            out[j] = *amp;
        }
        Ok(Self::from_parts_unchecked(out, n))
    }

    /// Rotate the global phase so the first amplitude above `tol` in modulus
    /// is real and positive.
    pub fn phase_fixed(&self, tol: f64) -> Self {
        let mut out = self.clone();
        if let Some(a) = self.amplitudes.iter().find(|a| a.norm() > tol) {
            let phase = a.conj() / a.norm();
            out.amplitudes.iter_mut().for_each(|x| *x *= phase);
        }
        out
    }
}

fn qubits_for_len(len: usize) -> Result<usize> {
    if len < 2 || !len.is_power_of_two() {
        return Err(Error::size(format!("amplitude length {len} is not 2^N with N >= 1")));
    }
    Ok(len.trailing_zeros() as usize)
}

fn complex_gaussian<R: Rng>(rng: &mut R) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Haar-random pure state: i.i.d. standard complex Gaussian amplitudes,
/// normalized. Deterministic in `seed`.
pub fn sample_random_state(num_qubits: usize, seed: u64) -> Result<PureState> {
    check_qubits(num_qubits)?;
    let mut rng = seed::rng(seed);
    let amps = DVector::from_fn(1 << num_qubits, |_, _| complex_gaussian(&mut rng));
    PureState::normalized(amps)
}

/// Random product state: each qubit drawn independently as a normalized
/// complex Gaussian 2-vector, then tensored.
pub fn sample_product_state(num_qubits: usize, seed: u64) -> Result<PureState> {
    check_qubits(num_qubits)?;
    let mut rng = seed::rng(seed);
    let mut amps = DVector::from_element(1, C64::new(1.0, 0.0));
    for _ in 0..num_qubits {
        let a = complex_gaussian(&mut rng);
        let b = complex_gaussian(&mut rng);
        let norm = (a.norm_sqr() + b.norm_sqr()).sqrt();
        let (a, b) = (a / norm, b / norm);
        let mut next = DVector::from_element(amps.len() * 2, C64::new(0.0, 0.0));
        for (i, x) in amps.iter().enumerate() {
            next[2 * i] = x * a;
            next[2 * i + 1] = x * b;
        }
        amps = next;
    }
    PureState::normalized(amps)
}

fn check_qubits(n: usize) -> Result<()> {
    if n == 0 || n > 20 {
        return Err(Error::size(format!("unsupported qubit count {n}")));
    }
    Ok(())
}
