use serde::{Deserialize, Serialize};

use super::PureState;
use crate::error::{Error, Result};

/// Real 3-vector `r` with `ρ = ½(𝟙 + r·σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlochVector(pub [f64; 3]);

impl BlochVector {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self([x, y, z])
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn y(&self) -> f64 {
        self.0[1]
    }

    pub fn z(&self) -> f64 {
        self.0[2]
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self([s[0], s[1], s[2]])
    }
}

/// Bloch vector of `qubit`: `r_a = ⟨ψ|σ_a^(qubit)|ψ⟩`.
pub fn reduce_to_bloch(psi: &PureState, qubit: usize) -> Result<BlochVector> {
    let n = psi.num_qubits();
    if qubit >= n {
        return Err(Error::Index { index: qubit, len: n });
    }
    let amps = psi.amplitudes();
    let mask = 1usize << (n - 1 - qubit);
    let mut z = 0.0;
    let mut rho01 = super::C64::new(0.0, 0.0);
    for i in 0..amps.len() {
        if i & mask == 0 {
            let a0 = amps[i];
            let a1 = amps[i | mask];
            z += a0.norm_sqr() - a1.norm_sqr();
            rho01 += a0 * a1.conj();
        }
    }
    // ρ01 = (r_x - i r_y) / 2
    Ok(BlochVector::new(2.0 * rho01.re, -2.0 * rho01.im, z))
}

/// Bloch vectors of every qubit, in qubit order.
pub fn reduce_all(psi: &PureState) -> Vec<BlochVector> {
    (0..psi.num_qubits())
        .map(|q| reduce_to_bloch(psi, q).expect("qubit index in range"))
        .collect()
}

/// Qubit trace distance in Bloch form, `½|r1 - r2|`.
pub fn trace_distance(r1: &BlochVector, r2: &BlochVector) -> f64 {
    let d: f64 = r1.0.iter().zip(&r2.0).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * d.sqrt()
}

/// Von Neumann entropy (nats) of the qubit state with Bloch vector `r`.
pub fn single_particle_entropy(r: &BlochVector) -> f64 {
    let len = r.norm().min(1.0);
    let xlnx = |x: f64| if x <= 0.0 { 0.0 } else { x * x.ln() };
    let plus = (0.5 * (1.0 + len)).clamp(0.0, 1.0);
    let minus = (0.5 * (1.0 - len)).clamp(0.0, 1.0);
    -(xlnx(plus) + xlnx(minus))
}

/// `|⟨ψ0|ψt⟩|²`.
pub fn fidelity(psi0: &PureState, psit: &PureState) -> Result<f64> {
    Ok(psi0.inner(psit)?.norm_sqr())
}

#[cfg(test)]
mod tests {
    use nalgebra::{DMatrix, DVector};

    use super::*;
    use crate::dynamics::{pauli, sample_product_state, sample_random_state, C64};

    /// Explicit partial trace: ρ_red[a][b] = Σ_env ψ(a, env) ψ*(b, env).
    fn partial_trace_oracle(psi: &PureState, qubit: usize) -> [[C64; 2]; 2] {
        let n = psi.num_qubits();
        let amps = psi.amplitudes();
        let mut rho = [[C64::new(0.0, 0.0); 2]; 2];
        for env in 0..(1usize << (n - 1)) {
            // Insert the kept bit at position `qubit` into the environment index.
            let low_bits = n - 1 - qubit;
            let high = env >> low_bits;
            let low = env & ((1 << low_bits) - 1);
            let idx = |bit: usize| (high << (low_bits + 1)) | (bit << low_bits) | low;
            for a in 0..2 {
                for b in 0..2 {
                    rho[a][b] += amps[idx(a)] * amps[idx(b)].conj();
                }
            }
        }
        rho
    }

    fn bloch_from_rho(rho: &[[C64; 2]; 2]) -> [f64; 3] {
        let p = pauli();
        let mut r = [0.0; 3];
        for (k, s) in p.iter().enumerate() {
            let mut tr = C64::new(0.0, 0.0);
            for a in 0..2 {
                for b in 0..2 {
                    tr += rho[a][b] * s[b][a];
                }
            }
            r[k] = tr.re;
        }
        r
    }

    #[test]
    fn matches_partial_trace_oracle() {
        for n in 1..=5 {
            for seed in 0..100u64 {
                let psi = if n == 1 {
                    PureState::normalized(DVector::from_vec(vec![C64::new(0.3, 0.1), C64::new(-0.2, 0.9)])).unwrap()
                } else {
                    sample_random_state(n, seed).unwrap()
                };
                for q in 0..n {
                    let r = reduce_to_bloch(&psi, q).unwrap();
                    let o = bloch_from_rho(&partial_trace_oracle(&psi, q));
                    for k in 0..3 {
                        assert!((r.0[k] - o[k]).abs() < 1e-12, "N={n} q={q} seed={seed}");
                    }
                    assert!(r.norm() <= 1.0 + 1e-10);
                }
                if n == 1 {
                    break;
                }
            }
        }
    }

    #[test]
    fn matches_operator_expectation() {
        // Second route: ⟨ψ|σ ⊗ 𝟙|ψ⟩ with a dense Kronecker operator.
        let n = 3;
        let psi = sample_random_state(n, 42).unwrap();
        let p = pauli();
        for q in 0..n {
            let r = reduce_to_bloch(&psi, q).unwrap();
            for k in 0..3 {
                let mut m = DMatrix::from_element(1, 1, C64::new(1.0, 0.0));
                for site in 0..n {
                    let f = if site == q {
                        DMatrix::from_fn(2, 2, |a, b| p[k][a][b])
                    } else {
                        DMatrix::identity(2, 2)
                    };
                    m = m.kronecker(&f);
                }
                let e = psi.amplitudes().dotc(&(m * psi.amplitudes()));
                assert!((e.re - r.0[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn basis_and_bell_states() {
        let zero = PureState::basis(3, 0).unwrap();
        for q in 0..3 {
            assert_eq!(reduce_to_bloch(&zero, q).unwrap(), BlochVector::new(0.0, 0.0, 1.0));
        }
        let s = 0.5f64.sqrt();
        let bell = PureState::new(DVector::from_vec(vec![
            C64::new(s, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(s, 0.0),
        ]))
        .unwrap();
        for q in 0..2 {
            assert!(reduce_to_bloch(&bell, q).unwrap().norm() < 1e-15);
        }
        assert!(matches!(reduce_to_bloch(&bell, 2), Err(Error::Index { index: 2, len: 2 })));
    }

    #[test]
    fn product_state_marginals_are_pure() {
        for seed in 0..20 {
            let psi = sample_product_state(5, seed).unwrap();
            for r in reduce_all(&psi) {
                assert!((r.norm() - 1.0).abs() < 1e-12);
                assert!(single_particle_entropy(&r) < 1e-10);
            }
        }
    }

    #[test]
    fn trace_distance_cases() {
        let up = BlochVector::new(0.0, 0.0, 1.0);
        let down = BlochVector::new(0.0, 0.0, -1.0);
        let mixed = BlochVector::default();
        assert_eq!(trace_distance(&up, &up), 0.0);
        assert_eq!(trace_distance(&up, &down), 1.0);
        assert_eq!(trace_distance(&up, &mixed), 0.5);
    }

    #[test]
    fn entropy_cases() {
        assert_eq!(single_particle_entropy(&BlochVector::new(0.0, 1.0, 0.0)), 0.0);
        assert!((single_particle_entropy(&BlochVector::default()) - 2f64.ln()).abs() < 1e-15);
        // slightly outside the ball is clamped rather than producing NaN
        assert_eq!(single_particle_entropy(&BlochVector::new(0.0, 0.0, 1.0 + 1e-11)), 0.0);
    }

    #[test]
    fn fidelity_cases() {
        let a = sample_random_state(3, 1).unwrap();
        assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-14);
        let b0 = PureState::basis(2, 0).unwrap();
        let b1 = PureState::basis(2, 1).unwrap();
        assert_eq!(fidelity(&b0, &b1).unwrap(), 0.0);
        assert!(fidelity(&a, &b0).is_err());
    }
}
