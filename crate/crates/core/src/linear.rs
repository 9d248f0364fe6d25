//! Least-squares learning of Markovian propagators `x_{n+1} = P x_n` from
//! pairs of consecutive states.
//!
//! Affine dynamics `x_{n+1} = A x_n + a` become linear on augmented vectors
//! `x̃ = (1, x₁, …, x_d)`; complex states are stacked as `(Re, Im)`.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::C64;
use crate::error::{Error, Result};

/// Singular values below `RANK_TOL · σ_max` count as zero.
pub const RANK_TOL: f64 = 1e-10;

const MAGIC: &[u8; 5] = b"QPLP1";

/// Square propagator acting on column vectors: `x_next = P x`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePropagator {
    matrix: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct LinearFit {
    pub propagator: AffinePropagator,
    /// `‖X_n Pᵀ - X_{n+1}‖_F`.
    pub residual: f64,
    pub rank: usize,
}

impl AffinePropagator {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::size(format!(
                "propagator must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dim() {
            return Err(Error::size(format!(
                "vector of length {} for a {}-dimensional propagator",
                x.len(),
                self.dim()
            )));
        }
        Ok(&self.matrix * x)
    }

    /// `[x0, P x0, …, P^k x0]`.
    pub fn iterate(&self, x0: &DVector<f64>, k: usize) -> Result<Vec<DVector<f64>>> {
        let mut out = Vec::with_capacity(k + 1);
        out.push(x0.clone());
        for _ in 0..k {
            let next = self.apply(out.last().unwrap())?;
            out.push(next);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(13 + 8 * self.matrix.len());
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&(self.matrix.nrows() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.matrix.ncols() as u32).to_le_bytes());
        for r in 0..self.matrix.nrows() {
            for c in 0..self.matrix.ncols() {
                buf.extend_from_slice(&self.matrix[(r, c)].to_le_bytes());
            }
        }
        fs::File::create(path)?.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.len() < 13 || &bytes[..5] != MAGIC {
            return Err(Error::format(0, "not a propagator file"));
        }
        let rows = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
        let want = rows
            .checked_mul(cols)
            .and_then(|v| v.checked_mul(8))
            .and_then(|v| v.checked_add(13))
            .ok_or_else(|| Error::format(5, "matrix size overflows"))?;
        if bytes.len() != want {
            return Err(Error::format(13, format!("expected {want} bytes, found {}", bytes.len())));
        }
        let data: Vec<f64> = bytes[13..].chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        Self::new(DMatrix::from_row_slice(rows, cols, &data))
    }
}

/// Least-squares propagator from row-stacked states `x_now` (p × d) and
/// their successors `x_next` (p × d), via a rank-revealing SVD.
pub fn fit_linear_propagator(x_now: &DMatrix<f64>, x_next: &DMatrix<f64>) -> Result<LinearFit> {
    if x_now.shape() != x_next.shape() {
        return Err(Error::size(format!(
            "state matrices have shapes {:?} and {:?}",
            x_now.shape(),
            x_next.shape()
        )));
    }
    let (p, d) = x_now.shape();
    if d == 0 {
        return Err(Error::size("empty state vectors"));
    }
    let svd = x_now.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > RANK_TOL * smax).count();
    if p < d || rank < d {
        return Err(Error::Singular { rank, required: d });
    }
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("Vᵀ requested");
    // P_row = V Σ⁻¹ Uᵀ Y solves X P_row ≈ Y; the column-form propagator is its transpose.
    let uty = u.transpose() * x_next;
    let scaled = DMatrix::from_fn(d, d, |r, c| uty[(r, c)] / svd.singular_values[r]);
    let p_row = v_t.transpose() * scaled;
    let residual = (x_now * &p_row - x_next).norm();
    Ok(LinearFit {
        propagator: AffinePropagator { matrix: p_row.transpose() },
        residual,
        rank,
    })
}

/// `(1, x₁, …, x_d)`.
pub fn augment(x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(x.len() + 1, std::iter::once(1.0).chain(x.iter().copied()))
}

/// `(Re ψ, Im ψ)`.
pub fn stack_complex(psi: &DVector<C64>) -> DVector<f64> {
    let n = psi.len();
    DVector::from_fn(2 * n, |i, _| if i < n { psi[i].re } else { psi[i - n].im })
}

pub fn unstack_complex(x: &DVector<f64>) -> Result<DVector<C64>> {
    if x.len() % 2 != 0 {
        return Err(Error::size(format!("stacked vector has odd length {}", x.len())));
    }
    let n = x.len() / 2;
    Ok(DVector::from_fn(n, |i, _| C64::new(x[i], x[i + n])))
}

/// Row-stack a list of equal-length vectors.
pub fn rows(vectors: &[DVector<f64>]) -> DMatrix<f64> {
    let d = vectors.first().map_or(0, |v| v.len());
    DMatrix::from_fn(vectors.len(), d, |r, c| vectors[r][c])
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::dynamics::{build_heisenberg_ring, evolve_pure, sample_random_state, BlochVector, Lindblad};

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn recovers_any_fixed_map(d in 2usize..7, extra in 0usize..6, seed in 0u64..1000) {
            let mut rng = crate::seed::rng(seed);
            use rand::Rng;
            let truth = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
            let p = d + extra;
            let x = DMatrix::from_fn(p, d, |_, _| rng.random_range(-1.0..1.0));
            let y = &x * truth.transpose();
            let fit = fit_linear_propagator(&x, &y).unwrap();
            prop_assert!(rel_err(fit.propagator.matrix(), &truth) < 1e-10);
            prop_assert!(fit.residual < 1e-10);
        }
    }

    #[test]
    fn identity_dynamics() {
        let x = DMatrix::from_fn(6, 4, |r, c| ((r * 7 + c * 3) % 5) as f64 - 1.3 + (r * c) as f64 * 0.1);
        let fit = fit_linear_propagator(&x, &x).unwrap();
        assert!((fit.propagator.matrix() - DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
        let x0 = DVector::from_vec(vec![1.0, 0.2, -0.1, 0.3]);
        let traj = AffinePropagator::identity(4).iterate(&x0, 5).unwrap();
        assert!(traj.iter().all(|x| *x == x0));
        assert_eq!(fit.propagator.iterate(&x0, 0).unwrap(), vec![x0]);
    }

    #[test]
    fn rank_deficiency_names_rank() {
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0]);
        match fit_linear_propagator(&x, &x) {
            Err(Error::Singular { rank: 2, required: 3 }) => {}
            other => panic!("{other:?}"),
        }
        let short = DMatrix::from_element(2, 3, 1.0);
        assert!(matches!(fit_linear_propagator(&short, &short), Err(Error::Singular { .. })));
    }

    fn lindblad_samples(dt: f64, starts: &[BlochVector]) -> (DMatrix<f64>, DMatrix<f64>) {
        let lb = Lindblad::default();
        let mut now = Vec::new();
        let mut next = Vec::new();
        for r in starts {
            let traj = lb.solve_bloch(r, &[0.0, dt]).unwrap();
            now.push(augment(&traj[0].0));
            next.push(augment(&traj[1].0));
        }
        (rows(&now), rows(&next))
    }

    fn four_starts() -> Vec<BlochVector> {
        vec![
            BlochVector::new(0.0, 0.0, 1.0),
            BlochVector::new(1.0, 0.0, 0.0),
            BlochVector::new(0.0, 1.0, 0.0),
            BlochVector::new(-0.3, 0.2, -0.5),
        ]
    }

    #[test]
    fn lindblad_four_samples_reproduce_trajectory() {
        let dt = 0.1;
        let (x, y) = lindblad_samples(dt, &four_starts());
        let fit = fit_linear_propagator(&x, &y).unwrap();
        assert_eq!(fit.rank, 4);
        let p = fit.propagator.matrix();
        for c in 0..4 {
            let want = if c == 0 { 1.0 } else { 0.0 };
            assert!((p[(0, c)] - want).abs() < 1e-12);
        }
        let r0 = BlochVector::new(0.6, -0.3, 0.1);
        let traj = fit.propagator.iterate(&augment(&r0.0), 1000).unwrap();
        let grid: Vec<f64> = (0..=1000).map(|k| k as f64 * dt).collect();
        let exact = Lindblad::default().solve_bloch(&r0, &grid).unwrap();
        for (x, e) in traj.iter().zip(&exact) {
            assert!((x[0] - 1.0).abs() < 1e-9);
            let r = BlochVector::new(x[1], x[2], x[3]);
            assert!(crate::dynamics::trace_distance(&r, e) < 1e-8);
            assert!(r.norm() <= 1.0 + 1e-6);
        }
    }

    #[test]
    fn two_fitted_steps_equal_exact_double_step() {
        let dt = 0.25;
        let (x, y) = lindblad_samples(dt, &four_starts());
        let fit = fit_linear_propagator(&x, &y).unwrap();
        let p = fit.propagator.matrix();
        let exact = Lindblad::default().channel(2.0 * dt);
        let exact = DMatrix::from_fn(4, 4, |r, c| exact[(r, c)]);
        assert!((p * p - exact).amax() < 1e-9);
    }

    #[test]
    fn wavefunction_propagator_needs_two_omega_samples() {
        let h = build_heisenberg_ring(2, 1.0).unwrap();
        let dt = 0.3;
        let pairs = |seeds: std::ops::Range<u64>| {
            let mut now = Vec::new();
            let mut next = Vec::new();
            for s in seeds {
                let psi = sample_random_state(2, s).unwrap();
                let later = evolve_pure(&psi, dt, &h).unwrap();
                now.push(stack_complex(psi.amplitudes()));
                next.push(stack_complex(later.amplitudes()));
            }
            (rows(&now), rows(&next))
        };
        // 2Ω - 1 = 7 samples leave the real 8-dimensional map underdetermined.
        let (x, y) = pairs(0..7);
        assert!(matches!(fit_linear_propagator(&x, &y), Err(Error::Singular { rank: 7, required: 8 })));
        let (x, y) = pairs(0..8);
        let fit = fit_linear_propagator(&x, &y).unwrap();
        for s in 100..110 {
            let psi = sample_random_state(2, s).unwrap();
            let want = evolve_pure(&psi, dt, &h).unwrap();
            let got = unstack_complex(&fit.propagator.apply(&stack_complex(psi.amplitudes())).unwrap()).unwrap();
            assert!((got - want.amplitudes()).camax() < 1e-8);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let p = AffinePropagator::new(DMatrix::from_fn(3, 3, |r, c| (r as f64) - 0.5 * c as f64 + 1e-3)).unwrap();
        p.save(&path).unwrap();
        assert_eq!(AffinePropagator::load(&path).unwrap(), p);
        std::fs::write(&path, b"junk").unwrap();
        assert!(AffinePropagator::load(&path).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let p = AffinePropagator::identity(3);
        assert!(p.apply(&DVector::from_element(2, 1.0)).is_err());
        assert!(AffinePropagator::new(DMatrix::zeros(2, 3)).is_err());
    }
}
