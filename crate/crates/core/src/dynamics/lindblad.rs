use nalgebra::{Matrix2, Matrix3, Matrix4, Vector3, Vector4};

use super::{pauli, BlochVector, C64};
use crate::error::{Error, Result};

/// 2×2 complex matrix (single-qubit operator or density matrix).
pub type Qubit2 = Matrix2<C64>;

/// Coefficients of `dρ/dt = -i[H, ρ] + 2 L ρ L† - {L†L, ρ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladParams {
    /// `H = h_x σx + h_y σy + h_z σz`.
    pub field: [f64; 3],
    pub jump: Qubit2,
}

impl Default for LindbladParams {
    fn default() -> Self {
        Self {
            field: [0.5, 0.3, 0.2],
            jump: sigma(0) * C64::new(0.1f64.sqrt(), 0.0),
        }
    }
}

impl LindbladParams {
    pub fn hamiltonian(&self) -> Qubit2 {
        (0..3).fold(Qubit2::zeros(), |acc, k| acc + sigma(k) * C64::new(self.field[k], 0.0))
    }
}

fn sigma(k: usize) -> Qubit2 {
    let p = pauli()[k];
    Qubit2::new(p[0][0], p[0][1], p[1][0], p[1][1])
}

/// Single-qubit Lindblad dynamics, solved exactly in the augmented Bloch
/// representation `x = (1, r_x, r_y, r_z)` where `dx/dt = G x`.
#[derive(Debug, Clone)]
pub struct Lindblad {
    params: LindbladParams,
    generator: Matrix4<f64>,
}

impl Default for Lindblad {
    fn default() -> Self {
        Self::new(LindbladParams::default())
    }
}

impl Lindblad {
    pub fn new(params: LindbladParams) -> Self {
        let mut lb = Self {
            params,
            generator: Matrix4::zeros(),
        };
        let half = C64::new(0.5, 0.0);
        let mut g = Matrix4::zeros();
        // Column 0: affine drift from ρ = 𝟙/2; columns 1..3: response to ½σ_k.
        let inputs = [Qubit2::identity() * half, sigma(0) * half, sigma(1) * half, sigma(2) * half];
        for (col, x) in inputs.iter().enumerate() {
            let d = lb.rhs(x);
            for a in 0..3 {
                g[(a + 1, col)] = (sigma(a) * d).trace().re;
            }
        }
        lb.generator = g;
        lb
    }

    pub fn params(&self) -> &LindbladParams {
        &self.params
    }

    /// Right-hand side of the master equation, evaluated literally.
    pub fn rhs(&self, rho: &Qubit2) -> Qubit2 {
        let h = self.params.hamiltonian();
        let l = &self.params.jump;
        let ld = l.adjoint();
        let ldl = ld * l;
        let i = C64::new(0.0, 1.0);
        -(h * rho - rho * h) * i + l * rho * ld * C64::new(2.0, 0.0) - (ldl * rho + rho * ldl)
    }

    /// Augmented generator `G`; row 0 is identically zero.
    pub fn generator(&self) -> &Matrix4<f64> {
        &self.generator
    }

    /// Exact channel over a time step, `exp(G dt)`, acting on augmented vectors.
    pub fn channel(&self, dt: f64) -> Matrix4<f64> {
        (self.generator * dt).exp()
    }

    /// Stationary Bloch vector, solving `M r = -b` for the linear part `M` and drift `b`.
    pub fn fixed_point(&self) -> Result<BlochVector> {
        let m: Matrix3<f64> = self.generator.fixed_view::<3, 3>(1, 1).into_owned();
        let b: Vector3<f64> = self.generator.fixed_view::<3, 1>(1, 0).into_owned();
        let r = m
            .lu()
            .solve(&(-b))
            .ok_or_else(|| Error::validation("Lindblad generator has no unique fixed point"))?;
        Ok(BlochVector::new(r[0], r[1], r[2]))
    }

    /// Bloch trajectory on `t_grid`, evaluated as `exp(G t) x0` at every time.
    pub fn solve_bloch(&self, r0: &BlochVector, t_grid: &[f64]) -> Result<Vec<BlochVector>> {
        check_grid(t_grid)?;
        let x0 = Vector4::new(1.0, r0.x(), r0.y(), r0.z());
        Ok(t_grid
            .iter()
            .map(|&t| {
                let x = if t == 0.0 { x0 } else { self.channel(t) * x0 };
                BlochVector::new(x[1], x[2], x[3])
            })
            .collect())
    }

    /// Density matrices on `t_grid` starting from `rho0`.
    pub fn solve(&self, rho0: &Qubit2, t_grid: &[f64]) -> Result<Vec<Qubit2>> {
        validate_density(rho0)?;
        let r0 = bloch_of(rho0);
        Ok(self
            .solve_bloch(&r0, t_grid)?
            .iter()
            .enumerate()
            .map(|(k, r)| if t_grid[k] == 0.0 { *rho0 } else { density_of(r) })
            .collect())
    }
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.first().is_some_and(|&t| t < 0.0) || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::validation("time grid must be increasing and start at t >= 0"));
    }
    Ok(())
}

/// Check Hermiticity, unit trace and positivity of a 2×2 density matrix.
pub fn validate_density(rho: &Qubit2) -> Result<()> {
    let herm = (rho - rho.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
    if herm > 1e-12 {
        return Err(Error::validation(format!("density matrix is not Hermitian (deviation {herm:e})")));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > 1e-12 || tr.im.abs() > 1e-12 {
        return Err(Error::validation(format!("density matrix trace is {tr}, expected 1")));
    }
    if bloch_of(rho).norm() > 1.0 + 1e-12 {
        return Err(Error::validation("density matrix is not positive semidefinite"));
    }
    Ok(())
}

pub fn bloch_of(rho: &Qubit2) -> BlochVector {
    BlochVector::new(
        (sigma(0) * rho).trace().re,
        (sigma(1) * rho).trace().re,
        (sigma(2) * rho).trace().re,
    )
}

pub fn density_of(r: &BlochVector) -> Qubit2 {
    let half = C64::new(0.5, 0.0);
    (Qubit2::identity() + sigma(0) * C64::new(r.x(), 0.0) + sigma(1) * C64::new(r.y(), 0.0) + sigma(2) * C64::new(r.z(), 0.0))
        * half
}
