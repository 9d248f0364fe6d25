use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::Hamiltonian;

pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-9;

/// Distinct positive transition frequencies `f = (ε_n - ε_m) / 2π`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumInfo {
    pub frequencies: Vec<f64>,
    pub f_min: f64,
    pub f_max: f64,
    pub num_unique: usize,
}

impl SpectrumInfo {
    /// Largest sampling period that resolves `f_max`, `1 / (2 f_max)`.
    pub fn nyquist_period(&self) -> f64 {
        0.5 / self.f_max
    }
}

pub fn spectrum_frequencies(hamiltonian: &Hamiltonian, degeneracy_tol: f64) -> SpectrumInfo {
    let e = hamiltonian.eigenvalues();
    let mut gaps: Vec<f64> = Vec::with_capacity(e.len() * e.len() / 2);
    for i in 0..e.len() {
        for j in 0..i {
            let d = e[i] - e[j];
            if d > degeneracy_tol {
                gaps.push(d);
            }
        }
    }
    gaps.sort_by(f64::total_cmp);
    let mut unique: Vec<f64> = Vec::new();
    for g in gaps {
        // Cluster by distance to the cluster's first member.
        match unique.last() {
            Some(&u) if g - u <= degeneracy_tol => {}
            _ => unique.push(g),
        }
    }
    let frequencies: Vec<f64> = unique.into_iter().map(|d| d / (2.0 * PI)).collect();
    SpectrumInfo {
        f_min: frequencies.first().copied().unwrap_or(0.0),
        f_max: frequencies.last().copied().unwrap_or(0.0),
        num_unique: frequencies.len(),
        frequencies,
    }
}
