//! WebAssembly bindings for the browser demo. Every function returns a flat
//! `Float64Array`; layouts are documented per function.

use nalgebra::DVector;
use qprop::dataset::sample_bloch_ball;
use qprop::dynamics::{
    build_heisenberg_ring, fidelity, reduce_all, sample_product_state, sample_random_state, single_particle_entropy,
    spectrum_frequencies, trace_distance, BlochVector, Lindblad, DEFAULT_DEGENERACY_TOL,
};
use qprop::linear::{augment, fit_linear_propagator, rows};
use wasm_bindgen::prelude::*;

fn js_err(e: qprop::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Exact ring evolution of one random (or product) state.
///
/// Layout: `steps` rows of `[t, S̄, r_x, r_y, r_z]`, where `S̄` is the mean
/// single-qubit entropy and `r` the Bloch vector of qubit 0.
#[wasm_bindgen]
pub fn ring_trajectory(n: usize, coupling: f64, product: bool, seed: u64, dt: f64, steps: usize) -> Result<Vec<f64>, JsError> {
    let h = build_heisenberg_ring(n, coupling).map_err(js_err)?;
    let psi0 = if product {
        sample_product_state(n, seed)
    } else {
        sample_random_state(n, seed)
    }
    .map_err(js_err)?;
    let evolver = h.evolver(&psi0).map_err(js_err)?;
    let mut out = Vec::with_capacity(steps * 5);
    for k in 0..steps {
        let t = k as f64 * dt;
        let r = reduce_all(&evolver.at(t));
        let s = r.iter().map(single_particle_entropy).sum::<f64>() / n as f64;
        out.extend([t, s, r[0].x(), r[0].y(), r[0].z()]);
    }
    Ok(out)
}

/// Spectral summary and mean return fidelity.
///
/// Layout: `[f_min, f_max, N_uni, Δ_max, F(t_0), F(t_1), …]` with
/// `t_k = k·dt` averaged over `count` random states.
#[wasm_bindgen]
pub fn spectrum_and_fidelity(n: usize, coupling: f64, count: usize, seed: u64, dt: f64, steps: usize) -> Result<Vec<f64>, JsError> {
    let h = build_heisenberg_ring(n, coupling).map_err(js_err)?;
    let s = spectrum_frequencies(&h, DEFAULT_DEGENERACY_TOL);
    let mut out = vec![s.f_min, s.f_max, s.num_unique as f64, s.nyquist_period()];
    let mut mean = vec![0.0; steps];
    for i in 0..count.max(1) {
        let psi0 = sample_random_state(n, seed.wrapping_add(i as u64)).map_err(js_err)?;
        let evolver = h.evolver(&psi0).map_err(js_err)?;
        for (k, m) in mean.iter_mut().enumerate() {
            *m += fidelity(&psi0, &evolver.at(k as f64 * dt)).map_err(js_err)? / count.max(1) as f64;
        }
    }
    out.extend(mean);
    Ok(out)
}

/// Fit the affine Bloch propagator of the damped qubit from four one-step
/// samples and roll it out against the exact solution.
///
/// Layout: `steps + 1` rows of `[t, exact r_x, r_y, r_z, fitted r_x, r_y, r_z, trace distance]`.
#[wasm_bindgen]
pub fn lindblad_recovery(seed: u64, dt: f64, steps: usize) -> Result<Vec<f64>, JsError> {
    let lb = Lindblad::default();
    let starts: Vec<BlochVector> = (0..4).map(|i| sample_bloch_ball(seed.wrapping_add(i))).collect();
    let mut now = Vec::new();
    let mut next = Vec::new();
    for r in &starts {
        let pair = lb.solve_bloch(r, &[0.0, dt]).map_err(js_err)?;
        now.push(augment(&pair[0].0));
        next.push(augment(&pair[1].0));
    }
    let fit = fit_linear_propagator(&rows(&now), &rows(&next)).map_err(js_err)?;
    let r0 = sample_bloch_ball(seed.wrapping_add(1000));
    let grid: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    let exact = lb.solve_bloch(&r0, &grid).map_err(js_err)?;
    let fitted: Vec<DVector<f64>> = fit.propagator.iterate(&augment(&r0.0), steps).map_err(js_err)?;
    let mut out = Vec::with_capacity((steps + 1) * 8);
    for ((t, e), f) in grid.iter().zip(&exact).zip(&fitted) {
        let r = BlochVector::new(f[1], f[2], f[3]);
        out.extend([*t, e.x(), e.y(), e.z(), r.x(), r.y(), r.z(), trace_distance(e, &r)]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts() {
        let t = ring_trajectory(3, 1.0, true, 1, 0.1, 10).unwrap();
        assert_eq!(t.len(), 50);
        assert!(t[1].abs() < 1e-12, "product states start unentangled");
        let f = spectrum_and_fidelity(5, 1.0, 4, 2, 0.1, 8).unwrap();
        assert_eq!(f.len(), 12);
        assert!((f[1] - 0.9925).abs() < 1e-3);
        assert!((f[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lindblad_fit_tracks_exact_solution() {
        let out = lindblad_recovery(3, 0.1, 500).unwrap();
        let worst = out.chunks(8).map(|row| row[7]).fold(0.0, f64::max);
        assert!(worst < 1e-8, "{worst}");
    }
}
