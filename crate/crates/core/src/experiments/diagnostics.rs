use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{SamplingGrid, TrajectoryDataset};
use crate::dynamics::{
    build_heisenberg_ring, fidelity, reduce_to_bloch, sample_product_state, sample_random_state,
    single_particle_entropy, BlochVector, Hamiltonian, PureState,
};
use crate::error::{Error, Result};
use crate::seed::{self, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    pub sizes: Vec<usize>,
    pub coupling: f64,
    /// States averaged per track.
    pub count: usize,
    pub grid: SamplingGrid,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsTrack {
    pub num_qubits: usize,
    pub times: Vec<f64>,
    /// Mean over states and qubits of the single-particle entropy (nats).
    pub entropy_random: Vec<f64>,
    pub entropy_product: Vec<f64>,
    /// Mean fidelity `|⟨ψ(0)|ψ(t)⟩|²` over random states.
    pub fidelity_mean: Vec<f64>,
    /// Recurrence period of the fidelity, if one is found.
    pub period: Option<f64>,
}

fn mean_entropy(psi: &PureState) -> Result<f64> {
    let n = psi.num_qubits();
    let mut s = 0.0;
    for q in 0..n {
        s += single_particle_entropy(&reduce_to_bloch(psi, q)?);
    }
    Ok(s / n as f64)
}

/// Fidelity of each of `count` random states against itself over `times`.
pub fn fidelity_tracks(h: &Hamiltonian, count: usize, times: &[f64], seed: u64) -> Result<Vec<Vec<f64>>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let psi0 = sample_random_state(h.num_qubits(), seed::derive(seed, stream::STATE, i as u64))?;
            let ev = h.evolver(&psi0)?;
            times.iter().map(|&t| fidelity(&psi0, &ev.at(t))).collect()
        })
        .collect()
}

fn entropy_track(
    h: &Hamiltonian,
    count: usize,
    times: &[f64],
    seed: u64,
    sample: fn(usize, u64) -> Result<PureState>,
) -> Result<Vec<f64>> {
    let per_state = (0..count)
        .into_par_iter()
        .map(|i| {
            let psi0 = sample(h.num_qubits(), seed::derive(seed, stream::STATE, i as u64))?;
            let ev = h.evolver(&psi0)?;
            times.iter().map(|&t| mean_entropy(&ev.at(t))).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(column_means(&per_state))
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let k = rows.len() as f64;
    let len = rows.first().map_or(0, |r| r.len());
    (0..len).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / k).collect()
}

/// Entropy and fidelity tracks per ring size.
pub fn diagnostics_run(config: &DiagnosticsConfig) -> Result<Vec<DiagnosticsTrack>> {
    if config.count == 0 {
        return Err(Error::config("diagnostics need at least one state"));
    }
    let times: Vec<f64> = (0..config.grid.num_steps).map(|k| config.grid.time(k)).collect();
    config
        .sizes
        .iter()
        .map(|&n| {
            let h = build_heisenberg_ring(n, config.coupling)?;
            let fid = fidelity_tracks(&h, config.count, &times, seed::derive(config.seed, stream::STATE, n as u64))?;
            let period = detect_period(&fid, config.grid.base_step);
            Ok(DiagnosticsTrack {
                num_qubits: n,
                entropy_random: entropy_track(&h, config.count, &times, config.seed, sample_random_state)?,
                entropy_product: entropy_track(&h, config.count, &times, config.seed, sample_product_state)?,
                fidelity_mean: column_means(&fid),
                times: times.clone(),
                period,
            })
        })
        .collect()
}

/// Mean single-particle entropy over records and qubits at every stored step.
pub fn dataset_entropy_track(dataset: &TrajectoryDataset) -> Vec<f64> {
    let steps = dataset.grid.num_steps;
    let n = dataset.num_qubits;
    let total = (dataset.len() * n) as f64;
    (0..steps)
        .map(|k| {
            let mut s = 0.0;
            for rec in &dataset.records {
                for q in 0..n {
                    let r = BlochVector::new(rec.bloch[[k, q, 0]], rec.bloch[[k, q, 1]], rec.bloch[[k, q, 2]]);
                    s += single_particle_entropy(&r);
                }
            }
            s / total
        })
        .collect()
}

/// Period of a set of equally sampled signals from their averaged
/// autocorrelation: the first local maximum above one half, after the
/// correlation has first gone negative, refined by parabolic interpolation.
pub fn detect_period(signals: &[Vec<f64>], dt: f64) -> Option<f64> {
    let len = signals.iter().map(|s| s.len()).min()?;
    if len < 4 {
        return None;
    }
    let max_lag = len / 2;
    let mut acf = vec![0.0; max_lag + 1];
    for s in signals {
        let mean = s[..len].iter().sum::<f64>() / len as f64;
        let x: Vec<f64> = s[..len].iter().map(|v| v - mean).collect();
        for (lag, a) in acf.iter_mut().enumerate() {
            let c: f64 = (0..len - lag).map(|k| x[k] * x[k + lag]).sum();
            *a += c / (len - lag) as f64;
        }
    }
    if acf[0] <= 0.0 {
        return None;
    }
    let norm = acf[0];
    acf.iter_mut().for_each(|a| *a /= norm);
    let start = acf.iter().position(|&a| a < 0.0)?;
    (start.max(1)..max_lag).find_map(|l| {
        let (a, b, c) = (acf[l - 1], acf[l], acf[l + 1]);
        (b >= a && b >= c && b > 0.5).then(|| {
            let denom = a - 2.0 * b + c;
            let shift = if denom.abs() > 1e-15 { 0.5 * (a - c) / denom } else { 0.0 };
            (l as f64 + shift) * dt
        })
    })
}

/// Columns `N, time, entropy_random, entropy_product, fidelity_mean`.
pub fn write_diagnostics_csv<W: Write>(out: W, tracks: &[DiagnosticsTrack]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["N", "time", "entropy_random", "entropy_product", "fidelity_mean"])?;
    for t in tracks {
        for k in 0..t.times.len() {
            w.write_record(&[
                t.num_qubits.to_string(),
                format!("{}", t.times[k]),
                format!("{:.17e}", t.entropy_random[k]),
                format!("{:.17e}", t.entropy_product[k]),
                format!("{:.17e}", t.fidelity_mean[k]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
