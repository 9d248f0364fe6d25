use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{memory_sweep, ExperimentReport, SweepSpec};
use crate::dataset::TrajectoryDataset;
use crate::dynamics::{build_heisenberg_ring, spectrum_frequencies, DEFAULT_DEGENERACY_TOL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub num_qubits: usize,
    pub mode: String,
    pub h_nec: Option<usize>,
    pub log2_h_nec: Option<f64>,
    pub neg_log2_f_min: f64,
    pub log2_num_frequencies: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub mode: String,
    /// Slope of `log₂ h_nec` against `N`.
    pub alpha: f64,
    pub intercept: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub points: Vec<ScalingPoint>,
    pub fits: Vec<SlopeFit>,
}

/// Ordinary least-squares line through `(x, y)`; `None` with fewer than two
/// distinct abscissae.
pub fn fit_slope(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// `h_nec` against `N` for one stride and future, beside the spectral
/// quantities of the ring, with a slope fit per mode over resolved cells.
pub fn scaling_report(report: &ExperimentReport, coupling: f64, stride: usize, future: usize) -> Result<ScalingReport> {
    let mut groups: BTreeMap<(String, usize), Option<usize>> = BTreeMap::new();
    for r in report.rows.iter().filter(|r| r.stride == stride && r.future == future) {
        groups.insert((r.mode.clone(), r.num_qubits), r.h_nec);
    }
    if groups.is_empty() {
        return Err(Error::config(format!("report has no rows for stride {stride} and future {future}")));
    }
    let mut spectra = BTreeMap::new();
    let mut points = Vec::new();
    for ((mode, n), h_nec) in &groups {
        if !spectra.contains_key(n) {
            let h = build_heisenberg_ring(*n, coupling)?;
            spectra.insert(*n, spectrum_frequencies(&h, DEFAULT_DEGENERACY_TOL));
        }
        let s = &spectra[n];
        if h_nec.is_none() {
            log::warn!("h_nec unresolved for N={n} {mode}; excluded from the fit");
        }
        points.push(ScalingPoint {
            num_qubits: *n,
            mode: mode.clone(),
            h_nec: *h_nec,
            log2_h_nec: h_nec.map(|h| (h as f64).log2()),
            neg_log2_f_min: -s.f_min.log2(),
            log2_num_frequencies: (s.num_unique as f64).log2(),
        });
    }
    let mut fits = Vec::new();
    let modes: Vec<String> = {
        let mut m: Vec<String> = points.iter().map(|p| p.mode.clone()).collect();
        m.dedup();
        m
    };
    for mode in modes {
        let xy: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| p.mode == mode)
            .filter_map(|p| p.log2_h_nec.map(|y| (p.num_qubits as f64, y)))
            .collect();
        if let Some((alpha, intercept)) = fit_slope(&xy) {
            fits.push(SlopeFit {
                mode,
                alpha,
                intercept,
                points: xy.len(),
            });
        }
    }
    Ok(ScalingReport { points, fits })
}

pub fn write_scaling_csv<W: Write>(out: W, report: &ScalingReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in &report.points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NyquistRow {
    pub stride: usize,
    pub step: f64,
    pub h_nec: Option<usize>,
    /// `h_nec · Δ`.
    pub duration: Option<f64>,
    /// `1 / (2 f_max)`.
    pub delta_max: f64,
    /// `fine` when `Δ ≤ Δ_max`, `coarse` otherwise.
    pub regime: String,
}

/// Memory sweep over strides of one dataset, classified against the
/// sampling limit of the ring spectrum.
pub fn nyquist_sweep(dataset: &TrajectoryDataset, spec: &SweepSpec) -> Result<(ExperimentReport, Vec<NyquistRow>)> {
    let n = dataset.num_qubits;
    let spec = SweepSpec {
        sizes: vec![n],
        ..spec.clone()
    };
    let spectrum = spectrum_frequencies(&build_heisenberg_ring(n, dataset.coupling)?, DEFAULT_DEGENERACY_TOL);
    let delta_max = spectrum.nyquist_period();
    let report = memory_sweep("nyquist", &BTreeMap::from([(n, dataset.clone())]), &spec)?;
    let mode = spec.modes[0].label();
    let future = spec.futures[0];
    let rows = spec
        .strides
        .iter()
        .map(|&s| {
            let step = dataset.grid.step(s);
            let h_nec = report.h_nec(n, &mode, s, future);
            NyquistRow {
                stride: s,
                step,
                h_nec,
                duration: h_nec.map(|h| h as f64 * step),
                delta_max,
                // Relative slack so that Δ = 0.16π counts as fine next to Δ_max ≈ 0.1604π.
                regime: if step <= delta_max * (1.0 + 1e-9) { "fine" } else { "coarse" }.to_string(),
            }
        })
        .collect();
    Ok((report, rows))
}

pub fn write_nyquist_csv<W: Write>(out: W, rows: &[NyquistRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
