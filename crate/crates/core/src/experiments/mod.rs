//! Memory sweeps and the studies built on them.

mod diagnostics;
mod report;
mod scaling;

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use diagnostics::{
    dataset_entropy_track, detect_period, diagnostics_run, fidelity_tracks, write_diagnostics_csv, DiagnosticsConfig,
    DiagnosticsTrack,
};
pub use report::{load_rows, percentile, read_rows, write_dat, write_rows, ExperimentReport, ReportRow};
pub use scaling::{
    fit_slope, nyquist_sweep, scaling_report, write_nyquist_csv, write_scaling_csv, NyquistRow, ScalingPoint,
    ScalingReport, SlopeFit,
};

use crate::dataset::{make_supervised_pairs, AnchorSampling, Mode, PairSpec, Split, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::nn::{block_trace_distances, PropagatorModel, TrainConfig};

/// Default error threshold defining `h_nec`.
pub const DEFAULT_THRESHOLD: f64 = 0.01;

/// Memories to visit for each group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistoryGrid {
    Explicit(Vec<usize>),
    /// `1, 2, 4, …` up to `max`, refined linearly between the last two
    /// geometric points around the first crossing with a spacing of
    /// `max(1, resolution / stride)` memories, `resolution` in base steps.
    /// `extra_after_crossing` geometric points past the crossing are kept to
    /// check that larger memories do not degrade.
    Geometric {
        max: usize,
        resolution: usize,
        extra_after_crossing: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub sizes: Vec<usize>,
    pub modes: Vec<Mode>,
    /// Target qubits override (locality study); features' qubits otherwise.
    pub targets: Option<Mode>,
    /// Prediction distances in base steps.
    pub futures: Vec<usize>,
    pub histories: HistoryGrid,
    pub strides: Vec<usize>,
    pub threshold: f64,
    /// Training seeds per cell; the cell MTD is their median.
    pub seeds: Vec<u64>,
    pub anchors: AnchorSampling,
    pub train: TrainConfig,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() || self.modes.is_empty() || self.futures.is_empty() || self.strides.is_empty() {
            return Err(Error::config("sweep lists must be non-empty"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed per cell is required"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::config(format!("threshold {} outside (0, 1)", self.threshold)));
        }
        match &self.histories {
            HistoryGrid::Explicit(h) if h.is_empty() || h.contains(&0) => {
                Err(Error::config("explicit memory list must be non-empty and positive"))
            }
            HistoryGrid::Geometric { max: 0, .. } => Err(Error::config("maximum memory must be positive")),
            _ => self.train.validate(),
        }
    }
}

/// Outcome of training and testing one model.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub test_mtd: f64,
    pub p25: f64,
    pub p75: f64,
    pub in_mtd: Option<f64>,
    pub out_mtd: Option<f64>,
    pub val_mtd: f64,
    pub epochs: usize,
    pub train_rows: usize,
}

/// Train one model on the train split and score it on the test split.
pub fn run_cell(dataset: &TrajectoryDataset, spec: &PairSpec, train: &TrainConfig) -> Result<(PropagatorModel, CellResult)> {
    let train_pairs = make_supervised_pairs(dataset, spec, Some(Split::Train))?;
    let val_pairs = make_supervised_pairs(dataset, spec, Some(Split::Validation))?;
    let (model, report) = PropagatorModel::train_on_pairs(&train_pairs, &val_pairs, dataset, train)?;
    drop(train_pairs);
    drop(val_pairs);
    let test = make_supervised_pairs(dataset, spec, Some(Split::Test))?;
    if test.is_empty() {
        return Err(Error::config("test split yields no pairs"));
    }
    let pred = model.forward(test.features.view())?;
    let dists = block_trace_distances(pred.view(), test.targets.view())?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mut sorted = dists.clone();
    sorted.sort_by(f64::total_cmp);

    let n = dataset.num_qubits;
    let in_q = spec.mode.qubits(n);
    let out_q = spec.target_mode().qubits(n);
    let width = out_q.len();
    let (mut inside, mut outside) = (Vec::new(), Vec::new());
    for (k, d) in dists.iter().enumerate() {
        if in_q.contains(&out_q[k % width]) {
            inside.push(*d);
        } else {
            outside.push(*d);
        }
    }
    let partial = spec.targets.is_some();
    Ok((
        model,
        CellResult {
            test_mtd: mean(&dists),
            p25: percentile(&sorted, 0.25),
            p75: percentile(&sorted, 0.75),
            in_mtd: (partial && !inside.is_empty()).then(|| mean(&inside)),
            out_mtd: (partial && !outside.is_empty()).then(|| mean(&outside)),
            val_mtd: report.best_val,
            epochs: report.curve.len(),
            train_rows: dataset.split_indices(Split::Train).len(),
        },
    ))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    percentile(&v, 0.5)
}

#[derive(Debug, Clone)]
struct Group {
    num_qubits: usize,
    mode: Mode,
    future: usize,
    stride: usize,
}

/// Results per memory for one group, in visiting order.
type Visited = Vec<(usize, Vec<(u64, CellResult)>)>;

fn sweep_group(dataset: &TrajectoryDataset, spec: &SweepSpec, group: &Group) -> Result<Visited> {
    let steps = dataset.grid.num_steps;
    let base = PairSpec {
        mode: group.mode.clone(),
        targets: spec.targets.clone(),
        history: 1,
        stride: group.stride,
        future: group.future,
        anchors: spec.anchors,
    };
    base.validate(group.num_qubits, steps)?;
    let fits = |h: usize| (h - 1) * group.stride + group.future < steps;
    let mut visited: Visited = Vec::new();
    let eval = |h: usize, visited: &mut Visited| -> Result<f64> {
        let cell = PairSpec { history: h, ..base.clone() };
        let mut per_seed = Vec::new();
        for &seed in &spec.seeds {
            let cfg = TrainConfig { seed, ..spec.train.clone() };
            let (_, result) = run_cell(dataset, &cell, &cfg)?;
            log::info!(
                "N={} {} stride {} future {} h={h} seed {seed}: test MTD {:.4e}",
                group.num_qubits,
                group.mode.label(),
                group.stride,
                group.future,
                result.test_mtd
            );
            per_seed.push((seed, result));
        }
        let m = median(per_seed.iter().map(|(_, r)| r.test_mtd).collect());
        visited.push((h, per_seed));
        Ok(m)
    };
    match &spec.histories {
        HistoryGrid::Explicit(list) => {
            for &h in list {
                if !fits(h) {
                    return Err(Error::config(format!(
                        "memory {h} with stride {} does not fit trajectories of {steps} steps",
                        group.stride
                    )));
                }
                eval(h, &mut visited)?;
            }
        }
        HistoryGrid::Geometric {
            max,
            resolution,
            extra_after_crossing,
        } => {
            let mut h = 1;
            let mut prev: Option<usize> = None;
            let mut crossing: Option<(usize, usize)> = None;
            let mut extra = 0;
            while h <= *max && fits(h) {
                let m = eval(h, &mut visited)?;
                if crossing.is_none() && m < spec.threshold {
                    crossing = Some((prev.unwrap_or(0), h));
                } else if crossing.is_some() {
                    extra += 1;
                }
                if crossing.is_some() && extra >= *extra_after_crossing {
                    break;
                }
                prev = Some(h);
                h *= 2;
            }
            if let Some((lo, hi)) = crossing {
                let step = (resolution / group.stride).max(1);
                let mut h = lo + step;
                while h < hi {
                    if h > 0 {
                        eval(h, &mut visited)?;
                    }
                    h += step;
                }
            }
        }
    }
    Ok(visited)
}

/// Smallest memory whose median test MTD is under `threshold`.
pub fn first_crossing(points: &[(usize, f64)], threshold: f64) -> Option<usize> {
    let mut sorted = points.to_vec();
    sorted.sort_by_key(|p| p.0);
    sorted.into_iter().find(|p| p.1 < threshold).map(|p| p.0)
}

/// Train one model per (N, mode, future, stride, h, seed) cell and report
/// test MTD and `h_nec` per group.
pub fn memory_sweep(
    name: &str,
    datasets: &BTreeMap<usize, TrajectoryDataset>,
    spec: &SweepSpec,
) -> Result<ExperimentReport> {
    spec.validate()?;
    let start = Instant::now();
    let mut groups = Vec::new();
    for &n in &spec.sizes {
        if !datasets.contains_key(&n) {
            return Err(Error::MissingInput {
                path: format!("dataset for N={n}").into(),
                hint: format!("run `qprop generate --n {n}` first"),
            });
        }
        for mode in &spec.modes {
            for &future in &spec.futures {
                for &stride in &spec.strides {
                    groups.push(Group {
                        num_qubits: n,
                        mode: mode.clone(),
                        future,
                        stride,
                    });
                }
            }
        }
    }
    let results = groups
        .par_iter()
        .map(|g| sweep_group(&datasets[&g.num_qubits], spec, g))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (g, mut visited) in groups.iter().zip(results) {
        visited.sort_by_key(|v| v.0);
        let medians: Vec<(usize, f64)> = visited
            .iter()
            .map(|(h, r)| (*h, median(r.iter().map(|x| x.1.test_mtd).collect())))
            .collect();
        let h_nec = first_crossing(&medians, spec.threshold);
        let ds = &datasets[&g.num_qubits];
        let init = ds.records.first().map(|r| r.init_kind.to_string()).unwrap_or_default();
        for (h, per_seed) in visited {
            for (seed, r) in per_seed {
                rows.push(ReportRow {
                    experiment: name.to_string(),
                    num_qubits: g.num_qubits,
                    init_kind: init.clone(),
                    mode: g.mode.label(),
                    targets: spec.targets.as_ref().unwrap_or(&g.mode).label(),
                    history: h,
                    stride: g.stride,
                    future: g.future,
                    step: ds.grid.step(g.stride),
                    seed,
                    test_mtd: r.test_mtd,
                    p25: r.p25,
                    p75: r.p75,
                    in_mtd: r.in_mtd,
                    out_mtd: r.out_mtd,
                    val_mtd: r.val_mtd,
                    epochs: r.epochs,
                    train_rows: r.train_rows,
                    h_nec,
                    reference_h_nec: None,
                });
            }
        }
    }
    Ok(ExperimentReport {
        name: name.to_string(),
        rows,
        config: serde_json::to_value(spec)?,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}

/// Contiguous blocks `0..m` of qubits as features, all qubits as targets.
pub fn locality_experiment(
    dataset: &TrajectoryDataset,
    blocks: &[usize],
    spec: &SweepSpec,
) -> Result<ExperimentReport> {
    let n = dataset.num_qubits;
    if let Some(&m) = blocks.iter().find(|&&m| m == 0 || m > n) {
        return Err(Error::config(format!("block size {m} outside 1..={n}")));
    }
    let spec = SweepSpec {
        sizes: vec![n],
        modes: blocks.iter().map(|&m| Mode::Subset((0..m).collect())).collect(),
        targets: Some(Mode::All),
        ..spec.clone()
    };
    let datasets = BTreeMap::from([(n, dataset.clone())]);
    let mut report = memory_sweep("locality", &datasets, &spec)?;
    report.name = "locality".into();
    Ok(report)
}

/// Memory sweep on equilibrated product-state data, annotated with the
/// random-state `h_nec` of the same group.
pub fn product_state_study(
    datasets: &BTreeMap<usize, TrajectoryDataset>,
    spec: &SweepSpec,
    random: &ExperimentReport,
) -> Result<ExperimentReport> {
    let mut report = memory_sweep("product", datasets, spec)?;
    for row in &mut report.rows {
        row.reference_h_nec = random.h_nec(row.num_qubits, &row.mode, row.stride, row.future);
    }
    Ok(report)
}
