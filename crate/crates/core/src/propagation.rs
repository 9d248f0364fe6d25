//! Autoregressive propagation, ensembles and multi-step refinement.
//!
//! Frames are batched: a frame is a `[B × 3w]` matrix holding the Bloch
//! vectors of `w` qubits for `B` independent trajectories.

use std::collections::VecDeque;
use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::dataset::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::linear::AffinePropagator;
use crate::nn::{block_trace_distances, mean_trace_distance, PropagatorModel};

/// Tolerance above unit length before a predicted Bloch vector counts as unphysical.
pub const PHYSICALITY_TOL: f64 = 1e-9;

/// Anything that maps a window of past frames to the next frame.
pub trait FramePropagator: Sync {
    /// Frames per window.
    fn history(&self) -> usize;
    /// Qubits per frame.
    fn width(&self) -> usize;
    /// Base-grid steps between consecutive frames.
    fn stride(&self) -> usize;
    /// Base-grid steps from the newest frame to the prediction.
    fn future(&self) -> usize {
        self.stride()
    }
    /// `[B × 3w·h]` newest-first windows to `[B × 3w]` frames.
    fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>>;
}

impl FramePropagator for PropagatorModel {
    fn history(&self) -> usize {
        self.meta.spec.history
    }

    fn width(&self) -> usize {
        self.meta.spec.mode.width(self.meta.num_qubits)
    }

    fn stride(&self) -> usize {
        self.meta.spec.stride
    }

    fn future(&self) -> usize {
        self.meta.spec.future
    }

    fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if self.meta.spec.target_mode() != &self.meta.spec.mode {
            return Err(Error::config("propagation needs identical input and target qubits"));
        }
        self.forward(features)
    }
}

/// A Markovian linear map on augmented frames `(1, r…)` used as an exact
/// one-step propagator.
#[derive(Debug, Clone)]
pub struct LinearFramePropagator {
    pub propagator: AffinePropagator,
    pub stride: usize,
}

impl LinearFramePropagator {
    pub fn new(propagator: AffinePropagator, stride: usize) -> Result<Self> {
        if propagator.dim() < 4 || (propagator.dim() - 1) % 3 != 0 {
            return Err(Error::size(format!(
                "augmented frame propagator needs dimension 1 + 3w, got {}",
                propagator.dim()
            )));
        }
        Ok(Self { propagator, stride })
    }
}

impl FramePropagator for LinearFramePropagator {
    fn history(&self) -> usize {
        1
    }

    fn width(&self) -> usize {
        (self.propagator.dim() - 1) / 3
    }

    fn stride(&self) -> usize {
        self.stride
    }

    fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let d = self.propagator.dim() - 1;
        if features.ncols() != d {
            return Err(Error::size(format!("expected {d} features, got {}", features.ncols())));
        }
        let mut out = Array2::zeros((features.nrows(), d));
        for (row, mut dst) in features.outer_iter().zip(out.outer_iter_mut()) {
            let mut x = DVector::zeros(d + 1);
            x[0] = 1.0;
            for (k, v) in row.iter().enumerate() {
                x[k + 1] = *v;
            }
            let y = self.propagator.apply(&x)?;
            for k in 0..d {
                dst[k] = y[k + 1];
            }
        }
        Ok(out)
    }
}

/// The last `h` frames of a batch of trajectories, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer {
    frames: VecDeque<Array2<f64>>,
    capacity: usize,
    /// Number of frames appended so far, seed frames included.
    steps: usize,
}

impl HistoryBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("history length must be at least 1"));
        }
        Ok(Self {
            frames: VecDeque::with_capacity(capacity),
            capacity,
            steps: 0,
        })
    }

    /// Buffer filled from `seed` (oldest first); only the last `capacity` frames are kept.
    pub fn seeded(capacity: usize, seed: &[Array2<f64>]) -> Result<Self> {
        let mut buf = Self::new(capacity)?;
        for f in seed {
            buf.push(f.clone())?;
        }
        Ok(buf)
    }

    pub fn push(&mut self, frame: Array2<f64>) -> Result<()> {
        if let Some(first) = self.frames.front() {
            if first.dim() != frame.dim() {
                return Err(Error::size(format!(
                    "frame shape {:?} differs from buffered {:?}",
                    frame.dim(),
                    first.dim()
                )));
            }
        }
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
        self.steps += 1;
        Ok(())
    }

    pub fn is_full(&self) -> bool {
        self.frames.len() == self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn latest(&self) -> Option<&Array2<f64>> {
        self.frames.back()
    }

    /// Newest-first feature rows `[B × h·3w]`.
    pub fn features(&self) -> Result<Array2<f64>> {
        if !self.is_full() {
            return Err(Error::config(format!(
                "history holds {} of {} frames",
                self.frames.len(),
                self.capacity
            )));
        }
        let views: Vec<ArrayView2<'_, f64>> = self.frames.iter().rev().map(|f| f.view()).collect();
        Ok(ndarray::concatenate(Axis(1), &views)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePrediction {
    pub mean: Array2<f64>,
    /// Unbiased variance per component (zero for a single member).
    pub variance: Array2<f64>,
    pub members: Vec<Array2<f64>>,
}

impl EnsemblePrediction {
    /// Scalar confidence: mean variance over all components.
    pub fn mean_variance(&self) -> f64 {
        self.variance.mean().unwrap_or(0.0)
    }
}

/// Member forward passes run concurrently; reduction is in member order.
pub fn ensemble_predict<P: FramePropagator>(members: &[P], features: ArrayView2<'_, f64>) -> Result<EnsemblePrediction> {
    if members.is_empty() {
        return Err(Error::config("ensemble has no members"));
    }
    let outputs = members
        .par_iter()
        .map(|m| m.predict(features))
        .collect::<Result<Vec<_>>>()?;
    let k = outputs.len() as f64;
    let mut mean = Array2::zeros(outputs[0].dim());
    for o in &outputs {
        if o.dim() != mean.dim() {
            return Err(Error::size("ensemble members disagree on output shape"));
        }
        mean += o;
    }
    mean /= k;
    let mut variance = Array2::zeros(mean.dim());
    if outputs.len() > 1 {
        for o in &outputs {
            let d = o - &mean;
            variance += &(&d * &d);
        }
        variance /= k - 1.0;
    }
    Ok(EnsemblePrediction {
        mean,
        variance,
        members: outputs,
    })
}

fn check_members<P: FramePropagator>(members: &[P]) -> Result<(usize, usize, usize)> {
    let first = members.first().ok_or_else(|| Error::config("ensemble has no members"))?;
    let key = (first.history(), first.width(), first.stride());
    for m in members {
        if (m.history(), m.width(), m.stride()) != key {
            return Err(Error::config("ensemble members use different windows"));
        }
        if m.future() != m.stride() {
            return Err(Error::config(format!(
                "autoregression needs one-step models (future {} vs stride {})",
                m.future(),
                m.stride()
            )));
        }
    }
    Ok(key)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    /// Predicted frames, one per step.
    pub frames: Vec<Array2<f64>>,
    pub variance: Vec<Array2<f64>>,
    /// Mean trace distance to the supplied ground truth at every step.
    pub mtd: Option<Vec<f64>>,
    /// Predicted Bloch vectors with `|r| > 1`.
    pub excursions: usize,
    /// History after the last step, for resuming.
    pub state: HistoryBuffer,
}

impl Propagation {
    pub fn mean_mtd(&self) -> Option<f64> {
        self.mtd
            .as_ref()
            .filter(|v| !v.is_empty())
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn confidence(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.mean().unwrap_or(0.0)).collect()
    }
}

/// Feed ensemble-mean predictions back as inputs for `n_steps` steps.
pub fn autoregress<P: FramePropagator>(
    members: &[P],
    seed_history: &[Array2<f64>],
    n_steps: usize,
    truth: Option<&[Array2<f64>]>,
) -> Result<Propagation> {
    let (h, _, _) = check_members(members)?;
    if seed_history.len() < h {
        return Err(Error::config(format!(
            "seed history has {} frames, models need {h}",
            seed_history.len()
        )));
    }
    let buffer = HistoryBuffer::seeded(h, seed_history)?;
    resume(members, buffer, n_steps, truth)
}

/// Continue propagation from a captured history.
pub fn resume<P: FramePropagator>(
    members: &[P],
    mut buffer: HistoryBuffer,
    n_steps: usize,
    truth: Option<&[Array2<f64>]>,
) -> Result<Propagation> {
    let (h, w, _) = check_members(members)?;
    if buffer.capacity() != h {
        return Err(Error::config(format!("history of {} frames for models with h = {h}", buffer.capacity())));
    }
    if let Some(latest) = buffer.latest() {
        if latest.ncols() != 3 * w {
            return Err(Error::size(format!("frames hold {} columns, models expect {}", latest.ncols(), 3 * w)));
        }
    }
    if let Some(t) = truth {
        if t.len() < n_steps {
            return Err(Error::size(format!("ground truth covers {} of {n_steps} steps", t.len())));
        }
    }
    let mut frames = Vec::with_capacity(n_steps);
    let mut variance = Vec::with_capacity(n_steps);
    let mut mtd = truth.map(|_| Vec::with_capacity(n_steps));
    let mut excursions = 0;
    for step in 0..n_steps {
        let pred = ensemble_predict(members, buffer.features()?.view())?;
        excursions += pred
            .mean
            .exact_chunks((1, 3))
            .into_iter()
            .filter(|b| b.iter().map(|v| v * v).sum::<f64>().sqrt() > 1.0 + PHYSICALITY_TOL)
            .count();
        if let (Some(t), Some(m)) = (truth, mtd.as_mut()) {
            m.push(mean_trace_distance(pred.mean.view(), t[step].view())?);
        }
        buffer.push(pred.mean.clone())?;
        frames.push(pred.mean);
        variance.push(pred.variance);
    }
    Ok(Propagation {
        frames,
        variance,
        mtd,
        excursions,
        state: buffer,
    })
}

/// Frames `[B × 3w]` of `records` at base steps `start, start+stride, …`.
pub fn dataset_frames(
    dataset: &TrajectoryDataset,
    records: &[usize],
    qubits: &[usize],
    start: usize,
    stride: usize,
    count: usize,
) -> Result<Vec<Array2<f64>>> {
    if stride == 0 {
        return Err(Error::config("stride must be at least 1"));
    }
    let last = start + stride * count.saturating_sub(1);
    if count > 0 && last >= dataset.grid.num_steps {
        return Err(Error::config(format!(
            "frame {last} beyond trajectory length {}",
            dataset.grid.num_steps
        )));
    }
    if let Some(&q) = qubits.iter().find(|&&q| q >= dataset.num_qubits) {
        return Err(Error::Index {
            index: q,
            len: dataset.num_qubits,
        });
    }
    (0..count)
        .map(|k| {
            let step = start + k * stride;
            let mut f = Array2::zeros((records.len(), 3 * qubits.len()));
            for (b, &r) in records.iter().enumerate() {
                let rec = dataset.records.get(r).ok_or(Error::Index {
                    index: r,
                    len: dataset.len(),
                })?;
                for (j, &q) in qubits.iter().enumerate() {
                    f.slice_mut(s![b, 3 * j..3 * j + 3]).assign(&rec.bloch.slice(s![step, q, ..]));
                }
            }
            Ok(f)
        })
        .collect()
}

/// A prediction on the base grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedPoint {
    /// Base-grid step index relative to the first coarse frame.
    pub step: usize,
    pub frame: Array2<f64>,
    pub variance: Array2<f64>,
    /// Whether the point is a coarse frame (as opposed to an inserted one).
    pub coarse: bool,
}

/// Insert sub-step predictions between the frames of a coarse trajectory.
///
/// `coarse` holds frames `stride` base steps apart. Each entry of `fine` is
/// an ensemble sharing the coarse history length and stride but predicting
/// `future < stride` base steps ahead. Points are produced from the first
/// anchor with a full history onward.
pub fn refine_trajectory<P: FramePropagator>(
    coarse: &[Array2<f64>],
    history: usize,
    stride: usize,
    fine: &[Vec<P>],
) -> Result<Vec<RefinedPoint>> {
    if history == 0 || coarse.len() < history {
        return Err(Error::config(format!(
            "coarse trajectory of {} frames cannot seed history {history}",
            coarse.len()
        )));
    }
    for ensemble in fine {
        let first = ensemble.first().ok_or_else(|| Error::config("fine ensemble has no members"))?;
        for m in ensemble {
            if m.history() != history {
                return Err(Error::config(format!(
                    "fine model history {} differs from coarse history {history}",
                    m.history()
                )));
            }
            if m.stride() != stride || m.future() != first.future() || m.future() == 0 || m.future() >= stride {
                return Err(Error::config(format!(
                    "fine model with stride {} and future {} does not subdivide stride {stride}",
                    m.stride(),
                    m.future()
                )));
            }
        }
    }
    let mut out = Vec::new();
    let mut buffer = HistoryBuffer::new(history)?;
    for (n, frame) in coarse.iter().enumerate() {
        buffer.push(frame.clone())?;
        if !buffer.is_full() {
            continue;
        }
        out.push(RefinedPoint {
            step: n * stride,
            frame: frame.clone(),
            variance: Array2::zeros(frame.dim()),
            coarse: true,
        });
        if n + 1 == coarse.len() {
            break;
        }
        let features = buffer.features()?;
        for ensemble in fine {
            let pred = ensemble_predict(ensemble, features.view())?;
            out.push(RefinedPoint {
                step: n * stride + ensemble[0].future(),
                frame: pred.mean,
                variance: pred.variance,
                coarse: false,
            });
        }
    }
    out.sort_by_key(|p| (p.step, !p.coarse));
    Ok(out)
}

/// Write trajectory `index` of a propagation as CSV.
///
/// Columns: `time, qubit, r_x, r_y, r_z, var_x, var_y, var_z, mtd`; `mtd`
/// is the per-qubit trace distance to `truth` and left empty without it.
pub fn write_trajectory_csv<W: Write>(
    out: W,
    result: &Propagation,
    index: usize,
    t0: f64,
    dt: f64,
    truth: Option<&[Array2<f64>]>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time", "qubit", "r_x", "r_y", "r_z", "var_x", "var_y", "var_z", "mtd"])?;
    for (k, (frame, var)) in result.frames.iter().zip(&result.variance).enumerate() {
        if index >= frame.nrows() {
            return Err(Error::Index {
                index,
                len: frame.nrows(),
            });
        }
        let dists = match truth {
            Some(t) => Some(block_trace_distances(
                frame.slice(s![index..index + 1, ..]),
                t[k].slice(s![index..index + 1, ..]),
            )?),
            None => None,
        };
        for q in 0..frame.ncols() / 3 {
            let r = frame.slice(s![index, 3 * q..3 * q + 3]);
            let v = var.slice(s![index, 3 * q..3 * q + 3]);
            let mut rec = vec![format!("{}", t0 + (k + 1) as f64 * dt), q.to_string()];
            rec.extend(r.iter().chain(v.iter()).map(|x| format!("{x:.17e}")));
            rec.push(dists.as_ref().map(|d| format!("{:.17e}", d[q])).unwrap_or_default());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_trajectory_csv(
    path: &Path,
    result: &Propagation,
    index: usize,
    t0: f64,
    dt: f64,
    truth: Option<&[Array2<f64>]>,
) -> Result<()> {
    write_trajectory_csv(std::fs::File::create(path)?, result, index, t0, dt, truth)
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;

    use super::*;
    use crate::dataset::{generate_dataset, generate_lindblad_dataset, GenerateConfig, InitKind, SamplingGrid};
    use crate::dynamics::{build_heisenberg_ring, spectrum_frequencies, Lindblad, LindbladParams, DEFAULT_DEGENERACY_TOL};

    /// Exact order-3 recurrence of a single-frequency signal
    /// `x(t) = a + b cos ωt + c sin ωt`.
    struct Recurrence {
        c: f64,
        width: usize,
    }

    impl FramePropagator for Recurrence {
        fn history(&self) -> usize {
            3
        }
        fn width(&self) -> usize {
            self.width
        }
        fn stride(&self) -> usize {
            1
        }
        fn predict(&self, f: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
            let d = 3 * self.width;
            let (x0, x1, x2) = (f.slice(s![.., 0..d]), f.slice(s![.., d..2 * d]), f.slice(s![.., 2 * d..3 * d]));
            Ok(&(&(&x0 - &x1) * self.c) + &x2)
        }
    }

    /// Adds a fixed offset to one output component.
    struct Shifted<P> {
        inner: P,
        delta: f64,
    }

    impl<P: FramePropagator> FramePropagator for Shifted<P> {
        fn history(&self) -> usize {
            self.inner.history()
        }
        fn width(&self) -> usize {
            self.inner.width()
        }
        fn stride(&self) -> usize {
            self.inner.stride()
        }
        fn predict(&self, f: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
            let mut y = self.inner.predict(f)?;
            y.column_mut(0).mapv_inplace(|v| v + self.delta);
            Ok(y)
        }
    }

    fn ring2() -> (TrajectoryDataset, Recurrence) {
        let mut cfg = GenerateConfig::new(2, InitKind::Random, 4, 7);
        cfg.grid = SamplingGrid::new(0.1, 120).unwrap();
        let ds = generate_dataset(&cfg).unwrap();
        let spec = spectrum_frequencies(&build_heisenberg_ring(2, 1.0).unwrap(), DEFAULT_DEGENERACY_TOL);
        assert_eq!(spec.num_unique, 1);
        let omega = 2.0 * std::f64::consts::PI * spec.f_max;
        (ds, Recurrence { c: 1.0 + 2.0 * (omega * 0.1).cos(), width: 2 })
    }

    #[test]
    fn oracle_loop_adds_no_drift() {
        let (ds, oracle) = ring2();
        let records: Vec<usize> = (0..ds.len()).collect();
        let frames = dataset_frames(&ds, &records, &[0, 1], 0, 1, 120).unwrap();
        let run = autoregress(&[oracle], &frames[..3], 117, Some(&frames[3..])).unwrap();
        let worst = run.mtd.as_ref().unwrap().iter().cloned().fold(0.0, f64::max);
        assert!(worst < 1e-10, "drift {worst}");
        assert_eq!(run.excursions, 0);
        assert!(run.variance.iter().all(|v| v.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn lindblad_channel_oracle_matches_exact_solution() {
        let lindblad = Lindblad::new(LindbladParams::default());
        let grid = SamplingGrid::new(0.05, 400).unwrap();
        let ds = generate_lindblad_dataset(&lindblad, 3, grid, 2).unwrap();
        let channel = lindblad.channel(0.05);
        let p = AffinePropagator::new(DMatrix::from_fn(4, 4, |i, j| channel[(i, j)])).unwrap();
        let oracle = LinearFramePropagator::new(p, 1).unwrap();
        let frames = dataset_frames(&ds, &[0, 1, 2], &[0], 0, 1, 400).unwrap();
        let run = autoregress(&[oracle], &frames[..1], 399, Some(&frames[1..])).unwrap();
        assert!(run.mtd.unwrap().iter().all(|&d| d < 1e-10));
    }

    #[test]
    fn resuming_from_checkpoint_reproduces_the_rest() {
        let (ds, oracle) = ring2();
        let frames = dataset_frames(&ds, &[0, 2], &[0, 1], 0, 1, 40).unwrap();
        let ens = [oracle];
        let full = autoregress(&ens, &frames[..3], 30, None).unwrap();
        let first = autoregress(&ens, &frames[..3], 12, None).unwrap();
        let rest = resume(&ens, first.state.clone(), 18, None).unwrap();
        assert_eq!(&full.frames[12..], &rest.frames[..]);
        assert_eq!(full.state, rest.state);
    }

    #[test]
    fn ensemble_statistics() {
        let (_, a) = ring2();
        let (_, b) = ring2();
        let x = Array2::from_shape_fn((5, 18), |(i, j)| ((i * 18 + j) as f64 * 0.37).sin());
        let dup = ensemble_predict(&[a, b], x.view()).unwrap();
        assert!(dup.variance.iter().all(|&v| v == 0.0));

        let (_, a) = ring2();
        let (_, b) = ring2();
        let delta = 0.3;
        let pair = [Shifted { inner: a, delta: 0.0 }, Shifted { inner: b, delta }];
        let p = ensemble_predict(&pair, x.view()).unwrap();
        for r in 0..5 {
            assert!((p.variance[[r, 0]] - delta * delta / 2.0).abs() < 1e-14);
            assert!(p.variance.row(r).iter().skip(1).all(|&v| v.abs() < 1e-14));
            let avg = (p.members[0][[r, 0]] + p.members[1][[r, 0]]) / 2.0;
            assert!((p.mean[[r, 0]] - avg).abs() < 1e-15);
        }
        let empty: [Recurrence; 0] = [];
        assert!(ensemble_predict(&empty, x.view()).is_err());
    }

    #[test]
    fn history_buffer_contract() {
        let mut buf = HistoryBuffer::new(2).unwrap();
        assert!(buf.features().is_err());
        buf.push(Array2::from_elem((1, 3), 1.0)).unwrap();
        buf.push(Array2::from_elem((1, 3), 2.0)).unwrap();
        buf.push(Array2::from_elem((1, 3), 3.0)).unwrap();
        assert_eq!(buf.features().unwrap().row(0).to_vec(), vec![3.0, 3.0, 3.0, 2.0, 2.0, 2.0]);
        assert!(buf.push(Array2::zeros((2, 3))).is_err());
        assert!(HistoryBuffer::new(0).is_err());
    }

    #[test]
    fn mismatched_members_are_rejected() {
        let (ds, a) = ring2();
        let frames = dataset_frames(&ds, &[0], &[0, 1], 0, 1, 5).unwrap();
        let lind = Lindblad::new(LindbladParams::default()).channel(0.1);
        let lin = LinearFramePropagator::new(
            AffinePropagator::new(DMatrix::from_fn(4, 4, |i, j| lind[(i, j)])).unwrap(),
            1,
        )
        .unwrap();
        assert!(autoregress(&[a], &frames[..2], 2, None).is_err());
        assert!(matches!(
            refine_trajectory(&frames, 2, 1, &[vec![lin]]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn refinement_of_frozen_dynamics_is_constant() {
        let mut cfg = GenerateConfig::new(3, InitKind::Random, 2, 1);
        cfg.coupling = 0.0;
        cfg.grid = SamplingGrid::new(0.1, 40).unwrap();
        let ds = generate_dataset(&cfg).unwrap();
        let coarse = dataset_frames(&ds, &[0, 1], &[0, 1, 2], 0, 4, 10).unwrap();
        // Fine propagators for frozen dynamics return the newest frame.
        struct Hold(usize);
        impl FramePropagator for Hold {
            fn history(&self) -> usize {
                2
            }
            fn width(&self) -> usize {
                3
            }
            fn stride(&self) -> usize {
                4
            }
            fn future(&self) -> usize {
                self.0
            }
            fn predict(&self, f: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
                Ok(f.slice(s![.., 0..9]).to_owned())
            }
        }
        let fine = vec![vec![Hold(1)], vec![Hold(2)], vec![Hold(3)]];
        let dense = refine_trajectory(&coarse, 2, 4, &fine).unwrap();
        assert_eq!(dense.len(), 9 + 8 * 3);
        assert!(dense.windows(2).all(|w| w[1].step == w[0].step + 1));
        assert!(dense.iter().all(|p| p.frame == coarse[0]));
    }

    #[test]
    fn csv_output() {
        let (ds, oracle) = ring2();
        let frames = dataset_frames(&ds, &[0, 1], &[0, 1], 0, 1, 10).unwrap();
        let run = autoregress(&[oracle], &frames[..3], 5, Some(&frames[3..])).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &run, 1, 0.2, 0.1, Some(&frames[3..])).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        assert_eq!(rdr.headers().unwrap().len(), 9);
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 10);
        let t: f64 = rows[0][0].parse().unwrap();
        assert!((t - 0.3).abs() < 1e-12);
        assert!(rows.iter().all(|r| r[8].parse::<f64>().unwrap() < 1e-10));
    }
}
