use ndarray::Array2;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use super::{Split, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::seed::{self, stream};

/// Which qubits enter a feature window or a target frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    All,
    Single(usize),
    Subset(Vec<usize>),
}

impl Mode {
    pub fn qubits(&self, num_qubits: usize) -> Vec<usize> {
        match self {
            Mode::All => (0..num_qubits).collect(),
            Mode::Single(q) => vec![*q],
            Mode::Subset(qs) => qs.clone(),
        }
    }

    pub fn width(&self, num_qubits: usize) -> usize {
        match self {
            Mode::All => num_qubits,
            Mode::Single(_) => 1,
            Mode::Subset(qs) => qs.len(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Mode::All => "all".to_string(),
            Mode::Single(q) => format!("single{q}"),
            Mode::Subset(qs) => {
                let parts: Vec<String> = qs.iter().map(|q| q.to_string()).collect();
                format!("subset{}", parts.join("-"))
            }
        }
    }

    fn validate(&self, num_qubits: usize) -> Result<()> {
        let qs = self.qubits(num_qubits);
        if qs.is_empty() {
            return Err(Error::config("qubit selection is empty"));
        }
        if let Some(&bad) = qs.iter().find(|&&q| q >= num_qubits) {
            return Err(Error::Index {
                index: bad,
                len: num_qubits,
            });
        }
        Ok(())
    }
}

/// Which anchors of each trajectory produce a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorSampling {
    /// Every valid anchor (unit base-grid offset between windows).
    Every,
    /// A seeded random subset of at most `per_trajectory` distinct anchors.
    Random { per_trajectory: usize, seed: u64 },
}

/// Window geometry. Features are `(R^n, R^{n-s}, …, R^{n-(h-1)s})`, newest
/// first, and the target is `R^{n+future}`, all indices on the base grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub mode: Mode,
    /// Overrides the target qubits; defaults to the feature qubits.
    pub targets: Option<Mode>,
    pub history: usize,
    pub stride: usize,
    /// Distance to the target in base-grid steps.
    pub future: usize,
    pub anchors: AnchorSampling,
}

impl PairSpec {
    /// Target `m_steps` effective steps ahead, i.e. `m_steps · stride` base steps.
    pub fn new(mode: Mode, history: usize, m_steps: usize, stride: usize) -> Self {
        Self {
            mode,
            targets: None,
            history,
            stride,
            future: m_steps * stride,
            anchors: AnchorSampling::Every,
        }
    }

    pub fn with_targets(mut self, targets: Mode) -> Self {
        self.targets = Some(targets);
        self
    }

    pub fn with_anchors(mut self, anchors: AnchorSampling) -> Self {
        self.anchors = anchors;
        self
    }

    pub fn target_mode(&self) -> &Mode {
        self.targets.as_ref().unwrap_or(&self.mode)
    }

    pub fn input_dim(&self, num_qubits: usize) -> usize {
        3 * self.mode.width(num_qubits) * self.history
    }

    pub fn output_dim(&self, num_qubits: usize) -> usize {
        3 * self.target_mode().width(num_qubits)
    }

    /// Base-grid span from the oldest frame to the target, inclusive.
    pub fn span(&self) -> usize {
        (self.history - 1) * self.stride + self.future + 1
    }

    pub fn validate(&self, num_qubits: usize, num_steps: usize) -> Result<()> {
        if self.history == 0 || self.stride == 0 || self.future == 0 {
            return Err(Error::config("history, stride and future must all be at least 1"));
        }
        self.mode.validate(num_qubits)?;
        self.target_mode().validate(num_qubits)?;
        if self.span() > num_steps {
            return Err(Error::config(format!(
                "window of history {} with stride {} and future {} spans {} steps, trajectories have {}",
                self.history,
                self.stride,
                self.future,
                self.span(),
                num_steps
            )));
        }
        Ok(())
    }
}

/// Supervised (window → future frame) pairs extracted from trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedPairSet {
    pub spec: PairSpec,
    pub num_qubits: usize,
    pub features: Array2<f64>,
    pub targets: Array2<f64>,
    /// Source record index of each row.
    pub trajectory: Vec<usize>,
    /// Anchor step `n` of each row.
    pub anchor: Vec<usize>,
}

impl SupervisedPairSet {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.targets.ncols()
    }
}

/// Build pairs from the records of `split` (all records when `None`).
pub fn make_supervised_pairs(
    dataset: &TrajectoryDataset,
    spec: &PairSpec,
    split: Option<Split>,
) -> Result<SupervisedPairSet> {
    let n = dataset.num_qubits;
    let steps = dataset.grid.num_steps;
    spec.validate(n, steps)?;
    let records: Vec<usize> = match split {
        Some(s) => dataset.split_indices(s),
        None => (0..dataset.len()).collect(),
    };
    let in_q = spec.mode.qubits(n);
    let out_q = spec.target_mode().qubits(n);
    let first = (spec.history - 1) * spec.stride;
    let last = steps - 1 - spec.future;
    let valid = last - first + 1;

    let mut rows: Vec<(usize, usize)> = Vec::new();
    for &r in &records {
        match spec.anchors {
            AnchorSampling::Every => rows.extend((first..=last).map(|a| (r, a))),
            AnchorSampling::Random { per_trajectory, seed } => {
                let k = per_trajectory.min(valid);
                let mut rng = seed::rng_for(seed, stream::ANCHOR, dataset.records[r].seed);
                let mut picked: Vec<usize> = sample(&mut rng, valid, k).into_iter().map(|i| first + i).collect();
                picked.sort_unstable();
                rows.extend(picked.into_iter().map(|a| (r, a)));
            }
        }
    }

    let d_in = spec.input_dim(n);
    let d_out = spec.output_dim(n);
    let mut features = Array2::zeros((rows.len(), d_in));
    let mut targets = Array2::zeros((rows.len(), d_out));
    for (row, &(r, anchor)) in rows.iter().enumerate() {
        let bloch = &dataset.records[r].bloch;
        let mut col = 0;
        for lag in 0..spec.history {
            let k = anchor - lag * spec.stride;
            for &q in &in_q {
                for a in 0..3 {
                    features[[row, col]] = bloch[[k, q, a]];
                    col += 1;
                }
            }
        }
        let k = anchor + spec.future;
        for (j, &q) in out_q.iter().enumerate() {
            for a in 0..3 {
                targets[[row, 3 * j + a]] = bloch[[k, q, a]];
            }
        }
    }
    Ok(SupervisedPairSet {
        spec: spec.clone(),
        num_qubits: n,
        features,
        targets,
        trajectory: rows.iter().map(|&(r, _)| r).collect(),
        anchor: rows.iter().map(|&(_, a)| a).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, GenerateConfig, InitKind, SamplingGrid, DEFAULT_BASE_STEP};
    use crate::dynamics::{build_heisenberg_ring, evolve_pure, reduce_to_bloch, sample_random_state};

    fn ds(n: usize, count: usize, steps: usize) -> TrajectoryDataset {
        let mut cfg = GenerateConfig::new(n, InitKind::Random, count, 3);
        cfg.grid = SamplingGrid::new(DEFAULT_BASE_STEP, steps).unwrap();
        generate_dataset(&cfg).unwrap()
    }

    #[test]
    fn dimensions() {
        let d = ds(5, 2, 30);
        let p = make_supervised_pairs(&d, &PairSpec::new(Mode::All, 10, 1, 1), None).unwrap();
        assert_eq!((p.input_dim(), p.output_dim()), (150, 15));
        let p = make_supervised_pairs(&d, &PairSpec::new(Mode::Single(2), 9, 1, 2), None).unwrap();
        assert_eq!((p.input_dim(), p.output_dim()), (27, 3));
        let p = make_supervised_pairs(&d, &PairSpec::new(Mode::Subset(vec![0, 1]), 4, 1, 1), None).unwrap();
        assert_eq!((p.input_dim(), p.output_dim()), (24, 6));
        // one pair per valid anchor
        assert_eq!(p.len(), 2 * (30 - 3 - 1));
        let single45 = PairSpec::new(Mode::Single(0), 45, 1, 1);
        assert_eq!((single45.input_dim(5), single45.output_dim(5)), (135, 3));
    }

    #[test]
    fn layout_is_newest_first_qubit_major() {
        let d = ds(3, 1, 20);
        let spec = PairSpec::new(Mode::All, 3, 2, 2);
        let p = make_supervised_pairs(&d, &spec, None).unwrap();
        let b = &d.records[0].bloch;
        let row = 0;
        let n = p.anchor[row];
        assert_eq!(n, 4);
        assert_eq!(p.features[[row, 0]], b[[4, 0, 0]]);
        assert_eq!(p.features[[row, 5]], b[[4, 1, 2]]);
        assert_eq!(p.features[[row, 9]], b[[2, 0, 0]]);
        assert_eq!(p.features[[row, 26]], b[[0, 2, 2]]);
        assert_eq!(p.targets[[row, 4]], b[[8, 1, 1]]);
    }

    #[test]
    fn targets_match_direct_evolution() {
        let d = ds(4, 3, 25);
        let h = build_heisenberg_ring(4, 1.0).unwrap();
        let p = make_supervised_pairs(&d, &PairSpec::new(Mode::All, 2, 3, 2), None).unwrap();
        for row in (0..p.len()).step_by(7) {
            let rec = &d.records[p.trajectory[row]];
            let psi0 = sample_random_state(4, rec.seed).unwrap();
            let t = d.grid.time(p.anchor[row] + 6);
            let psi = evolve_pure(&psi0, t, &h).unwrap();
            for q in 0..4 {
                let r = reduce_to_bloch(&psi, q).unwrap();
                for a in 0..3 {
                    assert!((p.targets[[row, 3 * q + a]] - r.0[a]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn subset_of_all_qubits_equals_all() {
        let d = ds(3, 2, 20);
        let all = make_supervised_pairs(&d, &PairSpec::new(Mode::All, 3, 1, 1), None).unwrap();
        let sub = make_supervised_pairs(&d, &PairSpec::new(Mode::Subset(vec![0, 1, 2]), 3, 1, 1), None).unwrap();
        assert_eq!(all.features, sub.features);
        assert_eq!(all.targets, sub.targets);
    }

    #[test]
    fn splits_do_not_share_trajectories() {
        let d = ds(2, 11, 12);
        let spec = PairSpec::new(Mode::All, 2, 1, 1);
        let mut seen = std::collections::HashSet::new();
        let mut total = 0;
        for s in [Split::Train, Split::Validation, Split::Test] {
            let p = make_supervised_pairs(&d, &spec, Some(s)).unwrap();
            let trajs: std::collections::HashSet<_> = p.trajectory.iter().copied().collect();
            for t in &trajs {
                assert!(seen.insert(*t), "trajectory {t} in two splits");
            }
            total += trajs.len();
        }
        assert_eq!(total, 11);
    }

    #[test]
    fn random_anchors_are_deterministic_subsets() {
        let d = ds(2, 4, 40);
        let spec = PairSpec::new(Mode::All, 4, 1, 2).with_anchors(AnchorSampling::Random {
            per_trajectory: 5,
            seed: 9,
        });
        let a = make_supervised_pairs(&d, &spec, None).unwrap();
        let b = make_supervised_pairs(&d, &spec, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
        let every = make_supervised_pairs(&d, &PairSpec::new(Mode::All, 4, 1, 2), None).unwrap();
        for row in 0..a.len() {
            let j = (0..every.len())
                .find(|&j| every.trajectory[j] == a.trajectory[row] && every.anchor[j] == a.anchor[row])
                .unwrap();
            assert_eq!(a.features.row(row), every.features.row(j));
        }
    }

    #[test]
    fn frozen_dynamics_features_equal_targets() {
        let mut cfg = GenerateConfig::new(3, InitKind::Random, 2, 1);
        cfg.coupling = 0.0;
        cfg.grid = SamplingGrid::new(DEFAULT_BASE_STEP, 8).unwrap();
        let d = generate_dataset(&cfg).unwrap();
        let p = make_supervised_pairs(&d, &PairSpec::new(Mode::All, 1, 1, 1), None).unwrap();
        assert_eq!(p.features, p.targets);
    }

    #[test]
    fn window_too_long_is_config_error() {
        let d = ds(2, 1, 10);
        let err = make_supervised_pairs(&d, &PairSpec::new(Mode::All, 5, 1, 2), None).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = make_supervised_pairs(&d, &PairSpec::new(Mode::Single(4), 1, 1, 1), None).unwrap_err();
        assert!(matches!(err, Error::Index { .. }));
    }
}
