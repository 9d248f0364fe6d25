//! Trajectory datasets: generation, supervised windowing, persistence and
//! train/validation/test splitting.

mod io;
mod pairs;

use std::f64::consts::PI;

use ndarray::Array3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use io::{decode, load_dataset, save_dataset, sidecar_path, DatasetMeta, HEADER_LEN, MAGIC, RECORD_PREFIX_LEN};
pub use pairs::{make_supervised_pairs, AnchorSampling, Mode, PairSpec, SupervisedPairSet};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dynamics::{
    build_heisenberg_ring, reduce_to_bloch, sample_product_state, sample_random_state, BlochVector, Lindblad, MAX_QUBITS,
};
use crate::error::{Error, Result};
use crate::seed::{self, stream};

/// Default base step `Δ₀ = 0.04π`.
pub const DEFAULT_BASE_STEP: f64 = 0.04 * PI;
/// Default trajectory length in base steps.
pub const DEFAULT_NUM_STEPS: usize = 256;
/// Evolution time applied to product states before recording equilibrated trajectories.
pub const EQUILIBRATION_TIME: f64 = 0.32 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    Random,
    Product,
    ProductEquilibrated,
    /// Uniform point in the Bloch ball (single-qubit open dynamics).
    Mixed,
}

impl InitKind {
    pub fn tag(self) -> u8 {
        match self {
            InitKind::Random => 0,
            InitKind::Product => 1,
            InitKind::ProductEquilibrated => 2,
            InitKind::Mixed => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(InitKind::Random),
            1 => Some(InitKind::Product),
            2 => Some(InitKind::ProductEquilibrated),
            3 => Some(InitKind::Mixed),
            _ => None,
        }
    }
}

impl std::str::FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(InitKind::Random),
            "product" => Ok(InitKind::Product),
            "product-equilibrated" | "product_equilibrated" => Ok(InitKind::ProductEquilibrated),
            "mixed" => Ok(InitKind::Mixed),
            other => Err(Error::config(format!(
                "unknown init kind '{other}' (expected random, product, product-equilibrated or mixed)"
            ))),
        }
    }
}

impl std::fmt::Display for InitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitKind::Random => "random",
            InitKind::Product => "product",
            InitKind::ProductEquilibrated => "product-equilibrated",
            InitKind::Mixed => "mixed",
        })
    }
}

/// Uniform time grid `t_k = k Δ₀`, `k = 0..num_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingGrid {
    pub base_step: f64,
    pub num_steps: usize,
}

impl Default for SamplingGrid {
    fn default() -> Self {
        Self {
            base_step: DEFAULT_BASE_STEP,
            num_steps: DEFAULT_NUM_STEPS,
        }
    }
}

impl SamplingGrid {
    pub fn new(base_step: f64, num_steps: usize) -> Result<Self> {
        if !(base_step > 0.0) || !base_step.is_finite() {
            return Err(Error::config(format!("base step must be positive, got {base_step}")));
        }
        if num_steps < 2 {
            return Err(Error::config(format!("need at least 2 time steps, got {num_steps}")));
        }
        Ok(Self { base_step, num_steps })
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.base_step
    }

    /// Effective step for a given stride.
    pub fn step(&self, stride: usize) -> f64 {
        stride as f64 * self.base_step
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Split sizes `(train, validation, test)` in the ratio 8:2:1.
pub fn split_counts(count: usize) -> (usize, usize, usize) {
    let validation = count * 2 / 11;
    let test = count / 11;
    (count - validation - test, validation, test)
}

/// One exactly evolved trajectory of all single-qubit Bloch vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub init_kind: InitKind,
    pub seed: u64,
    /// `[step, qubit, xyz]`.
    pub bloch: Array3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub num_qubits: usize,
    pub coupling: f64,
    pub init_kind: InitKind,
    pub count: usize,
    pub grid: SamplingGrid,
    pub seed: u64,
}

impl GenerateConfig {
    pub fn new(num_qubits: usize, init_kind: InitKind, count: usize, seed: u64) -> Self {
        Self {
            num_qubits,
            coupling: 1.0,
            init_kind,
            count,
            grid: SamplingGrid::default(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub num_qubits: usize,
    pub coupling: f64,
    pub grid: SamplingGrid,
    pub seed: u64,
    pub records: Vec<TrajectoryRecord>,
}

impl TrajectoryDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Split label of every record, assigned 8:2:1 by ranking records on a
    /// hash of their seed.
    pub fn splits(&self) -> Vec<Split> {
        let mut order: Vec<usize> = (0..self.records.len()).collect();
        order.sort_by_key(|&i| (seed::derive(self.records[i].seed, stream::SPLIT, 0), i));
        let (train, validation, _) = split_counts(self.records.len());
        let mut out = vec![Split::Test; self.records.len()];
        for (rank, &i) in order.iter().enumerate() {
            out[i] = if rank < train {
                Split::Train
            } else if rank < train + validation {
                Split::Validation
            } else {
                Split::Test
            };
        }
        out
    }

    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.splits()
            .iter()
            .enumerate()
            .filter_map(|(i, s)| (*s == split).then_some(i))
            .collect()
    }

    /// Keep only the given records (in the given order).
    pub fn subset(&self, indices: &[usize]) -> TrajectoryDataset {
        TrajectoryDataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> TrajectoryDataset {
        TrajectoryDataset {
            num_qubits: self.num_qubits,
            coupling: self.coupling,
            grid: self.grid,
            seed: self.seed,
            records: Vec::new(),
        }
    }
}

/// Evolve `count` seeded initial states exactly and record every qubit's
/// Bloch vector on the grid.
pub fn generate_dataset(config: &GenerateConfig) -> Result<TrajectoryDataset> {
    if config.num_qubits > MAX_QUBITS {
        return Err(Error::size(format!(
            "refusing to generate N={} (dense limit is {MAX_QUBITS})",
            config.num_qubits
        )));
    }
    if !config.coupling.is_finite() {
        return Err(Error::config("coupling must be finite"));
    }
    if config.count == 0 {
        return Err(Error::config("dataset count must be at least 1"));
    }
    SamplingGrid::new(config.grid.base_step, config.grid.num_steps)?;
    // J = 0 is the frozen-dynamics control: every frame equals the initial one.
    let hamiltonian = if config.coupling == 0.0 {
        None
    } else {
        Some(build_heisenberg_ring(config.num_qubits, config.coupling)?)
    };
    let records = (0..config.count)
        .into_par_iter()
        .map(|i| {
            let record_seed = seed::derive(config.seed, stream::RECORD, i as u64);
            trajectory(hamiltonian.as_ref(), config.num_qubits, config.init_kind, record_seed, &config.grid)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryDataset {
        num_qubits: config.num_qubits,
        coupling: config.coupling,
        grid: config.grid,
        seed: config.seed,
        records,
    })
}

/// Initial state for a record, before any equilibration.
pub fn initial_state(num_qubits: usize, init_kind: InitKind, record_seed: u64) -> Result<crate::dynamics::PureState> {
    match init_kind {
        InitKind::Random => sample_random_state(num_qubits, record_seed),
        InitKind::Product | InitKind::ProductEquilibrated => sample_product_state(num_qubits, record_seed),
        InitKind::Mixed => Err(Error::config("mixed initial states have no pure-state vector")),
    }
}

/// Time offset at which recording starts for `init_kind`.
pub fn start_time(init_kind: InitKind) -> f64 {
    match init_kind {
        InitKind::ProductEquilibrated => EQUILIBRATION_TIME,
        _ => 0.0,
    }
}

/// Uniform sample from the Bloch ball.
pub fn sample_bloch_ball(record_seed: u64) -> BlochVector {
    let mut rng = seed::rng_for(record_seed, stream::STATE, 0);
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal));
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 1e-12 {
            let radius = rng.random::<f64>().cbrt();
            return BlochVector(v.map(|c| radius * c / norm));
        }
    }
}

/// Single-qubit Lindblad trajectories from uniform Bloch-ball initial states.
pub fn generate_lindblad_dataset(lindblad: &Lindblad, count: usize, grid: SamplingGrid, seed: u64) -> Result<TrajectoryDataset> {
    if count == 0 {
        return Err(Error::config("dataset count must be at least 1"));
    }
    SamplingGrid::new(grid.base_step, grid.num_steps)?;
    let times: Vec<f64> = (0..grid.num_steps).map(|k| grid.time(k)).collect();
    let records = (0..count)
        .into_par_iter()
        .map(|i| {
            let record_seed = seed::derive(seed, stream::RECORD, i as u64);
            let path = lindblad.solve_bloch(&sample_bloch_ball(record_seed), &times)?;
            let mut bloch = Array3::zeros((grid.num_steps, 1, 3));
            for (k, r) in path.iter().enumerate() {
                for a in 0..3 {
                    bloch[[k, 0, a]] = r.0[a];
                }
            }
            Ok(TrajectoryRecord {
                init_kind: InitKind::Mixed,
                seed: record_seed,
                bloch,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryDataset {
        num_qubits: 1,
        coupling: 0.0,
        grid,
        seed,
        records,
    })
}

fn trajectory(
    hamiltonian: Option<&crate::dynamics::Hamiltonian>,
    n: usize,
    init_kind: InitKind,
    record_seed: u64,
    grid: &SamplingGrid,
) -> Result<TrajectoryRecord> {
    let psi0 = initial_state(n, init_kind, record_seed)?;
    let evolver = hamiltonian.map(|h| h.evolver(&psi0)).transpose()?;
    let t0 = start_time(init_kind);
    let mut bloch = Array3::zeros((grid.num_steps, n, 3));
    for k in 0..grid.num_steps {
        let psi = match &evolver {
            Some(e) => e.at(t0 + grid.time(k)),
            None => psi0.clone(),
        };
        for q in 0..n {
            let r = reduce_to_bloch(&psi, q)?;
            for a in 0..3 {
                bloch[[k, q, a]] = r.0[a];
            }
        }
    }
    Ok(TrajectoryRecord {
        init_kind,
        seed: record_seed,
        bloch,
    })
}
