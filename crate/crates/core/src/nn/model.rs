//! A trained propagator: network plus the window geometry it was trained on.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! "QPNN1" | u32 meta_len | meta JSON | u32 layers | u32 sizes[layers+1]
//!         | u8 activation[layers] | u64 param_count | f64 params[param_count]
//! ```
//!
//! The metadata object carries an `arch` tag naming the model family. A JSON
//! descriptor with the same metadata is written to `<path>.json`.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::loss::{mean_trace_distance, TraceDistanceLoss};
use super::mlp::{read_layout, write_layout, Mlp};
use super::train::{fit, predict, TrainConfig, TrainReport};
use crate::dataset::{make_supervised_pairs, sidecar_path, PairSpec, Split, SupervisedPairSet, TrajectoryDataset};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 5] = b"QPNN1";
pub const PROPAGATOR_ARCH: &str = "propagator";

#[derive(Serialize, Deserialize)]
struct Tagged<T> {
    arch: String,
    #[serde(flatten)]
    meta: T,
}

/// Serialize a network with tagged metadata.
pub fn encode_network<T: Serialize>(arch: &str, meta: &T, net: &Mlp) -> Result<Vec<u8>> {
    let meta = serde_json::to_vec(&Tagged {
        arch: arch.to_string(),
        meta,
    })?;
    let mut buf = Vec::with_capacity(64 + meta.len() + 8 * net.num_params());
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta);
    write_layout(net, &mut buf);
    buf.extend_from_slice(&(net.num_params() as u64).to_le_bytes());
    for p in net.params() {
        buf.extend_from_slice(&p.to_le_bytes());
    }
    Ok(buf)
}

/// Inverse of [`encode_network`]; fails unless the tag equals `arch`.
pub fn decode_network<T: DeserializeOwned>(arch: &str, bytes: &[u8]) -> Result<(T, Mlp)> {
    if bytes.len() < 9 || &bytes[..5] != MODEL_MAGIC {
        return Err(Error::format(0, "not a network file (bad magic)"));
    }
    let meta_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let meta_bytes = bytes
        .get(9..9 + meta_len)
        .ok_or_else(|| Error::format(9, "truncated model metadata"))?;
    let tag: serde_json::Value =
        serde_json::from_slice(meta_bytes).map_err(|e| Error::format(9, format!("bad model metadata: {e}")))?;
    match tag.get("arch").and_then(|a| a.as_str()) {
        Some(a) if a == arch => {}
        other => {
            return Err(Error::format(
                9,
                format!("expected a {arch} model, found {}", other.unwrap_or("an untagged one")),
            ))
        }
    }
    let Tagged { meta, .. }: Tagged<T> =
        serde_json::from_value(tag).map_err(|e| Error::format(9, format!("bad model metadata: {e}")))?;
    let mut pos = 9 + meta_len;
    let (sizes, acts) = read_layout(bytes, &mut pos)?;
    let count_off = pos as u64;
    let count = bytes
        .get(pos..pos + 8)
        .map(|b| u64::from_le_bytes(b.try_into().unwrap()) as usize)
        .ok_or_else(|| Error::format(count_off, "truncated parameter count"))?;
    pos += 8;
    let mut net = Mlp::zeros(&sizes, &acts).map_err(|e| Error::format(count_off, e.to_string()))?;
    if count != net.num_params() {
        return Err(Error::format(
            count_off,
            format!("parameter count {count} does not match layout ({})", net.num_params()),
        ));
    }
    let end = pos + 8 * count;
    if bytes.len() != end {
        return Err(Error::format(
            bytes.len().min(end) as u64,
            format!("expected {end} bytes, found {}", bytes.len()),
        ));
    }
    for (p, chunk) in net.params_mut().iter_mut().zip(bytes[pos..end].chunks_exact(8)) {
        *p = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok((meta, net))
}

/// Write `<path>` and its JSON descriptor.
pub fn save_network<T: Serialize>(path: &Path, arch: &str, meta: &T, net: &Mlp) -> Result<()> {
    fs::write(path, encode_network(arch, meta, net)?)?;
    let descriptor = serde_json::json!({
        "format": String::from_utf8_lossy(MODEL_MAGIC),
        "version": env!("CARGO_PKG_VERSION"),
        "arch": arch,
        "meta": meta,
        "sizes": net.sizes(),
        "activations": net.activations(),
        "param_count": net.num_params(),
    });
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&descriptor)?)?;
    Ok(())
}

pub fn read_network_file(path: &Path, hint: &str) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingInput {
            path: path.to_path_buf(),
            hint: hint.to_string(),
        });
    }
    Ok(fs::read(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub num_qubits: usize,
    pub spec: PairSpec,
    pub base_step: f64,
    pub coupling: f64,
    pub seed: u64,
}

impl ModelMeta {
    /// Future distance in effective (strided) steps.
    pub fn m_steps(&self) -> usize {
        self.spec.future / self.spec.stride
    }

    /// Effective time step `stride · Δ₀`.
    pub fn step(&self) -> f64 {
        self.spec.stride as f64 * self.base_step
    }

    /// Same network interface and grid.
    pub fn compatible(&self, other: &ModelMeta) -> bool {
        self.num_qubits == other.num_qubits
            && self.spec.mode == other.spec.mode
            && self.spec.target_mode() == other.spec.target_mode()
            && self.spec.history == other.spec.history
            && self.spec.stride == other.spec.stride
            && self.spec.future == other.spec.future
            && self.base_step == other.base_step
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorModel {
    pub net: Mlp,
    pub meta: ModelMeta,
}

impl PropagatorModel {
    /// Freshly initialized model for the given geometry.
    pub fn new(meta: ModelMeta) -> Result<Self> {
        let n = meta.num_qubits;
        let mut net = Mlp::propagator(meta.spec.input_dim(n), meta.spec.output_dim(n))?;
        net.init_glorot(meta.seed);
        Ok(Self { net, meta })
    }

    /// Train on the train split of `dataset`, halting on the validation split.
    pub fn train(dataset: &TrajectoryDataset, spec: &PairSpec, config: &TrainConfig) -> Result<(Self, TrainReport)> {
        let train = make_supervised_pairs(dataset, spec, Some(Split::Train))?;
        let val = make_supervised_pairs(dataset, spec, Some(Split::Validation))?;
        Self::train_on_pairs(&train, &val, dataset, config)
    }

    pub fn train_on_pairs(
        train: &SupervisedPairSet,
        val: &SupervisedPairSet,
        dataset: &TrajectoryDataset,
        config: &TrainConfig,
    ) -> Result<(Self, TrainReport)> {
        if train.spec != val.spec {
            return Err(Error::config("training and validation pairs use different windows"));
        }
        let mut model = Self::new(ModelMeta {
            num_qubits: train.num_qubits,
            spec: train.spec.clone(),
            base_step: dataset.grid.base_step,
            coupling: dataset.coupling,
            seed: config.seed,
        })?;
        let report = fit(
            &mut model.net,
            &TraceDistanceLoss,
            (train.features.view(), train.targets.view()),
            (val.features.view(), val.targets.view()),
            config,
        )?;
        Ok((model, report))
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn forward(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        predict(&self.net, features)
    }

    /// Unsmoothed mean trace distance over all pairs and output qubits.
    pub fn evaluate_mtd(&self, pairs: &SupervisedPairSet) -> Result<f64> {
        if pairs.is_empty() {
            return Err(Error::config("cannot evaluate on an empty pair set"));
        }
        let pred = self.forward(pairs.features.view())?;
        mean_trace_distance(pred.view(), pairs.targets.view())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        encode_network(PROPAGATOR_ARCH, &self.meta, &self.net)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (meta, net): (ModelMeta, Mlp) = decode_network(PROPAGATOR_ARCH, bytes)?;
        let n = meta.num_qubits;
        if net.input_dim() != meta.spec.input_dim(n) || net.output_dim() != meta.spec.output_dim(n) {
            return Err(Error::format(9, "network dimensions disagree with metadata"));
        }
        Ok(Self { net, meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_network(path, PROPAGATOR_ARCH, &self.meta, &self.net)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_network_file(path, "train a model first with `qprop train`")?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{
        generate_dataset, generate_lindblad_dataset, AnchorSampling, GenerateConfig, InitKind, Mode, SamplingGrid,
    };
    use crate::dynamics::{Lindblad, LindbladParams};

    fn frozen_dataset() -> TrajectoryDataset {
        // Frames are constant in time, so distinct inputs come only from the count.
        let mut cfg = GenerateConfig::new(2, InitKind::Random, 2200, 3);
        cfg.coupling = 0.0;
        cfg.grid = SamplingGrid::new(0.04 * std::f64::consts::PI, 24).unwrap();
        generate_dataset(&cfg).unwrap()
    }

    #[test]
    fn learns_frozen_dynamics() {
        let ds = frozen_dataset();
        let spec = PairSpec::new(Mode::All, 1, 1, 1);
        let cfg = TrainConfig {
            max_epochs: 50,
            patience: 20,
            ..TrainConfig::default()
        };
        let (model, report) = PropagatorModel::train(&ds, &spec, &cfg).unwrap();
        assert!(report.best_val < 1e-3, "validation MTD {}", report.best_val);
        let test = make_supervised_pairs(&ds, &spec, Some(Split::Test)).unwrap();
        assert!(model.evaluate_mtd(&test).unwrap() < 2e-3);
    }

    #[test]
    fn learns_markovian_qubit() {
        let lindblad = Lindblad::new(LindbladParams::default());
        let grid = SamplingGrid::new(0.1, 64).unwrap();
        let ds = generate_lindblad_dataset(&lindblad, 220, grid, 1).unwrap();
        let spec = PairSpec::new(Mode::All, 1, 1, 1);
        let cfg = TrainConfig {
            max_epochs: 300,
            patience: 30,
            ..TrainConfig::default()
        };
        let (model, report) = PropagatorModel::train(&ds, &spec, &cfg).unwrap();
        assert!(report.best_val < 1e-3, "validation MTD {}", report.best_val);
        let test = make_supervised_pairs(&ds, &spec, Some(Split::Test)).unwrap();
        assert!(model.evaluate_mtd(&test).unwrap() < 1e-3);
    }

    #[test]
    fn constant_zero_model_scores_one_half_on_pure_states() {
        let mut cfg = GenerateConfig::new(3, InitKind::Product, 11, 0);
        cfg.grid = SamplingGrid::new(0.1, 8).unwrap();
        let ds = generate_dataset(&cfg).unwrap();
        let spec = PairSpec::new(Mode::All, 2, 1, 1);
        let pairs = make_supervised_pairs(&ds, &spec, None).unwrap();
        // Product states keep every qubit pure only at t = 0, so use frozen dynamics.
        let mut frozen = cfg.clone();
        frozen.coupling = 0.0;
        let pure = make_supervised_pairs(&generate_dataset(&frozen).unwrap(), &spec, None).unwrap();
        let mut model = PropagatorModel::new(ModelMeta {
            num_qubits: 3,
            spec,
            base_step: 0.1,
            coupling: 1.0,
            seed: 0,
        })
        .unwrap();
        model.net.params_mut().fill(0.0);
        assert!((model.evaluate_mtd(&pure).unwrap() - 0.5).abs() < 1e-12);
        assert!(model.evaluate_mtd(&pairs).unwrap() <= 0.5);
    }

    #[test]
    fn perfect_model_scores_zero() {
        let ds = frozen_dataset();
        let spec = PairSpec::new(Mode::Single(1), 1, 1, 1);
        let pairs = make_supervised_pairs(&ds, &spec, None).unwrap();
        // Identity weights reproduce the input frame exactly.
        let mut net = Mlp::zeros(&[3, 3], &[super::super::Activation::Identity]).unwrap();
        for i in 0..3 {
            net.params_mut()[i * 3 + i] = 1.0;
        }
        let model = PropagatorModel {
            net,
            meta: ModelMeta {
                num_qubits: 2,
                spec,
                base_step: ds.grid.base_step,
                coupling: 0.0,
                seed: 0,
            },
        };
        assert_eq!(model.evaluate_mtd(&pairs).unwrap(), 0.0);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.qpnn");
        let spec = PairSpec::new(Mode::Subset(vec![0, 2]), 3, 2, 2)
            .with_targets(Mode::All)
            .with_anchors(AnchorSampling::Random { per_trajectory: 4, seed: 9 });
        let model = PropagatorModel::new(ModelMeta {
            num_qubits: 4,
            spec,
            base_step: 0.2,
            coupling: -1.0,
            seed: 42,
        })
        .unwrap();
        model.save(&path).unwrap();
        let back = PropagatorModel::load(&path).unwrap();
        assert_eq!(back, model);
        assert!(sidecar_path(&path).exists());

        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        assert!(matches!(PropagatorModel::from_bytes(&bytes), Err(Error::Format { .. })));
        bytes[0] = b'X';
        assert!(matches!(PropagatorModel::from_bytes(&bytes), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(
            PropagatorModel::load(&dir.path().join("missing")),
            Err(Error::MissingInput { .. })
        ));
    }
}
