//! Compression probe: how many latent dimensions an autoencoder needs to
//! reconstruct evolved ring wavefunctions.

use std::io::Write;
use std::path::Path;

use nalgebra::DVector;
use ndarray::{s, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::InitKind;
use crate::dynamics::{build_heisenberg_ring, sample_product_state, sample_random_state, PureState, C64};
use crate::error::{Error, Result};
use crate::nn::model::read_network_file;
use crate::nn::{decode_network, fit, predict, save_network, Activation, Mlp, SquaredErrorLoss, TrainConfig, TrainReport, HIDDEN};
use crate::seed::{self, stream};

pub const AUTOENCODER_ARCH: &str = "autoencoder";
/// Decoded vectors shorter than this are not renormalized.
pub const MIN_DECODED_NORM: f64 = 1e-6;
/// Amplitudes below this modulus are skipped when fixing the global phase.
pub const PHASE_TOL: f64 = 1e-12;
/// Default sample split `(train, validation, test)`.
pub const DEFAULT_SPLIT: (usize, usize, usize) = (1000, 500, 500);

/// Real embedding `(Re ψ, Im ψ)` of a wavefunction.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEmbedding(pub Vec<f64>);

impl StateEmbedding {
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

pub fn embed(psi: &PureState) -> StateEmbedding {
    let a = psi.amplitudes();
    StateEmbedding(a.iter().map(|c| c.re).chain(a.iter().map(|c| c.im)).collect())
}

pub fn unembed(x: &[f64]) -> Result<DVector<C64>> {
    if x.is_empty() || x.len() % 2 != 0 {
        return Err(Error::size(format!("embedding length {} is not 2Ω", x.len())));
    }
    let dim = x.len() / 2;
    Ok(DVector::from_fn(dim, |i, _| C64::new(x[i], x[dim + i])))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub num_qubits: usize,
    pub coupling: f64,
    pub init_kind: InitKind,
    /// Evolution time before embedding.
    pub time: f64,
    pub count: usize,
    pub phase_fix: bool,
    pub seed: u64,
}

/// Embeddings `[count × 2Ω]` of states evolved to `config.time`.
pub fn sample_embeddings(config: &ProbeConfig) -> Result<Array2<f64>> {
    let h = build_heisenberg_ring(config.num_qubits, config.coupling)?;
    let sample: fn(usize, u64) -> Result<PureState> = match config.init_kind {
        InitKind::Random => sample_random_state,
        InitKind::Product => sample_product_state,
        other => return Err(Error::config(format!("autoencoder probes support random or product states, not {other}"))),
    };
    let rows = (0..config.count)
        .into_par_iter()
        .map(|i| {
            let psi0 = sample(config.num_qubits, seed::derive(config.seed, stream::STATE, i as u64))?;
            let psi = h.evolver(&psi0)?.at(config.time);
            let psi = if config.phase_fix { psi.phase_fixed(PHASE_TOL) } else { psi };
            Ok(embed(&psi).0)
        })
        .collect::<Result<Vec<_>>>()?;
    let width = 2 * h.dim();
    Ok(Array2::from_shape_vec((rows.len(), width), rows.concat())?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderMeta {
    pub latent_dim: usize,
    pub probe: ProbeConfig,
}

/// Encoder `2Ω → 64 → 64 → L` and decoder `L → 64 → 64 → 2Ω` in one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub net: Mlp,
    pub meta: AutoencoderMeta,
}

impl AutoencoderModel {
    pub fn new(meta: AutoencoderMeta) -> Result<Self> {
        let d = 2usize << meta.probe.num_qubits;
        if meta.latent_dim == 0 {
            return Err(Error::config("latent dimension must be positive"));
        }
        let sizes = [d, HIDDEN, HIDDEN, meta.latent_dim, HIDDEN, HIDDEN, d];
        use Activation::{Elu, Identity};
        let mut net = Mlp::zeros(&sizes, &[Elu, Elu, Identity, Elu, Elu, Identity])?;
        net.init_glorot(meta.probe.seed);
        Ok(Self { net, meta })
    }

    pub fn encoder(&self) -> Result<Mlp> {
        Ok(self.net.split_at(3)?.0)
    }

    pub fn decoder(&self) -> Result<Mlp> {
        Ok(self.net.split_at(3)?.1)
    }

    pub fn reconstruct(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        predict(&self.net, x.view())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_network(path, AUTOENCODER_ARCH, &self.meta, &self.net)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_network_file(path, "train one with `qprop autoencode`")?;
        let (meta, net) = decode_network(AUTOENCODER_ARCH, &bytes)?;
        Ok(Self { net, meta })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderResult {
    /// Mean `|⟨ψ|ψ̂⟩|²` over the test split after renormalizing `ψ̂`.
    pub fidelity: f64,
    /// Test reconstructions too short to renormalize (scored as zero).
    pub degenerate: usize,
    pub report: TrainReport,
}

/// Mean reconstruction fidelity of `pred` against the normalized `target` rows.
pub fn reconstruction_fidelity(pred: &Array2<f64>, target: &Array2<f64>) -> Result<(f64, usize)> {
    if pred.dim() != target.dim() || pred.nrows() == 0 {
        return Err(Error::size("reconstruction and target shapes differ or are empty"));
    }
    let mut total = 0.0;
    let mut degenerate = 0;
    for (p, t) in pred.outer_iter().zip(target.outer_iter()) {
        let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < MIN_DECODED_NORM {
            degenerate += 1;
            continue;
        }
        let a = unembed(t.as_slice().unwrap_or(&t.to_vec()))?;
        let b = unembed(&p.iter().map(|x| x / norm).collect::<Vec<_>>())?;
        total += a.dotc(&b).norm_sqr();
    }
    Ok((total / pred.nrows() as f64, degenerate))
}

/// Train on consecutive `(train, validation, test)` blocks of `samples`.
pub fn train_autoencoder(
    samples: &Array2<f64>,
    split: (usize, usize, usize),
    meta: AutoencoderMeta,
    config: &TrainConfig,
) -> Result<(AutoencoderModel, AutoencoderResult)> {
    let (a, b, c) = split;
    if a == 0 || b == 0 || c == 0 || samples.nrows() < a + b + c {
        return Err(Error::config(format!(
            "split {a}/{b}/{c} needs non-empty parts and at most {} samples",
            samples.nrows()
        )));
    }
    let mut model = AutoencoderModel::new(meta)?;
    if samples.ncols() != model.net.input_dim() {
        return Err(Error::size(format!(
            "samples have width {}, model expects {}",
            samples.ncols(),
            model.net.input_dim()
        )));
    }
    let train = samples.slice(s![..a, ..]);
    let val = samples.slice(s![a..a + b, ..]);
    let test = samples.slice(s![a + b..a + b + c, ..]).to_owned();
    let report = fit(&mut model.net, &SquaredErrorLoss, (train, train), (val, val), config)?;
    let recon = model.reconstruct(&test)?;
    let (fidelity, degenerate) = reconstruction_fidelity(&recon, &test)?;
    if degenerate > 0 {
        log::warn!("{degenerate} decoded states had norm below {MIN_DECODED_NORM}");
    }
    Ok((
        model,
        AutoencoderResult {
            fidelity,
            degenerate,
            report,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionPoint {
    pub init_kind: InitKind,
    pub time: f64,
    pub latent_dim: usize,
    pub fidelity: f64,
    pub degenerate: usize,
    pub epochs: usize,
}

/// Fidelity against latent size for each initial-state kind and probe time.
/// Every job is independent; results come back in argument order.
pub fn compression_curve(
    base: &ProbeConfig,
    kinds: &[InitKind],
    times: &[f64],
    latents: &[usize],
    config: &TrainConfig,
) -> Result<Vec<CompressionPoint>> {
    let count = DEFAULT_SPLIT.0 + DEFAULT_SPLIT.1 + DEFAULT_SPLIT.2;
    let mut jobs = Vec::new();
    for &kind in kinds {
        for &time in times {
            for &latent in latents {
                jobs.push((kind, time, latent));
            }
        }
    }
    jobs.par_iter()
        .map(|&(init_kind, time, latent_dim)| {
            let probe = ProbeConfig {
                init_kind,
                time,
                count,
                ..*base
            };
            let samples = sample_embeddings(&probe)?;
            let meta = AutoencoderMeta { latent_dim, probe };
            let (_, r) = train_autoencoder(&samples, DEFAULT_SPLIT, meta, config)?;
            log::info!("{init_kind} t={time} latent {latent_dim}: fidelity {:.4}", r.fidelity);
            Ok(CompressionPoint {
                init_kind,
                time,
                latent_dim,
                fidelity: r.fidelity,
                degenerate: r.degenerate,
                epochs: r.report.curve.len(),
            })
        })
        .collect()
}

pub fn write_compression_csv<W: Write>(out: W, points: &[CompressionPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of `x` scaled to unit norm (used to build exact targets in tests and demos).
pub fn normalize_rows(x: &mut Array2<f64>) {
    for mut row in x.axis_iter_mut(Axis(0)) {
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            row.mapv_inplace(|v| v / n);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::param_count;

    #[test]
    fn embedding_round_trip() {
        let psi = sample_random_state(3, 4).unwrap();
        let x = embed(&psi);
        assert_eq!(x.0.len(), 16);
        assert!((x.norm() - 1.0).abs() < 1e-12);
        assert_eq!(&unembed(&x.0).unwrap(), psi.amplitudes());
        let zero = PureState::basis(2, 0).unwrap();
        let e = embed(&zero).0;
        assert_eq!(e[0], 1.0);
        assert!(e[1..].iter().all(|&v| v == 0.0));
        assert!(unembed(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn architecture_and_split() {
        let probe = ProbeConfig {
            num_qubits: 5,
            coupling: 1.0,
            init_kind: InitKind::Product,
            time: 0.0,
            count: 10,
            phase_fix: true,
            seed: 0,
        };
        let m = AutoencoderModel::new(AutoencoderMeta { latent_dim: 15, probe }).unwrap();
        assert_eq!(m.net.sizes(), &[64, 64, 64, 15, 64, 64, 64]);
        let enc = m.encoder().unwrap();
        let dec = m.decoder().unwrap();
        assert_eq!(enc.sizes(), &[64, 64, 64, 15]);
        assert_eq!(dec.sizes(), &[15, 64, 64, 64]);
        assert_eq!(enc.num_params() + dec.num_params(), param_count(m.net.sizes()));
        assert_eq!(enc.chain(&dec).unwrap(), m.net);
    }

    #[test]
    fn fidelity_of_exact_and_scaled_reconstructions() {
        let probe = ProbeConfig {
            num_qubits: 2,
            coupling: 1.0,
            init_kind: InitKind::Random,
            time: 0.3,
            count: 6,
            phase_fix: false,
            seed: 1,
        };
        let x = sample_embeddings(&probe).unwrap();
        let (f, d) = reconstruction_fidelity(&x, &x).unwrap();
        assert!((f - 1.0).abs() < 1e-12 && d == 0);
        let (f, _) = reconstruction_fidelity(&(&x * 3.0), &x).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
        let mut z = x.clone();
        z.row_mut(0).fill(1e-9);
        let (f, d) = reconstruction_fidelity(&z, &x).unwrap();
        assert_eq!(d, 1);
        assert!((f - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn phase_fix_makes_first_amplitude_real() {
        let probe = ProbeConfig {
            num_qubits: 3,
            coupling: 1.0,
            init_kind: InitKind::Random,
            time: 0.5,
            count: 4,
            phase_fix: true,
            seed: 2,
        };
        let x = sample_embeddings(&probe).unwrap();
        for row in x.outer_iter() {
            assert!(row[0] > 0.0);
            assert_eq!(row[8], 0.0);
        }
    }

    #[test]
    fn learns_a_small_identity() {
        let probe = ProbeConfig {
            num_qubits: 2,
            coupling: 1.0,
            init_kind: InitKind::Product,
            time: 0.25,
            count: 400,
            phase_fix: true,
            seed: 5,
        };
        let x = sample_embeddings(&probe).unwrap();
        let cfg = TrainConfig {
            max_epochs: 300,
            patience: 30,
            ..TrainConfig::default()
        };
        let meta = AutoencoderMeta { latent_dim: 8, probe };
        let (model, r) = train_autoencoder(&x, (200, 100, 100), meta, &cfg).unwrap();
        assert!(r.fidelity > 0.95, "fidelity {}", r.fidelity);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ae.qpnn");
        model.save(&path).unwrap();
        assert_eq!(AutoencoderModel::load(&path).unwrap(), model);
        assert!(crate::nn::PropagatorModel::load(&path).is_err());
    }
}
