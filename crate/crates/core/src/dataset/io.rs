//! Binary dataset format (little-endian):
//!
//! ```text
//! header   "QPRP1" | u32 N | u32 num_steps | f64 Δ₀ | u32 count
//! record   u8 init_kind | u64 seed | f64 bloch[num_steps][N][3]
//! ```
//!
//! A JSON sidecar (`<path>.json`) carries the generation config, the code
//! version and the split counts.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::{split_counts, InitKind, SamplingGrid, TrajectoryDataset, TrajectoryRecord};
use crate::dynamics::MAX_QUBITS;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"QPRP1";
pub const HEADER_LEN: usize = 5 + 4 + 4 + 8 + 4;
pub const RECORD_PREFIX_LEN: usize = 1 + 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format: String,
    pub version: String,
    pub num_qubits: usize,
    pub coupling: f64,
    pub base_step: f64,
    pub num_steps: usize,
    pub count: usize,
    pub seed: u64,
    pub init_kinds: Vec<InitKind>,
    pub splits: SplitSizes,
}

impl DatasetMeta {
    pub fn of(ds: &TrajectoryDataset) -> Self {
        let mut init_kinds: Vec<InitKind> = Vec::new();
        for r in &ds.records {
            if !init_kinds.contains(&r.init_kind) {
                init_kinds.push(r.init_kind);
            }
        }
        let (train, validation, test) = split_counts(ds.len());
        Self {
            format: String::from_utf8_lossy(MAGIC).into_owned(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            num_qubits: ds.num_qubits,
            coupling: ds.coupling,
            base_step: ds.grid.base_step,
            num_steps: ds.grid.num_steps,
            count: ds.len(),
            seed: ds.seed,
            init_kinds,
            splits: SplitSizes {
                train,
                validation,
                test,
            },
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_dataset(ds: &TrajectoryDataset, path: &Path) -> Result<()> {
    let n = ds.num_qubits;
    let steps = ds.grid.num_steps;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&(steps as u32).to_le_bytes())?;
    w.write_all(&ds.grid.base_step.to_le_bytes())?;
    w.write_all(&(ds.len() as u32).to_le_bytes())?;
    for rec in &ds.records {
        if rec.bloch.shape() != [steps, n, 3] {
            return Err(Error::size(format!(
                "record {} has shape {:?}, expected [{steps}, {n}, 3]",
                rec.seed,
                rec.bloch.shape()
            )));
        }
        w.write_all(&[rec.init_kind.tag()])?;
        w.write_all(&rec.seed.to_le_bytes())?;
        for v in rec.bloch.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    let meta = serde_json::to_string_pretty(&DatasetMeta::of(ds))?;
    fs::write(sidecar_path(path), meta + "\n")?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(
                self.pos as u64,
                format!("truncated while reading {what} ({len} bytes needed, {} left)", self.bytes.len() - self.pos),
            )
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn load_dataset(path: &Path) -> Result<TrajectoryDataset> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput {
            path: path.to_path_buf(),
            hint: "run `qprop generate` first".into(),
        },
        _ => Error::Io(e),
    })?;
    let mut ds = decode(&bytes)?;
    let side = sidecar_path(path);
    if side.exists() {
        let meta: DatasetMeta = serde_json::from_slice(&fs::read(side)?)?;
        ds.coupling = meta.coupling;
        ds.seed = meta.seed;
    }
    Ok(ds)
}

/// Parse the binary layout. Coupling and global seed live in the sidecar and
/// default to `1.0` and `0` here.
pub fn decode(bytes: &[u8]) -> Result<TrajectoryDataset> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c.take(MAGIC.len(), "magic")?;
    if magic != MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:?}, expected {MAGIC:?}")));
    }
    let n_off = c.pos as u64;
    let n = c.u32("qubit count")? as usize;
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::format(n_off, format!("qubit count {n} outside 1..={MAX_QUBITS}")));
    }
    let steps_off = c.pos as u64;
    let steps = c.u32("step count")? as usize;
    if steps < 2 {
        return Err(Error::format(steps_off, format!("step count {steps} < 2")));
    }
    let step_off = c.pos as u64;
    let base_step = c.f64("base step")?;
    if !(base_step > 0.0) || !base_step.is_finite() {
        return Err(Error::format(step_off, format!("invalid base step {base_step}")));
    }
    let count_off = c.pos as u64;
    let count = c.u32("record count")? as usize;
    let values = steps * n * 3;
    let record_len = values
        .checked_mul(8)
        .and_then(|v| v.checked_add(RECORD_PREFIX_LEN))
        .ok_or_else(|| Error::format(steps_off, "record size overflows"))?;
    let expected = record_len
        .checked_mul(count)
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::format(count_off, "dataset size overflows"))?;
    if expected < bytes.len() {
        return Err(Error::format(expected as u64, format!("{} trailing bytes", bytes.len() - expected)));
    }

    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let kind_off = c.pos as u64;
        let tag = c.u8("init kind")?;
        let init_kind =
            InitKind::from_tag(tag).ok_or_else(|| Error::format(kind_off, format!("unknown init kind tag {tag}")))?;
        let seed = c.u64("record seed")?;
        let raw = c.take(values * 8, "Bloch tensor")?;
        let data: Vec<f64> = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        let bloch = Array3::from_shape_vec((steps, n, 3), data).expect("length checked");
        records.push(TrajectoryRecord { init_kind, seed, bloch });
    }
    Ok(TrajectoryDataset {
        num_qubits: n,
        coupling: 1.0,
        grid: SamplingGrid { base_step, num_steps: steps },
        seed: 0,
        records,
    })
}
