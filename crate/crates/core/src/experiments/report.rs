use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One trained cell of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub num_qubits: usize,
    pub init_kind: String,
    pub mode: String,
    pub targets: String,
    pub history: usize,
    pub stride: usize,
    /// Prediction distance in base steps.
    pub future: usize,
    /// Effective time step `stride · Δ₀`.
    pub step: f64,
    pub seed: u64,
    pub test_mtd: f64,
    pub p25: f64,
    pub p75: f64,
    /// MTD restricted to qubits inside the feature window.
    pub in_mtd: Option<f64>,
    /// MTD restricted to qubits outside the feature window.
    pub out_mtd: Option<f64>,
    pub val_mtd: f64,
    pub epochs: usize,
    pub train_rows: usize,
    /// Smallest swept memory of this row's group with test MTD under threshold.
    pub h_nec: Option<usize>,
    /// `h_nec` of a reference experiment for the same group, when compared.
    pub reference_h_nec: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub rows: Vec<ReportRow>,
    /// Echo of the configuration that produced the rows.
    pub config: serde_json::Value,
    pub runtime_secs: f64,
}

impl ExperimentReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_rows(out, &self.rows)
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<Vec<std::path::PathBuf>> {
        fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.config.json"));
        let dat_path = dir.join(format!("{stem}.dat"));
        self.write_csv(fs::File::create(&csv_path)?)?;
        let echo = serde_json::json!({
            "name": self.name,
            "config": self.config,
            "runtime_secs": self.runtime_secs,
        });
        fs::write(&json_path, serde_json::to_string_pretty(&echo)?)?;
        write_dat(fs::File::create(&dat_path)?, &self.rows)?;
        Ok(vec![csv_path, json_path, dat_path])
    }

    /// Rows of one group, ordered by memory.
    pub fn group(&self, num_qubits: usize, mode: &str, stride: usize, future: usize) -> Vec<&ReportRow> {
        let mut rows: Vec<&ReportRow> = self
            .rows
            .iter()
            .filter(|r| r.num_qubits == num_qubits && r.mode == mode && r.stride == stride && r.future == future)
            .collect();
        rows.sort_by_key(|r| (r.history, r.seed));
        rows
    }

    /// `h_nec` for a group, if resolved.
    pub fn h_nec(&self, num_qubits: usize, mode: &str, stride: usize, future: usize) -> Option<usize> {
        self.group(num_qubits, mode, stride, future).first().and_then(|r| r.h_nec)
    }
}

pub fn write_rows<W: Write>(out: W, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

pub fn load_rows(path: &Path) -> Result<Vec<ReportRow>> {
    if !path.exists() {
        return Err(crate::error::Error::MissingInput {
            path: path.to_path_buf(),
            hint: "run `qprop sweep` to produce a report".into(),
        });
    }
    read_rows(fs::File::open(path)?)
}

/// Whitespace-separated columns for gnuplot, one block per group.
pub fn write_dat<W: Write>(mut out: W, rows: &[ReportRow]) -> Result<()> {
    writeln!(out, "# N mode stride future history step test_mtd p25 p75 h_nec")?;
    let mut last: Option<(usize, &str, usize, usize)> = None;
    for r in rows {
        let key = (r.num_qubits, r.mode.as_str(), r.stride, r.future);
        if last.is_some() && last != Some(key) {
            writeln!(out)?;
            writeln!(out)?;
        }
        last = Some(key);
        writeln!(
            out,
            "{} {} {} {} {} {:.6} {:.6e} {:.6e} {:.6e} {}",
            r.num_qubits,
            r.mode,
            r.stride,
            r.future,
            r.history,
            r.step,
            r.test_mtd,
            r.p25,
            r.p75,
            r.h_nec.map(|h| h.to_string()).unwrap_or_else(|| "nan".into())
        )?;
    }
    Ok(())
}

/// Linear-interpolation percentile of sorted data, `q ∈ [0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}
