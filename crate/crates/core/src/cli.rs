//! Command-line front end. Every subcommand writes only inside `--out`,
//! echoes its merged configuration and records a checksum manifest.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autoencoder::{compression_curve, write_compression_csv, ProbeConfig};
use crate::dataset::{
    generate_dataset, load_dataset, make_supervised_pairs, save_dataset, AnchorSampling, GenerateConfig, InitKind,
    Mode, PairSpec, SamplingGrid, Split, TrajectoryDataset, DEFAULT_BASE_STEP,
};
use crate::dynamics::{build_heisenberg_ring, spectrum_frequencies, DEFAULT_DEGENERACY_TOL};
use crate::error::{Error, Result};
use crate::experiments::{
    dataset_entropy_track, diagnostics_run, load_rows, locality_experiment, memory_sweep, nyquist_sweep,
    product_state_study, scaling_report, write_diagnostics_csv, write_nyquist_csv, write_scaling_csv,
    DiagnosticsConfig, ExperimentReport, HistoryGrid, SweepSpec, DEFAULT_THRESHOLD,
};
use crate::nn::{PropagatorModel, TrainConfig};
use crate::propagation::{autoregress, dataset_frames, save_trajectory_csv};

/// Exit code for invalid input or configuration.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code for numerical failure.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "qprop", version, about = "Spin-ring trajectories and learned time propagators")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Evolve random or product states and store Bloch trajectories.
    Generate,
    /// Train a propagator (or an ensemble) on a stored dataset.
    Train,
    /// Test-split error of trained models.
    Evaluate,
    /// Memory sweep and derived studies.
    Sweep,
    /// Feed predictions back as inputs and compare with exact evolution.
    Autoregress,
    /// Transition frequencies of the ring.
    Spectrum,
    /// Entropy and fidelity tracks.
    Diagnostics,
    /// Autoencoder compression curve.
    Autoencode,
    /// Scaling table from a memory-sweep report.
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    All,
    Single,
    Subset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Memory,
    Nyquist,
    Locality,
    Product,
}

/// Flags shared by all subcommands; unset flags fall back to `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Ring sizes (comma-separated; most subcommands use the first).
    #[arg(long, global = true, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Exchange coupling J.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub j: Option<f64>,
    /// Trajectories (or states) to generate.
    #[arg(long, global = true)]
    pub count: Option<usize>,
    #[arg(long, global = true)]
    pub init: Option<InitKind>,
    /// Base time step Δ₀.
    #[arg(long, global = true)]
    pub delta0: Option<f64>,
    /// Stored time steps per trajectory.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    /// Qubit for `single`, or the list for `subset`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub qubits: Option<Vec<usize>>,
    /// Memory depth(s); a sweep without it uses a geometric grid.
    #[arg(long, global = true, value_delimiter = ',')]
    pub history: Option<Vec<usize>>,
    /// Prediction distance(s) in effective steps.
    #[arg(long, global = true, value_delimiter = ',')]
    pub future: Option<Vec<usize>>,
    /// Sub-sampling stride(s) of the base grid.
    #[arg(long, global = true, value_delimiter = ',')]
    pub stride: Option<Vec<usize>>,
    /// Ensemble size.
    #[arg(long, global = true)]
    pub ensemble: Option<usize>,
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; nothing is written outside it.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// JSON configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Sweep study.
    #[arg(long, global = true, value_enum)]
    pub experiment: Option<Experiment>,
    /// Maximum training epochs.
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Random anchors per trajectory (all anchors when unset).
    #[arg(long, global = true)]
    pub anchors: Option<usize>,
    /// Autoregression steps.
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    /// Latent sizes for `autoencode`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub latent: Option<Vec<usize>>,
}

/// Fully resolved configuration, echoed next to every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub n: Vec<usize>,
    pub j: f64,
    pub count: usize,
    pub init: InitKind,
    pub delta0: f64,
    pub steps: usize,
    pub mode: ModeArg,
    pub qubits: Vec<usize>,
    pub history: Vec<usize>,
    pub future: Vec<usize>,
    pub stride: Vec<usize>,
    pub ensemble: usize,
    pub threshold: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub workers: Option<usize>,
    pub experiment: Experiment,
    pub epochs: usize,
    pub anchors: Option<usize>,
    pub horizon: usize,
    pub latent: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: vec![2],
            j: 1.0,
            count: 2200,
            init: InitKind::Random,
            delta0: DEFAULT_BASE_STEP,
            steps: 256,
            mode: ModeArg::All,
            qubits: vec![0],
            history: Vec::new(),
            future: vec![1],
            stride: vec![1],
            ensemble: 1,
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
            out: PathBuf::from("out"),
            workers: None,
            experiment: Experiment::Memory,
            epochs: TrainConfig::default().max_epochs,
            anchors: None,
            horizon: 200,
            latent: vec![5, 10, 15, 20, 32, 64],
        }
    }
}

impl RunConfig {
    /// Defaults, then the config file, then explicit flags.
    pub fn resolve(flags: &Flags) -> Result<Self> {
        let mut cfg = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|_| Error::MissingInput {
                    path: path.clone(),
                    hint: "pass an existing JSON config".into(),
                })?;
                serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = &flags.$f { cfg.$f = v.clone(); } )* };
        }
        take!(n, j, count, init, delta0, steps, mode, qubits, history, future, stride, ensemble, threshold, seed, out, experiment, epochs);
        if flags.workers.is_some() {
            cfg.workers = flags.workers;
        }
        if flags.anchors.is_some() {
            cfg.anchors = flags.anchors;
        }
        if let Some(h) = flags.horizon {
            cfg.horizon = h;
        }
        if let Some(l) = &flags.latent {
            cfg.latent = l.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() || self.future.is_empty() || self.stride.is_empty() {
            return Err(Error::config("--n, --future and --stride need at least one value"));
        }
        if self.future.contains(&0) || self.stride.contains(&0) || self.history.contains(&0) {
            return Err(Error::config("--history, --future and --stride must be positive"));
        }
        if self.ensemble == 0 {
            return Err(Error::config("--ensemble must be at least 1"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::config("--threshold must lie in (0, 1)"));
        }
        Ok(())
    }

    fn n0(&self) -> usize {
        self.n[0]
    }

    pub fn mode_for(&self, n: usize) -> Result<Mode> {
        let mode = match self.mode {
            ModeArg::All => Mode::All,
            ModeArg::Single => Mode::Single(*self.qubits.first().unwrap_or(&0)),
            ModeArg::Subset => Mode::Subset(self.qubits.clone()),
        };
        if let Some(&q) = mode.qubits(n).iter().find(|&&q| q >= n) {
            return Err(Error::Index { index: q, len: n });
        }
        Ok(mode)
    }

    pub fn anchor_sampling(&self) -> AnchorSampling {
        match self.anchors {
            Some(k) => AnchorSampling::Random {
                per_trajectory: k,
                seed: self.seed,
            },
            None => AnchorSampling::Every,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            max_epochs: self.epochs,
            patience: d.patience.min(self.epochs.saturating_sub(1)).max(1),
            seed,
            ..d
        }
    }

    pub fn pair_spec(&self, n: usize) -> Result<PairSpec> {
        let h = *self.history.first().unwrap_or(&1);
        Ok(PairSpec::new(self.mode_for(n)?, h, self.future[0], self.stride[0]).with_anchors(self.anchor_sampling()))
    }

    fn grid(&self) -> Result<SamplingGrid> {
        SamplingGrid::new(self.delta0, self.steps)
    }

    pub fn dataset_path(&self, n: usize, init: InitKind) -> PathBuf {
        self.out.join("data").join(format!("ring_n{n}_{init}.qprp"))
    }

    pub fn model_path(&self, n: usize, spec: &PairSpec, seed: u64) -> PathBuf {
        self.out.join("models").join(format!(
            "n{n}_{}_h{}_f{}_s{}_seed{seed}.qpnn",
            spec.mode.label(),
            spec.history,
            spec.future,
            spec.stride
        ))
    }
}

/// Tracks files written by one subcommand.
struct Outputs {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    /// Resolve `rel` inside the output directory, creating parents.
    fn path(&mut self, rel: impl AsRef<Path>) -> Result<PathBuf> {
        let rel = rel.as_ref();
        if rel.is_absolute() || rel.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
            return Err(Error::config(format!("output path {} escapes the output directory", rel.display())));
        }
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.push(p.clone());
        Ok(p)
    }

    fn record(&mut self, p: PathBuf) -> Result<()> {
        if !p.starts_with(&self.root) {
            return Err(Error::config(format!("{} is outside the output directory", p.display())));
        }
        self.files.push(p);
        Ok(())
    }

    fn finish(mut self, command: Command, cfg: &RunConfig) -> Result<()> {
        let name = command_name(command);
        let echo = self.path(format!("{name}.config.json"))?;
        fs::write(&echo, serde_json::to_string_pretty(cfg)?)?;
        let mut entries = BTreeMap::new();
        for f in &self.files {
            if f.exists() {
                let digest = Sha256::digest(fs::read(f)?);
                let rel = f.strip_prefix(&self.root).unwrap_or(f).to_string_lossy().into_owned();
                entries.insert(rel, hex::encode(digest));
            }
        }
        let manifest = serde_json::json!({
            "command": name,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": cfg.seed,
            "seed_scheme": "child = splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ index); ChaCha8 per child",
            "config": format!("{name}.config.json"),
            "sha256": entries,
        });
        fs::write(
            self.root.join(format!("{name}.manifest.json")),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }
}

fn command_name(c: Command) -> &'static str {
    match c {
        Command::Generate => "generate",
        Command::Train => "train",
        Command::Evaluate => "evaluate",
        Command::Sweep => "sweep",
        Command::Autoregress => "autoregress",
        Command::Spectrum => "spectrum",
        Command::Diagnostics => "diagnostics",
        Command::Autoencode => "autoencode",
        Command::Report => "report",
    }
}

fn load_for(cfg: &RunConfig, n: usize, init: InitKind) -> Result<TrajectoryDataset> {
    let path = cfg.dataset_path(n, init);
    load_dataset(&path).map_err(|e| match e {
        Error::MissingInput { path, .. } => Error::MissingInput {
            path,
            hint: format!(
                "run `qprop generate --n {n} --init {init} --out {}` first",
                cfg.out.display()
            ),
        },
        other => other,
    })
}

fn generate(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    for &n in &cfg.n {
        let gen = GenerateConfig {
            num_qubits: n,
            coupling: cfg.j,
            init_kind: cfg.init,
            count: cfg.count,
            grid: cfg.grid()?,
            seed: cfg.seed,
        };
        let ds = generate_dataset(&gen)?;
        let path = out.path(cfg.dataset_path(n, cfg.init).strip_prefix(&cfg.out).unwrap())?;
        save_dataset(&ds, &path)?;
        out.record(crate::dataset::sidecar_path(&path))?;
        log::info!("wrote {} trajectories of N={n} to {}", ds.len(), path.display());
    }
    Ok(())
}

fn train(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let n = cfg.n0();
    let ds = load_for(cfg, n, cfg.init)?;
    let spec = cfg.pair_spec(n)?;
    let mut curves = csv::Writer::from_path(out.path("train_curves.csv")?)?;
    curves.write_record(["seed", "epoch", "train_loss", "val_mtd"])?;
    for k in 0..cfg.ensemble as u64 {
        let seed = cfg.seed + k;
        let (model, report) = PropagatorModel::train(&ds, &spec, &cfg.train_config(seed))?;
        for e in &report.curve {
            curves.write_record(&[
                seed.to_string(),
                e.epoch.to_string(),
                format!("{:.17e}", e.train_loss),
                format!("{:.17e}", e.val_metric),
            ])?;
        }
        let path = out.path(cfg.model_path(n, &spec, seed).strip_prefix(&cfg.out).unwrap())?;
        model.save(&path)?;
        out.record(crate::dataset::sidecar_path(&path))?;
        log::info!(
            "seed {seed}: best validation MTD {:.4e} at epoch {}",
            report.best_val,
            report.best_epoch
        );
    }
    curves.flush()?;
    Ok(())
}

fn load_ensemble(cfg: &RunConfig, n: usize, spec: &PairSpec) -> Result<Vec<PropagatorModel>> {
    (0..cfg.ensemble as u64)
        .map(|k| {
            let path = cfg.model_path(n, spec, cfg.seed + k);
            PropagatorModel::load(&path).map_err(|e| match e {
                Error::MissingInput { path, .. } => Error::MissingInput {
                    path,
                    hint: "run `qprop train` with the same flags first".into(),
                },
                other => other,
            })
        })
        .collect()
}

fn evaluate(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let n = cfg.n0();
    let ds = load_for(cfg, n, cfg.init)?;
    let spec = cfg.pair_spec(n)?;
    let models = load_ensemble(cfg, n, &spec)?;
    let test = make_supervised_pairs(&ds, &spec, Some(Split::Test))?;
    let mut w = csv::Writer::from_path(out.path("evaluate.csv")?)?;
    w.write_record(["seed", "test_mtd", "pairs"])?;
    for m in &models {
        let mtd = m.evaluate_mtd(&test)?;
        log::info!("seed {}: test MTD {mtd:.4e} over {} pairs", m.meta.seed, test.len());
        w.write_record(&[m.meta.seed.to_string(), format!("{mtd:.17e}"), test.len().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn sweep_spec(cfg: &RunConfig) -> Result<SweepSpec> {
    let n = cfg.n0();
    Ok(SweepSpec {
        sizes: cfg.n.clone(),
        modes: vec![cfg.mode_for(n)?],
        targets: None,
        futures: cfg.future.clone(),
        histories: if cfg.history.is_empty() {
            HistoryGrid::Geometric {
                max: 256,
                resolution: 4,
                extra_after_crossing: 1,
            }
        } else {
            HistoryGrid::Explicit(cfg.history.clone())
        },
        strides: cfg.stride.clone(),
        threshold: cfg.threshold,
        seeds: (0..cfg.ensemble as u64).map(|k| cfg.seed + k).collect(),
        anchors: cfg.anchor_sampling(),
        train: cfg.train_config(cfg.seed),
    })
}

fn sweep(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let mut spec = sweep_spec(cfg)?;
    let load_all = |init: InitKind| -> Result<BTreeMap<usize, TrajectoryDataset>> {
        cfg.n.iter().map(|&n| Ok((n, load_for(cfg, n, init)?))).collect()
    };
    // Sweep futures are in effective steps; convert per stride to base steps.
    let report: ExperimentReport = match cfg.experiment {
        Experiment::Memory | Experiment::Product => {
            let mut rows = Vec::new();
            let mut config = Vec::new();
            let mut runtime = 0.0;
            let random = if cfg.experiment == Experiment::Product {
                Some(load_all(InitKind::Random)?)
            } else {
                None
            };
            for &stride in &cfg.stride {
                let s = SweepSpec {
                    strides: vec![stride],
                    futures: cfg.future.iter().map(|m| m * stride).collect(),
                    ..spec.clone()
                };
                let r = match &random {
                    None => memory_sweep("memory", &load_all(cfg.init)?, &s)?,
                    Some(rand_data) => {
                        let reference = memory_sweep("memory", rand_data, &s)?;
                        product_state_study(&load_all(InitKind::ProductEquilibrated)?, &s, &reference)?
                    }
                };
                runtime += r.runtime_secs;
                config.push(r.config);
                rows.extend(r.rows);
            }
            ExperimentReport {
                name: if random.is_some() { "product" } else { "memory" }.into(),
                rows,
                config: serde_json::Value::Array(config),
                runtime_secs: runtime,
            }
        }
        Experiment::Nyquist => {
            let n = cfg.n0();
            let ds = load_for(cfg, n, cfg.init)?;
            // One physical prediction time for every stride, in steps of the first stride.
            spec.futures = vec![cfg.future[0] * cfg.stride[0]];
            let (report, rows) = nyquist_sweep(&ds, &spec)?;
            write_nyquist_csv(fs::File::create(out.path("nyquist.csv")?)?, &rows)?;
            for r in &rows {
                log::info!(
                    "stride {} ({}): h_nec {:?}, duration {:?}",
                    r.stride,
                    r.regime,
                    r.h_nec,
                    r.duration
                );
            }
            report
        }
        Experiment::Locality => {
            let n = cfg.n0();
            let ds = load_for(cfg, n, cfg.init)?;
            spec.futures = cfg.future.iter().map(|m| m * cfg.stride[0]).collect();
            spec.strides = vec![cfg.stride[0]];
            let blocks: Vec<usize> = (1..=n).collect();
            locality_experiment(&ds, &blocks, &spec)?
        }
    };
    let stem = report.name.clone();
    let csv_path = out.path(format!("{stem}.csv"))?;
    report.write_csv(fs::File::create(&csv_path)?)?;
    let dat_path = out.path(format!("{stem}.dat"))?;
    crate::experiments::write_dat(fs::File::create(&dat_path)?, &report.rows)?;
    let meta_path = out.path(format!("{stem}.run.json"))?;
    fs::write(
        &meta_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "name": report.name,
            "config": report.config,
            "runtime_secs": report.runtime_secs,
        }))?,
    )?;
    let mut seen = std::collections::BTreeSet::new();
    for r in &report.rows {
        if seen.insert((r.num_qubits, r.mode.clone(), r.stride, r.future)) {
            log::info!(
                "N={} {} stride {} future {}: h_nec {:?}",
                r.num_qubits,
                r.mode,
                r.stride,
                r.future,
                r.h_nec
            );
        }
    }
    Ok(())
}

fn autoregress_cmd(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let n = cfg.n0();
    let spec = cfg.pair_spec(n)?;
    if spec.future != spec.stride {
        return Err(Error::config("autoregression needs --future 1"));
    }
    let models = load_ensemble(cfg, n, &spec)?;
    let ds = load_for(cfg, n, cfg.init)?;
    let records = ds.split_indices(Split::Test);
    let h = spec.history;
    let needed = (h + cfg.horizon - 1) * spec.stride + 1;
    if needed > ds.grid.num_steps {
        return Err(Error::config(format!(
            "horizon {} with h={h} needs trajectories of {needed} steps; regenerate with --steps {needed}",
            cfg.horizon
        )));
    }
    let qubits = spec.mode.qubits(n);
    let frames = dataset_frames(&ds, &records, &qubits, 0, spec.stride, h + cfg.horizon)?;
    let run = autoregress(&models, &frames[..h], cfg.horizon, Some(&frames[h..]))?;
    let dt = ds.grid.step(spec.stride);
    let t0 = (h - 1) as f64 * dt;
    save_trajectory_csv(&out.path("trajectory.csv")?, &run, 0, t0, dt, Some(&frames[h..]))?;
    let mut w = csv::Writer::from_path(out.path("autoregress_mtd.csv")?)?;
    w.write_record(["time", "mtd", "variance"])?;
    let conf = run.confidence();
    for (k, m) in run.mtd.as_ref().unwrap().iter().enumerate() {
        w.write_record(&[
            format!("{}", t0 + (k + 1) as f64 * dt),
            format!("{m:.17e}"),
            format!("{:.17e}", conf[k]),
        ])?;
    }
    w.flush()?;
    log::info!(
        "{} trajectories, {} steps: mean MTD {:.4e}, {} unphysical predictions",
        records.len(),
        cfg.horizon,
        run.mean_mtd().unwrap_or(f64::NAN),
        run.excursions
    );
    Ok(())
}

fn spectrum(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let mut w = csv::Writer::from_path(out.path("spectrum.csv")?)?;
    w.write_record(["N", "f_min", "f_max", "num_unique", "delta_max"])?;
    for &n in &cfg.n {
        let s = spectrum_frequencies(&build_heisenberg_ring(n, cfg.j)?, DEFAULT_DEGENERACY_TOL);
        eprintln!(
            "N={n}: f_min = {:.4}, f_max = {:.4}, N_uni = {}, Δ_max = {:.4}π",
            s.f_min,
            s.f_max,
            s.num_unique,
            s.nyquist_period() / PI
        );
        w.write_record(&[
            n.to_string(),
            format!("{:.17e}", s.f_min),
            format!("{:.17e}", s.f_max),
            s.num_unique.to_string(),
            format!("{:.17e}", s.nyquist_period()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn diagnostics(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    for &n in &cfg.n {
        let path = cfg.dataset_path(n, cfg.init);
        if path.exists() {
            let ds = load_dataset(&path)?;
            let track = dataset_entropy_track(&ds);
            let mut w = csv::Writer::from_path(out.path(format!("dataset_entropy_n{n}_{}.csv", cfg.init))?)?;
            w.write_record(["time", "entropy"])?;
            for (k, s) in track.iter().enumerate() {
                w.write_record(&[format!("{}", ds.grid.time(k)), format!("{s:.17e}")])?;
            }
            w.flush()?;
            log::info!("N={n}: dataset entropy at t=0 is {:.3e}", track[0]);
        }
    }
    let dcfg = DiagnosticsConfig {
        sizes: cfg.n.clone(),
        coupling: cfg.j,
        count: cfg.count.min(200),
        grid: cfg.grid()?,
        seed: cfg.seed,
    };
    let tracks = diagnostics_run(&dcfg)?;
    write_diagnostics_csv(fs::File::create(out.path("diagnostics.csv")?)?, &tracks)?;
    let mut w = csv::Writer::from_path(out.path("periods.csv")?)?;
    w.write_record(["N", "period"])?;
    for t in &tracks {
        log::info!("N={}: fidelity period {:?}", t.num_qubits, t.period.map(|p| p / PI));
        w.write_record(&[t.num_qubits.to_string(), t.period.map(|p| format!("{p:.17e}")).unwrap_or_default()])?;
    }
    w.flush()?;
    Ok(())
}

fn autoencode(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let base = ProbeConfig {
        num_qubits: cfg.n0(),
        coupling: cfg.j,
        init_kind: InitKind::Random,
        time: 0.0,
        count: 0,
        phase_fix: true,
        seed: cfg.seed,
    };
    let times = [0.0, 0.25, 0.5, 1.0].map(|t| t / cfg.j.abs());
    let points = compression_curve(
        &base,
        &[InitKind::Random, InitKind::Product],
        &times,
        &cfg.latent,
        &cfg.train_config(cfg.seed),
    )?;
    write_compression_csv(fs::File::create(out.path("compression.csv")?)?, &points)?;
    Ok(())
}

fn report(cfg: &RunConfig, out: &mut Outputs) -> Result<()> {
    let rows = load_rows(&cfg.out.join("memory.csv"))?;
    let rep = ExperimentReport {
        name: "memory".into(),
        rows,
        config: serde_json::Value::Null,
        runtime_secs: 0.0,
    };
    let stride = cfg.stride[0];
    let scaling = scaling_report(&rep, cfg.j, stride, cfg.future[0] * stride)?;
    write_scaling_csv(fs::File::create(out.path("scaling.csv")?)?, &scaling)?;
    for f in &scaling.fits {
        eprintln!("{}: alpha = {:.3} over {} sizes", f.mode, f.alpha, f.points);
    }
    Ok(())
}

/// Run one subcommand with a resolved configuration.
pub fn run(command: Command, cfg: &RunConfig) -> Result<()> {
    let mut out = Outputs::new(&cfg.out)?;
    match command {
        Command::Generate => generate(cfg, &mut out)?,
        Command::Train => train(cfg, &mut out)?,
        Command::Evaluate => evaluate(cfg, &mut out)?,
        Command::Sweep => sweep(cfg, &mut out)?,
        Command::Autoregress => autoregress_cmd(cfg, &mut out)?,
        Command::Spectrum => spectrum(cfg, &mut out)?,
        Command::Diagnostics => diagnostics(cfg, &mut out)?,
        Command::Autoencode => autoencode(cfg, &mut out)?,
        Command::Report => report(cfg, &mut out)?,
    }
    out.finish(command, cfg)
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_VALIDATION
    }
}

/// Parse arguments, run, and map the outcome to a process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { 0 };
        }
    };
    let cfg = match RunConfig::resolve(&cli.flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    if let Some(w) = cfg.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global() {
            log::warn!("worker pool already configured: {e}");
        }
    }
    match run(cli.command, &cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
