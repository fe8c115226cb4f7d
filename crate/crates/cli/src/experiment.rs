//! Single runs: build the instance, run the engine, write the artifacts.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use serde::Serialize;

use sapalm::{
    firm_pca_instance, generate_data, run, spca_instance, BlockVector, Checkpoint, FactorizationData,
    FactorizationState, Problem, ProxParams, RunOutput, RunTrace,
};

use crate::config::{ExperimentConfig, ProblemKind};

pub const TRACE_FILE: &str = "trace.csv";
pub const METADATA_FILE: &str = "metadata.toml";
pub const DATA_FILE: &str = "data.bin";

/// Column order of `trace.csv`.
pub const TRACE_COLUMNS: [&str; 10] = [
    "k",
    "epoch",
    "wall_time_s",
    "objective",
    "stationarity",
    "lyapunov",
    "max_delay",
    "c_k",
    "batch_size",
    "iterate_norm",
];

pub struct Instance {
    pub data: Arc<FactorizationData>,
    pub problem: Problem,
    pub x0: BlockVector,
}

pub fn build_instance(cfg: &ExperimentConfig) -> Result<Instance> {
    let data = match &cfg.data_file {
        Some(path) => {
            let data = FactorizationData::load(path).with_context(|| format!("loading {}", path.display()))?;
            anyhow::ensure!(
                data.n() == cfg.n,
                "n: config says {} but {} holds n = {}",
                cfg.n,
                path.display(),
                data.n()
            );
            data
        }
        None => generate_data(cfg.n, cfg.data_seed)?,
    };
    let data = Arc::new(data);
    let problem = match cfg.problem {
        ProblemKind::Spca => spca_instance(data.clone(), cfg.d, cfg.lambda, cfg.safety)?,
        ProblemKind::FirmPca => {
            let params = ProxParams { lambda: cfg.lambda, kappa: cfg.kappa, mu: cfg.mu };
            firm_pca_instance(data.clone(), cfg.d, params, cfg.safety)?
        }
    };
    let x0 = FactorizationState::random(cfg.d, cfg.n, cfg.seed).to_blocks();
    Ok(Instance { data, problem, x0 })
}

#[derive(Debug, Serialize)]
struct TraceRow {
    k: u64,
    epoch: f64,
    wall_time_s: f64,
    objective: f64,
    stationarity: f64,
    lyapunov: f64,
    max_delay: u64,
    c_k: f64,
    batch_size: Option<usize>,
    iterate_norm: f64,
}

impl TraceRow {
    fn new(c: &Checkpoint, wall_time: bool) -> Self {
        Self {
            k: c.k,
            epoch: c.epoch,
            wall_time_s: if wall_time { c.wall_time_s } else { 0.0 },
            objective: c.objective,
            stationarity: c.stationarity,
            lyapunov: c.lyapunov,
            max_delay: c.max_delay,
            c_k: c.c_k,
            batch_size: c.batch_size,
            iterate_norm: c.iterate_norm,
        }
    }
}

/// Writes the checkpoints as CSV; `error` adds a final `# error: …` line.
pub fn write_trace(path: &Path, trace: &RunTrace, wall_time: bool, error: Option<&str>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::Writer::from_writer(file);
    if trace.checkpoints.is_empty() {
        w.write_record(TRACE_COLUMNS)?;
    }
    for c in &trace.checkpoints {
        w.serialize(TraceRow::new(c, wall_time))?;
    }
    let mut file = w.into_inner().map_err(|e| e.into_error())?;
    if let Some(msg) = error {
        writeln!(file, "# error: {}", msg.replace('\n', " "))?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct RunSummary {
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    library_version: &'static str,
    harness_version: &'static str,
    data_seed: u64,
    total_updates: u64,
    elapsed_s: f64,
    updates_per_sec: f64,
    configured_tau: usize,
    observed_max_delay: u64,
    mean_delay: f64,
    block_versions: Vec<u64>,
    /// `worker_blocks[w]` lists the blocks worker `w` may update.
    worker_blocks: Vec<Vec<usize>>,
    approximate_checkpoints: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    write_log_consistent: Option<bool>,
    warnings: Vec<String>,
    lambda: f64,
    kappa: f64,
    mu: f64,
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    run: RunSummary,
    config: &'a ExperimentConfig,
}

fn write_metadata(path: &Path, cfg: &ExperimentConfig, trace: &RunTrace, error: Option<String>) -> Result<()> {
    let run = RunSummary {
        status: if error.is_some() { "error".into() } else { "ok".into() },
        error,
        library_version: sapalm_version(),
        harness_version: env!("CARGO_PKG_VERSION"),
        data_seed: cfg.data_seed,
        total_updates: trace.total_updates,
        elapsed_s: trace.elapsed_s,
        updates_per_sec: trace.updates_per_sec(),
        configured_tau: trace.configured_tau,
        observed_max_delay: trace.max_delay(),
        mean_delay: trace.delays.mean(),
        block_versions: trace.block_versions.clone(),
        worker_blocks: trace.worker_blocks.clone(),
        approximate_checkpoints: trace.checkpoints.iter().any(|c| c.approximate),
        write_log_consistent: trace.write_log_consistent,
        warnings: trace.warnings.clone(),
        lambda: cfg.lambda,
        kappa: cfg.kappa,
        mu: cfg.mu,
    };
    let text = toml::to_string(&Metadata { run, config: cfg })?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Version of the algorithm library this harness was built against.
pub fn sapalm_version() -> &'static str {
    sapalm::VERSION
}

pub struct Artifacts {
    pub dir: PathBuf,
    pub output: RunOutput,
}

/// Runs `cfg` and writes `trace.csv`, `metadata.toml` and optionally
/// `data.bin` into `cfg.out`. A failed run still writes its partial trace
/// (ending in an error marker line) and metadata before returning the error.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let dir = cfg.out.clone();
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let inst = build_instance(cfg)?;
    if cfg.save_data {
        inst.data.save(dir.join(DATA_FILE))?;
    }
    let run_cfg = cfg.run_config()?;
    log::info!(
        "{} {:?} n = {} d = {}: {} updates, {} worker(s)",
        run_cfg.mode.name(),
        cfg.problem,
        cfg.n,
        cfg.d,
        run_cfg.iterations,
        run_cfg.workers
    );
    match run(&inst.problem, &inst.x0, &run_cfg) {
        Ok(output) => {
            write_trace(&dir.join(TRACE_FILE), &output.trace, cfg.record_wall_time, None)?;
            write_metadata(&dir.join(METADATA_FILE), cfg, &output.trace, None)?;
            Ok(Artifacts { dir, output })
        }
        Err(mut failure) => {
            let msg = failure.error.to_string();
            let trace = failure.trace.take().map(|t| *t).unwrap_or_default();
            write_trace(&dir.join(TRACE_FILE), &trace, cfg.record_wall_time, Some(&msg))?;
            write_metadata(&dir.join(METADATA_FILE), cfg, &trace, Some(msg))?;
            Err(anyhow::Error::new(failure).context(format!("partial trace written to {}", dir.display())))
        }
    }
}
