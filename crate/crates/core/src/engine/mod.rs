//! Execution engines.
//!
//! * [`Mode::Sync`]: one block update per iteration, no delays (PALM).
//! * [`Mode::SimAsync`]: single-threaded replay of an explicit delay schedule.
//! * [`Mode::Async`]: `p` lock-free workers on a shared iterate.
//!
//! The iteration counter `k` counts completed block updates in every mode.

mod delay;
mod parallel;
mod sequential;
mod shared;
mod trace;

use std::fmt;
use std::time::Duration;

use rand::Rng;

pub use delay::DelaySchedule;
pub use shared::SharedIterate;
pub use trace::{Checkpoint, IterateRecord, RunTrace};

use crate::block::BlockVector;
use crate::diagnostics::{lyapunov_tail, stationarity};
use crate::error::{param, Error, Result};
use crate::model::Problem;
use crate::schedule::{NoiseKind, NoiseModel, Regime, StepsizePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sync,
    SimAsync,
    Async,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Sync => "sync",
            Mode::SimAsync => "sim-async",
            Mode::Async => "async",
        }
    }
}

/// How the next block is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    /// iid uniform over blocks, from the worker's stream.
    Uniform,
    /// Each worker owns blocks (round-robin) and cycles through them; in
    /// the multi-worker engine each block update sweeps its coordinate
    /// groups starting at a random group.
    DedicatedCyclic,
}

impl Selection {
    pub fn name(&self) -> &'static str {
        match self {
            Selection::Uniform => "uniform",
            Selection::DedicatedCyclic => "dedicated-cyclic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub workers: usize,
    pub selection: Selection,
    /// Total block updates `T`.
    pub iterations: u64,
    /// Stop early once this much wall time has elapsed.
    pub time_budget: Option<Duration>,
    /// Checkpoint every `stride` updates; `None` means once per epoch (`m`
    /// updates), `Some(0)` records only the first and last states.
    pub stride: Option<u64>,
    pub seed: u64,
    pub a: f64,
    pub regime: Regime,
    /// Configured delay bound used in the stepsizes and in `Φ`.
    pub tau: usize,
    pub noise: NoiseModel,
    /// Read delays replayed in `SimAsync` mode.
    pub delays: DelaySchedule,
    /// Re-estimate Lipschitz constants every this many updates (per worker).
    pub lipschitz_refresh: u64,
    /// Keep every block update in [`RunOutput::iterates`].
    pub record_iterates: bool,
    /// Audit the final shared iterate against per-worker write logs.
    pub verify_writes: bool,
    /// In `SimAsync` mode, evaluate `Ŝ` with the scheduled delayed read and
    /// a noise draw instead of the deterministic surrogate.
    pub faithful_stationarity: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Sync,
            workers: 1,
            selection: Selection::Uniform,
            iterations: 0,
            time_budget: None,
            stride: None,
            seed: 0,
            a: 2.0,
            regime: Regime::Summable,
            tau: 0,
            noise: NoiseModel::NONE,
            delays: DelaySchedule::Zero,
            lipschitz_refresh: 1,
            record_iterates: false,
            verify_writes: false,
            faithful_stationarity: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self, problem: &Problem) -> Result<()> {
        if self.workers == 0 {
            return Err(param("workers must be at least 1"));
        }
        if self.mode != Mode::Async && self.workers != 1 {
            return Err(param(format!("{} mode runs a single worker; set workers = 1", self.mode.name())));
        }
        if self.mode == Mode::Sync && self.delays != DelaySchedule::Zero {
            return Err(param("sync mode has no read delays; use sim-async to replay a delay schedule"));
        }
        if self.mode == Mode::SimAsync && self.delays.tau() > self.tau {
            return Err(param(format!(
                "delay schedule reaches {} but tau = {}; stepsizes must account for the largest delay",
                self.delays.tau(),
                self.tau
            )));
        }
        if let DelaySchedule::LaggedBlock { block, .. } = self.delays {
            problem.layout().check_block(block)?;
        }
        if self.lipschitz_refresh == 0 {
            return Err(param("lipschitz_refresh must be at least 1"));
        }
        if self.a.is_nan() || self.a <= 1.0 {
            return Err(param(format!("stepsize constant a must exceed 1, got {}", self.a)));
        }
        self.regime.validate()?;
        if matches!(self.noise.kind, NoiseKind::Minibatch { .. }) && problem.loss().sample_count().is_none() {
            return Err(Error::Unsupported("minibatch noise needs a loss with a stochastic gradient oracle"));
        }
        Ok(())
    }

    pub(crate) fn stride(&self, m: usize) -> u64 {
        self.stride.unwrap_or(m as u64)
    }

    pub(crate) fn is_checkpoint(&self, k: u64, m: usize) -> bool {
        let s = self.stride(m);
        k == self.iterations || (s > 0 && k.is_multiple_of(s))
    }
}

/// Result of a run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: RunTrace,
    pub final_iterate: BlockVector,
    pub iterates: Option<Vec<IterateRecord>>,
}

/// A run that stopped on an error; `trace` holds what was recorded before it.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub trace: Option<Box<RunTrace>>,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "run aborted: {}", self.error)
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        Self { error, trace: None }
    }
}

/// Runs the engine selected by `cfg.mode` from `x0`.
pub fn run(problem: &Problem, x0: &BlockVector, cfg: &RunConfig) -> std::result::Result<RunOutput, RunFailure> {
    cfg.validate(problem)?;
    x0.conforms_to(problem.layout())?;
    if !x0.is_finite() {
        return Err(param("initial iterate has non-finite entries").into());
    }
    let f0 = problem.objective(x0)?;
    if !f0.is_finite() {
        return Err(param("objective is not finite at the initial iterate").into());
    }
    match cfg.mode {
        Mode::Sync | Mode::SimAsync => sequential::run(problem, x0, cfg),
        Mode::Async => parallel::run(problem, x0, cfg),
    }
}

pub fn run_sync(problem: &Problem, x0: &BlockVector, cfg: &RunConfig) -> std::result::Result<RunOutput, RunFailure> {
    run(problem, x0, &RunConfig { mode: Mode::Sync, ..cfg.clone() })
}

pub fn run_sim_async(
    problem: &Problem,
    x0: &BlockVector,
    cfg: &RunConfig,
) -> std::result::Result<RunOutput, RunFailure> {
    run(problem, x0, &RunConfig { mode: Mode::SimAsync, ..cfg.clone() })
}

pub fn run_async(problem: &Problem, x0: &BlockVector, cfg: &RunConfig) -> std::result::Result<RunOutput, RunFailure> {
    run(problem, x0, &RunConfig { mode: Mode::Async, ..cfg.clone() })
}

/// What one block update used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub gamma: f64,
    pub batch_size: Option<usize>,
}

/// One SAPALM block update:
/// `out = ζ_j(anchor − γ_j^k(∇_j f(x_read) + ν_j^k), γ_j^k)`.
///
/// `anchor` is the value of block `j` the prox is centred on: the current
/// shared value in the multi-worker engine, `x_read`'s block otherwise. Noise
/// (or a minibatch) is drawn from `rng`.
#[allow(clippy::too_many_arguments)]
pub fn sapalm_step<R: Rng + ?Sized>(
    problem: &Problem,
    x_read: &BlockVector,
    anchor: &[f64],
    j: usize,
    k: u64,
    policy: &StepsizePolicy,
    noise: &NoiseModel,
    rng: &mut R,
    out: &mut [f64],
) -> Result<StepInfo> {
    let gamma = policy.stepsize(j, k);
    let mut g = vec![0.0; anchor.len()];
    let batch_size = noisy_gradient(problem, x_read, j, None, k, noise, rng, &mut g)?;
    finish_step(problem, j, anchor, &g, gamma, out, k)?;
    Ok(StepInfo { gamma, batch_size })
}

/// Block (or group) gradient plus the noise of the chosen model.
#[allow(clippy::too_many_arguments)]
pub(crate) fn noisy_gradient<R: Rng + ?Sized>(
    problem: &Problem,
    x_read: &BlockVector,
    j: usize,
    batch: Option<&[usize]>,
    k: u64,
    noise: &NoiseModel,
    rng: &mut R,
    g: &mut [f64],
) -> Result<Option<usize>> {
    let loss = problem.loss();
    match noise.batch_size(k) {
        Some(size) => {
            let drawn;
            let batch = match batch {
                Some(b) => b,
                None => {
                    let n = loss.sample_count().ok_or(Error::Unsupported("loss has no stochastic oracle"))?;
                    drawn = crate::factorization::sample_batch(n, size, rng);
                    &drawn
                }
            };
            loss.stochastic_gradient_into(j, x_read, batch, g)?;
            Ok(Some(batch.len()))
        }
        None => {
            loss.partial_gradient_into(j, x_read, g);
            noise.add_sample(k, g, rng);
            Ok(None)
        }
    }
}

/// `out = ζ_j(anchor − γ·g, γ)` and the finiteness check.
pub(crate) fn finish_step(
    problem: &Problem,
    j: usize,
    anchor: &[f64],
    g: &[f64],
    gamma: f64,
    out: &mut [f64],
    k: u64,
) -> Result<()> {
    let y: Vec<f64> = anchor.iter().zip(g).map(|(x, g)| x - gamma * g).collect();
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { block: j, iteration: k });
    }
    problem.regularizer(j).prox_into(&y, gamma, out)?;
    if !out.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { block: j, iteration: k });
    }
    Ok(())
}

/// Checkpoint metrics for `x^k`, computed from the iterate alone: Lipschitz
/// constants are re-estimated at `x^k`, so every engine records identical
/// values for identical iterate sequences. `history[0]` is `x^k`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn checkpoint_metrics(
    problem: &Problem,
    cfg: &RunConfig,
    k: u64,
    history: &[&BlockVector],
    wall_time_s: f64,
    max_delay: u64,
    batch_size: Option<usize>,
    approximate: bool,
) -> Result<Checkpoint> {
    let x = history[0];
    let m = problem.blocks();
    let lip = problem.loss().lipschitz(x);
    let policy = StepsizePolicy::new(cfg.a, cfg.regime, cfg.tau, lip)?;
    let gammas = policy.stepsizes(k);
    let objective = problem.objective_unchecked(x);
    let s = stationarity(problem, x, &gammas)?;
    let lyapunov = objective + lyapunov_tail(history, cfg.tau, policy.lipschitz().global(), m);
    Ok(Checkpoint {
        k,
        epoch: k as f64 / m as f64,
        wall_time_s,
        objective,
        stationarity: s.value,
        lyapunov,
        max_delay,
        c_k: policy.weight(k),
        gammas,
        batch_size: batch_size.or_else(|| cfg.noise.batch_size(k)),
        iterate_norm: x.norm_sq().sqrt(),
        approximate,
    })
}

/// Blocks owned by worker `w` of `p` under dedicated selection.
pub(crate) fn owned_blocks(w: usize, p: usize, m: usize) -> Vec<usize> {
    if p < m {
        (0..m).filter(|j| j % p == w).collect()
    } else {
        vec![w % m]
    }
}
