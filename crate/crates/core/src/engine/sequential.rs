//! Single-threaded engines: sync (no delays) and simulated-async (an explicit
//! delay schedule replayed against a ring buffer of past iterates).

use std::time::Instant;

use rand::Rng;

use super::{
    checkpoint_metrics, finish_step, noisy_gradient, IterateRecord, Mode, RunConfig, RunFailure, RunOutput, RunTrace,
    Selection,
};
use crate::block::BlockVector;
use crate::diagnostics::{stationarity_with, LyapunovState};
use crate::error::Result;
use crate::model::Problem;
use crate::rng::{tagged_rng, worker_rng, DIAGNOSTIC_STREAM};
use crate::schedule::StepsizePolicy;

pub(super) fn run(problem: &Problem, x0: &BlockVector, cfg: &RunConfig) -> std::result::Result<RunOutput, RunFailure> {
    let mut state = Replay::new(problem, x0, cfg);
    let outcome = state.execute();
    let trace = state.finish_trace();
    match outcome {
        Ok(()) => Ok(RunOutput { trace, final_iterate: state.x, iterates: state.records }),
        Err(error) => {
            log::error!("{} run stopped at k = {}: {error}", cfg.mode.name(), trace.total_updates);
            Err(RunFailure { error, trace: Some(Box::new(trace)) })
        }
    }
}

struct Replay<'a> {
    problem: &'a Problem,
    cfg: &'a RunConfig,
    x: BlockVector,
    history: LyapunovState,
    read: BlockVector,
    trace: RunTrace,
    records: Option<Vec<IterateRecord>>,
    start: Instant,
    k: u64,
}

impl<'a> Replay<'a> {
    fn new(problem: &'a Problem, x0: &BlockVector, cfg: &'a RunConfig) -> Self {
        let m = problem.blocks();
        Self {
            problem,
            cfg,
            x: x0.clone(),
            history: LyapunovState::new(x0, cfg.tau.max(cfg.delays.tau())),
            read: x0.clone(),
            trace: RunTrace {
                configured_tau: cfg.tau,
                block_versions: vec![0; m],
                worker_blocks: vec![(0..m).collect()],
                ..RunTrace::default()
            },
            records: cfg.record_iterates.then(Vec::new),
            start: Instant::now(),
            k: 0,
        }
    }

    fn execute(&mut self) -> Result<()> {
        let (problem, cfg) = (self.problem, self.cfg);
        let m = problem.blocks();
        let mut rng = worker_rng(cfg.seed, 0);
        let mut diag_rng = tagged_rng(cfg.seed, DIAGNOSTIC_STREAM);
        let mut policy = StepsizePolicy::new(cfg.a, cfg.regime, cfg.tau, problem.loss().lipschitz(&self.x))?;
        let mut out = Vec::new();
        let mut g = Vec::new();

        self.checkpoint(&mut diag_rng)?;
        while self.k < cfg.iterations {
            if cfg.time_budget.is_some_and(|b| self.start.elapsed() >= b) {
                log::info!("time budget reached after {} updates", self.k);
                break;
            }
            let k = self.k;
            if k.is_multiple_of(cfg.lipschitz_refresh) {
                policy.set_lipschitz(problem.loss().lipschitz(&self.x));
            }
            let j = match cfg.selection {
                Selection::Uniform => rng.random_range(0..m),
                Selection::DedicatedCyclic => (k % m as u64) as usize,
            };
            let delay = if cfg.mode == Mode::Sync { 0 } else { self.assemble_read(k) };
            self.trace.delays.record(delay as u64);

            let n_j = problem.layout().block_len(j);
            out.resize(n_j, 0.0);
            g.resize(n_j, 0.0);
            let gamma = policy.stepsize(j, k);
            let read = if cfg.mode == Mode::Sync || delay == 0 { &self.x } else { &self.read };
            noisy_gradient(problem, read, j, None, k, &cfg.noise, &mut rng, &mut g)?;
            finish_step(problem, j, self.x.block(j), &g, gamma, &mut out, k)?;

            self.x.block_mut(j).copy_from_slice(&out);
            self.history.push(&self.x);
            self.trace.block_versions[j] += 1;
            self.k += 1;
            if let Some(r) = self.records.as_mut() {
                r.push(IterateRecord { k: self.k, block: j, values: out.clone() });
            }
            if cfg.is_checkpoint(self.k, m) {
                self.checkpoint(&mut diag_rng)?;
            }
        }
        if self.trace.checkpoints.last().is_some_and(|c| c.k != self.k) {
            self.checkpoint(&mut diag_rng)?;
        }
        Ok(())
    }

    /// Fills `self.read` with `x̂^k` (block `i` from `x^{k−d_{k,i}}`) and
    /// returns the largest scheduled delay.
    fn assemble_read(&mut self, k: u64) -> usize {
        let m = self.problem.blocks();
        let mut max = 0;
        for i in 0..m {
            let d = self.cfg.delays.delay(k, i);
            max = max.max(d);
            let src = self.history.get(d).block(i);
            self.read.block_mut(i).copy_from_slice(src);
        }
        max
    }

    fn checkpoint<R: Rng>(&mut self, diag_rng: &mut R) -> Result<()> {
        let (problem, cfg) = (self.problem, self.cfg);
        let window = self.history.window(cfg.tau);
        let mut c = checkpoint_metrics(
            problem,
            cfg,
            self.k,
            &window,
            self.start.elapsed().as_secs_f64(),
            self.trace.delays.max(),
            None,
            false,
        )?;
        if cfg.faithful_stationarity && cfg.mode == Mode::SimAsync {
            self.assemble_read(self.k);
            let noise: Vec<Vec<f64>> = (0..problem.blocks())
                .map(|j| crate::schedule::sample_noise(&cfg.noise, self.k, problem.layout().block_len(j), diag_rng))
                .collect();
            let s = stationarity_with(problem, &self.x, &self.read, &c.gammas, Some(&noise))?;
            c.stationarity = s.value;
        }
        self.trace.checkpoints.push(c);
        Ok(())
    }

    fn finish_trace(&mut self) -> RunTrace {
        let mut trace = std::mem::take(&mut self.trace);
        trace.total_updates = self.k;
        trace.elapsed_s = self.start.elapsed().as_secs_f64();
        trace
    }
}
