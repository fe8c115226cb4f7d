//! Multi-worker engine: `p` threads update a [`SharedIterate`] without locks.
//!
//! Each worker claims an update slot, reads the shared iterate scalar by
//! scalar, computes its step and writes the block back, last writer wins.
//! Workers that complete an update near a checkpoint copy the live iterate;
//! checkpoint metrics are evaluated from these copies after the join, so a
//! single worker reproduces the sync engine exactly.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::Rng;

use super::{
    checkpoint_metrics, finish_step, noisy_gradient, owned_blocks, IterateRecord, RunConfig, RunFailure, RunOutput,
    RunTrace, Selection, SharedIterate,
};
use crate::block::BlockVector;
use crate::diagnostics::DelayStats;
use crate::error::{Error, Result};
use crate::factorization::sample_batch;
use crate::model::{group_range, Problem};
use crate::rng::worker_rng;
use crate::schedule::StepsizePolicy;

struct Snapshot {
    k: u64,
    x: BlockVector,
    wall_time_s: f64,
    max_delay: u64,
}

#[derive(Default)]
struct WorkerLog {
    delays: DelayStats,
    snapshots: Vec<Snapshot>,
    records: Vec<IterateRecord>,
    /// Last value this worker wrote to each scalar.
    last_writes: Option<Vec<Option<f64>>>,
}

struct Shared<'a> {
    problem: &'a Problem,
    cfg: &'a RunConfig,
    iterate: SharedIterate,
    claimed: AtomicU64,
    abort: AtomicBool,
    max_delay: AtomicU64,
    error: Mutex<Option<Error>>,
    start: Instant,
}

impl Shared<'_> {
    fn claim(&self) -> bool {
        if self.abort.load(Ordering::Relaxed) {
            return false;
        }
        if self.cfg.time_budget.is_some_and(|b| self.start.elapsed() >= b) {
            return false;
        }
        self.claimed.fetch_add(1, Ordering::AcqRel) < self.cfg.iterations
    }

    fn fail(&self, e: Error) {
        self.abort.store(true, Ordering::Relaxed);
        let mut slot = self.error.lock().unwrap_or_else(|p| p.into_inner());
        if slot.is_none() {
            *slot = Some(e);
        }
    }

    /// Whether `x^k` is one of the `τ+1` iterates a checkpoint needs.
    fn wants_snapshot(&self, k: u64) -> bool {
        let (cfg, m) = (self.cfg, self.problem.blocks());
        let tau = cfg.tau as u64;
        if k <= cfg.iterations && cfg.iterations - k <= tau {
            return true;
        }
        let s = cfg.stride(m);
        s > 0 && k.div_ceil(s) * s - k <= tau
    }
}

pub(super) fn run(problem: &Problem, x0: &BlockVector, cfg: &RunConfig) -> std::result::Result<RunOutput, RunFailure> {
    let m = problem.blocks();
    let p = cfg.workers;
    let shared = Shared {
        problem,
        cfg,
        iterate: SharedIterate::new(x0),
        claimed: AtomicU64::new(0),
        abort: AtomicBool::new(false),
        max_delay: AtomicU64::new(0),
        error: Mutex::new(None),
        start: Instant::now(),
    };
    let worker_blocks: Vec<Vec<usize>> = (0..p)
        .map(|w| match cfg.selection {
            Selection::Uniform => (0..m).collect(),
            Selection::DedicatedCyclic => owned_blocks(w, p, m),
        })
        .collect();

    let logs: Vec<WorkerLog> = std::thread::scope(|scope| {
        let handles: Vec<_> = worker_blocks
            .iter()
            .enumerate()
            .map(|(w, blocks)| {
                let shared = &shared;
                scope.spawn(move || {
                    let mut log = WorkerLog {
                        last_writes: cfg.verify_writes.then(|| vec![None; x0.as_slice().len()]),
                        ..WorkerLog::default()
                    };
                    if let Err(e) = worker(shared, w, blocks, &mut log) {
                        shared.fail(e);
                    }
                    log
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });

    let elapsed_s = shared.start.elapsed().as_secs_f64();
    let error = shared.error.into_inner().unwrap_or_else(|p| p.into_inner());
    let iterate = shared.iterate;
    let total = iterate.k();
    let block_versions = iterate.versions();
    let final_iterate = iterate.into_block_vector();

    let mut trace = RunTrace {
        total_updates: total,
        elapsed_s,
        configured_tau: cfg.tau,
        block_versions,
        worker_blocks,
        ..RunTrace::default()
    };
    for log in &logs {
        trace.delays.merge(&log.delays);
    }
    if trace.delays.max() > cfg.tau as u64 {
        let msg = format!(
            "observed delay {} exceeds configured tau = {}; the stepsize condition is not guaranteed",
            trace.delays.max(),
            cfg.tau
        );
        log::warn!("{msg}");
        trace.warnings.push(msg);
    }
    if cfg.verify_writes {
        trace.write_log_consistent = Some(audit_writes(x0, &final_iterate, &logs));
    }

    let mut logs = logs;
    let mut records: Vec<IterateRecord> = logs.iter_mut().flat_map(|l| std::mem::take(&mut l.records)).collect();
    records.sort_by_key(|r| r.k);
    let mut snapshots: BTreeMap<u64, Snapshot> = BTreeMap::new();
    snapshots.insert(0, Snapshot { k: 0, x: x0.clone(), wall_time_s: 0.0, max_delay: 0 });
    for s in logs.into_iter().flat_map(|l| l.snapshots) {
        snapshots.insert(s.k, s);
    }
    snapshots.insert(
        total,
        Snapshot { k: total, x: final_iterate.clone(), wall_time_s: elapsed_s, max_delay: trace.delays.max() },
    );

    let built = build_checkpoints(problem, cfg, &snapshots, total, x0);
    let result = built.map(|c| trace.checkpoints = c);
    match error.map_or(result, Err) {
        Ok(()) => Ok(RunOutput { trace, final_iterate, iterates: cfg.record_iterates.then_some(records) }),
        Err(error) => {
            log::error!("async run stopped at k = {total}: {error}");
            Err(RunFailure { error, trace: Some(Box::new(trace)) })
        }
    }
}

fn build_checkpoints(
    problem: &Problem,
    cfg: &RunConfig,
    snapshots: &BTreeMap<u64, Snapshot>,
    total: u64,
    x0: &BlockVector,
) -> Result<Vec<super::Checkpoint>> {
    let m = problem.blocks();
    let approximate = cfg.workers > 1;
    let mut out = Vec::new();
    for (&k, snap) in snapshots {
        let wanted = k == 0 || k == total || (k < total && cfg.is_checkpoint(k, m));
        if !wanted {
            continue;
        }
        if !snap.x.is_finite() {
            break;
        }
        // x^{k-h}; a missing entry repeats the newer one, entries before 0 are x⁰.
        let mut history: Vec<&BlockVector> = Vec::with_capacity(cfg.tau + 1);
        for h in 0..=cfg.tau as u64 {
            let x = match k.checked_sub(h) {
                None => x0,
                Some(kh) => snapshots.get(&kh).map_or_else(|| *history.last().unwrap_or(&x0), |s| &s.x),
            };
            history.push(x);
        }
        let c = checkpoint_metrics(
            problem,
            cfg,
            k,
            &history,
            snap.wall_time_s,
            snap.max_delay,
            None,
            approximate && k != 0 && k != total,
        )?;
        out.push(c);
    }
    Ok(out)
}

/// True when every scalar of `final_x` equals the last value some worker wrote
/// to it, or its initial value if nobody wrote it.
fn audit_writes(x0: &BlockVector, final_x: &BlockVector, logs: &[WorkerLog]) -> bool {
    (0..final_x.as_slice().len()).all(|i| {
        let v = final_x.as_slice()[i].to_bits();
        let writes: Vec<u64> =
            logs.iter().filter_map(|l| l.last_writes.as_ref().and_then(|w| w[i])).map(f64::to_bits).collect();
        if writes.is_empty() {
            v == x0.as_slice()[i].to_bits()
        } else {
            writes.contains(&v)
        }
    })
}

fn worker(shared: &Shared<'_>, w: usize, blocks: &[usize], log: &mut WorkerLog) -> Result<()> {
    let (problem, cfg) = (shared.problem, shared.cfg);
    let iterate = &shared.iterate;
    let layout = problem.layout();
    let mut rng = worker_rng(cfg.seed, w as u64);
    let mut xr = iterate.snapshot();
    let mut policy = StepsizePolicy::new(cfg.a, cfg.regime, cfg.tau, problem.loss().lipschitz(&xr))?;
    let mut local: u64 = 0;
    let mut cursor = 0usize;
    let mut g = Vec::new();
    let mut anchor = Vec::new();
    let mut out = Vec::new();

    while shared.claim() {
        let k_read = iterate.k();
        iterate.snapshot_into(&mut xr);
        if local.is_multiple_of(cfg.lipschitz_refresh) {
            policy.set_lipschitz(problem.loss().lipschitz(&xr));
        }
        let j = match cfg.selection {
            Selection::Uniform => rng.random_range(0..problem.blocks()),
            Selection::DedicatedCyclic => {
                let j = blocks[cursor % blocks.len()];
                cursor += 1;
                j
            }
        };
        let n_j = layout.block_len(j);
        let gamma = policy.stepsize(j, k_read);

        if cfg.selection == Selection::DedicatedCyclic && problem.sweepable(j) {
            let loss = problem.loss();
            let len = loss.group_len(j);
            let groups = n_j / len;
            let batch = match cfg.noise.batch_size(k_read) {
                Some(size) => {
                    let n = loss.sample_count().ok_or(Error::Unsupported("loss has no stochastic oracle"))?;
                    Some(sample_batch(n, size, &mut rng))
                }
                None => None,
            };
            let first = rng.random_range(0..groups);
            g.resize(len, 0.0);
            anchor.resize(len, 0.0);
            out.resize(len, 0.0);
            for t in 0..groups {
                let grp = (first + t) % groups;
                let range = group_range(loss, j, grp);
                if t > 0 {
                    for i in (0..problem.blocks()).filter(|&i| i != j) {
                        iterate.read_block_range(i, 0..layout.block_len(i), xr.block_mut(i));
                    }
                    iterate.read_block_range(j, range.clone(), &mut xr.block_mut(j)[range.clone()]);
                }
                match &batch {
                    Some(b) => loss.stochastic_group_gradient_into(j, grp, &xr, b, &mut g)?,
                    None => {
                        loss.group_gradient_into(j, grp, &xr, &mut g);
                        cfg.noise.add_partial_sample(k_read, &mut g, n_j, &mut rng);
                    }
                }
                iterate.read_block_range(j, range.clone(), &mut anchor);
                finish_step(problem, j, &anchor, &g, gamma, &mut out, k_read)?;
                iterate.write_block_range(j, range.start, &out);
                note_writes(log, layout.range(j).start + range.start, &out);
            }
        } else {
            g.resize(n_j, 0.0);
            anchor.resize(n_j, 0.0);
            out.resize(n_j, 0.0);
            noisy_gradient(problem, &xr, j, None, k_read, &cfg.noise, &mut rng, &mut g)?;
            iterate.read_block_range(j, 0..n_j, &mut anchor);
            finish_step(problem, j, &anchor, &g, gamma, &mut out, k_read)?;
            iterate.write_block_range(j, 0, &out);
            note_writes(log, layout.range(j).start, &out);
        }

        let done = iterate.complete_update(j);
        let delay = done - 1 - k_read;
        log.delays.record(delay);
        let max_delay = shared.max_delay.fetch_max(delay, Ordering::AcqRel).max(delay);
        if cfg.record_iterates {
            let values = if out.len() == n_j {
                out.clone()
            } else {
                let mut v = vec![0.0; n_j];
                iterate.read_block_range(j, 0..n_j, &mut v);
                v
            };
            log.records.push(IterateRecord { k: done, block: j, values });
        }
        if shared.wants_snapshot(done) {
            log.snapshots.push(Snapshot {
                k: done,
                x: iterate.snapshot(),
                wall_time_s: shared.start.elapsed().as_secs_f64(),
                max_delay,
            });
        }
        local += 1;
    }
    Ok(())
}

fn note_writes(log: &mut WorkerLog, offset: usize, values: &[f64]) {
    if let Some(w) = log.last_writes.as_mut() {
        for (slot, &v) in w[offset..offset + values.len()].iter_mut().zip(values) {
            *slot = Some(v);
        }
    }
}
