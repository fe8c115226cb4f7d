use crate::diagnostics::DelayStats;

/// Metrics recorded after `k` completed block updates.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub k: u64,
    /// `k / m`.
    pub epoch: f64,
    pub wall_time_s: f64,
    pub objective: f64,
    /// Deterministic prox-gradient residual `Ŝ_k`.
    pub stationarity: f64,
    pub lyapunov: f64,
    pub max_delay: u64,
    pub c_k: f64,
    pub gammas: Vec<f64>,
    pub batch_size: Option<usize>,
    pub iterate_norm: f64,
    /// Taken from a live iterate that other workers were writing.
    pub approximate: bool,
}

impl Checkpoint {
    /// Fields that depend only on the iterate sequence, bit-exact.
    pub fn k_indexed_bits(&self) -> Vec<u64> {
        let mut v = vec![
            self.k,
            self.objective.to_bits(),
            self.stationarity.to_bits(),
            self.lyapunov.to_bits(),
            self.c_k.to_bits(),
            self.iterate_norm.to_bits(),
        ];
        v.extend(self.gammas.iter().map(|g| g.to_bits()));
        v
    }
}

/// One completed block update: block `block` took `values`, producing `x^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateRecord {
    pub k: u64,
    pub block: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTrace {
    pub checkpoints: Vec<Checkpoint>,
    pub delays: DelayStats,
    pub total_updates: u64,
    pub elapsed_s: f64,
    pub configured_tau: usize,
    /// Completed updates per block; sums to `total_updates`.
    pub block_versions: Vec<u64>,
    /// Blocks each worker was assigned (cyclic selection) or all blocks (uniform).
    pub worker_blocks: Vec<Vec<usize>>,
    pub warnings: Vec<String>,
    /// Result of the write-log audit, when it was enabled.
    pub write_log_consistent: Option<bool>,
}

impl RunTrace {
    pub fn max_delay(&self) -> u64 {
        self.delays.max()
    }

    pub fn updates_per_sec(&self) -> f64 {
        if self.elapsed_s > 0.0 {
            self.total_updates as f64 / self.elapsed_s
        } else {
            0.0
        }
    }

    pub fn last(&self) -> Option<&Checkpoint> {
        self.checkpoints.last()
    }
}
