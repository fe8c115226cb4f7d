//! Wall-clock scaling of the multi-worker engine: `speedup(p) = T(1) / T(p)`,
//! where `T(p)` is the median engine time over repeated runs with `p` workers.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use sapalm::{run, Mode};

use crate::config::ExperimentConfig;
use crate::experiment::build_instance;

/// Published sparse-PCA speedups for 16 epochs at `n = 2000` on a 20-core
/// machine, keyed by `(d, p)`.
const REFERENCE_SPEEDUP: &[(usize, usize, f64)] = &[
    (10, 1, 1.0),
    (10, 2, 1.9722),
    (10, 4, 3.7623),
    (10, 8, 7.1444),
    (10, 16, 13.376),
    (20, 1, 1.0),
    (20, 2, 1.9812),
    (20, 4, 3.7635),
    (20, 8, 7.3315),
    (20, 16, 14.5322),
    (100, 1, 1.0),
    (100, 8, 7.3719),
    (100, 16, 14.743),
];

/// Published wall times (seconds) for the same runs.
const REFERENCE_SECONDS: &[(usize, usize, f64)] = &[(10, 1, 65.9972), (10, 16, 4.934)];

pub fn reference_speedup(d: usize, p: usize) -> Option<f64> {
    REFERENCE_SPEEDUP.iter().find(|r| r.0 == d && r.1 == p).map(|r| r.2)
}

pub fn reference_seconds(d: usize, p: usize) -> Option<f64> {
    REFERENCE_SECONDS.iter().find(|r| r.0 == d && r.1 == p).map(|r| r.2)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpeedupRow {
    pub d: usize,
    pub p: usize,
    pub median_s: f64,
    pub speedup: f64,
    pub reference_speedup: Option<f64>,
    pub reference_s: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct SpeedupReport {
    pub n: usize,
    pub epochs: u64,
    pub rows: Vec<SpeedupRow>,
    /// Worker counts left out because of the thread cap.
    pub skipped: Vec<usize>,
}

impl SpeedupReport {
    pub fn speedup(&self, d: usize, p: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.d == d && r.p == p).map(|r| r.speedup)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "speedup T(1)/T(p), n = {}, {} epochs, median of timed runs", self.n, self.epochs);
        let _ = writeln!(
            s,
            "{:>5} {:>4} {:>12} {:>9} {:>11} {:>12}",
            "d", "p", "median_s", "speedup", "reference", "reference_s"
        );
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v}"));
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>5} {:>4} {:>12.4} {:>9.4} {:>11} {:>12}",
                r.d,
                r.p,
                r.median_s,
                r.speedup,
                opt(r.reference_speedup),
                opt(r.reference_s)
            );
        }
        let _ = writeln!(s, "reference columns: n = 2000, 16 epochs, dedicated-cyclic, 20-core machine");
        for p in &self.skipped {
            let _ = writeln!(s, "p = {p} skipped: above the worker cap");
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("speedup.csv"))?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        std::fs::write(dir.join("speedup.txt"), self.to_text())?;
        Ok(())
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times `cfg` in async mode for every `d` in `cfg.speedup_dims` and `p` in
/// `cfg.speedup_workers` (`p = 1` is always included). Each cell does one
/// discarded warm-up run and `cfg.repeats` timed runs. Worker counts above
/// `cap` are skipped. On failure the rows measured so far are written to
/// `cfg.out` before the error is returned.
pub fn speedup_table(cfg: &ExperimentConfig, cap: Option<usize>) -> Result<SpeedupReport> {
    let mut workers: Vec<usize> = cfg.speedup_workers.clone();
    workers.push(1);
    workers.sort_unstable();
    workers.dedup();
    let mut report = SpeedupReport { n: cfg.n, epochs: cfg.epochs, ..Default::default() };
    for &p in &workers {
        if cap.is_some_and(|c| p > c) {
            log::warn!("skipping p = {p}: worker cap is {}", cap.unwrap_or_default());
            report.skipped.push(p);
        }
    }
    workers.retain(|p| !report.skipped.contains(p));

    let result = (|| -> Result<()> {
        for &d in &cfg.speedup_dims {
            let cell = ExperimentConfig { d, ..cfg.clone() };
            let inst = build_instance(&cell)?;
            let mut t1 = None;
            for &p in &workers {
                let mut rc = cell.run_config()?;
                rc.mode = Mode::Async;
                rc.workers = p;
                rc.stride = Some(0);
                rc.verify_writes = false;
                let mut times = Vec::with_capacity(cfg.repeats);
                for rep in 0..=cfg.repeats {
                    let out = run(&inst.problem, &inst.x0, &rc).with_context(|| format!("d = {d}, p = {p}"))?;
                    if rep > 0 {
                        times.push(out.trace.elapsed_s);
                    }
                }
                let median_s = median(times);
                let base = *t1.get_or_insert(median_s);
                log::info!("d = {d}, p = {p}: {median_s:.4} s");
                report.rows.push(SpeedupRow {
                    d,
                    p,
                    median_s,
                    speedup: base / median_s,
                    reference_speedup: reference_speedup(d, p),
                    reference_s: reference_seconds(d, p),
                });
            }
        }
        Ok(())
    })();
    report.write(&cfg.out)?;
    result.map(|()| report)
}
