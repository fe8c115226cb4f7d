//! Experiment configuration: a flat TOML table plus `key=value` overrides.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use sapalm::{DelaySchedule, Mode, NoiseKind, NoiseModel, Regime, RunConfig, Selection};

/// Environment variable capping the number of worker threads.
pub const MAX_THREADS_ENV: &str = "SAPALM_MAX_THREADS";

/// Both factorization problems have two blocks, `X` and `Y`.
pub const BLOCKS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Spca,
    FirmPca,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Sync,
    SimAsync,
    Async,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionName {
    Uniform,
    DedicatedCyclic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeName {
    Summable,
    AlphaDiminishing,
    SmoothSqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseName {
    None,
    GaussianSummable,
    GaussianDiminishing,
    Minibatch,
    GaussianConstant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayName {
    Zero,
    Constant,
    Iid,
    Lagged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub kappa: f64,
    pub mu: f64,
    /// Seed of the data matrix `A`.
    pub data_seed: u64,
    /// Load `A` from this file instead of generating it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_file: Option<PathBuf>,
    /// Write `A` to `<out>/data.bin`.
    pub save_data: bool,
    /// Multiplier on the estimated Lipschitz constants.
    pub safety: f64,

    pub mode: ModeName,
    pub workers: usize,
    pub selection: SelectionName,
    /// Run length in epochs (one epoch is one update of each block).
    pub epochs: u64,
    /// Run length in block updates; overrides `epochs`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_budget_s: Option<f64>,
    /// Checkpoint every `stride` updates; defaults to once per epoch, 0 keeps
    /// only the first and last.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<u64>,
    pub seed: u64,

    pub a: f64,
    pub regime: RegimeName,
    /// Exponent shared by the alpha-diminishing regime, the diminishing noise
    /// and the minibatch growth.
    pub alpha: f64,
    pub tau: usize,
    pub noise: NoiseName,
    pub sigma0: f64,
    pub batch_base: usize,
    pub delays: DelayName,
    /// Constant delay; defaults to `tau`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delay: Option<usize>,
    pub lagged_block: usize,
    pub lipschitz_refresh: u64,
    pub faithful_stationarity: bool,
    pub verify_writes: bool,
    /// Write measured wall times; with `false` the column is zero and sync or
    /// sim-async traces are byte-for-byte reproducible.
    pub record_wall_time: bool,

    pub out: PathBuf,

    pub speedup_workers: Vec<usize>,
    pub speedup_dims: Vec<usize>,
    pub repeats: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Spca,
            n: 200,
            d: 5,
            lambda: 0.1,
            kappa: 1.0,
            mu: 0.0,
            data_seed: 0,
            data_file: None,
            save_data: false,
            safety: sapalm::DEFAULT_SAFETY,
            mode: ModeName::Sync,
            workers: 1,
            selection: SelectionName::Uniform,
            epochs: 10,
            iterations: None,
            time_budget_s: None,
            stride: None,
            seed: 0,
            a: 2.0,
            regime: RegimeName::Summable,
            alpha: 0.5,
            tau: 0,
            noise: NoiseName::None,
            sigma0: 0.0,
            batch_base: 8,
            delays: DelayName::Zero,
            delay: None,
            lagged_block: 1,
            lipschitz_refresh: 1,
            faithful_stationarity: false,
            verify_writes: false,
            record_wall_time: true,
            out: PathBuf::from("runs/latest"),
            speedup_workers: vec![1, 2, 4, 8, 16],
            speedup_dims: vec![10, 20],
            repeats: 3,
        }
    }
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_value(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

/// Applies `key=value` overrides to a table.
pub fn apply_overrides(table: &mut toml::Table, sets: &[String]) -> Result<()> {
    for s in sets {
        let (key, value) = s.split_once('=').with_context(|| format!("override `{s}` is not of the form key=value"))?;
        let key = key.trim();
        if key.is_empty() {
            bail!("override `{s}` has an empty key");
        }
        table.insert(key.to_string(), parse_value(value.trim()));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Reads `path` (if any), applies `sets` in order and validates.
    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str::<toml::Table>(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        apply_overrides(&mut table, sets)?;
        let cfg: Self = table.try_into().context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn iterations(&self) -> u64 {
        self.iterations.unwrap_or(self.epochs.saturating_mul(BLOCKS as u64))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            bail!("n: must be positive");
        }
        if self.d == 0 {
            bail!("d: must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            bail!("lambda: must be a finite number >= 0 (got {})", self.lambda);
        }
        if self.problem == ProblemKind::FirmPca {
            if !(self.kappa > self.lambda && self.kappa.is_finite()) {
                bail!("kappa: firm-pca needs kappa > lambda (got kappa = {}, lambda = {})", self.kappa, self.lambda);
            }
            if !(self.mu >= 0.0 && self.mu.is_finite()) {
                bail!("mu: must be a finite number >= 0 (got {})", self.mu);
            }
        } else if self.mu != 0.0 {
            bail!("mu: the quadratic term is only used by firm-pca");
        }
        if !(self.safety >= 1.0 && self.safety.is_finite()) {
            bail!("safety: must be >= 1 (got {})", self.safety);
        }
        if self.workers == 0 {
            bail!("workers: must be at least 1");
        }
        if self.mode != ModeName::Async && self.workers != 1 {
            bail!("workers: {} mode is single-threaded; set workers = 1 or mode = \"async\"", self.mode_name());
        }
        if !(self.a > 1.0 && self.a.is_finite()) {
            bail!("a: the stepsize constant must exceed 1 (got {})", self.a);
        }
        let needs_alpha = self.regime == RegimeName::AlphaDiminishing
            || matches!(self.noise, NoiseName::GaussianDiminishing | NoiseName::Minibatch);
        if needs_alpha && !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("alpha: must lie in (0, 1) (got {})", self.alpha);
        }
        match self.noise {
            NoiseName::GaussianDiminishing | NoiseName::Minibatch if self.regime == RegimeName::Summable => {
                bail!("regime: {:?} noise needs regime = \"alpha-diminishing\" or \"smooth-sqrt\"", self.noise)
            }
            NoiseName::GaussianConstant if self.regime != RegimeName::SmoothSqrt => {
                bail!("regime: gaussian-constant noise needs regime = \"smooth-sqrt\"")
            }
            _ => {}
        }
        if self.noise == NoiseName::Minibatch && self.batch_base == 0 {
            bail!("batch_base: must be positive");
        }
        if !(self.sigma0 >= 0.0 && self.sigma0.is_finite()) {
            bail!("sigma0: must be a finite number >= 0 (got {})", self.sigma0);
        }
        match self.delays {
            DelayName::Zero => {}
            _ if self.mode != ModeName::SimAsync => {
                bail!("delays: a delay schedule is only replayed in sim-async mode")
            }
            DelayName::Constant if self.delay.unwrap_or(self.tau) > self.tau => {
                bail!("delay: constant delay {} exceeds tau = {}", self.delay.unwrap_or(0), self.tau)
            }
            DelayName::Lagged if self.lagged_block >= BLOCKS => {
                bail!("lagged_block: must be 0 (X) or 1 (Y)")
            }
            _ => {}
        }
        if self.lipschitz_refresh == 0 {
            bail!("lipschitz_refresh: must be at least 1");
        }
        if let Some(t) = self.time_budget_s {
            if !(t > 0.0 && t.is_finite()) {
                bail!("time_budget_s: must be positive (got {t})");
            }
        }
        if self.speedup_workers.contains(&0) {
            bail!("speedup_workers: worker counts must be positive");
        }
        if self.repeats == 0 {
            bail!("repeats: must be at least 1");
        }
        Ok(())
    }

    fn mode_name(&self) -> &'static str {
        self.engine_mode().name()
    }

    pub fn engine_mode(&self) -> Mode {
        match self.mode {
            ModeName::Sync => Mode::Sync,
            ModeName::SimAsync => Mode::SimAsync,
            ModeName::Async => Mode::Async,
        }
    }

    pub fn engine_regime(&self) -> Regime {
        match self.regime {
            RegimeName::Summable => Regime::Summable,
            RegimeName::AlphaDiminishing => Regime::AlphaDiminishing { alpha: self.alpha },
            RegimeName::SmoothSqrt => Regime::SmoothSqrt,
        }
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        let kind = match self.noise {
            NoiseName::None => NoiseKind::None,
            NoiseName::GaussianSummable => NoiseKind::GaussianSummable,
            NoiseName::GaussianDiminishing => NoiseKind::GaussianDiminishing { alpha: self.alpha },
            NoiseName::Minibatch => NoiseKind::Minibatch { alpha: self.alpha, base: self.batch_base },
            NoiseName::GaussianConstant => NoiseKind::GaussianConstant,
        };
        Ok(NoiseModel::new(kind, self.sigma0)?)
    }

    pub fn delay_schedule(&self) -> DelaySchedule {
        match self.delays {
            DelayName::Zero => DelaySchedule::Zero,
            DelayName::Constant => DelaySchedule::Constant { delay: self.delay.unwrap_or(self.tau) },
            DelayName::Iid => DelaySchedule::IidUniform { tau: self.tau, seed: self.seed },
            DelayName::Lagged => DelaySchedule::LaggedBlock { tau: self.tau, block: self.lagged_block },
        }
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        Ok(RunConfig {
            mode: self.engine_mode(),
            workers: self.workers,
            selection: match self.selection {
                SelectionName::Uniform => Selection::Uniform,
                SelectionName::DedicatedCyclic => Selection::DedicatedCyclic,
            },
            iterations: self.iterations(),
            time_budget: self.time_budget_s.map(Duration::from_secs_f64),
            stride: self.stride,
            seed: self.seed,
            a: self.a,
            regime: self.engine_regime(),
            tau: self.tau,
            noise: self.noise_model()?,
            delays: self.delay_schedule(),
            lipschitz_refresh: self.lipschitz_refresh,
            record_iterates: false,
            verify_writes: self.verify_writes,
            faithful_stationarity: self.faithful_stationarity,
        })
    }
}

/// Worker cap from [`MAX_THREADS_ENV`], if set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var(MAX_THREADS_ENV).ok()?.trim().parse().ok().filter(|&c: &usize| c > 0)
}

/// Lowers `cfg.workers` to the environment cap; returns the original count
/// when it changed.
pub fn apply_thread_cap(cfg: &mut ExperimentConfig, cap: Option<usize>) -> Option<usize> {
    let cap = cap?;
    (cfg.workers > cap).then(|| {
        let before = cfg.workers;
        cfg.workers = cap;
        log::warn!("{MAX_THREADS_ENV} = {cap}: running {cap} workers instead of {before}");
        before
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn override_values_are_typed() {
        let mut t = toml::Table::new();
        apply_overrides(
            &mut t,
            &["n=50".into(), "lambda = 0.25".into(), "mode=sim-async".into(), "speedup_workers=[1,2]".into()],
        )
        .unwrap();
        assert_eq!(t["n"], toml::Value::Integer(50));
        assert_eq!(t["lambda"], toml::Value::Float(0.25));
        assert_eq!(t["mode"], toml::Value::String("sim-async".into()));
        assert!(apply_overrides(&mut t, &["novalue".into()]).is_err());
    }

    #[test]
    fn errors_name_the_key() {
        let err = ExperimentConfig::load(None, &["a=0.5".into()]).unwrap_err();
        assert!(format!("{err:#}").starts_with("a:"), "{err:#}");
        let err = ExperimentConfig::load(None, &["bogus=1".into()]).unwrap_err();
        assert!(format!("{err:#}").contains("bogus"), "{err:#}");
        let err = ExperimentConfig::load(None, &["noise=gaussian-constant".into(), "sigma0=0.1".into()]).unwrap_err();
        assert!(format!("{err:#}").starts_with("regime:"), "{err:#}");
        let err = ExperimentConfig::load(None, &["workers=4".into()]).unwrap_err();
        assert!(format!("{err:#}").starts_with("workers:"), "{err:#}");
    }

    #[test]
    fn thread_cap_lowers_workers() {
        let mut cfg = ExperimentConfig { mode: ModeName::Async, workers: 8, ..Default::default() };
        assert_eq!(apply_thread_cap(&mut cfg, Some(2)), Some(8));
        assert_eq!(cfg.workers, 2);
        assert_eq!(apply_thread_cap(&mut cfg, None), None);
    }
}
