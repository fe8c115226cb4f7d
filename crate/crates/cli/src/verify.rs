//! Named property suites run by `sapalm verify`.

use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Result};

use crate::checks;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    ProxOracle,
    GradientFd,
    EngineEquivalence,
    LyapunovSupermartingale,
    RateSlope,
    NoiseRegimes,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::ProxOracle,
        Suite::GradientFd,
        Suite::EngineEquivalence,
        Suite::LyapunovSupermartingale,
        Suite::RateSlope,
        Suite::NoiseRegimes,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Suite::ProxOracle => "prox-oracle",
            Suite::GradientFd => "gradient-fd",
            Suite::EngineEquivalence => "engine-equivalence",
            Suite::LyapunovSupermartingale => "lyapunov-supermartingale",
            Suite::RateSlope => "rate-slope",
            Suite::NoiseRegimes => "noise-regimes",
        }
    }
}

impl FromStr for Suite {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match Suite::ALL.iter().find(|x| x.name() == s) {
            Some(x) => Ok(*x),
            None => {
                let names: Vec<&str> = Suite::ALL.iter().map(Suite::name).collect();
                bail!("unknown suite `{s}`; expected one of {}", names.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckLine {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

/// Runs `suite`; a check that cannot run at all is reported as failed.
pub fn run_suite(suite: Suite, seed: u64) -> Vec<CheckLine> {
    match suite_checks(suite, seed) {
        Ok(lines) => lines,
        Err(e) => vec![CheckLine::new(suite.name(), false, format!("error: {e:#}"))],
    }
}

fn suite_checks(suite: Suite, seed: u64) -> Result<Vec<CheckLine>> {
    let mut lines = Vec::new();
    match suite {
        Suite::ProxOracle => {
            for r in checks::prox_oracle(100, seed) {
                lines.push(CheckLine::new(
                    format!("prox {}", r.operator),
                    r.worst_gap <= 1e-8,
                    format!("{} cases, worst gap to grid minimum {:.3e} (limit 1e-8)", r.cases, r.worst_gap),
                ));
            }
        }
        Suite::GradientFd => {
            for r in checks::gradient_fd(20, seed)? {
                lines.push(CheckLine::new(
                    format!("gradient {}", r.problem),
                    r.worst_relative_error < 1e-5,
                    format!("{} points, worst relative error {:.3e} (limit 1e-5)", r.points, r.worst_relative_error),
                ));
            }
        }
        Suite::EngineEquivalence => {
            for r in checks::engine_equivalence(100, 3, &[seed, seed + 1, seed + 2], 20)? {
                lines.push(CheckLine::new(
                    format!("engines agree, seed {}", r.seed),
                    r.sim_async_matches && r.async_matches,
                    format!(
                        "{} updates; sim-async {}, async(p=1) {}",
                        r.updates,
                        if r.sim_async_matches { "identical" } else { "differs" },
                        if r.async_matches { "identical" } else { "differs" }
                    ),
                ));
            }
        }
        Suite::LyapunovSupermartingale => {
            let pts = checks::lyapunov_drift(100, 3, 5, 50, 20)?;
            let worst = pts
                .iter()
                .max_by(|a, b| (a.mean - 2.0 * a.standard_error).total_cmp(&(b.mean - 2.0 * b.standard_error)))
                .expect("at least one step");
            let ok = pts.iter().all(|p| p.mean <= 2.0 * p.standard_error);
            lines.push(CheckLine::new(
                "mean Lyapunov change <= 2 SE",
                ok,
                format!(
                    "{} steps over 50 seeds; tightest at k = {}: mean {:.3e}, SE {:.3e}",
                    pts.len(),
                    worst.k,
                    worst.mean,
                    worst.standard_error
                ),
            ));
        }
        Suite::RateSlope => {
            let r = checks::rate_run(&checks::RateSetup::summable(500, 5, 3, 200))?;
            lines.push(CheckLine::new(
                "summable rate slope",
                r.slope <= -0.8,
                format!("log-log slope of min stationarity {:.3} (limit -0.8)", r.slope),
            ));
        }
        Suite::NoiseRegimes => {
            let r = checks::rate_run(&checks::diminishing_setup(DIMINISHING_SIGMA0))?;
            let ratio = r.final_envelope() / r.envelope_at(40);
            lines.push(CheckLine::new(
                "alpha-diminishing",
                r.max_objective_ratio <= 10.0 && ratio <= 0.3,
                format!(
                    "max objective / initial {:.3}, envelope(200 ep) / envelope(20 ep) {ratio:.3}",
                    r.max_objective_ratio
                ),
            ));
            let r = checks::rate_run(&checks::constant_noise_setup(0.1))?;
            let ratio = r.final_envelope() / r.envelope_at(40);
            lines.push(CheckLine::new(
                "constant noise, smooth-sqrt",
                r.max_norm_ratio <= 10.0 && r.max_norm_ratio.is_finite() && ratio <= 0.5,
                format!("max norm / initial {:.3}, envelope(final) / envelope(10%) {ratio:.3}", r.max_norm_ratio),
            ));
            let m = checks::minibatch(50, 3, 8, 64, 4000, seed)?;
            lines.push(CheckLine::new(
                "minibatch",
                m.singleton_error < 1e-10 && (0.7..=1.4).contains(&m.scaling_factor),
                format!(
                    "singleton average error {:.2e}, 1/batch scaling factor {:.3}",
                    m.singleton_error, m.scaling_factor
                ),
            ));
        }
    }
    Ok(lines)
}

/// Noise level for the alpha-diminishing check: about the norm of the initial
/// gradient mapping on the `n = 500`, `d = 5` instance.
pub const DIMINISHING_SIGMA0: f64 = 1.0e4;
