//! Measurements behind the verification suites and the acceptance target.
//! Each function runs one experiment at a fixed size and returns the raw
//! numbers; thresholds are applied by the caller.

use std::sync::Arc;

use anyhow::Result;
use rand::Rng;

use sapalm::model::Regularizer;
use sapalm::rng::worker_rng;
use sapalm::{
    firm_pca_instance, generate_data, pt_weights, rate_slope, run, sample_batch, sample_pt, spca_instance, BlockVector,
    DelaySchedule, FactorizationState, Firm, Mode, NoiseKind, NoiseModel, Problem, ProxParams, Regime, RunConfig,
    RunOutput, WithQuadratic, Zero, L1,
};

use crate::oracle::{central_difference, dense_loss, grid_min, relative_error, total_variation, ScalarPenalty};

/// Sparse PCA instance with data seed `data_seed` and a random start from `init_seed`.
pub struct Spca {
    pub problem: Problem,
    pub x0: BlockVector,
    pub n: usize,
    pub d: usize,
}

impl Spca {
    pub fn new(n: usize, d: usize, lambda: f64, data_seed: u64, init_seed: u64) -> Result<Self> {
        let data = Arc::new(generate_data(n, data_seed)?);
        Ok(Self {
            problem: spca_instance(data, d, lambda, sapalm::DEFAULT_SAFETY)?,
            x0: FactorizationState::random(d, n, init_seed).to_blocks(),
            n,
            d,
        })
    }

    pub fn run(&self, cfg: &RunConfig) -> Result<RunOutput> {
        Ok(run(&self.problem, &self.x0, cfg)?)
    }
}

#[derive(Debug, Clone)]
pub struct ProxOracleResult {
    pub operator: &'static str,
    pub cases: usize,
    /// Largest `h(ours) − min_grid h`; at most ~0 when the prox is exact.
    pub worst_gap: f64,
}

/// Compares each prox against grid search on `[−10, 10]` (step 1e−4, refined once).
pub fn prox_oracle(cases: usize, seed: u64) -> Vec<ProxOracleResult> {
    let mut rng = worker_rng(seed, 0);
    let kinds = ["zero", "l1", "firm", "firm+quadratic"];
    kinds
        .iter()
        .map(|&kind| {
            let mut worst = f64::NEG_INFINITY;
            for _ in 0..cases {
                let y = rng.random_range(-5.0..5.0);
                let gamma = rng.random_range(0.05..2.0);
                let lambda = rng.random_range(0.05..2.0);
                let kappa = f64::max(lambda, gamma * lambda) * rng.random_range(1.1..4.0);
                let mu = rng.random_range(0.0..2.0);
                let (pen, reg): (ScalarPenalty, Box<dyn Regularizer>) = match kind {
                    "zero" => (ScalarPenalty::Zero, Box::new(Zero)),
                    "l1" => (ScalarPenalty::L1 { lambda }, Box::new(L1::new(lambda).unwrap())),
                    "firm" => (ScalarPenalty::Firm { lambda, kappa }, Box::new(Firm::new(lambda, kappa).unwrap())),
                    _ => (
                        ScalarPenalty::FirmQuadratic { lambda, kappa, mu },
                        Box::new(WithQuadratic::new(Firm::new(lambda, kappa).unwrap(), mu).unwrap()),
                    ),
                };
                let mut out = [0.0];
                reg.prox_into(&[y], gamma, &mut out).expect("valid prox parameters");
                let h = |x: f64| pen.prox_objective(x, y, gamma);
                let (_, best) = grid_min(h, -10.0, 10.0, 1e-4);
                worst = worst.max(h(out[0]) - best);
            }
            ProxOracleResult { operator: kind, cases, worst_gap: worst }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct GradientCheck {
    pub problem: &'static str,
    pub points: usize,
    pub worst_relative_error: f64,
}

/// Block gradients of both factorization problems against central
/// differences of a dense recomputation of the loss, at random points with
/// `n ≤ 20`, `d ≤ 3`.
pub fn gradient_fd(points: usize, seed: u64) -> Result<Vec<GradientCheck>> {
    let mut rng = worker_rng(seed, 0);
    let mut out = Vec::new();
    for name in ["spca", "firm-pca"] {
        let mut worst: f64 = 0.0;
        for p in 0..points {
            let n = rng.random_range(2..=20);
            let d = rng.random_range(1..=3);
            let data = Arc::new(generate_data(n, seed.wrapping_add(p as u64))?);
            let problem = if name == "spca" {
                spca_instance(data.clone(), d, 0.3, sapalm::DEFAULT_SAFETY)?
            } else {
                let params = ProxParams { lambda: 0.3, kappa: 1.0, mu: 0.5 };
                firm_pca_instance(data.clone(), d, params, sapalm::DEFAULT_SAFETY)?
            };
            let x = FactorizationState::random(d, n, rng.random()).to_blocks();
            let (xs, ys) = (x.block(0).to_vec(), x.block(1).to_vec());
            let a = data.a();
            let fd_x = central_difference(|v| dense_loss(a, n, d, v, &ys), &xs, 1e-6);
            let fd_y = central_difference(|v| dense_loss(a, n, d, &xs, v), &ys, 1e-6);
            worst = worst.max(relative_error(&problem.partial_gradient(0, &x)?, &fd_x));
            worst = worst.max(relative_error(&problem.partial_gradient(1, &x)?, &fd_y));
        }
        out.push(GradientCheck { problem: name, points, worst_relative_error: worst });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct DescentResult {
    pub steps: usize,
    pub increases: usize,
    pub worst_increase: f64,
    pub initial: f64,
    pub last: f64,
}

/// Objective after every block update of a noiseless sync run.
pub fn sync_descent(n: usize, d: usize, lambda: f64, a: f64, epochs: u64, seed: u64) -> Result<DescentResult> {
    let inst = Spca::new(n, d, lambda, seed, seed)?;
    let cfg = RunConfig { a, iterations: 2 * epochs, stride: Some(1), seed, ..RunConfig::default() };
    let out = inst.run(&cfg)?;
    let objs: Vec<f64> = out.trace.checkpoints.iter().map(|c| c.objective).collect();
    let diffs: Vec<f64> = objs.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(DescentResult {
        steps: diffs.len(),
        increases: diffs.iter().filter(|&&x| x > 0.0).count(),
        worst_increase: diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        initial: objs[0],
        last: *objs.last().unwrap(),
    })
}

#[derive(Debug, Clone)]
pub struct EquivalenceResult {
    pub seed: u64,
    pub updates: u64,
    pub sim_async_matches: bool,
    pub async_matches: bool,
}

/// Sync, sim-async with zero delays and one-worker async, uniform selection.
pub fn engine_equivalence(n: usize, d: usize, seeds: &[u64], epochs: u64) -> Result<Vec<EquivalenceResult>> {
    let fingerprint = |out: &RunOutput| {
        let checkpoints: Vec<Vec<u64>> = out.trace.checkpoints.iter().map(|c| c.k_indexed_bits()).collect();
        let iterates: Vec<(u64, usize, Vec<u64>)> = out
            .iterates
            .iter()
            .flatten()
            .map(|r| (r.k, r.block, r.values.iter().map(|v| v.to_bits()).collect()))
            .collect();
        (checkpoints, iterates)
    };
    seeds
        .iter()
        .map(|&seed| {
            let inst = Spca::new(n, d, 0.1, seed, seed)?;
            let base = RunConfig {
                iterations: 2 * epochs,
                stride: Some(1),
                seed,
                record_iterates: true,
                ..RunConfig::default()
            };
            let sync = fingerprint(&inst.run(&base)?);
            let sim = fingerprint(&inst.run(&RunConfig { mode: Mode::SimAsync, ..base.clone() })?);
            let asy = fingerprint(&inst.run(&RunConfig { mode: Mode::Async, workers: 1, ..base.clone() })?);
            Ok(EquivalenceResult {
                seed,
                updates: base.iterations,
                sim_async_matches: sync == sim,
                async_matches: sync == asy,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DriftPoint {
    pub k: u64,
    /// Mean of `Φ_{k+1} − Φ_k` over the seeds.
    pub mean: f64,
    pub standard_error: f64,
}

/// Per-step change of the Lyapunov function under iid delays, across seeds.
pub fn lyapunov_drift(n: usize, d: usize, tau: usize, seeds: u64, epochs: u64) -> Result<Vec<DriftPoint>> {
    let inst = Spca::new(n, d, 0.1, 0, 0)?;
    let mut diffs: Vec<Vec<f64>> = Vec::new();
    for seed in 0..seeds {
        let cfg = RunConfig {
            mode: Mode::SimAsync,
            tau,
            delays: DelaySchedule::IidUniform { tau, seed },
            iterations: 2 * epochs,
            stride: Some(1),
            seed,
            ..RunConfig::default()
        };
        let out = inst.run(&cfg)?;
        let phi: Vec<f64> = out.trace.checkpoints.iter().map(|c| c.lyapunov).collect();
        diffs.push(phi.windows(2).map(|w| w[1] - w[0]).collect());
    }
    let steps = diffs[0].len();
    Ok((0..steps)
        .map(|k| {
            let xs: Vec<f64> = diffs.iter().map(|d| d[k]).collect();
            let m = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / m;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
            DriftPoint { k: k as u64, mean, standard_error: (var / m).sqrt() }
        })
        .collect())
}

/// Settings shared by the long sim-async runs on `n = 500`, `d = 5`.
#[derive(Debug, Clone)]
pub struct RateSetup {
    pub n: usize,
    pub d: usize,
    pub lambda: f64,
    pub tau: usize,
    pub epochs: u64,
    pub regime: Regime,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl RateSetup {
    pub fn summable(n: usize, d: usize, tau: usize, epochs: u64) -> Self {
        Self { n, d, lambda: 0.1, tau, epochs, regime: Regime::Summable, noise: NoiseModel::NONE, seed: 1 }
    }

    pub fn run(&self) -> Result<RunOutput> {
        let inst = Spca::new(self.n, self.d, self.lambda, self.seed, self.seed)?;
        inst.run(&RunConfig {
            mode: Mode::SimAsync,
            tau: self.tau,
            delays: DelaySchedule::IidUniform { tau: self.tau, seed: self.seed },
            iterations: 2 * self.epochs,
            regime: self.regime,
            noise: self.noise,
            seed: self.seed,
            ..RunConfig::default()
        })
    }
}

#[derive(Debug, Clone)]
pub struct RateResult {
    pub slope: f64,
    /// `min_{k'≤k} Ŝ_{k'}` at each checkpoint.
    pub envelope: Vec<(u64, f64)>,
    pub max_objective_ratio: f64,
    pub max_norm_ratio: f64,
}

impl RateResult {
    pub fn envelope_at(&self, k: u64) -> f64 {
        self.envelope.iter().take_while(|(kk, _)| *kk <= k).last().map_or(f64::NAN, |e| e.1)
    }

    pub fn final_envelope(&self) -> f64 {
        self.envelope.last().map_or(f64::NAN, |e| e.1)
    }
}

pub fn rate_run(setup: &RateSetup) -> Result<RateResult> {
    let out = setup.run()?;
    let cps = &out.trace.checkpoints;
    let ks: Vec<u64> = cps.iter().map(|c| c.k).collect();
    let s: Vec<f64> = cps.iter().map(|c| c.stationarity).collect();
    let env = sapalm::min_envelope(&s);
    let (f0, n0) = (cps[0].objective, cps[0].iterate_norm);
    Ok(RateResult {
        slope: rate_slope(&ks, &s).unwrap_or(f64::NAN),
        envelope: ks.into_iter().zip(env).collect(),
        max_objective_ratio: cps.iter().map(|c| c.objective / f0).fold(f64::NEG_INFINITY, f64::max),
        max_norm_ratio: cps.iter().map(|c| c.iterate_norm / n0).fold(f64::NEG_INFINITY, f64::max),
    })
}

pub fn diminishing_setup(sigma0: f64) -> RateSetup {
    RateSetup {
        regime: Regime::AlphaDiminishing { alpha: 0.5 },
        noise: NoiseModel::new(NoiseKind::GaussianDiminishing { alpha: 0.5 }, sigma0).expect("valid noise"),
        ..RateSetup::summable(500, 5, 3, 200)
    }
}

pub fn constant_noise_setup(sigma0: f64) -> RateSetup {
    RateSetup {
        lambda: 0.0,
        regime: Regime::SmoothSqrt,
        noise: NoiseModel::new(NoiseKind::GaussianConstant, sigma0).expect("valid noise"),
        ..RateSetup::summable(500, 5, 3, 200)
    }
}

#[derive(Debug, Clone)]
pub struct MinibatchResult {
    /// Relative error of the average of all singleton estimates.
    pub singleton_error: f64,
    pub variance_small: f64,
    pub variance_large: f64,
    /// `(var_small / var_large) / (large / small)`; 1 for exact `1/|batch|` scaling.
    pub scaling_factor: f64,
}

pub fn minibatch(n: usize, d: usize, small: usize, large: usize, draws: usize, seed: u64) -> Result<MinibatchResult> {
    let inst = Spca::new(n, d, 0.1, seed, seed)?;
    let (loss, x) = (inst.problem.loss(), &inst.x0);
    let mut exact = Vec::new();
    for j in 0..2 {
        exact.push(inst.problem.partial_gradient(j, x)?);
    }
    let mut worst: f64 = 0.0;
    for (j, g) in exact.iter().enumerate() {
        let mut avg = vec![0.0; g.len()];
        let mut buf = vec![0.0; g.len()];
        for c in 0..n {
            loss.stochastic_gradient_into(j, x, &[c], &mut buf)?;
            avg.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
        }
        avg.iter_mut().for_each(|a| *a /= n as f64);
        worst = worst.max(relative_error(&avg, g));
    }
    let mut rng = worker_rng(seed, 1);
    let mut variance = |size: usize| -> Result<f64> {
        let mut total = 0.0;
        for _ in 0..draws {
            let batch = sample_batch(n, size, &mut rng);
            for (j, g) in exact.iter().enumerate() {
                let mut est = vec![0.0; g.len()];
                loss.stochastic_gradient_into(j, x, &batch, &mut est)?;
                total += est.iter().zip(g).map(|(e, g)| (e - g) * (e - g)).sum::<f64>();
            }
        }
        Ok(total / draws as f64)
    };
    let (vs, vl) = (variance(small)?, variance(large)?);
    Ok(MinibatchResult {
        singleton_error: worst,
        variance_small: vs,
        variance_large: vl,
        scaling_factor: (vs / vl) / (large as f64 / small as f64),
    })
}

/// Total-variation distance between `draws` samples of `P_T` and its weights.
pub fn pt_distance(horizon: u64, regime: Regime, draws: usize, seed: u64) -> f64 {
    let mut rng = worker_rng(seed, 0);
    let mut counts = vec![0u64; horizon as usize + 1];
    for _ in 0..draws {
        counts[sample_pt(horizon, regime, &mut rng) as usize] += 1;
    }
    total_variation(&counts, &pt_weights(horizon, regime))
}

#[derive(Debug, Clone)]
pub struct StressResult {
    pub initial: f64,
    pub last: f64,
    pub max: f64,
}

/// Every read `τ` updates stale.
pub fn stale_stress(n: usize, d: usize, tau: usize, epochs: u64, seed: u64) -> Result<StressResult> {
    let inst = Spca::new(n, d, 0.1, seed, seed)?;
    let out = inst.run(&RunConfig {
        mode: Mode::SimAsync,
        tau,
        delays: DelaySchedule::Constant { delay: tau },
        iterations: 2 * epochs,
        stride: Some(1),
        seed,
        ..RunConfig::default()
    })?;
    let objs: Vec<f64> = out.trace.checkpoints.iter().map(|c| c.objective).collect();
    Ok(StressResult {
        initial: objs[0],
        last: *objs.last().unwrap(),
        max: objs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}
