//! Stepsize rules, the `c_k` weights and the injected-noise models.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{param, Result};
use crate::model::LipschitzInfo;

/// How the weights `c_k` grow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// `c_k ≡ 1`, for summable noise.
    Summable,
    /// `c_k = (k+1)^(1−α)`, for `α`-diminishing noise.
    AlphaDiminishing { alpha: f64 },
    /// `c_k = √(k+1)`, for bounded non-vanishing noise with `r ≡ 0`.
    SmoothSqrt,
}

impl Regime {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Regime::AlphaDiminishing { alpha } if !(alpha > 0.0 && alpha < 1.0) => {
                Err(param(format!("alpha must lie in (0, 1), got {alpha}")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Regime::Summable => "summable",
            Regime::AlphaDiminishing { .. } => "alpha-diminishing",
            Regime::SmoothSqrt => "smooth-sqrt",
        }
    }
}

/// `c_k` for iteration `k`; always at least 1.
pub fn weight_c(k: u64, regime: Regime) -> f64 {
    let k1 = (k + 1) as f64;
    match regime {
        Regime::Summable => 1.0,
        Regime::AlphaDiminishing { alpha } => k1.powf(1.0 - alpha),
        Regime::SmoothSqrt => k1.sqrt(),
    }
}

/// `γ_j^k = 1 / (a·c_k·(L_j + 2Lτ/√m))`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepsizePolicy {
    a: f64,
    regime: Regime,
    tau: usize,
    m: usize,
    lipschitz: LipschitzInfo,
}

impl StepsizePolicy {
    pub fn new(a: f64, regime: Regime, tau: usize, lipschitz: LipschitzInfo) -> Result<Self> {
        if !(a > 1.0 && a.is_finite()) {
            return Err(param(format!("stepsize constant a must exceed 1, got {a}")));
        }
        regime.validate()?;
        let m = lipschitz.per_block().len();
        Ok(Self { a, regime, tau, m, lipschitz })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn lipschitz(&self) -> &LipschitzInfo {
        &self.lipschitz
    }

    /// Replaces the Lipschitz estimates; the block count must not change.
    pub fn set_lipschitz(&mut self, lipschitz: LipschitzInfo) {
        debug_assert_eq!(lipschitz.per_block().len(), self.m);
        self.lipschitz = lipschitz;
    }

    /// `2Lτ/√m`.
    pub fn delay_term(&self) -> f64 {
        2.0 * self.lipschitz.global() * self.tau as f64 / (self.m as f64).sqrt()
    }

    pub fn weight(&self, k: u64) -> f64 {
        weight_c(k, self.regime)
    }

    pub fn stepsize(&self, j: usize, k: u64) -> f64 {
        1.0 / (self.a * self.weight(k) * (self.lipschitz.block(j) + self.delay_term()))
    }

    pub fn stepsizes(&self, k: u64) -> Vec<f64> {
        (0..self.m).map(|j| self.stepsize(j, k)).collect()
    }

    /// `1/(a(L̲ + 2Lτ/√m))`, the largest stepsize any block may receive.
    pub fn stepsize_bound(&self) -> f64 {
        1.0 / (self.a * (self.lipschitz.min_block() + self.delay_term()))
    }
}

/// Noise added to the block gradient, `ν_j^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    None,
    /// `σ_k² = σ₀²(k+1)^(−1.5)`.
    GaussianSummable,
    /// `σ_k² = σ₀²(k+1)^(−α)`.
    GaussianDiminishing {
        alpha: f64,
    },
    /// Minibatch gradients with batch size `⌈b₀(k+1)^α⌉`, drawn from the
    /// loss's stochastic oracle instead of additive noise.
    Minibatch {
        alpha: f64,
        base: usize,
    },
    /// `σ_k² = σ₀²`.
    GaussianConstant,
}

impl NoiseKind {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::None => "none",
            NoiseKind::GaussianSummable => "gaussian-summable",
            NoiseKind::GaussianDiminishing { .. } => "gaussian-diminishing",
            NoiseKind::Minibatch { .. } => "minibatch",
            NoiseKind::GaussianConstant => "gaussian-constant",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub sigma0: f64,
}

impl NoiseModel {
    pub const NONE: NoiseModel = NoiseModel { kind: NoiseKind::None, sigma0: 0.0 };

    pub fn new(kind: NoiseKind, sigma0: f64) -> Result<Self> {
        if !(sigma0 >= 0.0 && sigma0.is_finite()) {
            return Err(param(format!("sigma0 must be >= 0, got {sigma0}")));
        }
        match kind {
            NoiseKind::GaussianDiminishing { alpha } | NoiseKind::Minibatch { alpha, .. }
                if !(alpha > 0.0 && alpha < 1.0) =>
            {
                return Err(param(format!("noise alpha must lie in (0, 1), got {alpha}")));
            }
            NoiseKind::Minibatch { base: 0, .. } => return Err(param("batch_base must be positive")),
            _ => {}
        }
        Ok(Self { kind, sigma0 })
    }

    /// `E‖ν^k‖²` for the additive kinds; zero for `None` and `Minibatch`.
    pub fn variance(&self, k: u64) -> f64 {
        let s2 = self.sigma0 * self.sigma0;
        let k1 = (k + 1) as f64;
        match self.kind {
            NoiseKind::None | NoiseKind::Minibatch { .. } => 0.0,
            NoiseKind::GaussianSummable => s2 * k1.powf(-1.5),
            NoiseKind::GaussianDiminishing { alpha } => s2 * k1.powf(-alpha),
            NoiseKind::GaussianConstant => s2,
        }
    }

    pub fn is_additive(&self) -> bool {
        self.variance(0) > 0.0
    }

    /// Batch size for iteration `k` when the model is `Minibatch`.
    pub fn batch_size(&self, k: u64) -> Option<usize> {
        match self.kind {
            NoiseKind::Minibatch { alpha, base } => Some(minibatch_schedule(k, alpha, base)),
            _ => None,
        }
    }

    /// Adds a draw of `ν_j^k` to `out` (length `n_j`). Each coordinate is
    /// `N(0, σ_k²/n_j)`, so `E‖ν‖² = σ_k²`. Draws nothing for non-additive kinds.
    pub fn add_sample<R: Rng + ?Sized>(&self, k: u64, out: &mut [f64], rng: &mut R) {
        self.add_partial_sample(k, out, out.len(), rng);
    }

    /// Adds the coordinates of a `ν_j^k` draw that fall in `out`, a slice of a
    /// block of length `n_j`.
    pub fn add_partial_sample<R: Rng + ?Sized>(&self, k: u64, out: &mut [f64], n_j: usize, rng: &mut R) {
        let var = self.variance(k);
        if var == 0.0 {
            return;
        }
        let sd = (var / n_j as f64).sqrt();
        for o in out.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *o += sd * z;
        }
    }
}

/// One draw of `ν_j^k` as a fresh block.
pub fn sample_noise<R: Rng + ?Sized>(model: &NoiseModel, k: u64, n_j: usize, rng: &mut R) -> Vec<f64> {
    let mut v = vec![0.0; n_j];
    model.add_sample(k, &mut v, rng);
    v
}

/// `⌈b₀(k+1)^α⌉`.
pub fn minibatch_schedule(k: u64, alpha: f64, base: usize) -> usize {
    (base as f64 * ((k + 1) as f64).powf(alpha)).ceil() as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::worker_rng;
    use proptest::prelude::*;

    fn policy(a: f64, regime: Regime, tau: usize, blocks: Vec<f64>, l: f64) -> StepsizePolicy {
        StepsizePolicy::new(a, regime, tau, LipschitzInfo::new(blocks, l).unwrap()).unwrap()
    }

    #[test]
    fn weights() {
        for k in [0, 1, 17, 1000] {
            assert_eq!(weight_c(k, Regime::Summable), 1.0);
        }
        assert_eq!(weight_c(3, Regime::AlphaDiminishing { alpha: 0.5 }), 2.0);
        assert_eq!(weight_c(0, Regime::SmoothSqrt), 1.0);
        assert_eq!(weight_c(3, Regime::SmoothSqrt), 2.0);
    }

    #[test]
    fn stepsize_examples() {
        let p = policy(2.0, Regime::Summable, 0, vec![1.0; 7], 1.0);
        assert_eq!(p.stepsize(3, 12), 0.5);
        let p = policy(2.0, Regime::Summable, 2, vec![1.0; 4], 1.0);
        assert!((p.stepsize(0, 0) - 1.0 / 6.0).abs() < 1e-15);
        let p = policy(2.0, Regime::SmoothSqrt, 0, vec![1.0; 2], 1.0);
        assert_eq!(p.stepsize(1, 3), 0.25);
    }

    #[test]
    fn rejects_bad_parameters() {
        let l = LipschitzInfo::uniform(2, 1.0).unwrap();
        assert!(StepsizePolicy::new(1.0, Regime::Summable, 0, l.clone()).is_err());
        assert!(StepsizePolicy::new(2.0, Regime::AlphaDiminishing { alpha: 1.0 }, 0, l).is_err());
        assert!(NoiseModel::new(NoiseKind::GaussianConstant, -1.0).is_err());
        assert!(NoiseModel::new(NoiseKind::Minibatch { alpha: 0.5, base: 0 }, 0.0).is_err());
    }

    #[test]
    fn none_noise_is_zero() {
        let mut rng = worker_rng(1, 0);
        assert_eq!(sample_noise(&NoiseModel::NONE, 5, 4, &mut rng), vec![0.0; 4]);
    }

    #[test]
    fn noise_variance_schedules() {
        let m = NoiseModel::new(NoiseKind::GaussianDiminishing { alpha: 0.5 }, 1.0).unwrap();
        assert_eq!(m.variance(3), 0.5);
        let m = NoiseModel::new(NoiseKind::GaussianSummable, 2.0).unwrap();
        assert!((m.variance(3) - 4.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn constant_noise_has_requested_energy() {
        let m = NoiseModel::new(NoiseKind::GaussianConstant, 1.0).unwrap();
        let mut rng = worker_rng(11, 0);
        let draws = 10_000;
        let mut mean_sq = 0.0;
        let mut coord_sum = [0.0; 5];
        let mut coord_sq = [0.0; 5];
        for _ in 0..draws {
            let v = sample_noise(&m, 0, 5, &mut rng);
            mean_sq += v.iter().map(|x| x * x).sum::<f64>();
            for i in 0..5 {
                coord_sum[i] += v[i];
                coord_sq[i] += v[i] * v[i];
            }
        }
        mean_sq /= draws as f64;
        assert!((0.95..=1.05).contains(&mean_sq), "{mean_sq}");
        for i in 0..5 {
            let mean = coord_sum[i] / draws as f64;
            let sd = (coord_sq[i] / draws as f64 - mean * mean).sqrt();
            assert!(mean.abs() <= 4.0 * sd / (draws as f64).sqrt(), "coordinate {i}: {mean}");
        }
    }

    #[test]
    fn minibatch_sizes() {
        assert_eq!(minibatch_schedule(0, 0.5, 4), 4);
        assert_eq!(minibatch_schedule(3, 0.5, 4), 8);
        let m = NoiseModel::new(NoiseKind::Minibatch { alpha: 0.5, base: 4 }, 0.0).unwrap();
        assert_eq!(m.batch_size(3), Some(8));
        assert_eq!(NoiseModel::NONE.batch_size(3), None);
    }

    proptest! {
        #[test]
        fn stepsize_properties(
            a in 1.01f64..5.0,
            tau in 0usize..10,
            ls in prop::collection::vec(0.1f64..50.0, 1..6),
            l in 0.1f64..50.0,
            alpha in 0.05f64..0.95,
            k in 0u64..10_000,
        ) {
            for regime in [Regime::Summable, Regime::AlphaDiminishing { alpha }, Regime::SmoothSqrt] {
                prop_assert!(weight_c(k, regime) >= 1.0);
                let p = policy(a, regime, tau, ls.clone(), l);
                let bound = p.stepsize_bound();
                for j in 0..ls.len() {
                    let now = p.stepsize(j, k);
                    let next = p.stepsize(j, k + 1);
                    prop_assert!(now > 0.0);
                    prop_assert!(next <= now);
                    prop_assert!(now <= bound * (1.0 + 1e-12));
                }
                let d = p.delay_term();
                let ratio = p.stepsize(0, k) / p.stepsize(ls.len() - 1, k);
                let want = (p.lipschitz().block(ls.len() - 1) + d) / (p.lipschitz().block(0) + d);
                prop_assert!((ratio - want).abs() <= 1e-12 * want);
            }
        }
    }
}
