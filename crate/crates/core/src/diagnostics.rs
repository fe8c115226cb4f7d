//! Computable convergence diagnostics: the prox-gradient stationarity
//! residual, the delayed Lyapunov function, the `P_T` sampler and delay
//! statistics.

use std::collections::{BTreeMap, VecDeque};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::block::BlockVector;
use crate::error::{param, Error, Result};
use crate::model::{check_gamma, Problem};
use crate::schedule::{weight_c, Regime};

/// `Ŝ = Σ_j Ŝ_j` with `Ŝ_j = ‖(w_j − x_j)/γ_j + ν_j‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaritySurrogate {
    pub value: f64,
    pub per_block: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Whether `w` used a delayed read (otherwise the current iterate).
    pub delayed: bool,
    /// Whether a noise sample entered `w` (otherwise zero noise).
    pub noisy: bool,
}

/// Deterministic residual at `x`: `w_j = ζ_j(x_j − γ_j∇_j f(x), γ_j)`,
/// `Ŝ = Σ_j ‖(w_j − x_j)/γ_j‖²`. Equals `‖∇f(x)‖²` when `r ≡ 0`.
pub fn stationarity(problem: &Problem, x: &BlockVector, gammas: &[f64]) -> Result<StationaritySurrogate> {
    stationarity_with(problem, x, x, gammas, None)
}

/// Residual with the gradient taken at `read` (a possibly delayed iterate) and
/// an optional noise sample per block:
/// `w_j = ζ_j(x_j − γ_j(∇_j f(read) + ν_j), γ_j)`,
/// `Ŝ = Σ_j ‖(w_j − x_j)/γ_j + ν_j‖²`.
pub fn stationarity_with(
    problem: &Problem,
    x: &BlockVector,
    read: &BlockVector,
    gammas: &[f64],
    noise: Option<&[Vec<f64>]>,
) -> Result<StationaritySurrogate> {
    x.conforms_to(problem.layout())?;
    read.conforms_to(problem.layout())?;
    let m = problem.blocks();
    if gammas.len() != m {
        return Err(Error::Dimension { expected: m, found: gammas.len() });
    }
    if let Some(nu) = noise {
        if nu.len() != m {
            return Err(Error::Dimension { expected: m, found: nu.len() });
        }
    }
    let mut per_block = Vec::with_capacity(m);
    for (j, &gamma) in gammas.iter().enumerate() {
        check_gamma(gamma)?;
        let xj = x.block(j);
        let mut g = vec![0.0; xj.len()];
        problem.loss().partial_gradient_into(j, read, &mut g);
        let nu = noise.map(|n| n[j].as_slice());
        if let Some(nu) = nu {
            g.iter_mut().zip(nu).for_each(|(g, v)| *g += v);
        }
        let step: Vec<f64> = xj.iter().zip(&g).map(|(x, g)| x - gamma * g).collect();
        let mut w = vec![0.0; xj.len()];
        problem.regularizer(j).prox_into(&step, gamma, &mut w)?;
        let s: f64 = w
            .iter()
            .zip(xj)
            .enumerate()
            .map(|(i, (w, x))| {
                let r = (w - x) / gamma + nu.map_or(0.0, |n| n[i]);
                r * r
            })
            .sum();
        per_block.push(s);
    }
    Ok(StationaritySurrogate {
        value: per_block.iter().sum(),
        per_block,
        gammas: gammas.to_vec(),
        delayed: !std::ptr::eq(x, read) && x != read,
        noisy: noise.is_some(),
    })
}

/// `Φ(x(0), …, x(τ)) = F(x(0)) + L/(2√m) Σ_{h=1}^{τ} (τ−h+1)‖x(h) − x(h−1)‖²`
/// with `history[0]` the newest iterate and `τ = history.len() − 1`.
pub fn lyapunov(problem: &Problem, history: &[BlockVector], lipschitz: f64, m: usize) -> Result<f64> {
    let newest = history.first().ok_or_else(|| param("Lyapunov history must hold at least one iterate"))?;
    for x in history {
        x.conforms_to(problem.layout())?;
    }
    let refs: Vec<&BlockVector> = history.iter().collect();
    Ok(problem.objective_unchecked(newest) + lyapunov_tail(&refs, history.len() - 1, lipschitz, m))
}

/// The delay part of `Φ`: `L/(2√m) Σ_h (τ−h+1)‖x(h) − x(h−1)‖²`, summed over
/// the pairs present in `history` (newest first, at most `τ+1` entries used).
pub fn lyapunov_tail(history: &[&BlockVector], tau: usize, lipschitz: f64, m: usize) -> f64 {
    let sum: f64 = history.windows(2).take(tau).enumerate().map(|(h0, w)| (tau - h0) as f64 * w[1].dist_sq(w[0])).sum();
    lipschitz / (2.0 * (m as f64).sqrt()) * sum
}

/// Ring buffer `z^k = (x^k, …, x^{k−τ})`; entries before iteration 0 are `x⁰`.
#[derive(Debug, Clone)]
pub struct LyapunovState {
    buf: VecDeque<BlockVector>,
}

impl LyapunovState {
    pub fn new(x0: &BlockVector, tau: usize) -> Self {
        Self { buf: std::iter::repeat_n(x0.clone(), tau + 1).collect() }
    }

    pub fn tau(&self) -> usize {
        self.buf.len() - 1
    }

    /// Pushes `x^{k+1}`, dropping the oldest entry.
    pub fn push(&mut self, x: &BlockVector) {
        let mut recycled = self.buf.pop_back().expect("buffer is never empty");
        recycled.copy_from(x);
        self.buf.push_front(recycled);
    }

    /// Entry `h` steps back (`0` is the newest).
    pub fn get(&self, h: usize) -> &BlockVector {
        &self.buf[h]
    }

    pub fn newest(&self) -> &BlockVector {
        &self.buf[0]
    }

    /// The newest `τ+1` entries, newest first.
    pub fn window(&self, tau: usize) -> Vec<&BlockVector> {
        self.buf.iter().take(tau + 1).collect()
    }

    pub fn value(&self, problem: &Problem, lipschitz: f64) -> f64 {
        let tau = self.tau();
        problem.objective_unchecked(&self.buf[0]) + lyapunov_tail(&self.window(tau), tau, lipschitz, problem.blocks())
    }
}

/// Normalized `P_T` masses: `P_T(k) ∝ 1/c_k`, `k = 0..=T`.
pub fn pt_weights(horizon: u64, regime: Regime) -> Vec<f64> {
    let raw: Vec<f64> = (0..=horizon).map(|k| 1.0 / weight_c(k, regime)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Draws an iteration index from `P_T`.
pub fn sample_pt<R: Rng + ?Sized>(horizon: u64, regime: Regime, rng: &mut R) -> u64 {
    if horizon == 0 {
        return 0;
    }
    let weights: Vec<f64> = (0..=horizon).map(|k| 1.0 / weight_c(k, regime)).collect();
    let dist = WeightedIndex::new(&weights).expect("weights are positive and finite");
    dist.sample(rng) as u64
}

/// Histogram of observed read delays.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DelayStats {
    pub histogram: BTreeMap<u64, u64>,
}

impl DelayStats {
    pub fn record(&mut self, delay: u64) {
        *self.histogram.entry(delay).or_default() += 1;
    }

    pub fn merge(&mut self, other: &DelayStats) {
        for (&d, &c) in &other.histogram {
            *self.histogram.entry(d).or_default() += c;
        }
    }

    pub fn max(&self) -> u64 {
        self.histogram.keys().next_back().copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.histogram.values().sum()
    }

    pub fn mean(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.histogram.iter().map(|(d, c)| (*d * *c) as f64).sum::<f64>() / total as f64
    }
}

/// Running minimum of a sequence.
pub fn min_envelope(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .scan(f64::INFINITY, |m, &v| {
            *m = m.min(v);
            Some(*m)
        })
        .collect()
}

/// Least-squares slope of `log(min_{k'≤k} Ŝ_{k'})` against `log k`, over the
/// points whose `k` lies in the second half of `[0, k_max]`.
pub fn rate_slope(ks: &[u64], stationarity: &[f64]) -> Option<f64> {
    let env = min_envelope(stationarity);
    let k_max = *ks.iter().max()?;
    let pts: Vec<(f64, f64)> = ks
        .iter()
        .zip(&env)
        .filter(|(k, s)| **k > 0 && 2 * **k >= k_max && **s > 0.0)
        .map(|(k, s)| ((*k as f64).ln(), s.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::BlockLayout;
    use crate::model::{HalfSquaredNorm, Regularizer};
    use crate::prox::{Zero, L1};
    use crate::rng::worker_rng;

    fn scalar_problem(reg: Box<dyn Regularizer>) -> Problem {
        let layout = BlockLayout::new(&[1]).unwrap();
        Problem::new(Box::new(HalfSquaredNorm::new(layout)), vec![reg]).unwrap()
    }

    #[test]
    fn smooth_case_is_squared_gradient() {
        let layout = BlockLayout::new(&[3, 2]).unwrap();
        let p = Problem::new(Box::new(HalfSquaredNorm::new(layout)), vec![Box::new(Zero), Box::new(Zero)]).unwrap();
        let x = BlockVector::from_blocks(vec![vec![1.0, -2.0, 0.5], vec![3.0, 0.1]]).unwrap();
        let s = stationarity(&p, &x, &[0.3, 0.7]).unwrap();
        let want = x.norm_sq();
        assert!((s.value - want).abs() <= 1e-12 * want);
        assert!(!s.delayed && !s.noisy);
    }

    #[test]
    fn scalar_l1_example() {
        let p = scalar_problem(Box::new(L1::new(1.0).unwrap()));
        let x = BlockVector::from_blocks(vec![vec![3.0]]).unwrap();
        let s = stationarity(&p, &x, &[0.5]).unwrap();
        assert_eq!(s.value, 16.0);
    }

    #[test]
    fn fixed_point_has_zero_residual() {
        let p = scalar_problem(Box::new(L1::new(1.0).unwrap()));
        let x = BlockVector::from_blocks(vec![vec![0.0]]).unwrap();
        assert_eq!(stationarity(&p, &x, &[0.5]).unwrap().value, 0.0);
    }

    #[test]
    fn lyapunov_examples() {
        let layout = BlockLayout::new(&[2, 2, 2, 2]).unwrap();
        let regs: Vec<Box<dyn Regularizer>> = (0..4).map(|_| Box::new(Zero) as _).collect();
        let p = Problem::new(Box::new(HalfSquaredNorm::new(layout.clone())), regs).unwrap();
        let x0 = BlockVector::from_flat(&layout, vec![1.0; 8]).unwrap();
        let f = p.objective(&x0).unwrap();
        assert_eq!(lyapunov(&p, std::slice::from_ref(&x0), 1.0, 4).unwrap(), f);
        assert_eq!(lyapunov(&p, &[x0.clone(), x0.clone(), x0.clone()], 1.0, 4).unwrap(), f);

        let mut x1 = x0.clone();
        x1.as_mut_slice()[0] += 2.0; // ‖x(1) − x(0)‖² = 4
        let mut x2 = x1.clone();
        x2.as_mut_slice()[5] -= 1.0; // ‖x(2) − x(1)‖² = 1
        let phi = lyapunov(&p, &[x0.clone(), x1, x2], 1.0, 4).unwrap();
        assert!((phi - (f + 2.25)).abs() < 1e-12);
        // independent evaluation: L/(2√m)·(τ·4 + (τ−1)·1) with τ = 2, m = 4
        assert!((phi - f - (1.0 / 4.0) * (2.0 * 4.0 + 1.0)).abs() < 1e-12);
        assert!(lyapunov(&p, &[], 1.0, 4).is_err());
    }

    #[test]
    fn ring_buffer_shifts() {
        let layout = BlockLayout::new(&[1]).unwrap();
        let at = |v: f64| BlockVector::from_flat(&layout, vec![v]).unwrap();
        let mut z = LyapunovState::new(&at(0.0), 2);
        assert_eq!(z.tau(), 2);
        z.push(&at(1.0));
        z.push(&at(2.0));
        z.push(&at(3.0));
        assert_eq!(z.get(0).as_slice(), &[3.0]);
        assert_eq!(z.get(2).as_slice(), &[1.0]);
    }

    #[test]
    fn pt_degenerate_horizon() {
        let mut rng = worker_rng(0, 0);
        for _ in 0..10 {
            assert_eq!(sample_pt(0, Regime::SmoothSqrt, &mut rng), 0);
        }
    }

    #[test]
    fn pt_uniform_passes_chi_square() {
        let mut rng = worker_rng(5, 0);
        let draws = 100_000;
        let mut counts = [0u64; 10];
        for _ in 0..draws {
            counts[sample_pt(9, Regime::Summable, &mut rng) as usize] += 1;
        }
        let expect = draws as f64 / 10.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let p = 1.0 - ChiSquared::new(9.0).unwrap().cdf(chi2);
        assert!(p > 0.001, "chi2 {chi2}, p {p}");
    }

    #[test]
    fn pt_sqrt_weights() {
        let w = pt_weights(3, Regime::SmoothSqrt);
        let raw = [1.0, 1.0 / 2f64.sqrt(), 1.0 / 3f64.sqrt(), 0.5];
        let total: f64 = raw.iter().sum();
        for (a, b) in w.iter().zip(raw) {
            assert!((a - b / total).abs() < 1e-15);
        }
        let mut rng = worker_rng(6, 0);
        let mut counts = [0u64; 4];
        for _ in 0..100_000 {
            counts[sample_pt(3, Regime::SmoothSqrt, &mut rng) as usize] += 1;
        }
        for (c, p) in counts.iter().zip(&w) {
            assert!((*c as f64 / 1e5 - p).abs() < 0.01);
        }
    }

    #[test]
    fn delay_histogram() {
        let mut s = DelayStats::default();
        assert_eq!(s.max(), 0);
        for d in [3, 3, 3] {
            s.record(d);
        }
        assert_eq!(s.histogram.len(), 1);
        assert_eq!(s.max(), 3);
        let mut t = DelayStats::default();
        t.record(5);
        s.merge(&t);
        assert_eq!(s.total(), 4);
        assert_eq!(s.mean(), 3.5);
    }

    #[test]
    fn slope_of_inverse_law() {
        let ks: Vec<u64> = (0..=200).map(|e| e * 2).collect();
        let s: Vec<f64> = ks.iter().map(|&k| 5.0 / (k as f64 + 1.0)).collect();
        let slope = rate_slope(&ks, &s).unwrap();
        assert!((slope + 1.0).abs() < 0.01, "{slope}");
        assert_eq!(min_envelope(&[3.0, 1.0, 2.0, 0.5]), vec![3.0, 1.0, 1.0, 0.5]);
    }
}
