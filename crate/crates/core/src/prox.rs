//! Proximal operators: zero, L1 (soft thresholding), firm thresholding and the
//! quadratic-addition rule.
//!
//! All operators act elementwise. The firm operator with thresholds
//! `γλ < κ` is the proximal map of `γ·φ`, where
//!
//! ```text
//! φ(x) = λ|x| − λx²/(2κ)   for |x| ≤ κ
//!      = λκ/2              otherwise
//! ```
//!
//! (the minimax-concave penalty with concavity `κ/λ`).

use crate::error::{param, Result};
use crate::model::{check_gamma, Regularizer};

/// Regularization weights shared by the factorization problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxParams {
    pub lambda: f64,
    pub kappa: f64,
    pub mu: f64,
}

impl ProxParams {
    pub fn validate(&self, firm: bool) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(param(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(param(format!("mu must be >= 0, got {}", self.mu)));
        }
        if firm && (self.kappa.is_nan() || self.kappa <= self.lambda) {
            return Err(param(format!(
                "firm thresholding needs kappa > lambda, got kappa = {}, lambda = {}",
                self.kappa, self.lambda
            )));
        }
        Ok(())
    }
}

/// `sign(y)·max(|y| − t, 0)`.
#[inline]
pub fn soft_threshold(y: f64, t: f64) -> f64 {
    let a = y.abs() - t;
    if a > 0.0 {
        a.copysign(y)
    } else {
        0.0
    }
}

/// Firm threshold with lower threshold `t = γλ` and upper threshold `kappa`;
/// requires `t < kappa`.
#[inline]
pub fn firm_threshold(y: f64, t: f64, kappa: f64) -> f64 {
    let a = y.abs();
    if a <= t {
        0.0
    } else if a <= kappa {
        (kappa * (a - t) / (kappa - t)).copysign(y)
    } else {
        y
    }
}

/// Scalar firm penalty `φ(x)` including the weight `λ`.
#[inline]
pub fn firm_penalty(x: f64, lambda: f64, kappa: f64) -> f64 {
    let a = x.abs();
    if a <= kappa {
        lambda * a - lambda * a * a / (2.0 * kappa)
    } else {
        0.5 * lambda * kappa
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(param(format!("threshold must be >= 0, got {t}")))
    }
}

fn check_firm(gamma: f64, lambda: f64, kappa: f64) -> Result<()> {
    check_gamma(gamma)?;
    if !(lambda >= 0.0 && kappa > lambda) {
        return Err(param(format!("firm thresholding needs 0 <= lambda < kappa, got {lambda}, {kappa}")));
    }
    if gamma * lambda >= kappa {
        return Err(param(format!(
            "firm thresholding is degenerate: γλ = {} must be below kappa = {kappa}",
            gamma * lambda
        )));
    }
    Ok(())
}

/// Soft thresholding of every entry of `y` at `t = γλ`.
pub fn prox_l1(y: &[f64], t: f64) -> Result<Vec<f64>> {
    check_threshold(t)?;
    Ok(y.iter().map(|&v| soft_threshold(v, t)).collect())
}

/// Firm thresholding of every entry of `y`: zero below `γλ`, identity above
/// `kappa`, linear in between.
pub fn prox_firm(y: &[f64], gamma: f64, lambda: f64, kappa: f64) -> Result<Vec<f64>> {
    check_firm(gamma, lambda, kappa)?;
    let t = gamma * lambda;
    Ok(y.iter().map(|&v| firm_threshold(v, t, kappa)).collect())
}

/// Prox of `g + (μ/2)‖·‖²` from the prox of `g`:
/// `base(y/(1+γμ), γ/(1+γμ))`.
pub fn prox_with_quadratic<F>(base: F, y: &[f64], gamma: f64, mu: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64], f64) -> Result<Vec<f64>>,
{
    check_gamma(gamma)?;
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(param(format!("mu must be >= 0, got {mu}")));
    }
    let s = 1.0 + gamma * mu;
    let scaled: Vec<f64> = y.iter().map(|v| v / s).collect();
    base(&scaled, gamma / s)
}

/// `r ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

impl Regularizer for Zero {
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn prox_into(&self, y: &[f64], gamma: f64, out: &mut [f64]) -> Result<()> {
        check_gamma(gamma)?;
        out.copy_from_slice(y);
        Ok(())
    }

    fn is_separable(&self) -> bool {
        true
    }
}

/// `λ‖x‖₁`.
#[derive(Debug, Clone, Copy)]
pub struct L1 {
    lambda: f64,
}

impl L1 {
    pub fn new(lambda: f64) -> Result<Self> {
        check_threshold(lambda).map_err(|_| param(format!("lambda must be >= 0, got {lambda}")))?;
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Regularizer for L1 {
    fn value(&self, x: &[f64]) -> f64 {
        self.lambda * x.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn prox_into(&self, y: &[f64], gamma: f64, out: &mut [f64]) -> Result<()> {
        check_gamma(gamma)?;
        let t = gamma * self.lambda;
        for (o, &v) in out.iter_mut().zip(y) {
            *o = soft_threshold(v, t);
        }
        Ok(())
    }

    fn is_separable(&self) -> bool {
        true
    }
}

/// `Σ_i φ(x_i)`, the firm-thresholding penalty weighted by `λ`.
#[derive(Debug, Clone, Copy)]
pub struct Firm {
    lambda: f64,
    kappa: f64,
}

impl Firm {
    pub fn new(lambda: f64, kappa: f64) -> Result<Self> {
        ProxParams { lambda, kappa, mu: 0.0 }.validate(true)?;
        Ok(Self { lambda, kappa })
    }
}

impl Regularizer for Firm {
    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|&v| firm_penalty(v, self.lambda, self.kappa)).sum()
    }

    fn prox_into(&self, y: &[f64], gamma: f64, out: &mut [f64]) -> Result<()> {
        check_firm(gamma, self.lambda, self.kappa)?;
        let t = gamma * self.lambda;
        for (o, &v) in out.iter_mut().zip(y) {
            *o = firm_threshold(v, t, self.kappa);
        }
        Ok(())
    }

    fn is_separable(&self) -> bool {
        true
    }
}

/// `base + (μ/2)‖·‖²`.
#[derive(Debug, Clone, Copy)]
pub struct WithQuadratic<R> {
    base: R,
    mu: f64,
}

impl<R: Regularizer> WithQuadratic<R> {
    pub fn new(base: R, mu: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(param(format!("mu must be >= 0, got {mu}")));
        }
        Ok(Self { base, mu })
    }
}

impl<R: Regularizer> Regularizer for WithQuadratic<R> {
    fn value(&self, x: &[f64]) -> f64 {
        self.base.value(x) + 0.5 * self.mu * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn prox_into(&self, y: &[f64], gamma: f64, out: &mut [f64]) -> Result<()> {
        check_gamma(gamma)?;
        let s = 1.0 + gamma * self.mu;
        for (o, &v) in out.iter_mut().zip(y) {
            *o = v / s;
        }
        let shrunk = out.to_vec();
        self.base.prox_into(&shrunk, gamma / s, out)
    }

    fn is_separable(&self) -> bool {
        self.base.is_separable()
    }
}
