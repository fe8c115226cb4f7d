//! Reference computations that share no code with the library: brute-force
//! grid search, central differences and dense loops over `A`, `X`, `Y`.

/// Minimum of `h` over a grid of step `step` on `[lo, hi]`, refined once on a
/// grid 10⁴ times finer around the coarse winner. Returns `(x, h(x))`.
pub fn grid_min(h: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> (f64, f64) {
    let scan = |lo: f64, hi: f64, step: f64| {
        let count = ((hi - lo) / step).round() as usize;
        (0..=count).map(|i| lo + i as f64 * step).map(|x| (x, h(x))).fold((f64::NAN, f64::INFINITY), |best, cur| {
            if cur.1 < best.1 {
                cur
            } else {
                best
            }
        })
    };
    let (x, _) = scan(lo, hi, step);
    let fine = step * 1e-4;
    scan(x - step, x + step, fine)
}

/// `λ|x| − λx²/(2κ)` on `|x| ≤ κ`, constant `λκ/2` beyond.
pub fn mcp(x: f64, lambda: f64, kappa: f64) -> f64 {
    if x.abs() <= kappa {
        lambda * x.abs() - lambda * x * x / (2.0 * kappa)
    } else {
        lambda * kappa / 2.0
    }
}

/// Scalar regularizers checked against their proximal maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarPenalty {
    Zero,
    L1 { lambda: f64 },
    Firm { lambda: f64, kappa: f64 },
    FirmQuadratic { lambda: f64, kappa: f64, mu: f64 },
}

impl ScalarPenalty {
    pub fn name(&self) -> &'static str {
        match self {
            ScalarPenalty::Zero => "zero",
            ScalarPenalty::L1 { .. } => "l1",
            ScalarPenalty::Firm { .. } => "firm",
            ScalarPenalty::FirmQuadratic { .. } => "firm+quadratic",
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            ScalarPenalty::Zero => 0.0,
            ScalarPenalty::L1 { lambda } => lambda * x.abs(),
            ScalarPenalty::Firm { lambda, kappa } => mcp(x, lambda, kappa),
            ScalarPenalty::FirmQuadratic { lambda, kappa, mu } => mcp(x, lambda, kappa) + 0.5 * mu * x * x,
        }
    }

    /// `r(x) + (x − y)²/(2γ)`.
    pub fn prox_objective(&self, x: f64, y: f64, gamma: f64) -> f64 {
        self.value(x) + (x - y) * (x - y) / (2.0 * gamma)
    }
}

/// Central differences of `f` at `x` with step `h`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `½ Σ_{i,c} (A[i,c] − Σ_a X[a,i] Y[a,c])²` with `A` row-major and the
/// factors stored column by column (`X[a,i]` at `x[i·d + a]`).
pub fn dense_loss(a: &[f64], n: usize, d: usize, x: &[f64], y: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..n {
        for c in 0..n {
            let mut p = 0.0;
            for k in 0..d {
                p += x[i * d + k] * y[c * d + k];
            }
            let r = a[i * n + c] - p;
            total += r * r;
        }
    }
    0.5 * total
}

/// `‖a − b‖ / max(‖b‖, tiny)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(1e-300)
}

/// Total-variation distance between an empirical count vector and `probs`.
pub fn total_variation(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    0.5 * counts.iter().zip(probs).map(|(&c, &p)| (c as f64 / n as f64 - p).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_finds_parabola_vertex() {
        let (x, v) = grid_min(|x| (x - 1.234_567) * (x - 1.234_567), -10.0, 10.0, 1e-4);
        assert!((x - 1.234_567).abs() < 1e-8);
        assert!(v < 1e-15);
    }

    #[test]
    fn mcp_is_continuous_at_kappa() {
        let (l, k) = (0.7, 2.5);
        assert!((mcp(k - 1e-12, l, k) - mcp(k + 1e-12, l, k)).abs() < 1e-10);
        assert_eq!(mcp(0.0, l, k), 0.0);
    }

    #[test]
    fn differences_of_a_quadratic() {
        let g = central_difference(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, -1.0], 1e-5);
        assert!((g[0] - 4.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn dense_loss_of_exact_factorization_is_zero() {
        // A = XᵀY with d = 1
        let (x, y) = ([1.0, 2.0], [3.0, -1.0]);
        let a = [3.0, -1.0, 6.0, -2.0];
        assert_eq!(dense_loss(&a, 2, 1, &x, &y), 0.0);
        assert_eq!(dense_loss(&a, 2, 1, &[0.0, 0.0], &y), 0.5 * (9.0 + 1.0 + 36.0 + 4.0));
    }

    #[test]
    fn tv_of_exact_counts() {
        assert_eq!(total_variation(&[25, 75], &[0.25, 0.75]), 0.0);
        assert!((total_variation(&[50, 50], &[0.25, 0.75]) - 0.25).abs() < 1e-15);
    }
}
