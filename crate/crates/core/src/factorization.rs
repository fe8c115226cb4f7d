//! Matrix-factorization test problems
//!
//! ```text
//! sparse PCA:  ½‖A − XᵀY‖²_F + λ‖X‖₁ + λ‖Y‖₁
//! firm PCA:    ½‖A − XᵀY‖²_F + λ(‖X‖_Firm + ‖Y‖_Firm) + (μ/2)(‖X‖²_F + ‖Y‖²_F)
//! ```
//!
//! with `X, Y ∈ R^{d×n}` as the two coordinate blocks. Factors are stored
//! column-major (`X[:, i]` is contiguous) so that one column is one coordinate
//! group for cyclic sweeps.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::block::{BlockLayout, BlockVector};
use crate::error::{param, Error, Result};
use crate::linalg::{dot, gram_of_columns, top_eigenvalue_psd};
use crate::model::{LipschitzInfo, Problem, Regularizer, SmoothLoss};
use crate::prox::{Firm, ProxParams, WithQuadratic, L1};
use crate::rng::{tagged_rng, INIT_STREAM};

/// Floor applied to every Lipschitz estimate.
pub const LIPSCHITZ_FLOOR: f64 = 1e-8;
/// Default safety factor `ρ_L`.
pub const DEFAULT_SAFETY: f64 = 1.1;
const POWER_ITERATIONS: usize = 100;
const POWER_TOL: f64 = 1e-8;

const MAGIC: &[u8; 4] = b"SPLM";
const FORMAT_VERSION: u32 = 1;

/// The data matrix `A ∈ R^{n×n}`, iid standard normal.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationData {
    n: usize,
    seed: u64,
    a: Vec<f64>,
    at: Vec<f64>,
}

impl FactorizationData {
    pub fn from_row_major(n: usize, seed: u64, a: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(param("n must be at least 1"));
        }
        if a.len() != n * n {
            return Err(Error::Dimension { expected: n * n, found: a.len() });
        }
        let mut at = vec![0.0; n * n];
        for i in 0..n {
            for c in 0..n {
                at[c * n + i] = a[i * n + c];
            }
        }
        Ok(Self { n, seed, a, at })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Row-major entries of `A`.
    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn entry(&self, i: usize, c: usize) -> f64 {
        self.a[i * self.n + c]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    fn col(&self, c: usize) -> &[f64] {
        &self.at[c * self.n..(c + 1) * self.n]
    }

    /// `‖A‖²_F`.
    pub fn frobenius_sq(&self) -> f64 {
        self.a.iter().map(|v| v * v).sum()
    }

    /// Writes `A` as: `SPLM`, version (u32), n (u64), seed (u64), then `n²`
    /// row-major f64 values, all little-endian.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for v in &self.a {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}")));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        r.read_exact(&mut b8)?;
        let n = usize::try_from(u64::from_le_bytes(b8)).map_err(|_| Error::Format("n overflows".into()))?;
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        let count = n.checked_mul(n).ok_or_else(|| Error::Format("n² overflows".into()))?;
        let mut a = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut b8).map_err(|_| Error::Format("truncated payload".into()))?;
            a.push(f64::from_le_bytes(b8));
        }
        if r.read(&mut b8)? != 0 {
            return Err(Error::Format("trailing bytes after payload".into()));
        }
        Self::from_row_major(n, seed, a)
    }
}

/// Draws `A` with a ChaCha8 stream seeded by `seed`, entries in row-major order.
pub fn generate_data(n: usize, seed: u64) -> Result<FactorizationData> {
    if n == 0 {
        return Err(param("n must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = (0..n * n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    FactorizationData::from_row_major(n, seed, a)
}

/// Which factor a block refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    X = 0,
    Y = 1,
}

/// The pair `(X, Y)`, both `d×n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizationState {
    d: usize,
    n: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl FactorizationState {
    pub fn zeros(d: usize, n: usize) -> Self {
        Self { d, n, x: vec![0.0; d * n], y: vec![0.0; d * n] }
    }

    /// Entries iid `N(0, 1/√d)` (variance `1/√d`, so `XᵀY` has unit-variance entries).
    pub fn random(d: usize, n: usize, seed: u64) -> Self {
        let mut rng = tagged_rng(seed, INIT_STREAM);
        let sd = (d as f64).powf(-0.25);
        let mut draw = |_| sd * rng.sample::<f64, _>(StandardNormal);
        let x = (0..d * n).map(&mut draw).collect();
        let y = (0..d * n).map(&mut draw).collect();
        Self { d, n, x, y }
    }

    /// Builds a state from row-major `d×n` matrices.
    pub fn from_rows(d: usize, n: usize, x_rows: &[f64], y_rows: &[f64]) -> Result<Self> {
        for m in [x_rows, y_rows] {
            if m.len() != d * n {
                return Err(Error::Dimension { expected: d * n, found: m.len() });
            }
        }
        let mut s = Self::zeros(d, n);
        for a in 0..d {
            for i in 0..n {
                s.x[i * d + a] = x_rows[a * n + i];
                s.y[i * d + a] = y_rows[a * n + i];
            }
        }
        Ok(s)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `X[a, i]`.
    pub fn x(&self, a: usize, i: usize) -> f64 {
        self.x[i * self.d + a]
    }

    /// `Y[a, i]`.
    pub fn y(&self, a: usize, i: usize) -> f64 {
        self.y[i * self.d + a]
    }

    pub fn x_mut(&mut self, a: usize, i: usize) -> &mut f64 {
        &mut self.x[i * self.d + a]
    }

    pub fn y_mut(&mut self, a: usize, i: usize) -> &mut f64 {
        &mut self.y[i * self.d + a]
    }

    pub fn factor(&self, f: Factor) -> &[f64] {
        match f {
            Factor::X => &self.x,
            Factor::Y => &self.y,
        }
    }

    pub fn layout(&self) -> BlockLayout {
        BlockLayout::new(&[self.d * self.n, self.d * self.n]).expect("non-empty factors")
    }

    pub fn to_blocks(&self) -> BlockVector {
        BlockVector::from_blocks(vec![self.x.clone(), self.y.clone()]).expect("two equal blocks")
    }

    pub fn from_blocks(d: usize, n: usize, v: &BlockVector) -> Result<Self> {
        v.conforms_to(&Self::zeros(d, n).layout())?;
        Ok(Self { d, n, x: v.block(0).to_vec(), y: v.block(1).to_vec() })
    }
}

/// `½‖A − XᵀY‖²_F` on the two-block iterate.
#[derive(Debug, Clone)]
pub struct FactorizationLoss {
    data: Arc<FactorizationData>,
    d: usize,
    safety: f64,
    layout: BlockLayout,
}

impl FactorizationLoss {
    pub fn new(data: Arc<FactorizationData>, d: usize, safety: f64) -> Result<Self> {
        if d == 0 {
            return Err(param("rank d must be at least 1"));
        }
        if safety.is_nan() || safety < 1.0 {
            return Err(param(format!("Lipschitz safety factor must be >= 1, got {safety}")));
        }
        let layout = BlockLayout::new(&[d * data.n(), d * data.n()])?;
        Ok(Self { data, d, safety, layout })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &FactorizationData {
        &self.data
    }

    fn cols<'a>(&self, x: &'a BlockVector, f: Factor) -> &'a [f64] {
        x.block(f as usize)
    }

    /// Column `i` of `∇_X f`: `−Σ_c R[i,c]·y_c`.
    fn grad_x_col(&self, xs: &[f64], ys: &[f64], i: usize, out: &mut [f64]) {
        let d = self.d;
        let xi = &xs[i * d..(i + 1) * d];
        out.fill(0.0);
        for (c, &a) in self.data.row(i).iter().enumerate() {
            let yc = &ys[c * d..(c + 1) * d];
            let r = a - dot(xi, yc);
            for (o, y) in out.iter_mut().zip(yc) {
                *o -= r * y;
            }
        }
    }

    /// Column `c` of `∇_Y f`: `−Σ_i R[i,c]·x_i`.
    fn grad_y_col(&self, xs: &[f64], ys: &[f64], c: usize, out: &mut [f64]) {
        let d = self.d;
        let yc = &ys[c * d..(c + 1) * d];
        out.fill(0.0);
        for (i, &a) in self.data.col(c).iter().enumerate() {
            let xi = &xs[i * d..(i + 1) * d];
            let r = a - dot(xi, yc);
            for (o, x) in out.iter_mut().zip(xi) {
                *o -= r * x;
            }
        }
    }

    /// Unscaled Lipschitz estimate `‖ZZᵀ‖₂` for the block that `Z` multiplies.
    pub fn raw_lipschitz(&self, other: &[f64]) -> f64 {
        let g = gram_of_columns(other, self.d);
        top_eigenvalue_psd(&g, self.d, POWER_ITERATIONS, POWER_TOL)
    }

    /// `max(ρ_L·‖ZZᵀ‖₂, ε_L)` where `Z` is the factor held fixed.
    pub fn block_lipschitz(&self, x: &BlockVector, f: Factor) -> f64 {
        let other = match f {
            Factor::X => self.cols(x, Factor::Y),
            Factor::Y => self.cols(x, Factor::X),
        };
        (self.safety * self.raw_lipschitz(other)).max(LIPSCHITZ_FLOOR)
    }
}

impl SmoothLoss for FactorizationLoss {
    fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    fn value(&self, x: &BlockVector) -> f64 {
        let d = self.d;
        let (xs, ys) = (self.cols(x, Factor::X), self.cols(x, Factor::Y));
        let mut total = 0.0;
        for i in 0..self.data.n() {
            let xi = &xs[i * d..(i + 1) * d];
            let row = self.data.row(i);
            let mut acc = 0.0;
            for (c, &a) in row.iter().enumerate() {
                let r = a - dot(xi, &ys[c * d..(c + 1) * d]);
                acc += r * r;
            }
            total += acc;
        }
        0.5 * total
    }

    fn partial_gradient_into(&self, j: usize, x: &BlockVector, out: &mut [f64]) {
        let d = self.d;
        let (xs, ys) = (self.cols(x, Factor::X), self.cols(x, Factor::Y));
        for (col, o) in out.chunks_exact_mut(d).enumerate() {
            if j == 0 {
                self.grad_x_col(xs, ys, col, o);
            } else {
                self.grad_y_col(xs, ys, col, o);
            }
        }
    }

    fn lipschitz(&self, x: &BlockVector) -> LipschitzInfo {
        let lx = self.block_lipschitz(x, Factor::X);
        let ly = self.block_lipschitz(x, Factor::Y);
        LipschitzInfo::scaled(vec![lx, ly], lx.max(ly), self.safety).expect("floored estimates are positive")
    }

    fn group_len(&self, _j: usize) -> usize {
        self.d
    }

    fn group_gradient_into(&self, j: usize, g: usize, x: &BlockVector, out: &mut [f64]) {
        let (xs, ys) = (self.cols(x, Factor::X), self.cols(x, Factor::Y));
        if j == 0 {
            self.grad_x_col(xs, ys, g, out);
        } else {
            self.grad_y_col(xs, ys, g, out);
        }
    }

    fn sample_count(&self) -> Option<usize> {
        Some(self.data.n())
    }

    /// Samples are columns `c` of `A`: `f = Σ_c ½‖A[:,c] − Xᵀy_c‖²`, scaled by `n/|batch|`.
    fn stochastic_gradient_into(&self, j: usize, x: &BlockVector, batch: &[usize], out: &mut [f64]) -> Result<()> {
        check_batch(batch, self.data.n())?;
        let d = self.d;
        let n = self.data.n();
        let (xs, ys) = (self.cols(x, Factor::X), self.cols(x, Factor::Y));
        let scale = n as f64 / batch.len() as f64;
        out.fill(0.0);
        let mut resid = vec![0.0; n];
        for &c in batch {
            let yc = &ys[c * d..(c + 1) * d];
            for (i, (r, &a)) in resid.iter_mut().zip(self.data.col(c)).enumerate() {
                *r = a - dot(&xs[i * d..(i + 1) * d], yc);
            }
            if j == 0 {
                for (i, o) in out.chunks_exact_mut(d).enumerate() {
                    let s = scale * resid[i];
                    for (o, y) in o.iter_mut().zip(yc) {
                        *o -= s * y;
                    }
                }
            } else {
                let o = &mut out[c * d..(c + 1) * d];
                for (i, &r) in resid.iter().enumerate() {
                    let s = scale * r;
                    for (o, x) in o.iter_mut().zip(&xs[i * d..(i + 1) * d]) {
                        *o -= s * x;
                    }
                }
            }
        }
        Ok(())
    }

    fn stochastic_group_gradient_into(
        &self,
        j: usize,
        g: usize,
        x: &BlockVector,
        batch: &[usize],
        out: &mut [f64],
    ) -> Result<()> {
        check_batch(batch, self.data.n())?;
        let d = self.d;
        let (xs, ys) = (self.cols(x, Factor::X), self.cols(x, Factor::Y));
        let scale = self.data.n() as f64 / batch.len() as f64;
        out.fill(0.0);
        if j == 0 {
            let xi = &xs[g * d..(g + 1) * d];
            for &c in batch {
                let yc = &ys[c * d..(c + 1) * d];
                let s = scale * (self.data.entry(g, c) - dot(xi, yc));
                for (o, y) in out.iter_mut().zip(yc) {
                    *o -= s * y;
                }
            }
        } else {
            let hits = batch.iter().filter(|&&c| c == g).count();
            if hits > 0 {
                self.grad_y_col(xs, ys, g, out);
                let s = scale * hits as f64;
                out.iter_mut().for_each(|o| *o *= s);
            }
        }
        Ok(())
    }
}

fn check_batch(batch: &[usize], n: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(param("minibatch must be nonempty"));
    }
    if let Some(&c) = batch.iter().find(|&&c| c >= n) {
        return Err(param(format!("minibatch index {c} out of range for n = {n}")));
    }
    Ok(())
}

/// Sparse-PCA objective.
pub fn spca_value(data: &Arc<FactorizationData>, state: &FactorizationState, lambda: f64) -> Result<f64> {
    check_state(data, state)?;
    let p = spca_instance(data.clone(), state.d(), lambda, 1.0)?;
    p.objective(&state.to_blocks())
}

/// `∇_X f = −Y·Rᵀ` or `∇_Y f = −X·R`, with `R = A − XᵀY`, as a column-major `d×n` block.
pub fn spca_partial_grad(data: &Arc<FactorizationData>, state: &FactorizationState, block: Factor) -> Result<Vec<f64>> {
    check_state(data, state)?;
    let loss = FactorizationLoss::new(data.clone(), state.d(), 1.0)?;
    let mut out = vec![0.0; state.d() * state.n()];
    loss.partial_gradient_into(block as usize, &state.to_blocks(), &mut out);
    Ok(out)
}

/// `ρ_L·‖YYᵀ‖₂` for block X, `ρ_L·‖XXᵀ‖₂` for block Y, floored at `ε_L`.
pub fn estimate_lipschitz(state: &FactorizationState, block: Factor, safety: f64) -> f64 {
    let other = match block {
        Factor::X => &state.y,
        Factor::Y => &state.x,
    };
    let g = gram_of_columns(other, state.d());
    (safety * top_eigenvalue_psd(&g, state.d(), POWER_ITERATIONS, POWER_TOL)).max(LIPSCHITZ_FLOOR)
}

/// Minibatch estimate of the block gradient from the columns listed in `batch`.
pub fn minibatch_gradient(
    data: &Arc<FactorizationData>,
    state: &FactorizationState,
    block: Factor,
    batch: &[usize],
) -> Result<Vec<f64>> {
    check_state(data, state)?;
    let loss = FactorizationLoss::new(data.clone(), state.d(), 1.0)?;
    let mut out = vec![0.0; state.d() * state.n()];
    loss.stochastic_gradient_into(block as usize, &state.to_blocks(), batch, &mut out)?;
    Ok(out)
}

/// `batch` indices drawn uniformly with replacement from `0..n`.
pub fn sample_batch<R: Rng + ?Sized>(n: usize, size: usize, rng: &mut R) -> Vec<usize> {
    (0..size).map(|_| rng.random_range(0..n)).collect()
}

fn check_state(data: &FactorizationData, state: &FactorizationState) -> Result<()> {
    if state.n() != data.n() {
        return Err(Error::Dimension { expected: data.n(), found: state.n() });
    }
    Ok(())
}

/// Sparse PCA with `λ‖·‖₁` on both factors.
pub fn spca_instance(data: Arc<FactorizationData>, d: usize, lambda: f64, safety: f64) -> Result<Problem> {
    let loss = FactorizationLoss::new(data, d, safety)?;
    let regs: Vec<Box<dyn Regularizer>> = vec![Box::new(L1::new(lambda)?), Box::new(L1::new(lambda)?)];
    Problem::new(Box::new(loss), regs)
}

/// Firm-thresholding PCA; the `μ` term is folded into the regularizer's prox.
pub fn firm_pca_instance(data: Arc<FactorizationData>, d: usize, params: ProxParams, safety: f64) -> Result<Problem> {
    params.validate(true)?;
    let loss = FactorizationLoss::new(data, d, safety)?;
    let reg = || -> Result<Box<dyn Regularizer>> {
        Ok(Box::new(WithQuadratic::new(Firm::new(params.lambda, params.kappa)?, params.mu)?))
    };
    Problem::new(Box::new(loss), vec![reg()?, reg()?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::{firm_penalty, prox_firm};
    use crate::rng::worker_rng;

    fn data(n: usize, seed: u64) -> Arc<FactorizationData> {
        Arc::new(generate_data(n, seed).unwrap())
    }

    /// Element-by-element dense evaluation of `½‖A − XᵀY‖² + Σ penalty`.
    fn dense_objective(data: &FactorizationData, s: &FactorizationState, pen: impl Fn(f64) -> f64) -> f64 {
        let (d, n) = (s.d(), s.n());
        let mut fit = 0.0;
        for i in 0..n {
            for c in 0..n {
                let mut xty = 0.0;
                for a in 0..d {
                    xty += s.x(a, i) * s.y(a, c);
                }
                let r = data.entry(i, c) - xty;
                fit += 0.5 * r * r;
            }
        }
        let mut reg = 0.0;
        for a in 0..d {
            for i in 0..n {
                reg += pen(s.x(a, i)) + pen(s.y(a, i));
            }
        }
        fit + reg
    }

    fn fd_gradient(p: &Problem, x: &BlockVector, j: usize) -> Vec<f64> {
        let h = 1e-6;
        let range = p.layout().range(j);
        range
            .map(|idx| {
                let mut plus = x.clone();
                plus.as_mut_slice()[idx] += h;
                let mut minus = x.clone();
                minus.as_mut_slice()[idx] -= h;
                (p.loss().value(&plus) - p.loss().value(&minus)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12);
        diff / scale
    }

    #[test]
    fn data_is_reproducible() {
        let a = generate_data(30, 9).unwrap();
        let b = generate_data(30, 9).unwrap();
        assert_eq!(
            a.a().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.a().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_ne!(a.a(), generate_data(30, 10).unwrap().a());
        let one = generate_data(1, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(one.a()[0], rng.sample::<f64, _>(StandardNormal));
        assert!(generate_data(0, 1).is_err());
    }

    #[test]
    fn data_moments() {
        let a = generate_data(2000, 1).unwrap();
        let n2 = (2000 * 2000) as f64;
        let mean = a.a().iter().sum::<f64>() / n2;
        let var = a.a().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n2;
        assert!(mean.abs() < 4.0 / n2.sqrt(), "mean {mean}");
        // sd of the sample variance of N(0,1) is sqrt(2/N)
        assert!((var - 1.0).abs() < 4.0 * (2.0 / n2).sqrt(), "var {var}");
    }

    #[test]
    fn objective_special_cases() {
        let zero = Arc::new(FactorizationData::from_row_major(3, 0, vec![0.0; 9]).unwrap());
        let s = FactorizationState::zeros(2, 3);
        assert_eq!(spca_value(&zero, &s, 1.0).unwrap(), 0.0);

        let eye = Arc::new(FactorizationData::from_row_major(2, 0, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        assert_eq!(spca_value(&eye, &FactorizationState::zeros(1, 2), 0.5).unwrap(), 1.0);

        let d = data(4, 2);
        assert!(
            (spca_value(&d, &FactorizationState::zeros(2, 4), 0.3).unwrap() - 0.5 * d.frobenius_sq()).abs() < 1e-12
        );

        // X = I, Y = A reproduces A exactly.
        let n = 4;
        let mut eye_rows = vec![0.0; n * n];
        (0..n).for_each(|i| eye_rows[i * n + i] = 1.0);
        let s = FactorizationState::from_rows(n, n, &eye_rows, d.a()).unwrap();
        assert_eq!(spca_value(&d, &s, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn objective_matches_dense_recomputation() {
        let d = data(5, 3);
        let s = FactorizationState::random(2, 5, 8);
        let lambda = 0.7;
        let want = dense_objective(&d, &s, |v| lambda * v.abs());
        let got = spca_value(&d, &s, lambda).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.abs());

        let params = ProxParams { lambda: 0.4, kappa: 1.5, mu: 0.2 };
        let p = firm_pca_instance(d.clone(), 2, params, 1.0).unwrap();
        let want = dense_objective(&d, &s, |v| firm_penalty(v, 0.4, 1.5) + 0.1 * v * v);
        let got = p.objective(&s.to_blocks()).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.abs());
    }

    #[test]
    fn gradient_special_cases() {
        let d = data(6, 1);
        let zero = FactorizationState::zeros(2, 6);
        assert!(spca_partial_grad(&d, &zero, Factor::X).unwrap().iter().all(|v| *v == 0.0));
        assert!(spca_partial_grad(&d, &zero, Factor::Y).unwrap().iter().all(|v| *v == 0.0));
        let mut s = FactorizationState::random(2, 6, 3);
        s.y.fill(0.0);
        assert!(spca_partial_grad(&d, &s, Factor::X).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_at_zero_x_is_minus_y_at() {
        let d = data(5, 6);
        let mut s = FactorizationState::random(2, 5, 1);
        s.x.fill(0.0);
        let g = spca_partial_grad(&d, &s, Factor::X).unwrap();
        for a in 0..2 {
            for i in 0..5 {
                let want: f64 = -(0..5).map(|c| s.y(a, c) * d.entry(i, c)).sum::<f64>();
                assert!((g[i * 2 + a] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..20u64 {
            let n = 4 + (seed as usize % 17);
            let dd = 1 + (seed as usize % 3);
            let p = spca_instance(data(n, seed), dd, 0.5, 1.0).unwrap();
            let x = FactorizationState::random(dd, n, seed + 100).to_blocks();
            for j in 0..2 {
                let g = p.partial_gradient(j, &x).unwrap();
                let fd = fd_gradient(&p, &x, j);
                assert!(rel_err(&g, &fd) < 1e-5, "seed {seed} block {j}: {}", rel_err(&g, &fd));
            }
        }
    }

    #[test]
    fn group_gradients_are_columns() {
        let p = spca_instance(data(7, 1), 3, 0.1, 1.0).unwrap();
        let x = FactorizationState::random(3, 7, 2).to_blocks();
        for j in 0..2 {
            let full = p.partial_gradient(j, &x).unwrap();
            let mut col = vec![0.0; 3];
            for g in 0..7 {
                p.loss().group_gradient_into(j, g, &x, &mut col);
                assert_eq!(&full[g * 3..g * 3 + 3], col.as_slice());
            }
        }
    }

    #[test]
    fn lipschitz_examples() {
        let s = FactorizationState::zeros(3, 5);
        assert_eq!(estimate_lipschitz(&s, Factor::X, 1.1), LIPSCHITZ_FLOOR);
        // Y with a single nonzero row of norm 2: YYᵀ = diag(0, 4, 0).
        let mut s = FactorizationState::zeros(3, 4);
        *s.y_mut(1, 0) = 2.0f64.sqrt();
        *s.y_mut(1, 2) = 2.0f64.sqrt();
        let l = estimate_lipschitz(&s, Factor::X, 1.0);
        assert!((l - 4.0).abs() < 1e-12, "{l}");
        assert!((estimate_lipschitz(&s, Factor::X, 1.1) - 4.4).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_matches_dense_eigensolver() {
        for seed in 0..10 {
            let s = FactorizationState::random(3, 10, seed);
            let y = nalgebra::DMatrix::from_fn(3, 10, |a, i| s.y(a, i));
            let gram = &y * y.transpose();
            let top = nalgebra::SymmetricEigen::new(gram).eigenvalues.max();
            let got = estimate_lipschitz(&s, Factor::X, 1.0);
            assert!((got - top).abs() < 1e-6, "seed {seed}: {got} vs {top}");
        }
    }

    #[test]
    fn lipschitz_bound_holds() {
        let d = data(12, 5);
        let loss = FactorizationLoss::new(d.clone(), 3, 1.0).unwrap();
        let mut rng = worker_rng(3, 0);
        let base = FactorizationState::random(3, 12, 77).to_blocks();
        let lx = loss.block_lipschitz(&base, Factor::X);
        for _ in 0..100 {
            let mut a = base.clone();
            let mut b = base.clone();
            for v in a.block_mut(0) {
                *v = rng.sample::<f64, _>(StandardNormal);
            }
            for v in b.block_mut(0) {
                *v = rng.sample::<f64, _>(StandardNormal);
            }
            let mut ga = vec![0.0; 36];
            let mut gb = vec![0.0; 36];
            loss.partial_gradient_into(0, &a, &mut ga);
            loss.partial_gradient_into(0, &b, &mut gb);
            let lhs = ga.iter().zip(&gb).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            let rhs = lx * a.dist_sq(&b).sqrt();
            assert!(lhs <= rhs * (1.0 + 1e-9), "{lhs} > {rhs}");
        }
    }

    #[test]
    fn full_batch_equals_gradient() {
        let d = data(9, 4);
        let s = FactorizationState::random(2, 9, 5);
        let all: Vec<usize> = (0..9).collect();
        for f in [Factor::X, Factor::Y] {
            let g = spca_partial_grad(&d, &s, f).unwrap();
            let mb = minibatch_gradient(&d, &s, f, &all).unwrap();
            assert!(rel_err(&mb, &g) < 1e-12);
        }
    }

    #[test]
    fn singleton_batches_average_to_gradient() {
        let n = 11;
        let d = data(n, 4);
        let s = FactorizationState::random(3, n, 5);
        for f in [Factor::X, Factor::Y] {
            let g = spca_partial_grad(&d, &s, f).unwrap();
            let mut avg = vec![0.0; g.len()];
            for c in 0..n {
                let mb = minibatch_gradient(&d, &s, f, &[c]).unwrap();
                avg.iter_mut().zip(&mb).for_each(|(a, m)| *a += m / n as f64);
            }
            let err = avg.iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10, "{err}");
        }
    }

    #[test]
    fn stochastic_group_gradients_match_full_estimator() {
        let d = data(8, 2);
        let loss = FactorizationLoss::new(d, 2, 1.0).unwrap();
        let x = FactorizationState::random(2, 8, 3).to_blocks();
        let batch = [3, 0, 3, 7, 5];
        for j in 0..2 {
            let mut full = vec![0.0; 16];
            loss.stochastic_gradient_into(j, &x, &batch, &mut full).unwrap();
            let mut col = vec![0.0; 2];
            for g in 0..8 {
                loss.stochastic_group_gradient_into(j, g, &x, &batch, &mut col).unwrap();
                for (a, b) in col.iter().zip(&full[g * 2..g * 2 + 2]) {
                    assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
                }
            }
        }
    }

    #[test]
    fn minibatch_rejects_bad_batches() {
        let d = data(4, 1);
        let s = FactorizationState::zeros(1, 4);
        assert!(minibatch_gradient(&d, &s, Factor::X, &[]).is_err());
        assert!(minibatch_gradient(&d, &s, Factor::X, &[4]).is_err());
    }

    #[test]
    fn firm_instance_reductions() {
        let d = data(6, 3);
        let s = FactorizationState::random(2, 6, 1);
        let plain = firm_pca_instance(d.clone(), 2, ProxParams { lambda: 0.0, kappa: 3.0, mu: 0.0 }, 1.0).unwrap();
        let loss = FactorizationLoss::new(d.clone(), 2, 1.0).unwrap();
        assert_eq!(plain.objective(&s.to_blocks()).unwrap(), loss.value(&s.to_blocks()));

        let p = firm_pca_instance(d, 2, ProxParams { lambda: 0.5, kappa: 2.0, mu: 0.0 }, 1.0).unwrap();
        let y: Vec<f64> = (0..12).map(|i| -3.0 + 0.5 * i as f64).collect();
        assert_eq!(p.select_prox(0, &y, 0.8).unwrap(), prox_firm(&y, 0.8, 0.5, 2.0).unwrap());
        assert!(firm_pca_instance(
            Arc::new(generate_data(2, 0).unwrap()),
            1,
            ProxParams { lambda: 1.0, kappa: 0.5, mu: 0.0 },
            1.0
        )
        .is_err());
    }

    #[test]
    fn data_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.splm");
        let d = generate_data(7, 42).unwrap();
        d.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"SPLM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 7);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 42);
        assert_eq!(bytes.len(), 24 + 8 * 49);
        assert_eq!(FactorizationData::load(&path).unwrap(), d);

        std::fs::write(&path, &bytes[..100]).unwrap();
        assert!(matches!(FactorizationData::load(&path), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(FactorizationData::load(&path), Err(Error::Format(_))));
    }
}
