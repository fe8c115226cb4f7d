//! Problem abstraction: `minimize f(x_1, ..., x_m) + Σ_j r_j(x_j)`.

use std::fmt::Debug;
use std::ops::Range;

use crate::block::{BlockLayout, BlockVector};
use crate::error::{param, Error, Result};

/// Lipschitz constants of the block partial gradients and of the full gradient.
///
/// Values are stored with the safety factor already applied.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzInfo {
    per_block: Vec<f64>,
    global: f64,
    safety: f64,
}

impl LipschitzInfo {
    pub fn new(per_block: Vec<f64>, global: f64) -> Result<Self> {
        Self::with_safety(per_block, global, 1.0)
    }

    /// `per_block` and `global` are raw estimates; every value is multiplied by `safety`.
    pub fn with_safety(per_block: Vec<f64>, global: f64, safety: f64) -> Result<Self> {
        if !(safety >= 1.0 && safety.is_finite()) {
            return Err(param(format!("Lipschitz safety factor must be >= 1, got {safety}")));
        }
        if per_block.is_empty() {
            return Err(param("Lipschitz info needs at least one block constant"));
        }
        if let Some((j, l)) = per_block.iter().enumerate().find(|(_, l)| !(**l > 0.0 && l.is_finite())) {
            return Err(param(format!("L_{j} must be positive and finite, got {l}")));
        }
        if !(global > 0.0 && global.is_finite()) {
            return Err(param(format!("global Lipschitz constant must be positive, got {global}")));
        }
        Ok(Self { per_block: per_block.into_iter().map(|l| l * safety).collect(), global: global * safety, safety })
    }

    /// Estimates that already include `safety`.
    pub fn scaled(per_block: Vec<f64>, global: f64, safety: f64) -> Result<Self> {
        let raw: Vec<f64> = per_block.iter().map(|l| l / safety).collect();
        let mut info = Self::with_safety(raw, global / safety, safety)?;
        info.per_block = per_block;
        info.global = global;
        Ok(info)
    }

    /// Same constant for every block and for the full gradient.
    pub fn uniform(m: usize, l: f64) -> Result<Self> {
        Self::new(vec![l; m], l)
    }

    pub fn block(&self, j: usize) -> f64 {
        self.per_block[j]
    }

    pub fn per_block(&self) -> &[f64] {
        &self.per_block
    }

    /// `L`, the constant bounding the full gradient.
    pub fn global(&self) -> f64 {
        self.global
    }

    pub fn safety(&self) -> f64 {
        self.safety
    }

    /// `L̲ = min_j L_j`.
    pub fn min_block(&self) -> f64 {
        self.per_block.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `L̄ = max_j L_j`.
    pub fn max_block(&self) -> f64 {
        self.per_block.iter().copied().fold(0.0, f64::max)
    }
}

/// The smooth part `f` of the objective.
///
/// Implementations must be callable concurrently from many workers, each
/// passing a snapshot it owns.
pub trait SmoothLoss: Send + Sync + Debug {
    fn layout(&self) -> &BlockLayout;

    fn value(&self, x: &BlockVector) -> f64;

    /// Writes `∇_j f(x)` into `out` (length `n_j`).
    fn partial_gradient_into(&self, j: usize, x: &BlockVector, out: &mut [f64]);

    /// Lipschitz constants valid around `x`. Losses with global constants ignore `x`.
    fn lipschitz(&self, x: &BlockVector) -> LipschitzInfo;

    /// Size of the coordinate groups block `j` is swept in by cyclic workers.
    /// Must divide `n_j`. The gradient of one group should not depend on the
    /// other groups of the same block for sweeps to be cheap.
    fn group_len(&self, j: usize) -> usize {
        self.layout().block_len(j)
    }

    /// Writes the entries of `∇_j f(x)` belonging to group `g` into `out`.
    fn group_gradient_into(&self, j: usize, g: usize, x: &BlockVector, out: &mut [f64]) {
        let mut full = vec![0.0; self.layout().block_len(j)];
        self.partial_gradient_into(j, x, &mut full);
        let len = self.group_len(j);
        out.copy_from_slice(&full[g * len..(g + 1) * len]);
    }

    /// Number of sample components `ξ` when `f = Σ_ξ f_ξ`; `None` if the loss
    /// has no stochastic oracle.
    fn sample_count(&self) -> Option<usize> {
        None
    }

    /// Unbiased estimate of `∇_j f(x)` from the sample indices in `batch`
    /// (drawn uniformly with replacement by the caller).
    fn stochastic_gradient_into(&self, _j: usize, _x: &BlockVector, _batch: &[usize], _out: &mut [f64]) -> Result<()> {
        Err(Error::Unsupported("this loss has no stochastic gradient oracle"))
    }

    fn stochastic_group_gradient_into(
        &self,
        j: usize,
        g: usize,
        x: &BlockVector,
        batch: &[usize],
        out: &mut [f64],
    ) -> Result<()> {
        let mut full = vec![0.0; self.layout().block_len(j)];
        self.stochastic_gradient_into(j, x, batch, &mut full)?;
        let len = self.group_len(j);
        out.copy_from_slice(&full[g * len..(g + 1) * len]);
        Ok(())
    }
}

/// A block regularizer `r_j` together with its selected proximal point.
///
/// `prox_into` must return a minimizer of `r_j(x) + ‖x − y‖²/(2γ)` and must be
/// a deterministic function of `(y, γ)`. When the minimizer is not unique the
/// selection prefers the candidate of smallest absolute value, then the
/// nonnegative one.
pub trait Regularizer: Send + Sync + Debug {
    /// `r_j(x)`; may be `f64::INFINITY`.
    fn value(&self, x: &[f64]) -> f64;

    fn prox_into(&self, y: &[f64], gamma: f64, out: &mut [f64]) -> Result<()>;

    /// Elementwise regularizers can be applied to any sub-slice of a block.
    fn is_separable(&self) -> bool {
        false
    }
}

/// `f` and the `m` regularizers.
#[derive(Debug)]
pub struct Problem {
    loss: Box<dyn SmoothLoss>,
    regs: Vec<Box<dyn Regularizer>>,
}

impl Problem {
    pub fn new(loss: Box<dyn SmoothLoss>, regs: Vec<Box<dyn Regularizer>>) -> Result<Self> {
        let m = loss.layout().blocks();
        if regs.len() != m {
            return Err(Error::Dimension { expected: m, found: regs.len() });
        }
        for j in 0..m {
            let (len, group) = (loss.layout().block_len(j), loss.group_len(j));
            if group == 0 || len % group != 0 {
                return Err(param(format!("group length {group} does not divide block {j} of length {len}")));
            }
        }
        Ok(Self { loss, regs })
    }

    pub fn layout(&self) -> &BlockLayout {
        self.loss.layout()
    }

    pub fn blocks(&self) -> usize {
        self.regs.len()
    }

    pub fn loss(&self) -> &dyn SmoothLoss {
        self.loss.as_ref()
    }

    pub fn regularizer(&self, j: usize) -> &dyn Regularizer {
        self.regs[j].as_ref()
    }

    /// `f(x) + Σ_j r_j(x_j)`; `+∞` when some `r_j(x_j)` is.
    pub fn objective(&self, x: &BlockVector) -> Result<f64> {
        x.conforms_to(self.layout())?;
        Ok(self.objective_unchecked(x))
    }

    pub(crate) fn objective_unchecked(&self, x: &BlockVector) -> f64 {
        let r: f64 = self.regs.iter().enumerate().map(|(j, r)| r.value(x.block(j))).sum();
        if r == f64::INFINITY {
            return f64::INFINITY;
        }
        self.loss.value(x) + r
    }

    /// `∇_j f(x)`.
    pub fn partial_gradient(&self, j: usize, x: &BlockVector) -> Result<Vec<f64>> {
        self.layout().check_block(j)?;
        x.conforms_to(self.layout())?;
        let mut out = vec![0.0; self.layout().block_len(j)];
        self.loss.partial_gradient_into(j, x, &mut out);
        Ok(out)
    }

    /// The fixed selection `ζ_j(y, γ)` from `prox_{γ r_j}(y)`.
    pub fn select_prox(&self, j: usize, y: &[f64], gamma: f64) -> Result<Vec<f64>> {
        self.layout().check_block(j)?;
        if y.len() != self.layout().block_len(j) {
            return Err(Error::Dimension { expected: self.layout().block_len(j), found: y.len() });
        }
        check_gamma(gamma)?;
        let mut out = vec![0.0; y.len()];
        self.regs[j].prox_into(y, gamma, &mut out)?;
        Ok(out)
    }

    /// Whether cyclic workers may sweep block `j` group by group.
    pub(crate) fn sweepable(&self, j: usize) -> bool {
        self.regs[j].is_separable() && self.loss.group_len(j) < self.layout().block_len(j)
    }
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(param(format!("prox parameter γ must be positive, got {gamma}")))
    }
}

/// `f(x) = ½‖x‖²`, with `L_j = L = 1`.
#[derive(Debug, Clone)]
pub struct HalfSquaredNorm {
    layout: BlockLayout,
}

impl HalfSquaredNorm {
    pub fn new(layout: BlockLayout) -> Self {
        Self { layout }
    }
}

impl SmoothLoss for HalfSquaredNorm {
    fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    fn value(&self, x: &BlockVector) -> f64 {
        0.5 * x.norm_sq()
    }

    fn partial_gradient_into(&self, j: usize, x: &BlockVector, out: &mut [f64]) {
        out.copy_from_slice(x.block(j));
    }

    fn lipschitz(&self, _x: &BlockVector) -> LipschitzInfo {
        LipschitzInfo::uniform(self.layout.blocks(), 1.0).expect("unit constants are valid")
    }

    fn group_len(&self, _j: usize) -> usize {
        1
    }
}

/// `f ≡ 0`. Its gradient vanishes; a unit Lipschitz constant keeps stepsizes finite.
#[derive(Debug, Clone)]
pub struct ZeroLoss {
    layout: BlockLayout,
}

impl ZeroLoss {
    pub fn new(layout: BlockLayout) -> Self {
        Self { layout }
    }
}

impl SmoothLoss for ZeroLoss {
    fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    fn value(&self, _x: &BlockVector) -> f64 {
        0.0
    }

    fn partial_gradient_into(&self, _j: usize, _x: &BlockVector, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn lipschitz(&self, _x: &BlockVector) -> LipschitzInfo {
        LipschitzInfo::uniform(self.layout.blocks(), 1.0).expect("unit constants are valid")
    }
}

/// Range of group `g` inside block `j`, in block-local coordinates.
pub(crate) fn group_range(loss: &dyn SmoothLoss, j: usize, g: usize) -> Range<usize> {
    let len = loss.group_len(j);
    g * len..(g + 1) * len
}
