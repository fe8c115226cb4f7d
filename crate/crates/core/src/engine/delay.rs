use crate::rng::splitmix64;

/// Per-iteration, per-block read delays `d_{k,j} ∈ {0, …, τ}` replayed by the
/// simulated-asynchronous engine. Reads before iteration 0 resolve to `x⁰`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelaySchedule {
    Zero,
    /// `d_{k,j} = delay` for every block.
    Constant {
        delay: usize,
    },
    /// `d_{k,j}` iid uniform on `{0, …, τ}`, a pure function of `(seed, k, j)`.
    IidUniform {
        tau: usize,
        seed: u64,
    },
    /// Block `block` is always `τ` stale; the others are fresh.
    LaggedBlock {
        tau: usize,
        block: usize,
    },
}

impl DelaySchedule {
    pub fn tau(&self) -> usize {
        match *self {
            DelaySchedule::Zero => 0,
            DelaySchedule::Constant { delay } => delay,
            DelaySchedule::IidUniform { tau, .. } | DelaySchedule::LaggedBlock { tau, .. } => tau,
        }
    }

    /// The scheduled delay, before clamping to `k`.
    pub fn delay(&self, k: u64, j: usize) -> usize {
        match *self {
            DelaySchedule::Zero => 0,
            DelaySchedule::Constant { delay } => delay,
            DelaySchedule::IidUniform { tau, seed } => {
                let h = splitmix64(seed ^ splitmix64(k).wrapping_add(j as u64));
                (h % (tau as u64 + 1)) as usize
            }
            DelaySchedule::LaggedBlock { tau, block } => {
                if j == block {
                    tau
                } else {
                    0
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DelaySchedule::Zero => "zero",
            DelaySchedule::Constant { .. } => "constant",
            DelaySchedule::IidUniform { .. } => "iid",
            DelaySchedule::LaggedBlock { .. } => "lagged",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shapes() {
        assert_eq!(DelaySchedule::Constant { delay: 3 }.delay(10, 1), 3);
        let lag = DelaySchedule::LaggedBlock { tau: 4, block: 1 };
        assert_eq!((lag.delay(7, 0), lag.delay(7, 1)), (0, 4));
        assert_eq!(DelaySchedule::Zero.tau(), 0);
    }

    #[test]
    fn iid_covers_range() {
        let s = DelaySchedule::IidUniform { tau: 5, seed: 9 };
        let mut seen = [0u32; 6];
        for k in 0..6000 {
            seen[s.delay(k, (k % 2) as usize)] += 1;
        }
        assert!(seen.iter().all(|&c| (800..1200).contains(&c)), "{seen:?}");
    }

    proptest! {
        #[test]
        fn bounded_and_pure(tau in 0usize..20, seed: u64, k: u64, j in 0usize..8) {
            let s = DelaySchedule::IidUniform { tau, seed };
            prop_assert!(s.delay(k, j) <= tau);
            prop_assert_eq!(s.delay(k, j), s.delay(k, j));
        }
    }
}
