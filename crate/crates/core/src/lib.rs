//! Stochastic asynchronous proximal alternating linearized minimization.
//!
//! Minimizes `f(x) + Σ_j r_j(x_j)` over a vector split into `m` blocks, where
//! `f` is smooth with block-Lipschitz partial gradients and each `r_j` has a
//! computable proximal map. Updates one block at a time from a possibly stale
//! read of the iterate with a noisy gradient:
//!
//! ```text
//! x_j ← prox_{γ_j^k r_j}(x_j − γ_j^k (∇_j f(x^{k−d_k}) + ν_j^k))
//! γ_j^k = 1 / (a c_k (L_j + 2Lτ/√m))
//! ```
//!
//! ```
//! use std::sync::Arc;
//! use sapalm::{generate_data, spca_instance, FactorizationState, RunConfig, run};
//!
//! let data = Arc::new(generate_data(30, 7).unwrap());
//! let problem = spca_instance(data, 3, 0.5, 1.1).unwrap();
//! let x0 = FactorizationState::random(3, 30, 7).to_blocks();
//! let out = run(&problem, &x0, &RunConfig { iterations: 40, ..RunConfig::default() }).unwrap();
//! let trace = &out.trace;
//! assert!(trace.last().unwrap().objective <= trace.checkpoints[0].objective);
//! ```

/// Crate version, recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod block;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod factorization;
pub mod linalg;
pub mod model;
pub mod prox;
pub mod rng;
pub mod schedule;

pub use block::{BlockLayout, BlockVector};
pub use diagnostics::{
    lyapunov, min_envelope, pt_weights, rate_slope, sample_pt, stationarity, stationarity_with, DelayStats,
    LyapunovState, StationaritySurrogate,
};
pub use engine::{
    run, run_async, run_sim_async, run_sync, sapalm_step, Checkpoint, DelaySchedule, IterateRecord, Mode, RunConfig,
    RunFailure, RunOutput, RunTrace, Selection, SharedIterate, StepInfo,
};
pub use error::{Error, Result};
pub use factorization::{
    estimate_lipschitz, firm_pca_instance, generate_data, minibatch_gradient, sample_batch, spca_instance,
    spca_partial_grad, spca_value, Factor, FactorizationData, FactorizationLoss, FactorizationState, DEFAULT_SAFETY,
};
pub use model::{LipschitzInfo, Problem, Regularizer, SmoothLoss};
pub use prox::{firm_penalty, prox_firm, prox_l1, prox_with_quadratic, Firm, ProxParams, WithQuadratic, Zero, L1};
pub use schedule::{minibatch_schedule, sample_noise, weight_c, NoiseKind, NoiseModel, Regime, StepsizePolicy};
