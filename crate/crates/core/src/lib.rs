//! Small-noise Schrödinger bridges with diffusion references.
//!
//! The crate simulates Doob h-transform bridges of Brownian, Ornstein-Uhlenbeck
//! and user-supplied reference diffusions, solves the static (entropic)
//! transport problem between discrete marginals, evaluates the static, bridge
//! and dynamic rate functions on discretized paths, and estimates Laplace
//! functionals `-eta log E[exp(-F/eta)]` for comparison with their
//! variational small-noise limits.
//!
//! All Monte Carlo work is deterministic given a seed: each path draws from
//! its own counter-based stream, so results do not depend on the thread count.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod eot;
pub mod error;
pub mod functional;
pub mod laplace;
pub mod model;
pub mod rng;
pub mod simulate;

pub use action::{
    action_value, bridge_rate, bridge_rate_detailed, dynamic_rate, kinetic_energy, minimize_action,
    minimize_action_in_tube, recover_control, ActionObjective, BridgeRate, ControlPath, ControlRecovery,
    MinimizeResult, MinimizeSettings, Parameterization, RateReport,
};
pub use eot::{
    build_cost, entropy_chain, exact_ot, sample_static_coupling, sinkhorn, static_rate, CostMode, DiscreteCoupling,
    DiscreteMarginal, ExactOt,
};
pub use error::{Error, Result};
pub use functional::{Constant, IntegralPenalty, PathFunctional, PointPenalty, SupNormSoft, TubePenalty};
pub use laplace::{
    control_cost, estimate_laplace, estimate_laplace_controlled, laplace_sweep, tube_probability_check, uniform_scan,
    DynamicBridgeSampler, LaplaceEstimate, LaplaceSweepResult, SweepSettings, TubeCheck, UniformScan,
};
pub use model::{
    h_transform_drift, limit_cost, reversal_drift, BridgeSpec, CustomDynamics, DiffusionModel, ModelKind, ModelSpec,
};
pub use simulate::{
    simulate_bridge, simulate_controlled_bridge, simulate_forward, simulate_reversed_bridge, PathBatch, PathSample,
    Scheme, SimConfig,
};
