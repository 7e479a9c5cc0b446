//! Depth-2 physics-informed networks for incompressible Navier–Stokes, with a
//! Rademacher generalization bound computed from the trained weights.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, with `*32` variants for single precision.

pub mod activation;
pub mod bound;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod network;
pub mod oracle;
pub mod residual;
pub mod scalar;
pub mod training;

pub use activation::{constants, estimate_constants, eval_derivs, ActivationFamily, ActivationSpec, Derivs};
pub use bound::{generalization_bound, point_ratio, sample_planner, theorem_constants, weight_stats, NuTerm};
pub use error::{Error, Result};
pub use experiment::{pearson, sweep_experiment, taylor_green_field, CorrelationReport, Domain, SweepConfig, TaylorGreen};
pub use network::{field_eval, forward, init_weights, load_checkpoint, save_checkpoint, FieldEvaluator, Pinn};
pub use residual::{empirical_risk, huber, loss_init, loss_res, momentum_residual, InitialCondition};
pub use scalar::Scalar;
pub use training::{adamw_step, grad_risk, train, TrainConfig};

pub type Matrix = linalg::Matrix<f64>;
pub type Weights = network::PinnWeights<f64>;
pub type Point = network::SpaceTimePoint<f64>;
pub type Field = network::FieldEval<f64>;
pub type Loss = residual::LossConfig<f64>;
pub type Collocation = residual::CollocationSet<f64>;
pub type Risk = residual::RiskBreakdown<f64>;
pub type Sigma = activation::SigmaConstants<f64>;
pub type Stats = bound::WeightStats<f64>;
pub type Bound = bound::BoundReport<f64>;
pub type Gap = experiment::GapReport<f64>;

pub type Matrix32 = linalg::Matrix<f32>;
pub type Weights32 = network::PinnWeights<f32>;
pub type Point32 = network::SpaceTimePoint<f32>;
pub type Field32 = network::FieldEval<f32>;
pub type Loss32 = residual::LossConfig<f32>;
pub type Collocation32 = residual::CollocationSet<f32>;
pub type Sigma32 = activation::SigmaConstants<f32>;
pub type Stats32 = bound::WeightStats<f32>;
pub type Bound32 = bound::BoundReport<f32>;
