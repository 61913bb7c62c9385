//! Multi-objective Bayesian optimization driven by differentiable Monte Carlo
//! estimators of hypervolume improvement.
//!
//! The crate is organized around a small expression-graph autodiff engine
//! ([`autodiff`]), quasi-Monte Carlo sampling ([`sampling`]), independent-output
//! Gaussian process surrogates ([`gp`]), Pareto-front geometry ([`pareto`]),
//! hypervolume-based acquisition functions ([`acquisition`]), a projected
//! quasi-Newton optimizer ([`optimize`]), synthetic benchmark problems
//! ([`problems`]), and an experiment harness ([`harness`]).
//!
//! All numeric code is generic over the scalar type through the [`scalar::Real`]
//! trait; `f64` is the working precision for everything the harness runs, and
//! the aliases at the crate root fix that choice for downstream users.

pub mod scalar;
pub mod error;
pub mod linalg;
pub mod autodiff;
pub mod sampling;
pub mod gp;
pub mod pareto;
pub mod acquisition;
pub mod optimize;
pub mod problems;
pub mod harness;

pub use error::{Error, Result};
pub use scalar::Real;

/// Expression graph over `f64`, the precision used by the harness.
pub type ExprGraph64 = autodiff::ExprGraph<f64>;
/// Graph builder over `f64`.
pub type GraphBuilder64 = autodiff::GraphBuilder<f64>;
/// Scrambled Sobol engine over `f64`.
pub type SobolEngine64 = sampling::SobolEngine<f64>;
/// Base-sample tensor over `f64`.
pub type BaseSamples64 = sampling::BaseSamples<f64>;
/// Training dataset over `f64`.
pub type Dataset64 = gp::Dataset<f64>;
/// Independent-output GP surrogate over `f64`.
pub type GpModel64 = gp::GpModel<f64>;
/// Pareto front over `f64`.
pub type ParetoFront64 = pareto::ParetoFront<f64>;
/// Non-dominated-region box decomposition over `f64`.
pub type BoxDecomposition64 = pareto::BoxDecomposition<f64>;
/// Hypervolume-improvement acquisition over `f64`.
pub type Qehvi64 = acquisition::Qehvi<f64>;
/// Benchmark problem over `f64`.
pub type ProblemSpec64 = problems::ProblemSpec<f64>;
/// Scalarized batch acquisition over `f64`.
pub type Qparego64 = acquisition::Qparego<f64>;
/// Experiment trace over `f64`.
pub type BoTrace64 = harness::BoTrace<f64>;

