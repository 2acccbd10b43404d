//! Monte Carlo Greeks for path-dependent derivatives via functional Itô calculus.
//!
//! The crate is organised bottom-up:
//!
//! * [`path`]: discrete càdlàg paths, flat extension, bumps and pathwise functionals.
//! * [`funcderiv`]: finite-difference functional derivatives and the Lie bracket.
//! * [`models`]: driftless volatility models and their simulation with the tangent process.
//! * [`payoffs`]: contract functionals.
//! * [`greeks`]: weighted-expectation Delta, Gamma and Vega, the strong path-dependence
//!   correction and finite-difference oracles.
//!
//! Every estimator is a deterministic reduction over paths: results depend on the seed
//! and path count only, not on the number of threads.

pub mod analytics;
pub mod engine;
pub mod error;
pub mod funcderiv;
pub mod greeks;
pub mod models;
pub mod path;
pub mod payoffs;
pub mod rng;

pub use engine::{McEstimate, PathSample, PathSource, Reduction, RunningStats};
pub use error::{Error, Result};
pub use funcderiv::{classify, lie_bracket, DerivativeConfig, PathDependenceClass, PathDependenceKind};
pub use greeks::{AllocationFunction, GreekReport, GreekRequest, VegaDirection, WeightSpec};
pub use models::{simulate, simulate_from_prefix, SimulatedBatch, Simulator, VolatilityModel};
pub use path::{DiscretePath, PathFunctional, PathView};
pub use payoffs::Contract;
