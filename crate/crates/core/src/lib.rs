//! Parallel-in-time two-derivative IMEX predictor-corrector solvers.
//!
//! - [`ode`]: split problems and flux bundles
//! - [`tableau`]: Hermite-Birkhoff collocation tableaux of order 4, 6, 8
//! - [`newton`]: damped Newton for the stage equations
//! - [`solver`]: serial predictor-corrector variants and the limiting method
//! - [`pipeline`]: pipelined multi-worker executor and schedule simulator
//! - [`problems`]: benchmark problems
//! - [`reference`]: end-time reference solutions

pub mod error;
pub mod newton;
pub mod ode;
pub mod pipeline;
pub mod problems;
pub mod reference;
pub mod solver;
pub mod tableau;

pub use error::{Error, Result};
pub use ode::{FluxBundle, Matrix, SplitProblem, State};
pub use problems::ProblemSpec;
pub use solver::{integrate, RunResult, SolverConfig, Variant};
pub use tableau::TwoDerivativeTableau;
