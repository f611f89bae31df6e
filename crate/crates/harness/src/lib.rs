//! Study drivers for the `hbpc` solvers: convergence tables, order
//! estimates, limit comparisons and pipeline speedups, written as CSV.

pub mod csv;
pub mod error;
pub mod reference;
pub mod study;

pub use error::{HarnessError, Result};
pub use reference::ReferenceCache;
pub use study::{
    estimate_order, run_convergence_study, run_limit_study, run_speedup_study, ConvergenceRow, ConvergenceTable,
    LimitStudyConfig, StudyConfig,
};
