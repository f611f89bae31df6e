//! End-time reference solutions.
//!
//! Problems without a closed form (Pareschi-Russo, van der Pol) are
//! referenced against the eighth-order limiting method on a fine grid.

use crate::error::Result;
use crate::ode::State;
use crate::problems::ProblemSpec;
use crate::solver::{limit_integrate, SolverConfig, Variant};

/// Fine-grid step count: 32× the finest grid (640) of the convergence studies.
pub const REFERENCE_STEPS: usize = 20_480;

/// Order of the fine-grid reference method.
pub const REFERENCE_ORDER: usize = 8;

pub fn reference_solution(spec: &ProblemSpec, fine_steps: usize) -> Result<State> {
    if let Some(r) = spec.closed_form_reference() {
        return Ok(r);
    }
    let p = spec.build();
    let cfg = SolverConfig::new(Variant::Limit, REFERENCE_ORDER, 1, fine_steps);
    let run = limit_integrate(p.as_ref(), &cfg)?;
    Ok(run.final_state().clone())
}
