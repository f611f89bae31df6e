//! Damped Newton iteration for the per-stage implicit systems.
//!
//! Each step solves `J(w) δ = −F(w)` by dense LU with partial pivoting and
//! moves `w ← w + θ δ`. The damping θ starts at `damping_init` and is
//! multiplied by `damping_factor` every time a step's residual exceeds
//! `growth_threshold` times the previous residual; it never recovers within
//! one solve. Hitting the iteration cap is reported as success, flagged via
//! [`Convergence::IterCap`].
//!
//! At least `min_iter` steps are taken unless the initial residual is exactly
//! zero. Returning the start value whenever its residual is below `abs_tol`
//! freezes stages whose correction is tiny, and over many steps those frozen
//! corrections accumulate into an error floor orders of magnitude above the
//! method's accuracy.

use crate::error::{Error, Result};
use crate::ode::{ensure_finite, norm2, Matrix, State};

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_iter: usize,
    pub growth_threshold: f64,
    pub damping_init: f64,
    pub damping_factor: f64,
    /// Steps taken before the convergence tests apply.
    pub min_iter: usize,
    /// Keep the per-step `(θ, ‖F‖)` history in the result.
    pub record_history: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            abs_tol: 1e-14,
            max_iter: 1000,
            growth_threshold: 0.9,
            damping_init: 1.0,
            damping_factor: 0.5,
            min_iter: 1,
            record_history: false,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.growth_threshold > 0.0
            && self.growth_threshold < 1.0
            && self.damping_factor > 0.0
            && self.damping_factor < 1.0
            && self.damping_init > 0.0
            && self.min_iter <= self.max_iter;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("newton settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convergence {
    Relative,
    Absolute,
    IterCap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonStep {
    /// Damping applied to this step.
    pub theta: f64,
    /// Residual norm after the step.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonResult {
    pub w: State,
    pub iters: usize,
    pub residual_norm: f64,
    pub initial_residual_norm: f64,
    pub converged_by: Convergence,
    pub history: Vec<NewtonStep>,
}

/// Solves `F(w) = 0` starting from `w0`.
pub fn solve<F, J>(residual: F, jacobian: J, w0: &[f64], cfg: &NewtonConfig) -> Result<NewtonResult>
where
    F: Fn(&[f64]) -> Result<State>,
    J: Fn(&[f64]) -> Result<Matrix>,
{
    let mut w = w0.to_vec();
    let mut r = residual(&w)?;
    ensure_finite(&r, "initial Newton residual")?;
    let r0 = norm2(&r);
    let mut history = Vec::new();

    if r0 == 0.0 || (cfg.min_iter == 0 && r0 <= cfg.abs_tol) {
        return Ok(NewtonResult {
            w,
            iters: 0,
            residual_norm: r0,
            initial_residual_norm: r0,
            converged_by: Convergence::Absolute,
            history,
        });
    }

    let mut theta = cfg.damping_init;
    let mut prev = r0;
    for iter in 1..=cfg.max_iter {
        let jac = jacobian(&w)?;
        let rhs: State = r.iter().map(|x| -x).collect();
        let delta = lu_solve(jac, rhs)?;
        for (wi, di) in w.iter_mut().zip(&delta) {
            *wi += theta * di;
        }
        r = residual(&w)?;
        ensure_finite(&r, "Newton residual")?;
        let norm = norm2(&r);
        if cfg.record_history {
            history.push(NewtonStep {
                theta,
                residual: norm,
            });
        }
        let converged_by = if iter < cfg.min_iter {
            None
        } else if norm <= cfg.abs_tol {
            Some(Convergence::Absolute)
        } else if norm / r0 <= cfg.rel_tol {
            Some(Convergence::Relative)
        } else {
            None
        };
        if let Some(converged_by) = converged_by {
            return Ok(NewtonResult {
                w,
                iters: iter,
                residual_norm: norm,
                initial_residual_norm: r0,
                converged_by,
                history,
            });
        }
        if norm > cfg.growth_threshold * prev {
            theta *= cfg.damping_factor;
        }
        prev = norm;
    }

    Ok(NewtonResult {
        w,
        iters: cfg.max_iter,
        residual_norm: prev,
        initial_residual_norm: r0,
        converged_by: Convergence::IterCap,
        history,
    })
}

const PIVOT_FLOOR: f64 = 1e-300;

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn lu_solve(mut a: Matrix, mut b: State) -> Result<State> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    for col in 0..n {
        let (piv_row, piv) = (col..n)
            .map(|i| (i, a[(i, col)].abs()))
            .fold((col, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if !(piv >= PIVOT_FLOOR) {
            return Err(Error::SingularJacobian { column: col, pivot: piv });
        }
        if piv_row != col {
            for j in 0..n {
                let tmp = a[(col, j)];
                a[(col, j)] = a[(piv_row, j)];
                a[(piv_row, j)] = tmp;
            }
            b.swap(col, piv_row);
        }
        for i in col + 1..n {
            let factor = a[(i, col)] / a[(col, col)];
            if factor != 0.0 {
                for j in col..n {
                    a[(i, j)] -= factor * a[(col, j)];
                }
                b[i] -= factor * b[col];
            }
        }
    }
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in i + 1..n {
            acc -= a[(i, j)] * b[j];
        }
        b[i] = acc / a[(i, i)];
    }
    Ok(b)
}
