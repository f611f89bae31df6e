//! Serial Hermite-Birkhoff predictor-corrector solvers.
//!
//! A step computes iterates `k = 0..=kmax`. Iterate 0 is a second-order
//! IMEX-Taylor predictor; iterate `k ≥ 1` corrects iterate `k − 1` using the
//! stage quadrature. Only last-stage values of the previous step are needed,
//! which is what makes the method pipelineable:
//!
//! | variant | predictor start       | iterate `k` restarts from          | quadrature   |
//! |---------|-----------------------|------------------------------------|--------------|
//! | `Alg1`  | `w^{n−1,[0]}_s`       | `w^{n−1,[min(k+1,kmax)]}_s`        | iterate k−1  |
//! | `Alg2`  | `w^{n−1,[1]}_s`       | `w^{n−1,[min(k+1,kmax)]}_s`        | Gauss-Seidel |
//! | `Lo`    | `w^{n−1,[0]}_s`       | `w^{n−1,[k]}_s`                    | iterate k−1  |
//! | `Limit` | previous update       | previous update, swept to a fixed point | Gauss-Seidel |
//!
//! All block computations go through [`Stepper`], which the pipelined
//! executor reuses so serial and parallel runs are bitwise identical.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::newton::{self, Convergence, NewtonConfig, NewtonResult};
use crate::ode::{dist2, eval_bundle, eval_implicit, fd_jacobian, max_abs_diff, FluxBundle, SplitProblem, State};
use crate::tableau::TwoDerivativeTableau;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Alg1,
    Alg2,
    Lo,
    Limit,
}

impl Variant {
    /// Iterate at step `n − 1` whose last stage seeds the predictor.
    pub fn predictor_source(self) -> usize {
        match self {
            Variant::Alg2 => 1,
            Variant::Alg1 | Variant::Lo | Variant::Limit => 0,
        }
    }

    /// Iterate at step `n − 1` whose last stage is the starting value of
    /// iterate `k ≥ 1` at step `n`.
    pub fn restart_source(self, k: usize, kmax: usize) -> usize {
        match self {
            Variant::Lo => k,
            _ => (k + 1).min(kmax),
        }
    }

    pub fn gauss_seidel(self) -> bool {
        matches!(self, Variant::Alg2 | Variant::Limit)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Alg1 => "alg1",
            Variant::Alg2 => "alg2",
            Variant::Lo => "lo",
            Variant::Limit => "limit",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "alg1" => Ok(Variant::Alg1),
            "alg2" => Ok(Variant::Alg2),
            "lo" => Ok(Variant::Lo),
            "limit" => Ok(Variant::Limit),
            other => Err(Error::InvalidConfig(format!("unknown variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub variant: Variant,
    pub q: usize,
    pub kmax: usize,
    pub n_steps: usize,
    pub newton: NewtonConfig,
    /// Start corrector Newton solves from the previous iterate's stage value
    /// instead of the restart value.
    pub hierarchical_start: bool,
    /// Fixed-point tolerance (max-norm change of all stages) for `Limit`.
    pub limit_tol: f64,
    pub limit_max_sweeps: usize,
    /// Keep a [`StepTrace`] for every step.
    pub record_traces: bool,
}

impl SolverConfig {
    pub fn new(variant: Variant, q: usize, kmax: usize, n_steps: usize) -> Self {
        Self {
            variant,
            q,
            kmax,
            n_steps,
            newton: NewtonConfig::default(),
            hierarchical_start: true,
            limit_tol: 1e-13,
            limit_max_sweeps: 10_000,
            record_traces: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.q, 4 | 6 | 8) {
            return Err(Error::UnsupportedOrder(self.q));
        }
        if self.kmax == 0 {
            return Err(Error::InvalidConfig("kmax must be at least 1".into()));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidConfig("number of steps must be at least 1".into()));
        }
        if !(self.limit_tol > 0.0) || self.limit_max_sweeps == 0 {
            return Err(Error::InvalidConfig("limit tolerance and sweep cap must be positive".into()));
        }
        self.newton.validate()
    }

    pub fn dt(&self, t_end: f64) -> f64 {
        t_end / self.n_steps as f64
    }
}

/// A stage value together with its cached fluxes.
#[derive(Debug, Clone, PartialEq)]
pub struct StagePoint {
    pub w: State,
    pub flux: FluxBundle,
}

impl StagePoint {
    pub fn new(p: &dyn SplitProblem, w: State) -> Result<Self> {
        let flux = eval_bundle(p, &w)?;
        Ok(Self { w, flux })
    }
}

/// Newton bookkeeping for one block.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BlockStats {
    pub newton_iters: u64,
    pub iter_cap_hits: u64,
    pub max_residual: f64,
}

impl BlockStats {
    fn record(&mut self, r: &NewtonResult) {
        self.newton_iters += r.iters as u64;
        if r.converged_by == Convergence::IterCap {
            self.iter_cap_hits += 1;
        }
        self.max_residual = self.max_residual.max(r.residual_norm);
    }
}

/// All stages of one iterate at one step: a pipeline block.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateBlock {
    pub stages: Vec<StagePoint>,
    pub stats: BlockStats,
}

impl IterateBlock {
    pub fn last(&self) -> &StagePoint {
        self.stages.last().expect("blocks have at least two stages")
    }
}

/// Pure block computations for a fixed problem, tableau and step size.
pub struct Stepper<'a> {
    pub problem: &'a dyn SplitProblem,
    pub tableau: TwoDerivativeTableau,
    pub dt: f64,
    pub newton: NewtonConfig,
    pub hierarchical_start: bool,
}

impl<'a> Stepper<'a> {
    pub fn new(problem: &'a dyn SplitProblem, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            problem,
            tableau: TwoDerivativeTableau::builtin(cfg.q)?,
            dt: cfg.dt(problem.t_end()),
            newton: cfg.newton.clone(),
            hierarchical_start: cfg.hierarchical_start,
        })
    }

    pub fn stages(&self) -> usize {
        self.tableau.stages()
    }

    /// Solves `w − a Φ_I(w) + a²/2 Φ̇_I(w) = rhs`.
    fn solve_stage(&self, a: f64, rhs: &[f64], start: &[f64]) -> Result<(StagePoint, NewtonResult)> {
        let p = self.problem;
        let half_a2 = 0.5 * a * a;
        let residual = |w: &[f64]| -> Result<State> {
            let (phi_i, dphi_i) = eval_implicit(p, w)?;
            Ok((0..w.len())
                .map(|i| w[i] - a * phi_i[i] + half_a2 * dphi_i[i] - rhs[i])
                .collect())
        };
        let jacobian = |w: &[f64]| fd_jacobian(residual, w);
        let result = newton::solve(residual, jacobian, start, &self.newton)?;
        let point = StagePoint::new(p, result.w.clone())?;
        Ok((point, result))
    }

    /// Predictor stage `l` from the source point `src`.
    pub fn predict_stage(&self, l: usize, src: &StagePoint) -> Result<(StagePoint, NewtonResult)> {
        let c = self.tableau.c[l];
        if c == 0.0 {
            let r = NewtonResult {
                w: src.w.clone(),
                iters: 0,
                residual_norm: 0.0,
                initial_residual_norm: 0.0,
                converged_by: Convergence::Absolute,
                history: Vec::new(),
            };
            return Ok((src.clone(), r));
        }
        let a = c * self.dt;
        let half_a2 = 0.5 * a * a;
        let rhs: State = (0..src.w.len())
            .map(|i| src.w[i] + a * src.flux.phi_e[i] + half_a2 * src.flux.dphi_e[i])
            .collect();
        self.solve_stage(a, &rhs, &src.w)
    }

    /// Predictor block (iterate 0).
    pub fn predict(&self, src: &StagePoint) -> Result<IterateBlock> {
        let mut stats = BlockStats::default();
        let mut stages = Vec::with_capacity(self.stages());
        for l in 0..self.stages() {
            let (point, r) = self.predict_stage(l, src)?;
            stats.record(&r);
            stages.push(point);
        }
        Ok(IterateBlock { stages, stats })
    }

    /// Corrector stage `l ≥ 1` of iterate `k + 1`.
    ///
    /// `prev` holds all stages of iterate `k`; `fresh` the stages `0..l` of
    /// iterate `k + 1` already computed (used by the Gauss-Seidel quadrature).
    pub fn correct_stage(
        &self,
        l: usize,
        prev: &[StagePoint],
        fresh: &[StagePoint],
        restart: &StagePoint,
        gauss_seidel: bool,
    ) -> Result<(StagePoint, NewtonResult)> {
        let dt = self.dt;
        let s = self.stages();
        let fluxes: Vec<(State, State)> = (0..s)
            .map(|j| {
                let src = if gauss_seidel && j < l { &fresh[j] } else { &prev[j] };
                (src.flux.phi(), src.flux.dphi())
            })
            .collect();
        let quad = self.tableau.quadrature_with(l, dt, |j| (&fluxes[j].0, &fluxes[j].1));
        let old = &prev[l].flux;
        let half_dt2 = 0.5 * dt * dt;
        let rhs: State = (0..restart.w.len())
            .map(|i| restart.w[i] - dt * old.phi_i[i] + half_dt2 * old.dphi_i[i] + quad[i])
            .collect();
        let start = if self.hierarchical_start { &prev[l].w } else { &restart.w };
        self.solve_stage(dt, &rhs, start)
    }

    /// Corrector block: iterate `k + 1` from iterate `k` (`prev`).
    pub fn correct(&self, prev: &IterateBlock, restart: &StagePoint, gauss_seidel: bool) -> Result<IterateBlock> {
        let mut stats = BlockStats::default();
        let mut stages = Vec::with_capacity(self.stages());
        stages.push(restart.clone());
        for l in 1..self.stages() {
            let (point, r) = self.correct_stage(l, &prev.stages, &stages, restart, gauss_seidel)?;
            stats.record(&r);
            stages.push(point);
        }
        Ok(IterateBlock { stages, stats })
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub newton_iters: Vec<u64>,
    pub max_residual: Vec<f64>,
    pub last_stage: Vec<State>,
}

/// Two-step storage: last stages of every iterate at the previous step and
/// the blocks of the current step.
#[derive(Debug, Clone)]
pub struct IterateGrid {
    pub step: usize,
    pub previous: Vec<StagePoint>,
    pub current: Vec<IterateBlock>,
}

impl IterateGrid {
    /// Every previous-step slot holds `w0`.
    pub fn seed(p: &dyn SplitProblem, kmax: usize) -> Result<Self> {
        let point = StagePoint::new(p, p.w0())?;
        Ok(Self {
            step: 0,
            previous: vec![point; kmax + 1],
            current: Vec::new(),
        })
    }

    pub fn kmax(&self) -> usize {
        self.previous.len() - 1
    }

    /// Runs one full step (predictor plus all corrections) and rotates the
    /// grid. Returns the update `w^{n+1} = w^{n,[kmax]}_s`.
    pub fn advance(&mut self, stepper: &Stepper<'_>, variant: Variant) -> Result<(State, StepTrace)> {
        if variant == Variant::Limit {
            return Err(Error::InvalidConfig("use limit_integrate for the limit variant".into()));
        }
        let kmax = self.kmax();
        let mut blocks = Vec::with_capacity(kmax + 1);
        blocks.push(stepper.predict(&self.previous[variant.predictor_source()])?);
        for k in 1..=kmax {
            let restart = &self.previous[variant.restart_source(k, kmax)];
            let block = stepper.correct(&blocks[k - 1], restart, variant.gauss_seidel())?;
            blocks.push(block);
        }
        let trace = StepTrace {
            newton_iters: blocks.iter().map(|b| b.stats.newton_iters).collect(),
            max_residual: blocks.iter().map(|b| b.stats.max_residual).collect(),
            last_stage: blocks.iter().map(|b| b.last().w.clone()).collect(),
        };
        self.previous = blocks.iter().map(|b| b.last().clone()).collect();
        self.current = blocks;
        self.step += 1;
        Ok((self.previous[kmax].w.clone(), trace))
    }
}

/// Outcome of a full integration.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub variant: Variant,
    pub q: usize,
    pub kmax: usize,
    pub n_steps: usize,
    pub dt: f64,
    /// Last-stage value of every iterate at the final step (one entry for
    /// `Limit`).
    pub final_iterates: Vec<State>,
    /// Updates `w^{n+1}` for every step.
    pub trajectory: Vec<State>,
    /// Newton iterations summed per iterate.
    pub newton_iters: Vec<u64>,
    pub iter_cap_hits: u64,
    /// Fixed-point sweeps per step (`Limit` only).
    pub sweeps: Vec<usize>,
    pub traces: Vec<StepTrace>,
    pub wallclock: Duration,
}

impl RunResult {
    pub fn final_state(&self) -> &State {
        self.trajectory.last().expect("at least one step")
    }

    /// `‖w_ref − w_h‖₂` per iterate at the end time.
    pub fn errors(&self, reference: &[f64]) -> Vec<f64> {
        self.final_iterates.iter().map(|w| dist2(w, reference)).collect()
    }

    pub fn final_error(&self, reference: &[f64]) -> f64 {
        dist2(self.final_state(), reference)
    }

    /// Newton iterations grouped the way the pipelined executor assigns
    /// iterates to workers: pairs `{2p, 2p+1}` for the high-order variants,
    /// one iterate per worker for `Lo`.
    pub fn newton_per_worker(&self) -> Vec<u64> {
        match self.variant {
            Variant::Lo | Variant::Limit => self.newton_iters.clone(),
            _ => self.newton_iters.chunks(2).map(|c| c.iter().sum()).collect(),
        }
    }

    /// Bitwise comparison of everything except timing.
    pub fn same_numerics(&self, other: &RunResult) -> bool {
        fn bits(v: &[State]) -> Vec<Vec<u64>> {
            v.iter().map(|w| w.iter().map(|x| x.to_bits()).collect()).collect()
        }
        self.variant == other.variant
            && self.q == other.q
            && self.kmax == other.kmax
            && self.n_steps == other.n_steps
            && self.dt.to_bits() == other.dt.to_bits()
            && bits(&self.final_iterates) == bits(&other.final_iterates)
            && bits(&self.trajectory) == bits(&other.trajectory)
            && self.newton_iters == other.newton_iters
            && self.iter_cap_hits == other.iter_cap_hits
            && self.sweeps == other.sweeps
    }
}

/// Integrates over `N` uniform steps with the configured variant.
pub fn integrate(p: &dyn SplitProblem, cfg: &SolverConfig) -> Result<RunResult> {
    if cfg.variant == Variant::Limit {
        return limit_integrate(p, cfg);
    }
    let stepper = Stepper::new(p, cfg)?;
    let started = Instant::now();
    let mut grid = IterateGrid::seed(p, cfg.kmax)?;
    let mut trajectory = Vec::with_capacity(cfg.n_steps);
    let mut traces = Vec::new();
    let mut newton_iters = vec![0u64; cfg.kmax + 1];
    let mut iter_cap_hits = 0;
    for _ in 0..cfg.n_steps {
        let (w, trace) = grid.advance(&stepper, cfg.variant)?;
        for (k, block) in grid.current.iter().enumerate() {
            newton_iters[k] += block.stats.newton_iters;
            iter_cap_hits += block.stats.iter_cap_hits;
        }
        trajectory.push(w);
        if cfg.record_traces {
            traces.push(trace);
        }
    }
    Ok(RunResult {
        variant: cfg.variant,
        q: cfg.q,
        kmax: cfg.kmax,
        n_steps: cfg.n_steps,
        dt: stepper.dt,
        final_iterates: grid.previous.iter().map(|pt| pt.w.clone()).collect(),
        trajectory,
        newton_iters,
        iter_cap_hits,
        sweeps: Vec::new(),
        traces,
        wallclock: started.elapsed(),
    })
}

/// Result of sweeping one step to the fixed point of the Gauss-Seidel
/// correction, i.e. the fully coupled two-derivative Runge-Kutta step.
#[derive(Debug, Clone)]
pub struct LimitStep {
    pub block: IterateBlock,
    pub sweeps: usize,
    pub newton_iters: u64,
    pub iter_cap_hits: u64,
}

/// Sweeps a single step starting from the update `start`.
pub fn limit_step(stepper: &Stepper<'_>, start: &StagePoint, tol: f64, max_sweeps: usize, step: usize) -> Result<LimitStep> {
    let mut current = stepper.predict(start)?;
    let mut newton_iters = current.stats.newton_iters;
    let mut iter_cap_hits = current.stats.iter_cap_hits;
    let mut change = f64::INFINITY;
    let mut previous = f64::INFINITY;
    for sweep in 1..=max_sweeps {
        let next = stepper.correct(&current, start, true)?;
        newton_iters += next.stats.newton_iters;
        iter_cap_hits += next.stats.iter_cap_hits;
        change = next
            .stages
            .iter()
            .zip(&current.stages)
            .map(|(a, b)| max_abs_diff(&a.w, &b.w))
            .fold(0.0, f64::max);
        current = next;
        // A small change under slow contraction is still far from the fixed
        // point, so the tail of the geometric series must be small as well.
        let rho = change / previous;
        let tail = if rho < 1.0 { change * rho / (1.0 - rho) } else { f64::INFINITY };
        let scale = current.stages.iter().map(|s| s.w.iter().fold(0.0_f64, |m, x| m.max(x.abs()))).fold(1.0, f64::max);
        let at_roundoff = change <= 4.0 * f64::EPSILON * scale;
        previous = change;
        if change <= tol && (tail <= tol || at_roundoff) {
            return Ok(LimitStep {
                block: current,
                sweeps: sweep,
                newton_iters,
                iter_cap_hits,
            });
        }
    }
    Err(Error::NoConvergence {
        step,
        sweeps: max_sweeps,
        change,
    })
}

/// The limiting method: every step is swept to its fixed point.
pub fn limit_integrate(p: &dyn SplitProblem, cfg: &SolverConfig) -> Result<RunResult> {
    let stepper = Stepper::new(p, cfg)?;
    let started = Instant::now();
    let mut point = StagePoint::new(p, p.w0())?;
    let mut trajectory = Vec::with_capacity(cfg.n_steps);
    let mut sweeps = Vec::with_capacity(cfg.n_steps);
    let mut newton_iters = 0;
    let mut iter_cap_hits = 0;
    for n in 0..cfg.n_steps {
        let step = limit_step(&stepper, &point, cfg.limit_tol, cfg.limit_max_sweeps, n)?;
        sweeps.push(step.sweeps);
        newton_iters += step.newton_iters;
        iter_cap_hits += step.iter_cap_hits;
        point = step.block.last().clone();
        trajectory.push(point.w.clone());
    }
    Ok(RunResult {
        variant: Variant::Limit,
        q: cfg.q,
        kmax: cfg.kmax,
        n_steps: cfg.n_steps,
        dt: stepper.dt,
        final_iterates: vec![point.w],
        trajectory,
        newton_iters: vec![newton_iters],
        iter_cap_hits,
        sweeps,
        traces: Vec::new(),
        wallclock: started.elapsed(),
    })
}

/// Default ceiling for [`adaptive_kmax`].
pub const KMAX_CEILING: usize = 4096;

/// Relative change `|e_new − e_old| / e_new` used by the doubling criterion.
/// Identical errors (including both zero) count as converged.
pub fn relative_change(e_new: f64, e_old: f64) -> f64 {
    if e_new == e_old {
        0.0
    } else {
        (e_new - e_old).abs() / e_new
    }
}

/// Doubles `kmax` until the end-time error changes by at most 1% between
/// `kmax/2` and `kmax`. Returns the accepted `kmax` and its run.
pub fn adaptive_kmax(
    p: &dyn SplitProblem,
    base: &SolverConfig,
    start_kmax: usize,
    reference: &[f64],
    ceiling: usize,
) -> Result<(usize, RunResult)> {
    let mut cfg = base.clone();
    cfg.kmax = start_kmax;
    let mut previous = integrate(p, &cfg)?;
    loop {
        let next_kmax = cfg.kmax * 2;
        if next_kmax > ceiling {
            return Err(Error::CapExceeded { ceiling });
        }
        cfg.kmax = next_kmax;
        let run = integrate(p, &cfg)?;
        let change = relative_change(run.final_error(reference), previous.final_error(reference));
        if change <= 0.01 {
            return Ok((next_kmax, run));
        }
        previous = run;
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::problems::{Linear, PareschiRusso, ScalarPow, VanDerPol, Zero};

    fn linear() -> Linear {
        Linear {
            lambda: -1.0,
            t_end: 1.0,
        }
    }

    #[test]
    fn seeding_fills_every_slot() {
        let pr = PareschiRusso { eps: 1.0 };
        let grid = IterateGrid::seed(&pr, 5).unwrap();
        assert_eq!(grid.previous.len(), 6);
        for pt in &grid.previous {
            assert_eq!(pt.w, vec![std::f64::consts::FRAC_PI_2, 1.0]);
        }
        let vdp = VanDerPol { eps: 0.1 };
        let grid = IterateGrid::seed(&vdp, 3).unwrap();
        assert_eq!(grid.previous[3].w, vec![2.0, -2.0 / 3.0 + 10.0 / 81.0 * 0.1]);
        let grid = IterateGrid::seed(&Zero, 3).unwrap();
        assert!(grid.previous.iter().all(|pt| pt.flux == FluxBundle::zeros(2)));
    }

    #[test]
    fn predictor_first_stage_is_a_copy() {
        let p = linear();
        let cfg = SolverConfig::new(Variant::Alg1, 4, 3, 10);
        let stepper = Stepper::new(&p, &cfg).unwrap();
        let src = StagePoint::new(&p, vec![0.7]).unwrap();
        let (pt, r) = stepper.predict_stage(0, &src).unwrap();
        assert_eq!(pt, src);
        assert_eq!(r.iters, 0);
    }

    #[test]
    fn linear_predictor_stage() {
        let p = linear();
        let cfg = SolverConfig::new(Variant::Alg1, 4, 3, 10);
        let stepper = Stepper::new(&p, &cfg).unwrap();
        assert_eq!(stepper.dt, 0.1);
        let src = StagePoint::new(&p, vec![1.0]).unwrap();
        let (pt, _) = stepper.predict_stage(1, &src).unwrap();
        // Finite-difference Jacobian plus the relative stopping test.
        assert!((pt.w[0] - 1.0 / 1.105).abs() < 1e-9);
        assert!((pt.w[0] - 0.9049773756).abs() < 1e-9);
    }

    #[test]
    fn explicit_only_predictor_is_taylor_two() {
        // Φ_I = 0 for the scalar problem with α = 1.
        let p = ScalarPow { alpha: 1.0 };
        let cfg = SolverConfig::new(Variant::Alg1, 4, 3, 10);
        let stepper = Stepper::new(&p, &cfg).unwrap();
        let src = StagePoint::new(&p, vec![1.0]).unwrap();
        let (pt, r) = stepper.predict_stage(1, &src).unwrap();
        let dt = 0.025;
        let expected = 1.0 + dt * src.flux.phi_e[0] + 0.5 * dt * dt * src.flux.dphi_e[0];
        assert!((pt.w[0] - expected).abs() < 1e-15);
        assert!(r.iters <= 1);
    }

    #[test]
    fn zero_problem_is_stationary() {
        for variant in [Variant::Alg1, Variant::Alg2, Variant::Lo, Variant::Limit] {
            let cfg = SolverConfig::new(variant, 6, 3, 7);
            let run = integrate(&Zero, &cfg).unwrap();
            for w in run.final_iterates.iter().chain(&run.trajectory) {
                assert_eq!(w, &Zero.w0());
            }
            if variant == Variant::Limit {
                assert!(run.sweeps.iter().all(|&s| s == 1));
            }
        }
    }

    #[test]
    fn one_linear_step_matches_exponential() {
        let p = Linear {
            lambda: -1.0,
            t_end: 0.01,
        };
        let cfg = SolverConfig::new(Variant::Alg1, 4, 3, 1);
        let run = integrate(&p, &cfg).unwrap();
        assert!((run.final_state()[0] - (-0.01f64).exp()).abs() <= 1e-10);
    }

    #[test]
    fn update_is_last_stage_of_last_iterate() {
        let p = PareschiRusso { eps: 1.0 };
        let cfg = SolverConfig::new(Variant::Alg2, 6, 3, 4);
        let stepper = Stepper::new(&p, &cfg).unwrap();
        let mut grid = IterateGrid::seed(&p, 3).unwrap();
        for _ in 0..4 {
            let (w, trace) = grid.advance(&stepper, Variant::Alg2).unwrap();
            assert_eq!(w, grid.current[3].stages[2].w);
            assert_eq!(trace.last_stage.len(), 4);
        }
        let run = integrate(&p, &cfg).unwrap();
        assert_eq!(run.final_state(), &grid.previous[3].w);
        assert_eq!(run.final_iterates[3], run.trajectory[3]);
    }

    #[test]
    fn corrections_start_from_restart_value() {
        let p = PareschiRusso { eps: 1.0 };
        for variant in [Variant::Alg1, Variant::Alg2, Variant::Lo] {
            let kmax = 3;
            let cfg = SolverConfig::new(variant, 8, kmax, 5);
            let stepper = Stepper::new(&p, &cfg).unwrap();
            let mut grid = IterateGrid::seed(&p, kmax).unwrap();
            grid.advance(&stepper, variant).unwrap();
            let previous = grid.previous.clone();
            grid.advance(&stepper, variant).unwrap();
            for k in 1..=kmax {
                assert_eq!(
                    grid.current[k].stages[0],
                    previous[variant.restart_source(k, kmax)],
                    "{variant} k={k}"
                );
            }
        }
    }

    #[test]
    fn single_step_run_equals_advance() {
        let p = PareschiRusso { eps: 0.1 };
        let mut cfg = SolverConfig::new(Variant::Alg1, 4, 3, 1);
        cfg.record_traces = true;
        let run = integrate(&p, &cfg).unwrap();
        let stepper = Stepper::new(&p, &cfg).unwrap();
        let mut grid = IterateGrid::seed(&p, 3).unwrap();
        let (w, trace) = grid.advance(&stepper, Variant::Alg1).unwrap();
        assert_eq!(run.trajectory, vec![w]);
        assert_eq!(run.traces, vec![trace]);
    }

    #[test]
    fn fixed_point_is_preserved_by_correction() {
        let p = VanDerPol { eps: 0.1 };
        let cfg = SolverConfig::new(Variant::Limit, 6, 1, 20);
        let stepper = Stepper::new(&p, &cfg).unwrap();
        let start = StagePoint::new(&p, p.w0()).unwrap();
        let limit = limit_step(&stepper, &start, cfg.limit_tol, cfg.limit_max_sweeps, 0).unwrap();
        for gs in [true, false] {
            let again = stepper.correct(&limit.block, &start, gs).unwrap();
            for (a, b) in again.stages.iter().zip(&limit.block.stages) {
                assert!(max_abs_diff(&a.w, &b.w) <= 10.0 * cfg.limit_tol);
            }
        }
    }

    #[test]
    fn limit_hits_sweep_cap() {
        let p = VanDerPol { eps: 1e-3 };
        let mut cfg = SolverConfig::new(Variant::Limit, 6, 1, 10);
        cfg.limit_max_sweeps = 2;
        assert!(matches!(
            limit_integrate(&p, &cfg),
            Err(Error::NoConvergence { step: 0, sweeps: 2, .. })
        ));
    }

    #[test]
    fn adaptive_kmax_on_zero_stops_immediately() {
        let cfg = SolverConfig::new(Variant::Alg1, 4, 1, 5);
        let (kmax, run) = adaptive_kmax(&Zero, &cfg, 2, &Zero.w0(), KMAX_CEILING).unwrap();
        assert_eq!(kmax, 4);
        assert_eq!(run.final_error(&Zero.w0()), 0.0);
    }

    #[test]
    fn adaptive_kmax_saturates_on_nonstiff_problem() {
        let p = ScalarPow { alpha: 0.2 };
        let cfg = SolverConfig::new(Variant::Alg1, 4, 1, 40);
        let reference = p.exact(p.t_end()).unwrap();
        let (kmax, _) = adaptive_kmax(&p, &cfg, 1, &reference, KMAX_CEILING).unwrap();
        assert!(kmax <= 8, "kmax = {kmax}");
    }

    #[test]
    fn adaptive_kmax_respects_ceiling() {
        let p = ScalarPow { alpha: 0.2 };
        let cfg = SolverConfig::new(Variant::Alg1, 8, 1, 10);
        let reference = p.exact(p.t_end()).unwrap();
        assert_eq!(
            adaptive_kmax(&p, &cfg, 1, &reference, 2).unwrap_err(),
            Error::CapExceeded { ceiling: 2 }
        );
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::new(Variant::Alg1, 5, 3, 10).validate().is_err());
        assert!(SolverConfig::new(Variant::Alg1, 4, 0, 10).validate().is_err());
        assert!(SolverConfig::new(Variant::Alg1, 4, 3, 0).validate().is_err());
        assert!(SolverConfig::new(Variant::Alg1, 4, 3, 1).validate().is_ok());
        assert_eq!("ALG2".parse::<Variant>().unwrap(), Variant::Alg2);
        assert!("alg3".parse::<Variant>().is_err());
    }

    #[test]
    fn inadmissible_state_propagates() {
        let cfg = SolverConfig::new(Variant::Alg1, 4, 3, 1);
        assert!(matches!(integrate(&HalfLine, &cfg), Err(Error::NonFinite(_))));
    }

    /// Fast decay, undefined below w = 0.5.
    pub(crate) struct HalfLine;
    impl SplitProblem for HalfLine {
        fn name(&self) -> String {
            "half_line".into()
        }
        fn dim(&self) -> usize {
            1
        }
        fn phi_e(&self, w: &[f64]) -> State {
            vec![if w[0] > 0.5 { 0.0 } else { f64::NAN }]
        }
        fn phi_i(&self, w: &[f64]) -> State {
            vec![if w[0] > 0.5 { -100.0 * w[0] } else { f64::NAN }]
        }
        fn w0(&self) -> State {
            vec![1.0]
        }
        fn t_end(&self) -> f64 {
            1.0
        }
    }
}
