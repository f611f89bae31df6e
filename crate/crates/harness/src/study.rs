//! Convergence, speedup and limit studies.

use std::time::Instant;

use hbpc::pipeline::{integrate_parallel, simulate_schedule, worker_count, Schedule};
use hbpc::reference::REFERENCE_STEPS;
use hbpc::solver::{adaptive_kmax, relative_change, KMAX_CEILING};
use hbpc::{integrate, Error, ProblemSpec, RunResult, SolverConfig, State, Variant};

use crate::error::{HarnessError, Result};
use crate::reference::ReferenceCache;

pub const DEFAULT_NSTEPS: [usize; 5] = [40, 80, 160, 320, 640];

/// Errors below this are treated as round-off and left out of slope fits.
pub const ERROR_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub problem: ProblemSpec,
    pub variant: Variant,
    pub q: usize,
    pub kmax: usize,
    pub nsteps: Vec<usize>,
    pub parallel: bool,
    /// Defaults to the worker count the pipeline needs.
    pub workers: Option<usize>,
    /// Steps of the fine-grid reference run.
    pub fine_steps: usize,
    /// When false the wallclock column is written as zero so reruns are
    /// byte-identical.
    pub record_wallclock: bool,
}

impl StudyConfig {
    pub fn new(problem: ProblemSpec, variant: Variant, q: usize, kmax: usize, nsteps: Vec<usize>) -> Self {
        Self {
            problem,
            variant,
            q,
            kmax,
            nsteps,
            parallel: false,
            workers: None,
            fine_steps: REFERENCE_STEPS,
            record_wallclock: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nsteps.is_empty() {
            return Err(HarnessError::Config("empty list of step counts".into()));
        }
        if self.nsteps.windows(2).any(|w| w[0] >= w[1]) || self.nsteps[0] == 0 {
            return Err(HarnessError::Config(format!(
                "step counts must be positive and strictly increasing, got {:?}",
                self.nsteps
            )));
        }
        self.solver_config(self.nsteps[0]).validate()?;
        if self.parallel {
            self.parallel_workers()?;
        }
        Ok(())
    }

    pub fn solver_config(&self, n_steps: usize) -> SolverConfig {
        SolverConfig::new(self.variant, self.q, self.kmax, n_steps)
    }

    pub fn parallel_workers(&self) -> Result<usize> {
        let needed = worker_count(self.variant, self.kmax)?;
        match self.workers {
            Some(w) if w != needed => Err(HarnessError::Config(format!(
                "{} with kmax={} needs {needed} workers, got {w}",
                self.variant, self.kmax
            ))),
            _ => Ok(needed),
        }
    }

    /// Number of error columns minus one.
    pub fn table_kmax(&self) -> usize {
        if self.variant == Variant::Limit {
            0
        } else {
            self.kmax
        }
    }

    /// Number of Newton columns.
    pub fn table_workers(&self) -> usize {
        match self.variant {
            Variant::Limit => 1,
            Variant::Lo => self.kmax + 1,
            Variant::Alg1 | Variant::Alg2 => (self.kmax + 2) / 2,
        }
    }

    fn run(&self, n_steps: usize) -> Result<RunResult> {
        let problem = self.problem.build();
        let cfg = self.solver_config(n_steps);
        if self.parallel {
            let workers = self.parallel_workers()?;
            Ok(integrate_parallel(problem.as_ref(), &cfg, workers)?)
        } else {
            Ok(integrate(problem.as_ref(), &cfg)?)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    /// `‖w_ref − w_h‖₂` at the end time per iterate.
    pub err: Vec<f64>,
    pub wallclock_s: f64,
    /// Newton iterations per pipeline worker.
    pub newton: Vec<u64>,
}

impl ConvergenceRow {
    pub fn dt(&self, t_end: f64) -> f64 {
        t_end / self.n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub kmax: usize,
    pub workers: usize,
    pub rows: Vec<ConvergenceRow>,
}

/// Runs every step count of `cfg`. `on_row` sees each row as soon as it is
/// complete, so a caller can flush partial results before an error.
pub fn run_convergence_study(
    cfg: &StudyConfig,
    reference: &[f64],
    mut on_row: impl FnMut(&ConvergenceRow) -> Result<()>,
) -> Result<ConvergenceTable> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.nsteps.len());
    for &n in &cfg.nsteps {
        let started = Instant::now();
        let run = cfg.run(n)?;
        let elapsed = started.elapsed().as_secs_f64();
        let row = ConvergenceRow {
            n,
            err: run.errors(reference),
            wallclock_s: if cfg.record_wallclock { elapsed } else { 0.0 },
            newton: run.newton_per_worker(),
        };
        on_row(&row)?;
        rows.push(row);
    }
    Ok(ConvergenceTable {
        kmax: cfg.table_kmax(),
        workers: cfg.table_workers(),
        rows,
    })
}

/// Least-squares slope of `log err` against `log dt` for every iterate.
///
/// Since `dt = t_end / N`, the regression uses `log(1/N)`, which differs by a
/// constant. Entries below [`ERROR_FLOOR`] are skipped; an iterate with fewer
/// than two usable rows gets `None`.
pub fn estimate_order(rows: &[ConvergenceRow]) -> Result<Vec<Option<f64>>> {
    if rows.len() < 3 {
        return Err(Error::InsufficientData(format!("{} rows, need at least 3", rows.len())).into());
    }
    let columns = rows[0].err.len();
    if rows.iter().any(|r| r.err.len() != columns) {
        return Err(Error::InsufficientData("rows have different iterate counts".into()).into());
    }
    Ok((0..columns)
        .map(|k| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.err[k].is_finite() && r.err[k] >= ERROR_FLOOR)
                .map(|r| (-(r.n as f64).ln(), r.err[k].ln()))
                .collect();
            least_squares_slope(&pts)
        })
        .collect())
}

fn least_squares_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupReport {
    pub n: usize,
    pub workers: usize,
    pub serial_s: f64,
    pub parallel_s: f64,
    pub speedup: f64,
    /// Serial block count over pipelined cycle count.
    pub theoretical: f64,
}

impl SpeedupReport {
    /// Measured speedup within 5% of the bound.
    pub fn within_bound(&self) -> bool {
        self.speedup <= 1.05 * self.theoretical
    }
}

/// Times each configuration serially and pipelined. The two runs must agree
/// bit for bit.
pub fn run_speedup_study(cfg: &StudyConfig) -> Result<Vec<SpeedupReport>> {
    let mut pcfg = cfg.clone();
    pcfg.parallel = true;
    pcfg.validate()?;
    let workers = pcfg.parallel_workers()?;
    let problem = cfg.problem.build();
    let mut reports = Vec::with_capacity(cfg.nsteps.len());
    for &n in &cfg.nsteps {
        let scfg = cfg.solver_config(n);
        let started = Instant::now();
        let serial = integrate(problem.as_ref(), &scfg)?;
        let serial_s = started.elapsed().as_secs_f64();
        let started = Instant::now();
        let parallel = integrate_parallel(problem.as_ref(), &scfg, workers)?;
        let parallel_s = started.elapsed().as_secs_f64();
        if !serial.same_numerics(&parallel) {
            return Err(HarnessError::MismatchedResults(format!(
                "{} q={} kmax={} N={n}",
                cfg.variant, cfg.q, cfg.kmax
            )));
        }
        let serial_cycles = simulate_schedule(Schedule::Serial, cfg.kmax, n)?;
        let pipelined_cycles = simulate_schedule(Schedule::Pipelined(cfg.variant), cfg.kmax, n)?;
        reports.push(SpeedupReport {
            n,
            workers,
            serial_s,
            parallel_s,
            speedup: serial_s / parallel_s,
            theoretical: serial_cycles as f64 / pipelined_cycles as f64,
        });
    }
    Ok(reports)
}

/// Smallest `kmax` tried by the doubling procedure.
pub const ADAPTIVE_START_KMAX: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct LimitRow {
    pub n: usize,
    pub adaptive_kmax: Option<usize>,
    pub adaptive_err: Option<f64>,
    pub limit_err: Option<f64>,
}

impl LimitRow {
    /// Relative difference of the adaptive error from the limit error.
    pub fn rel_diff(&self) -> Option<f64> {
        Some(relative_change(self.adaptive_err?, self.limit_err?).abs())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitPanel {
    pub problem: ProblemSpec,
    pub rows: Vec<LimitRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitStudyConfig {
    pub problems: Vec<ProblemSpec>,
    pub q: usize,
    pub nsteps: Vec<usize>,
    pub start_kmax: usize,
    pub ceiling: usize,
    pub fine_steps: usize,
}

impl LimitStudyConfig {
    pub fn new(problems: Vec<ProblemSpec>, q: usize, nsteps: Vec<usize>) -> Self {
        Self {
            problems,
            q,
            nsteps,
            start_kmax: ADAPTIVE_START_KMAX,
            ceiling: KMAX_CEILING,
            fine_steps: REFERENCE_STEPS,
        }
    }
}

/// A cell that failed to converge is left blank; other errors abort.
fn cell<T>(r: hbpc::Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::NoConvergence { .. } | Error::CapExceeded { .. } | Error::NonFinite(_) | Error::SingularJacobian { .. }) => {
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

/// Side-by-side adaptive-`kmax` (Alg1) and limiting-method errors per
/// problem and step count.
pub fn run_limit_study(cfg: &LimitStudyConfig, cache: &ReferenceCache) -> Result<Vec<LimitPanel>> {
    let probe = StudyConfig::new(ProblemSpec::Zero, Variant::Limit, cfg.q, 1, cfg.nsteps.clone());
    probe.validate()?;
    let mut panels = Vec::with_capacity(cfg.problems.len());
    for spec in &cfg.problems {
        let reference = cache.reference(spec, cfg.fine_steps)?;
        let problem = spec.build();
        let mut rows = Vec::with_capacity(cfg.nsteps.len());
        for &n in &cfg.nsteps {
            let base = SolverConfig::new(Variant::Alg1, cfg.q, cfg.start_kmax, n);
            let adaptive = cell(adaptive_kmax(problem.as_ref(), &base, cfg.start_kmax, &reference, cfg.ceiling))?;
            let limit_cfg = SolverConfig::new(Variant::Limit, cfg.q, 1, n);
            let limit = cell(integrate(problem.as_ref(), &limit_cfg))?;
            rows.push(LimitRow {
                n,
                adaptive_kmax: adaptive.as_ref().map(|a| a.0),
                adaptive_err: adaptive.as_ref().map(|a| a.1.final_error(&reference)),
                limit_err: limit.as_ref().map(|r| r.final_error(&reference)),
            });
        }
        panels.push(LimitPanel {
            problem: *spec,
            rows,
        });
    }
    Ok(panels)
}

/// Reference for a study, from the closed form or the cache.
pub fn study_reference(cfg: &StudyConfig, cache: &ReferenceCache) -> Result<State> {
    cache.reference(&cfg.problem, cfg.fine_steps)
}
