use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use hbpc::pipeline::{simulate_schedule, Schedule};
use hbpc::reference::REFERENCE_STEPS;
use hbpc::{ProblemSpec, Variant};
use hbpc_harness::csv::{convergence_header, convergence_line, write_limit, write_schedule, write_speedup};
use hbpc_harness::study::{study_reference, DEFAULT_NSTEPS};
use hbpc_harness::{
    estimate_order, run_convergence_study, run_limit_study, run_speedup_study, HarnessError, LimitStudyConfig,
    ReferenceCache, Result, StudyConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Study {
    /// Error per iterate over the step counts.
    Convergence,
    /// Serial against pipelined wallclock.
    Speedup,
    /// Adaptive kmax against the limiting method, one panel per eps.
    Limit,
}

/// Two-derivative IMEX predictor-corrector studies.
///
/// Data goes to --out (or stdout) as CSV; diagnostics go to stderr.
/// Reference solutions are cached in $HBPC_REF_CACHE when set.
#[derive(Debug, Parser)]
#[command(name = "hbpc", version)]
struct Cli {
    /// scalar_pow, pareschi_russo, van_der_pol, arenstorf, linear or zero.
    #[arg(long)]
    problem: Option<String>,

    /// Stiffness parameter; a comma list for the limit study.
    #[arg(long, value_delimiter = ',')]
    eps: Vec<f64>,

    /// Explicit share of the scalar problem.
    #[arg(long)]
    alpha: Option<f64>,

    #[arg(long, default_value_t = 4)]
    q: usize,

    #[arg(long, default_value_t = 3)]
    kmax: usize,

    #[arg(long, default_value = "alg1")]
    variant: Variant,

    /// Comma list of step counts, strictly increasing.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_NSTEPS)]
    nsteps: Vec<usize>,

    /// Run the pipelined executor.
    #[arg(long)]
    parallel: bool,

    /// Worker threads; must match the pipeline layout.
    #[arg(long)]
    workers: Option<usize>,

    #[arg(long)]
    out: Option<PathBuf>,

    /// Print cycle counts of the serial and pipelined schedules and exit.
    #[arg(long)]
    simulate_schedule: bool,

    #[arg(long, value_enum, default_value_t = Study::Convergence)]
    study: Study,

    /// Steps of the fine-grid reference run.
    #[arg(long, default_value_t = REFERENCE_STEPS)]
    fine_steps: usize,

    /// Write zero wallclock so reruns give byte-identical output.
    #[arg(long)]
    no_wallclock: bool,
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| HarnessError::Io {
                path: p.clone(),
                source: e,
            })?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn emit(out: &mut dyn Write, path: &Option<PathBuf>, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| HarnessError::Io {
            path: path.clone().unwrap_or_else(|| PathBuf::from("<stdout>")),
            source: e,
        })
}

fn single_problem(cli: &Cli) -> Result<ProblemSpec> {
    let id = cli
        .problem
        .as_deref()
        .ok_or_else(|| HarnessError::Config("--problem is required".into()))?;
    if cli.eps.len() > 1 {
        return Err(HarnessError::Config("a list of --eps values is only valid with --study limit".into()));
    }
    Ok(ProblemSpec::parse(id, cli.eps.first().copied(), cli.alpha)?)
}

fn study_config(cli: &Cli) -> Result<StudyConfig> {
    let mut cfg = StudyConfig::new(single_problem(cli)?, cli.variant, cli.q, cli.kmax, cli.nsteps.clone());
    cfg.parallel = cli.parallel;
    cfg.workers = cli.workers;
    cfg.fine_steps = cli.fine_steps;
    cfg.record_wallclock = !cli.no_wallclock;
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(cli: &Cli) -> Result<()> {
    if cli.variant == Variant::Limit {
        return Err(HarnessError::Config("the limiting method has no pipeline schedule".into()));
    }
    let rows = cli
        .nsteps
        .iter()
        .map(|&n| {
            let serial = simulate_schedule(Schedule::Serial, cli.kmax, n)?;
            let pipelined = simulate_schedule(Schedule::Pipelined(cli.variant), cli.kmax, n)?;
            Ok((n, serial, pipelined))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = open_output(&cli.out)?;
    emit(&mut out, &cli.out, &write_schedule(&rows))
}

fn convergence(cli: &Cli) -> Result<()> {
    let cfg = study_config(cli)?;
    let cache = ReferenceCache::from_env();
    let reference = study_reference(&cfg, &cache)?;
    let mut out = open_output(&cli.out)?;
    emit(
        &mut out,
        &cli.out,
        &format!("{}\n", convergence_header(cfg.table_kmax(), cfg.table_workers())),
    )?;
    let table = run_convergence_study(&cfg, &reference, |row| {
        emit(&mut out, &cli.out, &format!("{}\n", convergence_line(row)))
    })?;
    if table.rows.len() >= 3 {
        let slopes = estimate_order(&table.rows)?;
        let shown: Vec<String> = slopes
            .iter()
            .map(|s| s.map(|s| format!("{s:.2}")).unwrap_or_else(|| "-".into()))
            .collect();
        eprintln!("{} {} q={} kmax={}: orders [{}]", cfg.problem, cfg.variant, cfg.q, cfg.kmax, shown.join(", "));
    }
    Ok(())
}

fn speedup(cli: &Cli) -> Result<()> {
    let cfg = study_config(cli)?;
    let reports = run_speedup_study(&cfg)?;
    for r in &reports {
        eprintln!(
            "N={}: measured {:.3} on {} workers, bound {:.3}",
            r.n, r.speedup, r.workers, r.theoretical
        );
    }
    let mut out = open_output(&cli.out)?;
    emit(&mut out, &cli.out, &write_speedup(&reports))
}

fn limit(cli: &Cli) -> Result<()> {
    let id = cli
        .problem
        .as_deref()
        .ok_or_else(|| HarnessError::Config("--problem is required".into()))?;
    let eps: Vec<Option<f64>> = if cli.eps.is_empty() {
        vec![None]
    } else {
        cli.eps.iter().map(|&e| Some(e)).collect()
    };
    let problems = eps
        .into_iter()
        .map(|e| ProblemSpec::parse(id, e, cli.alpha))
        .collect::<hbpc::Result<Vec<_>>>()?;
    let mut cfg = LimitStudyConfig::new(problems, cli.q, cli.nsteps.clone());
    cfg.fine_steps = cli.fine_steps;
    let panels = run_limit_study(&cfg, &ReferenceCache::from_env())?;
    let mut out = open_output(&cli.out)?;
    emit(&mut out, &cli.out, &write_limit(&panels))
}

fn run(cli: &Cli) -> Result<()> {
    if cli.simulate_schedule {
        return simulate(cli);
    }
    match cli.study {
        Study::Convergence => convergence(cli),
        Study::Speedup => speedup(cli),
        Study::Limit => limit(cli),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hbpc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
