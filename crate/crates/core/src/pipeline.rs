//! Pipelined parallel-in-time execution.
//!
//! A block `(n, k)` is iterate `k` (all stages) at step `n`. For the
//! high-order variants worker `p` owns iterates `{2p, 2p+1}`; for `Lo` every
//! iterate has its own worker. Workers walk their blocks in increasing `n`
//! and exchange results over bounded unidirectional channels:
//!
//! - upward `p → p+1`: the full block of the highest iterate of `p` (the
//!   next iterate corrects it);
//! - downward `p+1 → p`: the last stage of the lowest iterate of `p+1`,
//!   which is the restart value of `p`'s highest iterate one step later.
//!
//! Blocks are computed by the same [`Stepper`] calls as the serial solver,
//! so results are bitwise identical.

use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, Receiver, RecvTimeoutError, Sender};

use crate::error::{Error, Result};
use crate::ode::{SplitProblem, State};
use crate::solver::{IterateBlock, RunResult, SolverConfig, StagePoint, StepTrace, Stepper, Variant};

/// Iterate `k` at step `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Block {
    pub n: usize,
    pub k: usize,
}

impl Block {
    pub fn new(n: usize, k: usize) -> Self {
        Self { n, k }
    }
}

/// Direct dependencies of a block. Blocks at step 0 only depend on the seed
/// (and on earlier iterates of the same step).
pub fn dependencies(b: Block, variant: Variant, kmax: usize) -> Vec<Block> {
    let mut deps = Vec::with_capacity(2);
    if b.k == 0 {
        if b.n > 0 {
            deps.push(Block::new(b.n - 1, variant.predictor_source()));
        }
        return deps;
    }
    deps.push(Block::new(b.n, b.k - 1));
    if b.n > 0 {
        deps.push(Block::new(b.n - 1, variant.restart_source(b.k, kmax)));
    }
    deps
}

/// Iterates owned by each worker.
pub fn worker_iterates(variant: Variant, kmax: usize) -> Result<Vec<Vec<usize>>> {
    match variant {
        Variant::Alg1 | Variant::Alg2 => {
            if kmax.is_multiple_of(2) {
                return Err(Error::InvalidConfig(format!(
                    "the pipelined executor pairs iterates and needs an odd kmax, got {kmax}"
                )));
            }
            Ok((0..kmax.div_ceil(2)).map(|p| vec![2 * p, 2 * p + 1]).collect())
        }
        Variant::Lo => Ok((0..=kmax).map(|k| vec![k]).collect()),
        Variant::Limit => Err(Error::InvalidConfig(
            "the limiting method has no pipelined form".into(),
        )),
    }
}

/// Number of workers the executor uses for a configuration.
pub fn worker_count(variant: Variant, kmax: usize) -> Result<usize> {
    worker_iterates(variant, kmax).map(|w| w.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// One worker computes every block in order.
    Serial,
    /// The pipelined worker layout of the given variant.
    Pipelined(Variant),
}

/// Synchronous cycle count: per cycle every worker completes at most one
/// block, its next owned block in `(n, iterate)` order, if all dependencies
/// finished in earlier cycles.
pub fn simulate_schedule(schedule: Schedule, kmax: usize, n_steps: usize) -> Result<usize> {
    let (variant, owned) = match schedule {
        Schedule::Serial => (Variant::Alg1, vec![(0..=kmax).collect::<Vec<_>>()]),
        Schedule::Pipelined(v) => (v, worker_iterates(v, kmax)?),
    };
    let queues: Vec<Vec<Block>> = owned
        .iter()
        .map(|its| {
            (0..n_steps)
                .flat_map(|n| its.iter().map(move |&k| Block::new(n, k)))
                .collect()
        })
        .collect();
    let total: usize = queues.iter().map(Vec::len).sum();
    let mut done = vec![vec![false; kmax + 1]; n_steps];
    let mut cursor = vec![0usize; queues.len()];
    let mut finished = 0;
    let mut cycles = 0;
    while finished < total {
        cycles += 1;
        let mut completed = Vec::new();
        for (w, queue) in queues.iter().enumerate() {
            let Some(&b) = queue.get(cursor[w]) else { continue };
            if dependencies(b, variant, kmax).iter().all(|d| done[d.n][d.k]) {
                completed.push(b);
                cursor[w] += 1;
            }
        }
        if completed.is_empty() {
            return Err(Error::Deadlock { worker: 0 });
        }
        finished += completed.len();
        for b in completed {
            done[b.n][b.k] = true;
        }
    }
    Ok(cycles)
}

/// Upper bound on the speedup of the paired pipeline over the serial run.
pub fn theoretical_speedup(kmax: usize, n_steps: usize) -> f64 {
    (n_steps * (kmax + 1)) as f64 / (2 * n_steps + kmax - 1) as f64
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub channel_capacity: usize,
    /// How long a worker waits for a message before reporting a deadlock.
    pub recv_timeout: Duration,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            channel_capacity: 4,
            recv_timeout: Duration::from_secs(600),
        }
    }
}

struct Message<T> {
    n: usize,
    payload: T,
}

enum Failure {
    Solver(Error),
    /// A neighbour went away; the root cause is reported by that worker.
    Disconnected,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Solver(e)
    }
}

struct Link<T> {
    rx: Receiver<Message<T>>,
    next_n: usize,
}

impl<T> Link<T> {
    fn recv(&mut self, worker: usize, expected_n: usize, timeout: Duration) -> std::result::Result<T, Failure> {
        match self.rx.recv_timeout(timeout) {
            Ok(msg) => {
                if msg.n != expected_n || msg.n < self.next_n {
                    return Err(Failure::Solver(Error::InvalidConfig(format!(
                        "worker {worker}: message for step {} arrived while expecting {expected_n}",
                        msg.n
                    ))));
                }
                self.next_n = msg.n + 1;
                Ok(msg.payload)
            }
            Err(RecvTimeoutError::Timeout) => Err(Failure::Solver(Error::Deadlock { worker })),
            Err(RecvTimeoutError::Disconnected) => Err(Failure::Disconnected),
        }
    }
}

struct WorkerOutput {
    iterates: Vec<usize>,
    final_points: Vec<State>,
    newton_iters: Vec<u64>,
    iter_cap_hits: u64,
    trajectory: Vec<State>,
    /// Per step and owned iterate: (newton iterations, max residual, last stage).
    traces: Vec<Vec<(u64, f64, State)>>,
}

struct Worker<'s, 'p> {
    id: usize,
    iterates: Vec<usize>,
    kmax: usize,
    n_steps: usize,
    variant: Variant,
    stepper: &'s Stepper<'p>,
    seed: StagePoint,
    up_in: Option<Link<IterateBlock>>,
    up_out: Option<Sender<Message<IterateBlock>>>,
    down_in: Option<Link<StagePoint>>,
    down_out: Option<Sender<Message<StagePoint>>>,
    /// Iterates of the previous worker that restart from one of ours.
    serves_below: Option<usize>,
    record_traces: bool,
    timeout: Duration,
}

impl Worker<'_, '_> {
    fn owns(&self, k: usize) -> bool {
        self.iterates.contains(&k)
    }

    fn slot(&self, k: usize) -> usize {
        k - self.iterates[0]
    }

    fn run(mut self) -> std::result::Result<WorkerOutput, Failure> {
        let m = self.iterates.len();
        let mut previous: Vec<StagePoint> = vec![self.seed.clone(); m];
        let mut newton_iters = vec![0u64; m];
        let mut iter_cap_hits = 0;
        let mut trajectory = Vec::new();
        let mut traces = Vec::new();

        for n in 0..self.n_steps {
            let mut blocks: Vec<IterateBlock> = Vec::with_capacity(m);
            let mut trace = Vec::new();
            for idx in 0..m {
                let k = self.iterates[idx];
                let block = if k == 0 {
                    let src = self.variant.predictor_source();
                    let src = if n == 0 {
                        &self.seed
                    } else {
                        &previous[self.slot(src)]
                    };
                    self.stepper.predict(src)?
                } else {
                    let received;
                    let prev = if self.owns(k - 1) {
                        &blocks[idx - 1]
                    } else {
                        let link = self.up_in.as_mut().expect("upward link");
                        received = link.recv(self.id, n, self.timeout)?;
                        &received
                    };
                    let r = self.variant.restart_source(k, self.kmax);
                    let downward;
                    let restart = if n == 0 {
                        &self.seed
                    } else if self.owns(r) {
                        &previous[self.slot(r)]
                    } else {
                        let link = self.down_in.as_mut().expect("downward link");
                        downward = link.recv(self.id, n - 1, self.timeout)?;
                        &downward
                    };
                    self.stepper.correct(prev, restart, self.variant.gauss_seidel())?
                };

                newton_iters[idx] += block.stats.newton_iters;
                iter_cap_hits += block.stats.iter_cap_hits;
                if self.record_traces {
                    trace.push((block.stats.newton_iters, block.stats.max_residual, block.last().w.clone()));
                }
                if self.serves_below == Some(k) && n + 1 < self.n_steps {
                    let tx = self.down_out.as_ref().expect("downward sender");
                    tx.send(Message {
                        n,
                        payload: block.last().clone(),
                    })
                    .map_err(|_| Failure::Disconnected)?;
                }
                if idx == m - 1 {
                    if let Some(tx) = &self.up_out {
                        tx.send(Message {
                            n,
                            payload: block.clone(),
                        })
                        .map_err(|_| Failure::Disconnected)?;
                    }
                }
                if k == self.kmax {
                    trajectory.push(block.last().w.clone());
                }
                blocks.push(block);
            }
            previous = blocks.iter().map(|b| b.last().clone()).collect();
            if self.record_traces {
                traces.push(trace);
            }
        }

        Ok(WorkerOutput {
            iterates: self.iterates,
            final_points: previous.into_iter().map(|p| p.w).collect(),
            newton_iters,
            iter_cap_hits,
            trajectory,
            traces,
        })
    }
}

/// Runs `Alg1`, `Alg2` or `Lo` on `workers` threads. `workers` must match
/// [`worker_count`].
pub fn integrate_parallel(p: &dyn SplitProblem, cfg: &SolverConfig, workers: usize) -> Result<RunResult> {
    integrate_parallel_with(p, cfg, workers, &PipelineOptions::default())
}

pub fn integrate_parallel_with(
    p: &dyn SplitProblem,
    cfg: &SolverConfig,
    workers: usize,
    opts: &PipelineOptions,
) -> Result<RunResult> {
    let layout = worker_iterates(cfg.variant, cfg.kmax)?;
    if workers != layout.len() {
        return Err(Error::InvalidConfig(format!(
            "{} with kmax={} runs on {} workers, got {workers}",
            cfg.variant,
            cfg.kmax,
            layout.len()
        )));
    }
    let stepper = Stepper::new(p, cfg)?;
    let started = Instant::now();
    let seed = StagePoint::new(p, p.w0())?;

    let cap = opts.channel_capacity.max(1);
    let mut up_rx: Vec<Option<Link<IterateBlock>>> = (0..workers).map(|_| None).collect();
    let mut up_tx: Vec<Option<Sender<Message<IterateBlock>>>> = (0..workers).map(|_| None).collect();
    let mut down_rx: Vec<Option<Link<StagePoint>>> = (0..workers).map(|_| None).collect();
    let mut down_tx: Vec<Option<Sender<Message<StagePoint>>>> = (0..workers).map(|_| None).collect();
    let mut serves_below: Vec<Option<usize>> = vec![None; workers];
    for w in 1..workers {
        let (tx, rx) = bounded(cap);
        up_tx[w - 1] = Some(tx);
        up_rx[w] = Some(Link { rx, next_n: 0 });
        // Does an iterate of worker w−1 restart from an iterate of worker w?
        let needed = layout[w - 1]
            .iter()
            .map(|&k| cfg.variant.restart_source(k, cfg.kmax))
            .find(|r| layout[w].contains(r));
        if let Some(r) = needed {
            let (tx, rx) = bounded(cap);
            down_tx[w] = Some(tx);
            down_rx[w - 1] = Some(Link { rx, next_n: 0 });
            serves_below[w] = Some(r);
        }
    }

    let outputs: Vec<std::result::Result<WorkerOutput, Failure>> = std::thread::scope(|scope| {
        let handles: Vec<_> = layout
            .iter()
            .enumerate()
            .map(|(id, iterates)| {
                let worker = Worker {
                    id,
                    iterates: iterates.clone(),
                    kmax: cfg.kmax,
                    n_steps: cfg.n_steps,
                    variant: cfg.variant,
                    stepper: &stepper,
                    seed: seed.clone(),
                    up_in: up_rx[id].take(),
                    up_out: up_tx[id].take(),
                    down_in: down_rx[id].take(),
                    down_out: down_tx[id].take(),
                    serves_below: serves_below[id],
                    record_traces: cfg.record_traces,
                    timeout: opts.recv_timeout,
                };
                scope.spawn(move || worker.run())
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("pipeline worker panicked"))
            .collect()
    });
    let wallclock = started.elapsed();

    let mut ok = Vec::with_capacity(workers);
    let mut first_error = None;
    let mut disconnected = false;
    for out in outputs {
        match out {
            Ok(o) => ok.push(o),
            Err(Failure::Solver(e)) => {
                first_error.get_or_insert(e);
            }
            Err(Failure::Disconnected) => disconnected = true,
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    if disconnected {
        return Err(Error::InvalidConfig("pipeline worker hung up without an error".into()));
    }

    let mut final_iterates = vec![Vec::new(); cfg.kmax + 1];
    let mut newton_iters = vec![0u64; cfg.kmax + 1];
    let mut iter_cap_hits = 0;
    let mut trajectory = Vec::new();
    let mut traces: Vec<StepTrace> = if cfg.record_traces {
        (0..cfg.n_steps)
            .map(|_| StepTrace {
                newton_iters: vec![0; cfg.kmax + 1],
                max_residual: vec![0.0; cfg.kmax + 1],
                last_stage: vec![Vec::new(); cfg.kmax + 1],
            })
            .collect()
    } else {
        Vec::new()
    };
    for out in ok {
        for (i, &k) in out.iterates.iter().enumerate() {
            final_iterates[k] = out.final_points[i].clone();
            newton_iters[k] = out.newton_iters[i];
        }
        iter_cap_hits += out.iter_cap_hits;
        if !out.trajectory.is_empty() {
            trajectory = out.trajectory;
        }
        for (n, step) in out.traces.into_iter().enumerate() {
            for (i, (iters, res, w)) in step.into_iter().enumerate() {
                let k = out.iterates[i];
                traces[n].newton_iters[k] = iters;
                traces[n].max_residual[k] = res;
                traces[n].last_stage[k] = w;
            }
        }
    }

    Ok(RunResult {
        variant: cfg.variant,
        q: cfg.q,
        kmax: cfg.kmax,
        n_steps: cfg.n_steps,
        dt: stepper.dt,
        final_iterates,
        trajectory,
        newton_iters,
        iter_cap_hits,
        sweeps: Vec::new(),
        traces,
        wallclock,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{PareschiRusso, VanDerPol, Zero};
    use crate::solver::integrate;
    use crate::solver::tests::HalfLine;
    use std::collections::{HashMap, HashSet};

    #[test]
    fn alg2_dependencies() {
        let deps: HashSet<_> = dependencies(Block::new(3, 2), Variant::Alg2, 5).into_iter().collect();
        assert_eq!(deps, HashSet::from([Block::new(3, 1), Block::new(2, 3)]));
        assert_eq!(
            dependencies(Block::new(3, 0), Variant::Alg2, 5),
            vec![Block::new(2, 1)]
        );
        assert_eq!(
            dependencies(Block::new(3, 0), Variant::Alg1, 5),
            vec![Block::new(2, 0)]
        );
        // The last iterate closes the recursion on itself.
        let deps: HashSet<_> = dependencies(Block::new(3, 5), Variant::Alg1, 5).into_iter().collect();
        assert_eq!(deps, HashSet::from([Block::new(3, 4), Block::new(2, 5)]));
    }

    #[test]
    fn lo_dependencies() {
        let deps: HashSet<_> = dependencies(Block::new(4, 3), Variant::Lo, 9).into_iter().collect();
        assert_eq!(deps, HashSet::from([Block::new(4, 2), Block::new(3, 3)]));
    }

    #[test]
    fn first_step_depends_on_seed_only() {
        for variant in [Variant::Alg1, Variant::Alg2, Variant::Lo] {
            for k in 0..=7 {
                for d in dependencies(Block::new(0, k), variant, 7) {
                    assert_eq!(d, Block::new(0, k - 1));
                }
            }
        }
    }

    /// Kahn's algorithm over all blocks of a small grid.
    #[test]
    fn dependency_graph_is_acyclic() {
        for variant in [Variant::Alg1, Variant::Alg2, Variant::Lo] {
            for kmax in [1, 3, 5, 8] {
                let n_steps = 6;
                let blocks: Vec<Block> = (0..n_steps)
                    .flat_map(|n| (0..=kmax).map(move |k| Block::new(n, k)))
                    .collect();
                let mut indegree: HashMap<Block, usize> = HashMap::new();
                let mut users: HashMap<Block, Vec<Block>> = HashMap::new();
                for &b in &blocks {
                    let deps = dependencies(b, variant, kmax);
                    indegree.insert(b, deps.len());
                    for d in deps {
                        users.entry(d).or_default().push(b);
                    }
                }
                let mut ready: Vec<Block> = blocks.iter().copied().filter(|b| indegree[b] == 0).collect();
                let mut visited = 0;
                while let Some(b) = ready.pop() {
                    visited += 1;
                    for u in users.get(&b).cloned().unwrap_or_default() {
                        let e = indegree.get_mut(&u).unwrap();
                        *e -= 1;
                        if *e == 0 {
                            ready.push(u);
                        }
                    }
                }
                assert_eq!(visited, blocks.len(), "{variant} kmax={kmax}");
            }
        }
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(simulate_schedule(Schedule::Pipelined(Variant::Alg1), 3, 100).unwrap(), 202);
        assert_eq!(simulate_schedule(Schedule::Pipelined(Variant::Alg2), 71, 1).unwrap(), 72);
        assert_eq!(simulate_schedule(Schedule::Serial, 9, 50).unwrap(), 500);
        assert_eq!(simulate_schedule(Schedule::Pipelined(Variant::Lo), 9, 50).unwrap(), 59);
        assert!(simulate_schedule(Schedule::Pipelined(Variant::Alg1), 4, 10).is_err());
    }

    #[test]
    fn theoretical_speedup_values() {
        assert!((theoretical_speedup(71, 1000) - 72_000.0 / 2070.0).abs() < 1e-12);
        assert!((theoretical_speedup(3, 1_000_000_000) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn even_kmax_rejected() {
        let cfg = SolverConfig::new(Variant::Alg2, 4, 4, 10);
        assert!(matches!(
            integrate_parallel(&Zero, &cfg, 2),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn wrong_worker_count_rejected() {
        let cfg = SolverConfig::new(Variant::Alg2, 4, 3, 10);
        assert!(integrate_parallel(&Zero, &cfg, 3).is_err());
    }

    #[test]
    fn matches_serial_bitwise() {
        let p = PareschiRusso { eps: 0.1 };
        for variant in [Variant::Alg1, Variant::Alg2, Variant::Lo] {
            for (q, kmax) in [(4, 1), (6, 3), (8, 5)] {
                let mut cfg = SolverConfig::new(variant, q, kmax, 12);
                cfg.record_traces = true;
                let serial = integrate(&p, &cfg).unwrap();
                let workers = worker_count(variant, kmax).unwrap();
                let parallel = integrate_parallel(&p, &cfg, workers).unwrap();
                assert!(serial.same_numerics(&parallel), "{variant} q={q} kmax={kmax}");
                assert_eq!(serial.traces, parallel.traces);
            }
        }
    }

    #[test]
    fn tiny_channels_do_not_deadlock() {
        let p = VanDerPol { eps: 0.1 };
        let cfg = SolverConfig::new(Variant::Alg2, 4, 7, 30);
        let opts = PipelineOptions {
            channel_capacity: 1,
            recv_timeout: Duration::from_secs(60),
        };
        let serial = integrate(&p, &cfg).unwrap();
        let parallel = integrate_parallel_with(&p, &cfg, 4, &opts).unwrap();
        assert!(serial.same_numerics(&parallel));
    }

    #[test]
    fn repeated_runs_do_not_interfere() {
        let p = PareschiRusso { eps: 1.0 };
        let cfg = SolverConfig::new(Variant::Alg1, 4, 3, 10);
        let first = integrate_parallel(&p, &cfg, 2).unwrap();
        for _ in 0..3 {
            assert!(first.same_numerics(&integrate_parallel(&p, &cfg, 2).unwrap()));
        }
    }

    #[test]
    fn worker_errors_propagate() {
        let cfg = SolverConfig::new(Variant::Alg2, 4, 3, 4);
        assert!(matches!(integrate(&HalfLine, &cfg), Err(Error::NonFinite(_))));
        assert!(matches!(integrate_parallel(&HalfLine, &cfg, 2), Err(Error::NonFinite(_))));
    }
}
