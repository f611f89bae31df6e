use hbpc::ode::max_abs_diff;
use hbpc::pipeline::{
    dependencies, integrate_parallel, simulate_schedule, worker_count, Block, Schedule,
};
use hbpc::problems::{Linear, PareschiRusso, ScalarPow, VanDerPol, Zero};
use hbpc::{integrate, SolverConfig, SplitProblem, TwoDerivativeTableau, Variant};
use proptest::prelude::*;

fn problem(which: usize, eps: f64) -> Box<dyn SplitProblem> {
    match which {
        0 => Box::new(PareschiRusso { eps }),
        1 => Box::new(VanDerPol { eps }),
        2 => Box::new(ScalarPow { alpha: 0.2 }),
        _ => Box::new(Linear {
            lambda: -1.0 / eps,
            t_end: 1.0,
        }),
    }
}

fn pipelined_variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::Alg1), Just(Variant::Alg2), Just(Variant::Lo)]
}

fn order() -> impl Strategy<Value = usize> {
    prop_oneof![Just(4usize), Just(6), Just(8)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn update_is_the_last_iterate(
        which in 0usize..4,
        eps in 0.05f64..1.0,
        variant in pipelined_variant(),
        q in order(),
        kmax in 1usize..6,
        n in 1usize..12,
    ) {
        let p = problem(which, eps);
        let run = integrate(p.as_ref(), &SolverConfig::new(variant, q, kmax, n)).unwrap();
        prop_assert_eq!(run.trajectory.len(), n);
        prop_assert_eq!(run.final_iterates.len(), kmax + 1);
        prop_assert_eq!(run.final_state(), &run.final_iterates[kmax]);
    }

    #[test]
    fn pipelined_equals_serial(
        which in 0usize..4,
        eps in 0.05f64..1.0,
        variant in pipelined_variant(),
        q in order(),
        half in 0usize..4,
        n in 1usize..10,
    ) {
        let kmax = 2 * half + 1;
        let p = problem(which, eps);
        let mut cfg = SolverConfig::new(variant, q, kmax, n);
        cfg.record_traces = true;
        let serial = integrate(p.as_ref(), &cfg).unwrap();
        let workers = worker_count(variant, kmax).unwrap();
        let parallel = integrate_parallel(p.as_ref(), &cfg, workers).unwrap();
        prop_assert!(serial.same_numerics(&parallel));
    }

    #[test]
    fn schedule_cycle_counts(half in 0usize..36, n in 1usize..120) {
        let kmax = 2 * half + 1;
        prop_assert_eq!(simulate_schedule(Schedule::Serial, kmax, n).unwrap(), n * (kmax + 1));
        for v in [Variant::Alg1, Variant::Alg2] {
            prop_assert_eq!(simulate_schedule(Schedule::Pipelined(v), kmax, n).unwrap(), 2 * n + kmax - 1);
        }
        prop_assert_eq!(simulate_schedule(Schedule::Pipelined(Variant::Lo), kmax, n).unwrap(), n + kmax);
    }

    #[test]
    fn dependencies_point_backwards(
        variant in pipelined_variant(),
        kmax in 1usize..20,
        n in 0usize..50,
        k_seed in 0usize..20,
    ) {
        let b = Block::new(n, k_seed % (kmax + 1));
        for d in dependencies(b, variant, kmax) {
            prop_assert!(d.k <= kmax);
            prop_assert!(d.n < b.n || (d.n == b.n && d.k < b.k));
        }
    }

    #[test]
    fn zero_problem_is_stationary(
        variant in prop_oneof![Just(Variant::Alg1), Just(Variant::Alg2), Just(Variant::Lo), Just(Variant::Limit)],
        q in order(),
        kmax in 1usize..6,
        n in 1usize..20,
    ) {
        let run = integrate(&Zero, &SolverConfig::new(variant, q, kmax, n)).unwrap();
        for w in &run.final_iterates {
            prop_assert_eq!(w, &Zero.w0());
        }
    }

    #[test]
    fn quadrature_integrates_polynomials(
        q in order(),
        coeffs in prop::collection::vec(-2.0f64..2.0, 8),
        dt in 0.1f64..2.0,
    ) {
        let tab = TwoDerivativeTableau::builtin(q).unwrap();
        let degree = q - 1;
        let f = |t: f64| (0..=degree).map(|i| coeffs[i] * t.powi(i as i32)).sum::<f64>();
        let df = |t: f64| (1..=degree).map(|i| i as f64 * coeffs[i] * t.powi(i as i32 - 1)).sum::<f64>();
        let integral = |t: f64| (0..=degree).map(|i| coeffs[i] * t.powi(i as i32 + 1) / (i + 1) as f64).sum::<f64>();
        let phis: Vec<Vec<f64>> = tab.c.iter().map(|c| vec![f(c * dt)]).collect();
        let dphis: Vec<Vec<f64>> = tab.c.iter().map(|c| vec![df(c * dt)]).collect();
        for l in 0..tab.stages() {
            let got = tab.quadrature(l, dt, &phis, &dphis)[0];
            let want = integral(tab.c[l] * dt);
            let scale = (0..=degree).map(|i| coeffs[i].abs() * dt.powi(i as i32 + 1)).sum::<f64>().max(1e-300);
            prop_assert!((got - want).abs() <= 1e-12 * scale, "q={} l={} got {} want {}", q, l, got, want);
        }
    }
}

#[test]
fn many_sweeps_reach_the_limit() {
    let p = Linear {
        lambda: -2.0,
        t_end: 1.0,
    };
    for q in [4, 6, 8] {
        let limit = integrate(&p, &SolverConfig::new(Variant::Limit, q, 1, 10)).unwrap();
        let swept = integrate(&p, &SolverConfig::new(Variant::Alg2, q, 41, 10)).unwrap();
        let diff = max_abs_diff(limit.final_state(), swept.final_state());
        assert!(diff <= 1e-12, "q={q}: {diff:e}");
    }
}
