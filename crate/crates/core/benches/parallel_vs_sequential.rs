use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dirac_mech::induced;
use dirac_mech::integrator::{self, IntegratorConfig, SweepJob};
use dirac_mech::par::Mode;
use dirac_mech::selftest::{self, SelftestConfig};
use dirac_mech::systems::{self, Params};
use nalgebra::DVector;

const MODES: [(&str, Mode); 2] = [("sequential", Mode::Sequential), ("parallel", Mode::Parallel)];

fn sweep_jobs() -> Vec<SweepJob> {
    (0..16)
        .map(|i| {
            let mut p = Params::new();
            p.insert("k1".into(), 1.0 + 0.1 * i as f64);
            let system = systems::build_builtin("mass-spring", &p).unwrap();
            let q0 = DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
            let initial = integrator::project_initial(&system, &q0, &DVector::zeros(4)).unwrap();
            SweepJob {
                system,
                initial,
                config: IntegratorConfig {
                    h: 0.01,
                    rank_samples: 0,
                    ..Default::default()
                },
                t_final: 2.0,
            }
        })
        .collect()
}

fn bench_sweep(c: &mut Criterion) {
    let jobs = sweep_jobs();
    let mut g = c.benchmark_group("sweep");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_with_input(BenchmarkId::new("mass-spring-x16", name), &mode, |b, &m| {
            b.iter(|| integrator::sweep(&jobs, m))
        });
    }
    g.finish();
}

fn bench_rank_survey(c: &mut Criterion) {
    let sys = systems::build_builtin("rolling-ball", &Params::new()).unwrap();
    let n = sys.config_dim();
    let samples: Vec<_> = (0..256)
        .map(|i| {
            let x = i as f64 * 0.01;
            let q = DVector::from_fn(n, |j, _| (x + j as f64).sin());
            (q, DVector::zeros(n))
        })
        .collect();
    let mut g = c.benchmark_group("rank-survey");
    for (name, mode) in MODES {
        g.bench_with_input(BenchmarkId::new("rolling-ball-256", name), &mode, |b, &m| {
            b.iter(|| induced::survey_ranks(sys.spec(), &samples, m).unwrap())
        });
    }
    g.finish();
}

fn bench_selftest(c: &mut Criterion) {
    let mut g = c.benchmark_group("selftest");
    g.sample_size(10);
    for (name, mode) in MODES {
        let cfg = SelftestConfig {
            scale: 0.2,
            mode,
            ..Default::default()
        };
        g.bench_with_input(BenchmarkId::new("all-suites", name), &cfg, |b, cfg| {
            b.iter(|| selftest::run_all(cfg))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_sweep, bench_rank_survey, bench_selftest);
criterion_main!(benches);
