//! Property suites over random structures, runnable from the command line.
//!
//! Every suite drives a proptest [`TestRunner`] seeded from a single `u64`,
//! so a run is reproducible and a failing case is shrunk before it is
//! reported. Suites are independent and run in parallel.

use std::ops::RangeInclusive;
use std::sync::atomic::{AtomicBool, AtomicU32, Ordering};
use std::time::{Duration, Instant};

use dirac_oracle::{self as oracle, QMatrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestError, TestRng, TestRunner};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dirac::{self, isotropy_defect, LinearDirac, PortDims, TwoFormOnDistribution, ISOTROPY_TOL};
use crate::induced;
use crate::integrator::{self, IntegratorConfig, Scheme};
use crate::lagrange::{self, PontryaginState};
use crate::par::{self, Mode};
use crate::subspace::Subspace;
use crate::systems::{self, Params};

/// A Dirac structure described by a spanning set for its distribution and
/// the upper triangle of a skew form.
#[derive(Clone, Debug, PartialEq)]
pub struct DiracSample {
    pub n: usize,
    pub dist: Vec<Vec<f64>>,
    pub form_upper: Vec<f64>,
}

impl DiracSample {
    pub fn distribution(&self) -> Subspace {
        let cols = DMatrix::from_fn(self.n, self.dist.len(), |i, j| self.dist[j][i]);
        Subspace::span(&cols).expect("sample dimension is positive")
    }

    pub fn form(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n, self.n);
        let mut k = 0;
        for i in 0..self.n {
            for j in i + 1..self.n {
                w[(i, j)] = self.form_upper[k];
                w[(j, i)] = -self.form_upper[k];
                k += 1;
            }
        }
        w
    }

    pub fn dirac(&self) -> crate::Result<LinearDirac> {
        dirac::from_form_and_distribution(&TwoFormOnDistribution::new(self.distribution(), self.form())?)
    }

    /// Exact counterpart; `None` unless every entry is an integer.
    pub fn exact(&self) -> Option<QMatrix> {
        let int = |x: f64| (x.fract() == 0.0 && x.abs() < 1e15).then_some(x as i64);
        let cols: Option<Vec<Vec<i64>>> = self.dist.iter().map(|c| c.iter().map(|&x| int(x)).collect()).collect();
        let form = self.form();
        let rows: Option<Vec<Vec<i64>>> = (0..self.n)
            .map(|i| (0..self.n).map(|j| int(form[(i, j)])).collect())
            .collect();
        let d = QMatrix::from_int_columns(&cols?, self.n);
        let w = QMatrix::from_int_rows_with_cols(&rows?, self.n);
        Some(oracle::dirac_from_form(&d, &w))
    }
}

fn sample_of(n: usize, entry: BoxedStrategy<f64>) -> impl Strategy<Value = DiracSample> {
    let cols = prop::collection::vec(prop::collection::vec(entry.clone(), n), 0..=n);
    let form = prop::collection::vec(entry, n * n.saturating_sub(1) / 2);
    (cols, form).prop_map(move |(dist, form_upper)| DiracSample { n, dist, form_upper })
}

fn int_entry() -> BoxedStrategy<f64> {
    (-2i32..=2).prop_map(f64::from).boxed()
}

fn float_entry() -> BoxedStrategy<f64> {
    (-1.0f64..1.0).boxed()
}

/// Integer-valued samples of dimension `n`.
pub fn int_sample(n: usize) -> impl Strategy<Value = DiracSample> {
    sample_of(n, int_entry())
}

/// Samples with real entries in `[-1, 1)`.
pub fn float_sample(n: usize) -> impl Strategy<Value = DiracSample> {
    sample_of(n, float_entry())
}

/// Mixed integer and real samples with `n` in `dims`.
pub fn any_sample(dims: RangeInclusive<usize>) -> impl Strategy<Value = DiracSample> {
    dims.prop_flat_map(|n| prop_oneof![int_sample(n), float_sample(n)])
}

pub fn pair(dims: RangeInclusive<usize>) -> impl Strategy<Value = (DiracSample, DiracSample)> {
    dims.prop_flat_map(|n| (int_sample(n), int_sample(n)))
}

pub fn triple(dims: RangeInclusive<usize>) -> impl Strategy<Value = (DiracSample, DiracSample, DiracSample)> {
    dims.prop_flat_map(|n| {
        (
            prop_oneof![int_sample(n), float_sample(n)],
            prop_oneof![int_sample(n), float_sample(n)],
            prop_oneof![int_sample(n), float_sample(n)],
        )
    })
}

/// Factor structures on `V1 × Vs` and `Vs × V2`, each factor of dimension ≤ 3.
pub fn factored() -> impl Strategy<Value = (PortDims, DiracSample, DiracSample)> {
    (0usize..=3, 0usize..=3, 0usize..=3)
        .prop_filter("non-empty factors", |&(a, s, b)| a + s > 0 && s + b > 0 && a + b > 0)
        .prop_flat_map(|(a, s, b)| {
            let dims = PortDims {
                outer1: a,
                shared: s,
                outer2: b,
            };
            (Just(dims), int_sample(a + s), int_sample(s + b))
        })
}

fn fail(msg: impl Into<String>) -> TestCaseError {
    TestCaseError::fail(msg.into())
}

fn lift<T>(r: crate::Result<T>) -> Result<T, TestCaseError> {
    r.map_err(|e| fail(e.to_string()))
}

fn same(a: &LinearDirac, b: &LinearDirac, what: &str) -> Result<(), TestCaseError> {
    if lift(a.equals(b))? {
        Ok(())
    } else {
        Err(fail(format!("{what}: structures differ")))
    }
}

/// Dimension `n` and `D = D^⊥` to `1e-10`.
pub fn check_validity(s: &DiracSample) -> Result<(), TestCaseError> {
    let d = lift(s.dirac())?;
    let dim = d.subspace().dim();
    if dim != s.n {
        return Err(fail(format!("dimension {dim}, expected {}", s.n)));
    }
    let defect = lift(isotropy_defect(d.subspace()))?;
    if defect > ISOTROPY_TOL || !dirac::validate_dirac(d.subspace()) {
        return Err(fail(format!("not Dirac, isotropy defect {defect:e}")));
    }
    Ok(())
}

/// Commutativity, associativity and the identity law.
pub fn check_bowtie_laws(a: &DiracSample, b: &DiracSample, c: &DiracSample) -> Result<(), TestCaseError> {
    let (da, db, dc) = (lift(a.dirac())?, lift(b.dirac())?, lift(c.dirac())?);
    let ab = lift(dirac::bowtie(&da, &db))?;
    same(&ab, &lift(dirac::bowtie(&db, &da))?, "commutativity")?;
    let left = lift(dirac::bowtie(&ab, &dc))?;
    let right = lift(dirac::bowtie(&da, &lift(dirac::bowtie(&db, &dc))?))?;
    same(&left, &right, "associativity")?;
    let id = lift(dirac::identity_structure(a.n))?;
    same(&lift(dirac::bowtie(&da, &id))?, &da, "identity")
}

/// The distribution of `Da ⋈ Db` is `Δa ∩ Δb` and its form is the sum.
pub fn check_bowtie_structure(a: &DiracSample, b: &DiracSample) -> Result<(), TestCaseError> {
    let (da, db) = (lift(a.dirac())?, lift(b.dirac())?);
    let w = lift(dirac::extract_two_form(&lift(dirac::bowtie(&da, &db))?))?;
    let delta = lift(a.distribution().intersect(&b.distribution()))?;
    if !lift(w.distribution().equals(&delta))? {
        return Err(fail("distribution is not the intersection"));
    }
    let sum = a.form() + b.form();
    for (x, y) in delta.basis().column_iter().flat_map(|x| delta.basis().column_iter().map(move |y| (x, y))) {
        let (x, y) = (x.into_owned(), y.into_owned());
        let got = w.eval(&x, &y);
        let want = x.dot(&(&sum * &y));
        if (got - want).abs() > 1e-8 * (1.0 + want.abs()) {
            return Err(fail(format!("form mismatch {got} vs {want}")));
        }
    }
    Ok(())
}

/// Elimination and pull-back agree, and both match the exact oracle.
pub fn check_bowtie_routes(a: &DiracSample, b: &DiracSample) -> Result<(), TestCaseError> {
    let (da, db) = (lift(a.dirac())?, lift(b.dirac())?);
    let x = lift(dirac::bowtie(&da, &db))?;
    let y = lift(dirac::bowtie_via_pullback(&da, &db))?;
    same(&x, &y, "elimination vs pull-back")?;
    if let (Some(ea), Some(eb)) = (a.exact(), b.exact()) {
        let exact = oracle::bowtie(&ea, &eb);
        let cols = exact.to_f64_columns();
        let m = DMatrix::from_fn(2 * a.n, cols.len(), |i, j| cols[j][i]);
        let e = lift(LinearDirac::from_columns(&m))?;
        same(&x, &e, "numeric vs exact")?;
    }
    Ok(())
}

pub fn check_composition(dims: PortDims, a: &DiracSample, b: &DiracSample) -> Result<(), TestCaseError> {
    let (d1, d2) = (lift(a.dirac())?, lift(b.dirac())?);
    let direct = lift(dirac::compose(&d1, &d2, dims))?;
    let via = lift(dirac::compose_via_interconnection(&d1, &d2, dims))?;
    same(&direct, &via, "composition")
}

fn point_strategy(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(-1.0f64..1.0, n),
        prop::collection::vec(-1.0f64..1.0, n),
    )
}

/// `interconnect_at` against the canonical form on the lifted constraint,
/// plus maximality.
pub fn check_interconnection(sys: &lagrange::LagrangeDiracSystem, q: &[f64], p: &[f64]) -> Result<(), TestCaseError> {
    let (q, p) = (DVector::from_column_slice(q), DVector::from_column_slice(p));
    let d = lift(induced::interconnect_at(sys.spec(), &q, &p))?;
    let e = lift(induced::expected_interconnection(sys.spec(), &q, &p))?;
    if d.subspace().dim() != 2 * sys.config_dim() {
        return Err(fail("interconnected structure is not maximal"));
    }
    same(&d, &e, "interconnection identity")
}

pub fn check_gradients(l: &lagrange::LagrangianModel, q: &[f64], v: &[f64]) -> Result<(), TestCaseError> {
    let err = l.gradient_check(&DVector::from_column_slice(q), &DVector::from_column_slice(v));
    if err <= 1e-6 {
        Ok(())
    } else {
        Err(fail(format!("{}: relative gradient error {err:e}", l.name())))
    }
}

/// A state solving the equations exactly, built from random data.
pub fn consistent_state(
    sys: &lagrange::LagrangeDiracSystem,
    q: &[f64],
    v: &[f64],
    mu: &[f64],
) -> crate::Result<(PontryaginState, DVector<f64>, DVector<f64>)> {
    let q = DVector::from_column_slice(q);
    let v = sys.spec().constraint_distribution(&q)?.projector() * DVector::from_column_slice(v);
    let (gq, gv) = sys.gradients(&q, &v);
    let mu = DVector::from_column_slice(mu);
    let f = sys.force(&q, &v, &gv);
    let pdot = gq + f + sys.omega(&q).transpose() * &mu;
    let state = PontryaginState {
        t: 0.0,
        q,
        v: v.clone(),
        p: gv,
        mu,
    };
    Ok((state, v, pdot))
}

/// Membership holds at a solution, fails after an inadmissible kick, and
/// agrees with a vanishing residual.
pub fn check_membership(
    sys: &lagrange::LagrangeDiracSystem,
    q: &[f64],
    v: &[f64],
    mu: &[f64],
) -> Result<(), TestCaseError> {
    let (state, qdot, pdot) = lift(consistent_state(sys, q, v, mu))?;
    let r = lift(lagrange::residual(sys, &state, &qdot, &pdot))?.amax();
    if r > 1e-10 {
        return Err(fail(format!("residual {r:e} at a constructed solution")));
    }
    if !lift(lagrange::check_membership(sys, &state, &qdot, &pdot, 1e-8))? {
        return Err(fail("solution rejected by membership"));
    }
    // a unit kick in ṗ along an admissible direction leaves Δ°
    let delta = lift(sys.spec().constraint_distribution(&state.q))?;
    if delta.dim() > 0 {
        let kick = delta.basis().column(0).into_owned();
        if lift(lagrange::check_membership(sys, &state, &qdot, &(&pdot + kick), 1e-8))? {
            return Err(fail("perturbed rates accepted"));
        }
    }
    Ok(())
}

/// Interface forces recovered along a short mass-spring run balance and make
/// each half solve its own forced equations.
pub fn check_splitting(params: &Params, x: &[f64], steps: usize) -> Result<(), TestCaseError> {
    let sys = lift(systems::build_builtin("mass-spring", params))?;
    let q0 = DVector::from_vec(vec![x[0], x[1], x[1], x[2]]);
    let v0 = DVector::from_vec(vec![x[3], x[4], x[4], x[5]]);
    let mut state = lift(integrator::project_initial(&sys, &q0, &v0))?;
    let cfg = IntegratorConfig {
        h: 0.01,
        ..Default::default()
    };
    for _ in 0..steps {
        let next = lift(integrator::step(&sys, &state, &cfg))?.state;
        let qdot = (&next.q - &state.q) / cfg.h;
        let pdot = (&next.p - &state.p) / cfg.h;
        let mid = PontryaginState {
            t: state.t + 0.5 * cfg.h,
            q: (&state.q + &next.q) * 0.5,
            v: (&state.v + &next.v) * 0.5,
            p: (&state.p + &next.p) * 0.5,
            mu: next.mu.clone(),
        };
        let forces = lagrange::interface_forces(&sys, &mid.q, &mid.mu);
        let (f2, f2bar) = (forces.per_subsystem[0][1], forces.per_subsystem[1][0]);
        if (f2 + f2bar).abs() > 1e-9 {
            return Err(fail(format!("interface forces do not balance: {f2} + {f2bar}")));
        }
        for i in 0..2 {
            let r = lift(lagrange::subsystem_residual(&sys, i, &mid, &qdot, &pdot, &forces.per_subsystem[i]))?;
            // the Legendre rows belong to the new state, not the midpoint
            let n = sys.slices()[i].len();
            let dynamic = r.rows(0, 2 * n).amax();
            if dynamic > 1e-8 {
                return Err(fail(format!("subsystem {i} residual {dynamic:e}")));
            }
        }
        state = next;
    }
    Ok(())
}

/// Ratio of max errors against the closed-form oscillator at `h` and `h/2`.
pub fn convergence_ratio(scheme: Scheme, k: f64, q0: f64, v0: f64, h: f64, t_final: f64) -> crate::Result<f64> {
    let mut params = Params::new();
    params.insert("k".into(), k);
    let sys = systems::build_builtin("harmonic", &params)?;
    let w = k.sqrt();
    let exact = |t: f64| q0 * (w * t).cos() + v0 / w * (w * t).sin();
    let s0 = integrator::project_initial(&sys, &DVector::from_vec(vec![q0]), &DVector::from_vec(vec![v0]))?;
    let err = |h: f64| -> crate::Result<f64> {
        let cfg = IntegratorConfig {
            scheme,
            h,
            rank_samples: 0,
            ..Default::default()
        };
        let traj = integrator::simulate(&sys, &s0, &cfg, t_final).map_err(|f| f.error)?;
        Ok(traj.states.iter().map(|s| (s.q[0] - exact(s.t)).abs()).fold(0.0, f64::max))
    };
    Ok(err(h)? / err(h / 2.0)?)
}

pub fn check_convergence(k: f64, q0: f64, v0: f64) -> Result<(), TestCaseError> {
    let mid = lift(convergence_ratio(Scheme::ImplicitMidpoint, k, q0, v0, 0.01, 10.0))?;
    if !(3.5..=4.5).contains(&mid) {
        return Err(fail(format!("midpoint ratio {mid}")));
    }
    let be = lift(convergence_ratio(Scheme::BackwardEuler, k, q0, v0, 0.01, 10.0))?;
    if !(1.8..=2.2).contains(&be) {
        return Err(fail(format!("backward Euler ratio {be}")));
    }
    Ok(())
}

/// Outcome of one suite.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: u32,
    pub passed: u32,
    /// Shrunk failing input and reason.
    pub failure: Option<String>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SelftestConfig {
    pub seed: u64,
    /// Multiplies every suite's case count; at least one case always runs.
    pub scale: f64,
    pub mode: Mode,
}

impl Default for SelftestConfig {
    fn default() -> Self {
        SelftestConfig {
            seed: 0x5eed,
            scale: 1.0,
            mode: Mode::Parallel,
        }
    }
}

/// Counts passing cases until the first failure.
struct Tally {
    passed: AtomicU32,
    failed: AtomicBool,
}

impl Tally {
    fn new() -> Self {
        Tally {
            passed: AtomicU32::new(0),
            failed: AtomicBool::new(false),
        }
    }

    fn record(&self, r: Result<(), TestCaseError>) -> Result<(), TestCaseError> {
        if self.failed.load(Ordering::Relaxed) {
            return r;
        }
        match &r {
            Ok(()) => {
                self.passed.fetch_add(1, Ordering::Relaxed);
            }
            Err(_) => self.failed.store(true, Ordering::Relaxed),
        }
        r
    }
}

struct Runner {
    cases: u32,
    requested: AtomicU32,
    seed: [u8; 32],
    tally: Tally,
}

impl Runner {
    fn runner(&self, cases: u32) -> TestRunner {
        let config = Config {
            cases,
            failure_persistence: None,
            max_shrink_iters: 2048,
            ..Config::default()
        };
        TestRunner::new_with_rng(config, TestRng::from_seed(RngAlgorithm::ChaCha, &self.seed))
    }

    fn run<S, F>(&self, strategy: S, test: F) -> Result<(), String>
    where
        S: Strategy,
        S::Value: std::fmt::Debug,
        F: Fn(S::Value) -> Result<(), TestCaseError>,
    {
        self.run_n(self.cases, strategy, test)
    }

    fn run_n<S, F>(&self, cases: u32, strategy: S, test: F) -> Result<(), String>
    where
        S: Strategy,
        S::Value: std::fmt::Debug,
        F: Fn(S::Value) -> Result<(), TestCaseError>,
    {
        self.requested.fetch_add(cases, Ordering::Relaxed);
        match self.runner(cases).run(&strategy, |v| self.tally.record(test(v))) {
            Ok(()) => Ok(()),
            Err(TestError::Fail(reason, value)) => Err(format!("{reason}; minimal input: {value:?}")),
            Err(TestError::Abort(reason)) => Err(format!("aborted: {reason}")),
        }
    }
}

type SuiteFn = fn(&Runner) -> Result<(), String>;

struct Suite {
    name: &'static str,
    cases: u32,
    run: SuiteFn,
}

fn builtin_systems() -> Vec<(&'static str, lagrange::LagrangeDiracSystem)> {
    systems::list_builtins()
        .iter()
        .map(|t| (t.name, t.build(&Params::new()).expect("builtin defaults are valid")))
        .collect()
}

const SUITES: &[Suite] = &[
    Suite {
        name: "dirac-validity",
        cases: 500,
        run: |r| r.run(any_sample(1..=6), |s| check_validity(&s)),
    },
    Suite {
        name: "bowtie-laws",
        cases: 200,
        run: |r| r.run(triple(1..=4), |(a, b, c)| check_bowtie_laws(&a, &b, &c)),
    },
    Suite {
        name: "bowtie-structure",
        cases: 200,
        run: |r| r.run(pair(1..=5), |(a, b)| check_bowtie_structure(&a, &b)),
    },
    Suite {
        name: "bowtie-pullback",
        cases: 100,
        run: |r| r.run(pair(1..=4), |(a, b)| check_bowtie_routes(&a, &b)),
    },
    Suite {
        name: "composition",
        cases: 100,
        run: |r| r.run(factored(), |(dims, a, b)| check_composition(dims, &a, &b)),
    },
    Suite {
        name: "interconnection",
        cases: 8,
        run: |r| {
            for (name, sys) in builtin_systems() {
                r.run(point_strategy(sys.config_dim()), |(q, p)| check_interconnection(&sys, &q, &p))
                    .map_err(|e| format!("{name}: {e}"))?;
            }
            Ok(())
        },
    },
    Suite {
        name: "gradients",
        cases: 20,
        run: |r| {
            for (name, sys) in builtin_systems() {
                for sub in sys.subsystems() {
                    let n = sub.config_dim();
                    r.run(point_strategy(n), |(q, v)| check_gradients(&sub.lagrangian, &q, &v))
                        .map_err(|e| format!("{name}/{}: {e}", sub.name))?;
                }
            }
            Ok(())
        },
    },
    Suite {
        name: "membership",
        cases: 10,
        run: |r| {
            for (name, sys) in builtin_systems() {
                let (n, m) = (sys.config_dim(), sys.constraint_rows());
                let strat = (
                    prop::collection::vec(-1.0f64..1.0, n),
                    prop::collection::vec(-1.0f64..1.0, n),
                    prop::collection::vec(-1.0f64..1.0, m),
                );
                r.run(strat, |(q, v, mu)| check_membership(&sys, &q, &v, &mu))
                    .map_err(|e| format!("{name}: {e}"))?;
            }
            Ok(())
        },
    },
    Suite {
        name: "splitting",
        cases: 20,
        run: |r| {
            let strat = (
                prop::collection::vec(0.5f64..2.0, 6),
                prop::collection::vec(-1.0f64..1.0, 6),
            );
            r.run(strat, |(phys, x)| {
                let names = ["m1", "m2", "m3", "k1", "k2", "k3"];
                let params: Params = names.iter().map(|s| s.to_string()).zip(phys).collect();
                check_splitting(&params, &x, 20)
            })
        },
    },
    Suite {
        name: "convergence-order",
        cases: 4,
        run: |r| {
            r.run((0.5f64..2.0, 0.5f64..1.5, -0.5f64..0.5), |(k, q0, v0)| check_convergence(k, q0, v0))
        },
    },
];

pub fn suite_names() -> Vec<&'static str> {
    SUITES.iter().map(|s| s.name).collect()
}

fn suite_seed(seed: u64, index: usize) -> [u8; 32] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut out = [0u8; 32];
    rng.fill_bytes(&mut out);
    out
}

fn run_one(index: usize, suite: &Suite, cfg: &SelftestConfig) -> SuiteReport {
    let cases = ((suite.cases as f64 * cfg.scale).round() as u32).max(1);
    let runner = Runner {
        cases,
        requested: AtomicU32::new(0),
        seed: suite_seed(cfg.seed, index),
        tally: Tally::new(),
    };
    let start = Instant::now();
    let result = (suite.run)(&runner);
    SuiteReport {
        name: suite.name,
        cases: runner.requested.load(Ordering::Relaxed),
        passed: runner.tally.passed.load(Ordering::Relaxed),
        failure: result.err(),
        elapsed: start.elapsed(),
    }
}

/// Runs one suite by name.
pub fn run_suite(name: &str, cfg: &SelftestConfig) -> Option<SuiteReport> {
    SUITES
        .iter()
        .enumerate()
        .find(|(_, s)| s.name == name)
        .map(|(i, s)| run_one(i, s, cfg))
}

/// Runs every suite; reports come back in a fixed order.
pub fn run_all(cfg: &SelftestConfig) -> Vec<SuiteReport> {
    let indexed: Vec<(usize, &Suite)> = SUITES.iter().enumerate().collect();
    par::map(cfg.mode, &indexed, |(i, s)| run_one(*i, s, cfg))
}
