//! Fixed-step implicit integration of the Lagrange-Dirac equations.
//!
//! Each step solves for `(q₊, v₊, p₊, μ)` with Newton's method. The
//! kinematic and momentum rows are discretised by the chosen scheme and the
//! Legendre and constraint rows are imposed at the new state.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::induced::{self, RankSurvey};
use crate::lagrange::{generalized_energy, residual_unchecked, LagrangeDiracSystem, PontryaginState};
use crate::linalg;
use crate::par::{self, Mode};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Scheme {
    #[default]
    ImplicitMidpoint,
    BackwardEuler,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::ImplicitMidpoint => "implicit-midpoint",
            Scheme::BackwardEuler => "backward-euler",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "implicit-midpoint" | "midpoint" => Ok(Scheme::ImplicitMidpoint),
            "backward-euler" | "euler" => Ok(Scheme::BackwardEuler),
            other => Err(Error::InvalidParameter {
                name: "scheme".into(),
                reason: format!("unknown scheme `{other}`"),
            }),
        }
    }
}

type JacobianFn = dyn Fn(&StepProblem<'_>, &DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Jacobian of the step residual with respect to the unknowns.
#[derive(Clone, Default)]
pub enum JacobianMode {
    /// Forward differences, one column per unknown.
    #[default]
    FiniteDifference,
    User(Arc<JacobianFn>),
}

impl fmt::Debug for JacobianMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JacobianMode::FiniteDifference => f.write_str("FiniteDifference"),
            JacobianMode::User(_) => f.write_str("User"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub h: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub jacobian: JacobianMode,
    /// Sample points for the constant-rank survey in [`simulate`]; 0 skips it.
    pub rank_samples: usize,
    pub seed: u64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            scheme: Scheme::ImplicitMidpoint,
            h: 0.01,
            newton_tol: 1e-12,
            newton_max_iter: 50,
            jacobian: JacobianMode::FiniteDifference,
            rank_samples: 8,
            seed: 0,
        }
    }
}

impl IntegratorConfig {
    pub fn new(scheme: Scheme, h: f64) -> Result<Self> {
        let cfg = IntegratorConfig {
            scheme,
            h,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, reason: &str| {
            Err(Error::InvalidParameter {
                name: name.into(),
                reason: reason.into(),
            })
        };
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad("h", "step size must be positive and finite");
        }
        if !(self.newton_tol > 0.0) {
            return bad("newton_tol", "must be positive");
        }
        if self.newton_max_iter == 0 {
            return bad("newton_max_iter", "must be at least 1");
        }
        Ok(())
    }
}

/// Consistent initial state: `v0` projected orthogonally onto `ker ω(q0)`,
/// `p = ∂L/∂v(q0, v)` and `μ = 0`.
pub fn project_initial(sys: &LagrangeDiracSystem, q0: &DVector<f64>, v0: &DVector<f64>) -> Result<PontryaginState> {
    let n = sys.config_dim();
    check_dim(n, q0.len())?;
    check_dim(n, v0.len())?;
    let ker = sys.spec().constraint_distribution(q0)?;
    let v = ker.projector() * v0;
    let p = sys.gradients(q0, &v).1;
    Ok(PontryaginState {
        t: 0.0,
        q: q0.clone(),
        v,
        p,
        mu: DVector::zeros(sys.constraint_rows()),
    })
}

/// The nonlinear system of one step, in the unknowns `x = (q₊, v₊, p₊, μ)`.
pub struct StepProblem<'a> {
    pub system: &'a LagrangeDiracSystem,
    pub previous: &'a PontryaginState,
    pub h: f64,
    pub scheme: Scheme,
}

impl StepProblem<'_> {
    pub fn unknowns(&self) -> usize {
        3 * self.system.config_dim() + self.system.constraint_rows()
    }

    /// Splits `x` into the new state.
    pub fn state(&self, x: &DVector<f64>) -> PontryaginState {
        let n = self.system.config_dim();
        let m = self.system.constraint_rows();
        PontryaginState {
            t: self.previous.t + self.h,
            q: x.rows(0, n).into_owned(),
            v: x.rows(n, n).into_owned(),
            p: x.rows(2 * n, n).into_owned(),
            mu: x.rows(3 * n, m).into_owned(),
        }
    }

    fn pack(&self, s: &PontryaginState) -> DVector<f64> {
        let n = self.system.config_dim();
        let m = self.system.constraint_rows();
        let mut x = DVector::zeros(3 * n + m);
        x.rows_mut(0, n).copy_from(&s.q);
        x.rows_mut(n, n).copy_from(&s.v);
        x.rows_mut(2 * n, n).copy_from(&s.p);
        x.rows_mut(3 * n, m).copy_from(&s.mu);
        x
    }

    /// Point at which the dynamic rows are evaluated.
    pub fn evaluation_point(&self, new: &PontryaginState) -> PontryaginState {
        match self.scheme {
            Scheme::ImplicitMidpoint => {
                let s = self.previous;
                PontryaginState {
                    t: s.t + 0.5 * self.h,
                    q: (&s.q + &new.q) * 0.5,
                    v: (&s.v + &new.v) * 0.5,
                    p: (&s.p + &new.p) * 0.5,
                    mu: new.mu.clone(),
                }
            }
            Scheme::BackwardEuler => new.clone(),
        }
    }

    /// Difference quotients `((q₊ − q)/h, (p₊ − p)/h)`.
    pub fn rates(&self, new: &PontryaginState) -> (DVector<f64>, DVector<f64>) {
        let s = self.previous;
        ((&new.q - &s.q) / self.h, (&new.p - &s.p) / self.h)
    }

    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.system.config_dim();
        let new = self.state(x);
        let (qdot, pdot) = self.rates(&new);
        let mid = self.evaluation_point(&new);
        let mut r = residual_unchecked(self.system, &mid, &qdot, &pdot);
        if self.scheme == Scheme::ImplicitMidpoint {
            let at_new = residual_unchecked(self.system, &new, &qdot, &pdot);
            let tail = r.len() - 2 * n;
            r.rows_mut(2 * n, tail).copy_from(&at_new.rows(2 * n, tail));
        }
        r
    }

    fn fd_jacobian(&self, x: &DVector<f64>, r0: &DVector<f64>) -> DMatrix<f64> {
        let k = x.len();
        let mut j = DMatrix::zeros(r0.len(), k);
        let mut xp = x.clone();
        for c in 0..k {
            let step = f64::EPSILON.sqrt() * x[c].abs().max(1.0);
            xp[c] = x[c] + step;
            let actual = xp[c] - x[c];
            let rc = (self.residual(&xp) - r0) / actual;
            j.set_column(c, &rc);
            xp[c] = x[c];
        }
        j
    }
}

/// Result of a successful step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub state: PontryaginState,
    pub iterations: usize,
    /// Residual max-norm after each Newton iterate, starting with the guess.
    pub log: Vec<f64>,
}

fn singular_report(j: &DMatrix<f64>, labels: &[String]) -> Error {
    let svd = linalg::svd(j);
    let size = j.ncols();
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let rank = svd.rank(1e-12);
    let mut rows = Vec::new();
    for k in 0..svd.singular_values.len() {
        if svd.singular_values[k] > 1e-12 * smax && smax > 0.0 {
            continue;
        }
        let u = svd.u.column(k);
        let top = u.amax();
        for (i, x) in u.iter().enumerate() {
            if x.abs() > 0.1 * top && !rows.contains(&labels[i]) {
                rows.push(labels[i].clone());
            }
        }
    }
    if rows.is_empty() {
        rows = labels.to_vec();
    }
    Error::SingularJacobian { rank, size, rows }
}

fn solve_linear(j: DMatrix<f64>, r: &DVector<f64>, labels: &[String]) -> Result<DVector<f64>> {
    let lu = j.clone().lu();
    let u = lu.u();
    let diag = u.diagonal().abs();
    let (lo, hi) = (diag.min(), diag.max());
    if hi == 0.0 || lo <= 1e-14 * hi {
        return Err(singular_report(&j, labels));
    }
    match lu.solve(r) {
        Some(dx) if dx.iter().all(|x| x.is_finite()) => Ok(dx),
        _ => Err(singular_report(&j, labels)),
    }
}

/// Advances `state` by one step of size `cfg.h`.
pub fn step(sys: &LagrangeDiracSystem, state: &PontryaginState, cfg: &IntegratorConfig) -> Result<StepReport> {
    cfg.validate()?;
    sys.check_state(state)?;
    let problem = StepProblem {
        system: sys,
        previous: state,
        h: cfg.h,
        scheme: cfg.scheme,
    };
    let guess = PontryaginState {
        q: &state.q + &state.v * cfg.h,
        ..state.clone()
    };
    let mut x = problem.pack(&guess);
    let labels = sys.residual_labels();
    let mut log = Vec::new();
    for it in 0..=cfg.newton_max_iter {
        let r = problem.residual(&x);
        let norm = r.amax();
        log.push(norm);
        if !norm.is_finite() {
            break;
        }
        if norm <= cfg.newton_tol {
            return Ok(StepReport {
                state: problem.state(&x),
                iterations: it,
                log,
            });
        }
        if it == cfg.newton_max_iter {
            break;
        }
        let j = match &cfg.jacobian {
            JacobianMode::FiniteDifference => problem.fd_jacobian(&x, &r),
            JacobianMode::User(f) => f(&problem, &x),
        };
        let dx = solve_linear(j, &r, &labels)?;
        x -= dx;
    }
    Err(Error::NewtonDivergence {
        iterations: log.len().saturating_sub(1),
        log,
    })
}

/// Per-state diagnostics recorded by [`simulate`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostics {
    /// `E_L` at the state.
    pub energy: f64,
    /// `(E₊ − E)/h − ⟨F, (q₊ − q)/h⟩` with `F` at the scheme's evaluation
    /// point; zero for the initial state.
    pub power_residual: f64,
    /// Largest of `|p − ∂L/∂v|` and `|ω(q) v|` over all components.
    pub constraint_residual_max: f64,
    pub newton_iterations: usize,
}

/// Largest Legendre or constraint residual at `state`.
pub fn constraint_residual(sys: &LagrangeDiracSystem, state: &PontryaginState) -> f64 {
    let gv = sys.gradients(&state.q, &state.v).1;
    let legendre = (&state.p - gv).amax();
    let cons = (sys.omega(&state.q) * &state.v).amax();
    legendre.max(cons)
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub states: Vec<PontryaginState>,
    pub diagnostics: Vec<Diagnostics>,
    /// Indices of states expressed in a freshly re-centred chart.
    pub chart_changes: Vec<usize>,
    pub rank_survey: Option<RankSurvey>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> Option<&PontryaginState> {
        self.states.last()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.diagnostics.iter().map(|d| d.energy).collect()
    }

    /// `max_k |E_k − E_0|`.
    pub fn energy_drift(&self) -> f64 {
        let e = self.energies();
        e.first()
            .map(|e0| e.iter().map(|x| (x - e0).abs()).fold(0.0, f64::max))
            .unwrap_or(0.0)
    }

    pub fn max_power_residual(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.power_residual.abs()).fold(0.0, f64::max)
    }

    pub fn max_constraint_residual(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.constraint_residual_max).fold(0.0, f64::max)
    }
}

/// A run that stopped early; `trajectory` holds every accepted state.
#[derive(Clone, Debug)]
pub struct SimulationFailure {
    pub trajectory: Trajectory,
    pub error: Error,
}

impl fmt::Display for SimulationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = self.trajectory.last().map(|s| s.t).unwrap_or(0.0);
        write!(f, "integration failed after t = {t}: {}", self.error)
    }
}

impl std::error::Error for SimulationFailure {}

fn sample_points(state: &PontryaginState, count: usize, seed: u64) -> Vec<(DVector<f64>, DVector<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = state.q.len();
    (0..count)
        .map(|_| {
            let dq = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let dp = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            (&state.q + dq, &state.p + dp)
        })
        .collect()
}

/// Integrates from `initial` to `t_final` with `round(t_final / h)` steps of
/// size `h`. Stored states are at `t_k = k h`.
pub fn simulate(
    sys: &LagrangeDiracSystem,
    initial: &PontryaginState,
    cfg: &IntegratorConfig,
    t_final: f64,
) -> std::result::Result<Trajectory, SimulationFailure> {
    let fail = |trajectory: Trajectory, error: Error| SimulationFailure { trajectory, error };
    let mut traj = Trajectory::default();
    if let Err(e) = cfg.validate().and_then(|_| sys.check_state(initial)) {
        return Err(fail(traj, e));
    }
    if !(t_final > 0.0 && t_final.is_finite()) {
        let e = Error::InvalidParameter {
            name: "t_final".into(),
            reason: "must be positive and finite".into(),
        };
        return Err(fail(traj, e));
    }
    if cfg.rank_samples > 0 {
        let samples = sample_points(initial, cfg.rank_samples, cfg.seed);
        match induced::survey_ranks(sys.spec(), &samples, Mode::Sequential) {
            Ok(s) => traj.rank_survey = Some(s),
            Err(e) => return Err(fail(traj, e)),
        }
    }
    let steps = (t_final / cfg.h).round() as usize;
    let t0 = initial.t;
    let mut sys: Cow<'_, LagrangeDiracSystem> = Cow::Borrowed(sys);
    let mut state = initial.clone();
    let mut energy = generalized_energy(&sys, &state.q, &state.v, &state.p);
    traj.diagnostics.push(Diagnostics {
        energy,
        power_residual: 0.0,
        constraint_residual_max: constraint_residual(&sys, &state),
        newton_iterations: 0,
    });
    traj.states.push(state.clone());
    for k in 1..=steps {
        let report = match step(&sys, &state, cfg) {
            Ok(r) => r,
            Err(e) => return Err(fail(traj, e)),
        };
        let mut next = report.state;
        next.t = t0 + k as f64 * cfg.h;
        let problem = StepProblem {
            system: &sys,
            previous: &state,
            h: cfg.h,
            scheme: cfg.scheme,
        };
        let (qdot, _) = problem.rates(&next);
        let e = problem.evaluation_point(&next);
        let force = sys.force(&e.q, &e.v, &e.p);
        let next_energy = generalized_energy(&sys, &next.q, &next.v, &next.p);
        let power_residual = (next_energy - energy) / cfg.h - force.dot(&qdot);
        if let Some((s2, st2)) = sys.chart().and_then(|c| c.recenter(&next)) {
            log::debug!("chart re-centred at t = {}", next.t);
            sys = Cow::Owned(s2);
            next = st2;
            traj.chart_changes.push(k);
        }
        energy = generalized_energy(&sys, &next.q, &next.v, &next.p);
        traj.diagnostics.push(Diagnostics {
            energy,
            power_residual,
            constraint_residual_max: constraint_residual(&sys, &next),
            newton_iterations: report.iterations,
        });
        traj.states.push(next.clone());
        state = next;
    }
    Ok(traj)
}

/// One independent run of a sweep.
#[derive(Clone, Debug)]
pub struct SweepJob {
    pub system: LagrangeDiracSystem,
    pub initial: PontryaginState,
    pub config: IntegratorConfig,
    pub t_final: f64,
}

/// Runs independent simulations, in parallel when `mode` allows.
pub fn sweep(jobs: &[SweepJob], mode: Mode) -> Vec<std::result::Result<Trajectory, SimulationFailure>> {
    par::map(mode, jobs, |j| simulate(&j.system, &j.initial, &j.config, j.t_final))
}
