//! Lagrangians, forces and the implicit Lagrange-Dirac equations with
//! multipliers.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::induced::{self, DistributionField, InterconnectionSpec};

/// One monomial `coeff · Π q_i^{a_i} · Π v_i^{b_i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyTerm {
    pub coeff: f64,
    pub q_exps: Vec<u32>,
    pub v_exps: Vec<u32>,
}

impl PolyTerm {
    pub fn new(coeff: f64, q_exps: Vec<u32>, v_exps: Vec<u32>) -> Self {
        PolyTerm { coeff, q_exps, v_exps }
    }

    /// `coeff · x_i^k` in a single coordinate, `x = q` when `in_q`.
    pub fn single(n: usize, coeff: f64, index: usize, power: u32, in_q: bool) -> Self {
        let mut e = vec![0; n];
        e[index] = power;
        if in_q {
            PolyTerm::new(coeff, e, vec![0; n])
        } else {
            PolyTerm::new(coeff, vec![0; n], e)
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        check_dim(n, self.q_exps.len())?;
        check_dim(n, self.v_exps.len())
    }

    fn eval(&self, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let mut out = self.coeff;
        for (x, &e) in q.iter().zip(&self.q_exps) {
            out *= x.powi(e as i32);
        }
        for (x, &e) in v.iter().zip(&self.v_exps) {
            out *= x.powi(e as i32);
        }
        out
    }

    /// Adds `∂/∂q` and `∂/∂v` of this term into the accumulators.
    fn accumulate_grad(&self, q: &DVector<f64>, v: &DVector<f64>, gq: &mut DVector<f64>, gv: &mut DVector<f64>) {
        let n = q.len();
        let factor = |xs: &DVector<f64>, es: &[u32], skip: usize| -> f64 {
            xs.iter()
                .zip(es)
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, (x, &e))| x.powi(e as i32))
                .product()
        };
        let fq = factor(q, &self.q_exps, n);
        let fv = factor(v, &self.v_exps, n);
        for i in 0..n {
            let e = self.q_exps[i];
            if e > 0 {
                gq[i] += self.coeff * e as f64 * q[i].powi(e as i32 - 1) * factor(q, &self.q_exps, i) * fv;
            }
            let e = self.v_exps[i];
            if e > 0 {
                gv[i] += self.coeff * e as f64 * v[i].powi(e as i32 - 1) * factor(v, &self.v_exps, i) * fq;
            }
        }
    }
}

type ScalarFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync;
type GradFn = dyn Fn(&DVector<f64>, &DVector<f64>) -> (DVector<f64>, DVector<f64>) + Send + Sync;

#[derive(Clone)]
enum LagrangianKind {
    Polynomial(Vec<PolyTerm>),
    Custom {
        eval: Arc<ScalarFn>,
        grad: Option<Arc<GradFn>>,
    },
}

/// `L(q, v)` with gradients.
#[derive(Clone)]
pub struct LagrangianModel {
    config_dim: usize,
    name: String,
    kind: LagrangianKind,
}

impl fmt::Debug for LagrangianModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("LagrangianModel");
        s.field("config_dim", &self.config_dim).field("name", &self.name);
        if let LagrangianKind::Polynomial(t) = &self.kind {
            s.field("terms", t);
        }
        s.finish()
    }
}

/// Central-difference step for coordinate value `x`.
pub fn central_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

impl LagrangianModel {
    pub fn polynomial(config_dim: usize, terms: Vec<PolyTerm>) -> Result<Self> {
        for t in &terms {
            t.check(config_dim)?;
        }
        Ok(LagrangianModel {
            config_dim,
            name: "polynomial".into(),
            kind: LagrangianKind::Polynomial(terms),
        })
    }

    /// `L = 0`.
    pub fn zero(config_dim: usize) -> Self {
        LagrangianModel {
            config_dim,
            name: "zero".into(),
            kind: LagrangianKind::Polynomial(Vec::new()),
        }
    }

    /// Closed-form Lagrangian; gradients come from `grad` when given and from
    /// central differences otherwise.
    pub fn custom<F>(config_dim: usize, name: impl Into<String>, eval: F, grad: Option<Arc<GradFn>>) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        LagrangianModel {
            config_dim,
            name: name.into(),
            kind: LagrangianKind::Custom {
                eval: Arc::new(eval),
                grad,
            },
        }
    }

    pub fn config_dim(&self) -> usize {
        self.config_dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn terms(&self) -> Option<&[PolyTerm]> {
        match &self.kind {
            LagrangianKind::Polynomial(t) => Some(t),
            LagrangianKind::Custom { .. } => None,
        }
    }

    pub fn eval(&self, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        match &self.kind {
            LagrangianKind::Polynomial(terms) => terms.iter().map(|t| t.eval(q, v)).sum(),
            LagrangianKind::Custom { eval, .. } => eval(q, v),
        }
    }

    /// `(∂L/∂q, ∂L/∂v)`.
    pub fn gradients(&self, q: &DVector<f64>, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        match &self.kind {
            LagrangianKind::Polynomial(terms) => {
                let mut gq = DVector::zeros(self.config_dim);
                let mut gv = DVector::zeros(self.config_dim);
                for t in terms {
                    t.accumulate_grad(q, v, &mut gq, &mut gv);
                }
                (gq, gv)
            }
            LagrangianKind::Custom { grad: Some(g), .. } => g(q, v),
            LagrangianKind::Custom { grad: None, .. } => self.central_difference_gradients(q, v),
        }
    }

    pub fn grad_q(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.gradients(q, v).0
    }

    pub fn grad_v(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.gradients(q, v).1
    }

    /// Central differences of [`eval`](Self::eval) in every coordinate.
    pub fn central_difference_gradients(&self, q: &DVector<f64>, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let n = self.config_dim;
        let mut gq = DVector::zeros(n);
        let mut gv = DVector::zeros(n);
        for i in 0..n {
            let h = central_step(q[i]);
            let (mut a, mut b) = (q.clone(), q.clone());
            a[i] += h;
            b[i] -= h;
            gq[i] = (self.eval(&a, v) - self.eval(&b, v)) / (2.0 * h);
            let h = central_step(v[i]);
            let (mut a, mut b) = (v.clone(), v.clone());
            a[i] += h;
            b[i] -= h;
            gv[i] = (self.eval(q, &a) - self.eval(q, &b)) / (2.0 * h);
        }
        (gq, gv)
    }

    /// Largest relative disagreement between [`gradients`](Self::gradients)
    /// and central differences at `(q, v)`, measured componentwise against
    /// `max(1, |g|)`.
    pub fn gradient_check(&self, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let (aq, av) = self.gradients(q, v);
        let (fq, fv) = self.central_difference_gradients(q, v);
        aq.iter()
            .zip(fq.iter())
            .chain(av.iter().zip(fv.iter()))
            .map(|(a, f)| (a - f).abs() / a.abs().max(1.0))
            .fold(0.0, f64::max)
    }
}

/// One force monomial on component `index`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForceTerm {
    pub index: usize,
    pub coeff: f64,
    pub q_exps: Vec<u32>,
    pub v_exps: Vec<u32>,
}

type ForceFn = dyn Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync;

/// External force `F(q, v, p)`, a covector.
#[derive(Clone, Default)]
pub enum ForceField {
    #[default]
    Zero,
    Polynomial(Vec<ForceTerm>),
    Custom(Arc<ForceFn>),
}

impl fmt::Debug for ForceField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForceField::Zero => f.write_str("Zero"),
            ForceField::Polynomial(t) => f.debug_tuple("Polynomial").field(t).finish(),
            ForceField::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl ForceField {
    /// Linear viscous damping `−r v_i dq_i`.
    pub fn damping(n: usize, index: usize, r: f64) -> Self {
        let mut v_exps = vec![0; n];
        v_exps[index] = 1;
        ForceField::Polynomial(vec![ForceTerm {
            index,
            coeff: -r,
            q_exps: vec![0; n],
            v_exps,
        }])
    }

    /// Constant force `c dq_i`.
    pub fn constant(n: usize, index: usize, c: f64) -> Self {
        ForceField::Polynomial(vec![ForceTerm {
            index,
            coeff: c,
            q_exps: vec![0; n],
            v_exps: vec![0; n],
        }])
    }

    pub fn check(&self, n: usize) -> Result<()> {
        if let ForceField::Polynomial(terms) = self {
            for t in terms {
                check_dim(n, t.q_exps.len())?;
                check_dim(n, t.v_exps.len())?;
                if t.index >= n {
                    return Err(Error::DimensionMismatch {
                        expected: n,
                        found: t.index + 1,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, q: &DVector<f64>, v: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        match self {
            ForceField::Zero => DVector::zeros(q.len()),
            ForceField::Polynomial(terms) => {
                let mut out = DVector::zeros(q.len());
                for t in terms {
                    let term = PolyTerm {
                        coeff: t.coeff,
                        q_exps: t.q_exps.clone(),
                        v_exps: t.v_exps.clone(),
                    };
                    out[t.index] += term.eval(q, v);
                }
                out
            }
            ForceField::Custom(f) => f(q, v, p),
        }
    }
}

/// A primitive system: Lagrangian, force and constraint field on its own
/// configuration space.
#[derive(Clone, Debug)]
pub struct Subsystem {
    pub name: String,
    pub lagrangian: LagrangianModel,
    pub force: ForceField,
    pub constraints: DistributionField,
}

impl Subsystem {
    pub fn new(
        name: impl Into<String>,
        lagrangian: LagrangianModel,
        force: ForceField,
        constraints: DistributionField,
    ) -> Result<Self> {
        let n = lagrangian.config_dim();
        check_dim(n, constraints.config_dim())?;
        force.check(n)?;
        if n == 0 {
            return Err(Error::ZeroAmbient);
        }
        Ok(Subsystem {
            name: name.into(),
            lagrangian,
            force,
            constraints,
        })
    }

    pub fn config_dim(&self) -> usize {
        self.lagrangian.config_dim()
    }
}

/// Point `(q, v, p)` of the Pontryagin bundle with time and multipliers.
#[derive(Clone, Debug, PartialEq)]
pub struct PontryaginState {
    pub t: f64,
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub p: DVector<f64>,
    pub mu: DVector<f64>,
}

/// Replaces the local chart of a system whose coordinates only cover part of
/// the configuration manifold.
pub trait ChartHandler: Send + Sync {
    /// A re-centred system and the same physical state in its coordinates,
    /// or `None` when the current chart is still adequate.
    fn recenter(&self, state: &PontryaginState) -> Option<(LagrangeDiracSystem, PontryaginState)>;
}

/// Interconnected Lagrange-Dirac system on the product of its subsystems.
#[derive(Clone)]
pub struct LagrangeDiracSystem {
    subsystems: Vec<Subsystem>,
    spec: InterconnectionSpec,
    slices: Vec<Range<usize>>,
    chart: Option<Arc<dyn ChartHandler>>,
}

impl fmt::Debug for LagrangeDiracSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LagrangeDiracSystem")
            .field("subsystems", &self.subsystems)
            .field("coupling", self.spec.coupling())
            .field("slices", &self.slices)
            .field("chart", &self.chart.is_some())
            .finish()
    }
}

/// Splits a vector over the product into per-subsystem blocks.
fn split(x: &DVector<f64>, slices: &[Range<usize>]) -> Vec<DVector<f64>> {
    slices.iter().map(|r| x.rows(r.start, r.len()).into_owned()).collect()
}

fn concat(parts: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(parts.iter().map(|p| p.len()).sum(), parts.iter().flat_map(|p| p.iter().copied()))
}

impl LagrangeDiracSystem {
    pub fn new(subsystems: Vec<Subsystem>, coupling: DistributionField) -> Result<Self> {
        if subsystems.is_empty() {
            return Err(Error::ZeroAmbient);
        }
        let fields = subsystems.iter().map(|s| s.constraints.clone()).collect();
        let spec = InterconnectionSpec::new(fields, coupling)?;
        let slices = spec
            .offsets()
            .into_iter()
            .zip(&subsystems)
            .map(|(o, s)| o..o + s.config_dim())
            .collect();
        Ok(LagrangeDiracSystem {
            subsystems,
            spec,
            slices,
            chart: None,
        })
    }

    /// A single unconstrained-coupling system.
    pub fn single(subsystem: Subsystem) -> Result<Self> {
        let n = subsystem.config_dim();
        Self::new(vec![subsystem], DistributionField::unconstrained(n))
    }

    pub fn with_chart(mut self, chart: Arc<dyn ChartHandler>) -> Self {
        self.chart = Some(chart);
        self
    }

    pub fn chart(&self) -> Option<&Arc<dyn ChartHandler>> {
        self.chart.as_ref()
    }

    pub fn subsystems(&self) -> &[Subsystem] {
        &self.subsystems
    }

    pub fn spec(&self) -> &InterconnectionSpec {
        &self.spec
    }

    pub fn slices(&self) -> &[Range<usize>] {
        &self.slices
    }

    pub fn config_dim(&self) -> usize {
        self.spec.config_dim()
    }

    /// Total number of constraint rows (subsystem rows, then coupling rows).
    pub fn constraint_rows(&self) -> usize {
        self.subsystem_rows() + self.spec.coupling().rows()
    }

    fn subsystem_rows(&self) -> usize {
        self.subsystems.iter().map(|s| s.constraints.rows()).sum()
    }

    /// Stacked `ω(q)`.
    pub fn omega(&self, q: &DVector<f64>) -> DMatrix<f64> {
        self.spec.total_omega(q)
    }

    pub fn lagrangian(&self, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let (qs, vs) = (split(q, &self.slices), split(v, &self.slices));
        self.subsystems
            .iter()
            .zip(qs.iter().zip(&vs))
            .map(|(s, (qi, vi))| s.lagrangian.eval(qi, vi))
            .sum()
    }

    /// `(∂L/∂q, ∂L/∂v)` of the total Lagrangian.
    pub fn gradients(&self, q: &DVector<f64>, v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (qs, vs) = (split(q, &self.slices), split(v, &self.slices));
        let (gq, gv): (Vec<_>, Vec<_>) = self
            .subsystems
            .iter()
            .zip(qs.iter().zip(&vs))
            .map(|(s, (qi, vi))| s.lagrangian.gradients(qi, vi))
            .unzip();
        (concat(&gq), concat(&gv))
    }

    /// Total external force (interconnection forces excluded).
    pub fn force(&self, q: &DVector<f64>, v: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        let (qs, vs, ps) = (split(q, &self.slices), split(v, &self.slices), split(p, &self.slices));
        let parts: Vec<_> = self
            .subsystems
            .iter()
            .enumerate()
            .map(|(i, s)| s.force.eval(&qs[i], &vs[i], &ps[i]))
            .collect();
        concat(&parts)
    }

    pub fn check_state(&self, state: &PontryaginState) -> Result<()> {
        let n = self.config_dim();
        check_dim(n, state.q.len())?;
        check_dim(n, state.v.len())?;
        check_dim(n, state.p.len())?;
        check_dim(self.constraint_rows(), state.mu.len())
    }

    fn check_rates(&self, state: &PontryaginState, qdot: &DVector<f64>, pdot: &DVector<f64>) -> Result<()> {
        self.check_state(state)?;
        check_dim(self.config_dim(), qdot.len())?;
        check_dim(self.config_dim(), pdot.len())
    }

    /// Labels of the residual rows, e.g. `"b[3]"`.
    pub fn residual_labels(&self) -> Vec<String> {
        let n = self.config_dim();
        let m = self.constraint_rows();
        ["a", "b", "c"]
            .iter()
            .flat_map(|blk| (0..n).map(move |i| format!("{blk}[{i}]")))
            .chain((0..m).map(|i| format!("d[{i}]")))
            .collect()
    }
}

/// `E_L(q, v, p) = ⟨p, v⟩ − L(q, v)`.
pub fn generalized_energy(sys: &LagrangeDiracSystem, q: &DVector<f64>, v: &DVector<f64>, p: &DVector<f64>) -> f64 {
    p.dot(v) - sys.lagrangian(q, v)
}

/// Rows `(a) q̇ − v`, `(b) ṗ − ∂L/∂q − F − ω(q)ᵀμ`, `(c) p − ∂L/∂v`,
/// `(d) ω(q) v`, stacked in that order.
pub fn residual(
    sys: &LagrangeDiracSystem,
    state: &PontryaginState,
    qdot: &DVector<f64>,
    pdot: &DVector<f64>,
) -> Result<DVector<f64>> {
    sys.check_rates(state, qdot, pdot)?;
    Ok(residual_unchecked(sys, state, qdot, pdot))
}

pub(crate) fn residual_unchecked(
    sys: &LagrangeDiracSystem,
    state: &PontryaginState,
    qdot: &DVector<f64>,
    pdot: &DVector<f64>,
) -> DVector<f64> {
    let n = sys.config_dim();
    let m = sys.constraint_rows();
    let PontryaginState { q, v, p, mu, .. } = state;
    let (gq, gv) = sys.gradients(q, v);
    let f = sys.force(q, v, p);
    let w = sys.omega(q);
    let mut r = DVector::zeros(3 * n + m);
    r.rows_mut(0, n).copy_from(&(qdot - v));
    r.rows_mut(n, n).copy_from(&(pdot - gq - f - w.transpose() * mu));
    r.rows_mut(2 * n, n).copy_from(&(p - gv));
    r.rows_mut(3 * n, m).copy_from(&(w * v));
    r
}

/// Tests `((q̇, ṗ), (−∂L/∂q − F, v)) ∈ D(q, p)` for the interconnected
/// structure at `(q, p)`.
pub fn check_membership(
    sys: &LagrangeDiracSystem,
    state: &PontryaginState,
    qdot: &DVector<f64>,
    pdot: &DVector<f64>,
    tol: f64,
) -> Result<bool> {
    sys.check_rates(state, qdot, pdot)?;
    let d = induced::interconnect_at(sys.spec(), &state.q, &state.p)?;
    let (gq, _) = sys.gradients(&state.q, &state.v);
    let f = sys.force(&state.q, &state.v, &state.p);
    let n = sys.config_dim();
    let mut x = DVector::zeros(2 * n);
    x.rows_mut(0, n).copy_from(qdot);
    x.rows_mut(n, n).copy_from(pdot);
    let mut alpha = DVector::zeros(2 * n);
    alpha.rows_mut(0, n).copy_from(&(-gq - f));
    alpha.rows_mut(n, n).copy_from(&state.v);
    d.contains_pair(&x, &alpha, tol)
}

/// `⟨ṗ, v⟩ − ⟨∂L/∂q, q̇⟩ − ⟨F, q̇⟩`: the time derivative of `E_L` along the
/// rates, with `p = ∂L/∂v`, minus the external power.
pub fn power_balance_residual(
    sys: &LagrangeDiracSystem,
    state: &PontryaginState,
    qdot: &DVector<f64>,
    pdot: &DVector<f64>,
) -> Result<f64> {
    sys.check_rates(state, qdot, pdot)?;
    let (gq, _) = sys.gradients(&state.q, &state.v);
    let f = sys.force(&state.q, &state.v, &state.p);
    Ok(pdot.dot(&state.v) - gq.dot(qdot) - f.dot(qdot))
}

/// Interconnection forces on each subsystem.
#[derive(Clone, Debug, PartialEq)]
pub struct InterfaceForces {
    /// `Σ_a μ_a ω_c^a(q)` over the product.
    pub total: DVector<f64>,
    /// Per-subsystem blocks of `total`.
    pub per_subsystem: Vec<DVector<f64>>,
}

/// Splits the coupling-multiplier force into per-subsystem blocks. Refuses
/// when the state does not solve the equations to `tol`.
pub fn recover_interface_forces(
    sys: &LagrangeDiracSystem,
    state: &PontryaginState,
    qdot: &DVector<f64>,
    pdot: &DVector<f64>,
    tol: f64,
) -> Result<InterfaceForces> {
    let r = residual(sys, state, qdot, pdot)?.amax();
    if r > tol {
        return Err(Error::InconsistentState { residual: r, tol });
    }
    Ok(interface_forces(sys, &state.q, &state.mu))
}

/// The coupling part of `ω(q)ᵀμ`, without any consistency check.
pub fn interface_forces(sys: &LagrangeDiracSystem, q: &DVector<f64>, mu: &DVector<f64>) -> InterfaceForces {
    let ms = sys.subsystem_rows();
    let wc = sys.spec().coupling().omega(q);
    let mu_c = mu.rows(ms, wc.nrows());
    let total = wc.transpose() * mu_c;
    let per_subsystem = split(&total, sys.slices());
    InterfaceForces { total, per_subsystem }
}

/// Residual of subsystem `i` as a standalone forced system with the extra
/// force `interface` and its own multipliers.
pub fn subsystem_residual(
    sys: &LagrangeDiracSystem,
    i: usize,
    state: &PontryaginState,
    qdot: &DVector<f64>,
    pdot: &DVector<f64>,
    interface: &DVector<f64>,
) -> Result<DVector<f64>> {
    sys.check_rates(state, qdot, pdot)?;
    let sub = sys.subsystems().get(i).ok_or_else(|| Error::InvalidParameter {
        name: "subsystem".into(),
        reason: format!("index {i} out of range"),
    })?;
    let r = sys.slices()[i].clone();
    check_dim(r.len(), interface.len())?;
    let row_start: usize = sys.subsystems()[..i].iter().map(|s| s.constraints.rows()).sum();
    let mi = sub.constraints.rows();
    let part = |x: &DVector<f64>| x.rows(r.start, r.len()).into_owned();
    let local = PontryaginState {
        t: state.t,
        q: part(&state.q),
        v: part(&state.v),
        p: part(&state.p),
        mu: state.mu.rows(row_start, mi).into_owned(),
    };
    let forced = Subsystem {
        force: with_extra_force(sub.force.clone(), interface.clone()),
        ..sub.clone()
    };
    let standalone = LagrangeDiracSystem::single(forced)?;
    residual(&standalone, &local, &part(qdot), &part(pdot))
}

fn with_extra_force(base: ForceField, extra: DVector<f64>) -> ForceField {
    ForceField::Custom(Arc::new(move |q, v, p| base.eval(q, v, p) + &extra))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn harmonic() -> LagrangeDiracSystem {
        let l = LagrangianModel::polynomial(
            1,
            vec![PolyTerm::new(0.5, vec![0], vec![2]), PolyTerm::new(-0.5, vec![2], vec![0])],
        )
        .unwrap();
        LagrangeDiracSystem::single(
            Subsystem::new("h", l, ForceField::Zero, DistributionField::unconstrained(1)).unwrap(),
        )
        .unwrap()
    }

    fn st(q: DVector<f64>, v: DVector<f64>, p: DVector<f64>, mu: DVector<f64>) -> PontryaginState {
        PontryaginState { t: 0.0, q, v, p, mu }
    }

    #[test]
    fn harmonic_energy() {
        let s = harmonic();
        let e = generalized_energy(&s, &dvector![0.3], &dvector![0.7], &dvector![1.1]);
        let expected = 1.1 * 0.7 - 0.7 * 0.7 / 2.0 + 0.3 * 0.3 / 2.0;
        assert!((e - expected).abs() < 1e-15);
    }

    #[test]
    fn harmonic_residual_zero() {
        let s = harmonic();
        let state = st(dvector![1.0], dvector![0.0], dvector![0.0], DVector::zeros(0));
        let r = residual(&s, &state, &dvector![0.0], &dvector![-1.0]).unwrap();
        assert_eq!(r.len(), 3);
        assert!(r.amax() < 1e-15);
        assert!(check_membership(&s, &state, &dvector![0.0], &dvector![-1.0], 1e-10).unwrap());
        assert!(!check_membership(&s, &state, &dvector![0.0], &dvector![0.0], 1e-10).unwrap());
    }

    #[test]
    fn polynomial_gradient_matches_differences() {
        let l = LagrangianModel::polynomial(
            2,
            vec![PolyTerm::new(1.5, vec![2, 1], vec![1, 3]), PolyTerm::new(-0.25, vec![0, 3], vec![2, 0])],
        )
        .unwrap();
        let q = dvector![0.3, -0.8];
        let v = dvector![0.9, 0.4];
        assert!(l.gradient_check(&q, &v) < 1e-6);
        let (gq, gv) = l.gradients(&q, &v);
        // ∂/∂q0 of 1.5 q0² q1 v0 v1³
        let expect = 1.5 * 2.0 * 0.3 * -0.8 * 0.9 * 0.4f64.powi(3);
        assert!((gq[0] - expect).abs() < 1e-15);
        let expect = 1.5 * 0.09 * -0.8 * 0.9 * 3.0 * 0.16;
        assert!((gv[1] - expect).abs() < 1e-15);
    }

    #[test]
    fn damped_power_balance() {
        let r = 0.5;
        let l = LagrangianModel::polynomial(
            1,
            vec![PolyTerm::new(0.5, vec![0], vec![2]), PolyTerm::new(-0.5, vec![2], vec![0])],
        )
        .unwrap();
        let s = LagrangeDiracSystem::single(
            Subsystem::new("d", l, ForceField::damping(1, 0, r), DistributionField::unconstrained(1)).unwrap(),
        )
        .unwrap();
        let state = st(dvector![0.0], dvector![1.0], dvector![1.0], DVector::zeros(0));
        let res = residual(&s, &state, &dvector![1.0], &dvector![-r]).unwrap();
        assert!(res.amax() < 1e-15);
        assert!(power_balance_residual(&s, &state, &dvector![1.0], &dvector![-r]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn coupled_forces_split() {
        // Two unit masses glued by v0 = v1; a unit force on the first.
        let mk = |f: ForceField| {
            Subsystem::new(
                "m",
                LagrangianModel::polynomial(1, vec![PolyTerm::new(0.5, vec![0], vec![2])]).unwrap(),
                f,
                DistributionField::unconstrained(1),
            )
            .unwrap()
        };
        let s = LagrangeDiracSystem::new(
            vec![mk(ForceField::constant(1, 0, 1.0)), mk(ForceField::Zero)],
            DistributionField::constant(dmatrix![1.0, -1.0]),
        )
        .unwrap();
        // ṗ0 = 1 + μ and ṗ1 = −μ; common acceleration 1/2 needs μ = −1/2.
        let state = st(dvector![0.0, 0.0], dvector![1.0, 1.0], dvector![1.0, 1.0], dvector![-0.5]);
        let qdot = dvector![1.0, 1.0];
        let pdot = dvector![0.5, 0.5];
        let f = recover_interface_forces(&s, &state, &qdot, &pdot, 1e-12).unwrap();
        assert!((f.per_subsystem[0][0] + 0.5).abs() < 1e-15);
        assert!((f.per_subsystem[1][0] - 0.5).abs() < 1e-15);
        for i in 0..2 {
            let r = subsystem_residual(&s, i, &state, &qdot, &pdot, &f.per_subsystem[i]).unwrap();
            assert!(r.amax() < 1e-15);
        }
        let bad = st(dvector![0.0, 0.0], dvector![1.0, 1.0], dvector![1.0, 1.0], dvector![0.0]);
        assert!(matches!(
            recover_interface_forces(&s, &bad, &qdot, &pdot, 1e-12),
            Err(Error::InconsistentState { .. })
        ));
    }

    #[test]
    fn labels() {
        let s = harmonic();
        assert_eq!(s.residual_labels(), vec!["a[0]", "b[0]", "c[0]"]);
    }
}
