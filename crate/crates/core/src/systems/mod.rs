//! Ready-made example systems.

use std::collections::BTreeMap;

use nalgebra::{dmatrix, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::induced::DistributionField;
use crate::lagrange::{ForceField, ForceTerm, LagrangeDiracSystem, LagrangianModel, PolyTerm, Subsystem};

pub mod rolling_ball;

pub type Params = BTreeMap<String, f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    Positive,
    NonNegative,
    Any,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: f64,
    pub bound: Bound,
    pub doc: &'static str,
}

const fn param(name: &'static str, default: f64, bound: Bound, doc: &'static str) -> ParamSpec {
    ParamSpec {
        name,
        default,
        bound,
        doc,
    }
}

type Builder = fn(&Params) -> Result<LagrangeDiracSystem>;
type InitialFn = fn(&Params) -> (Vec<f64>, Vec<f64>);

/// A named builder with its parameter schema and structural facts.
#[derive(Clone, Copy)]
pub struct SystemTemplate {
    pub name: &'static str,
    pub description: &'static str,
    pub params: &'static [ParamSpec],
    pub config_dim: usize,
    pub constraint_rows: usize,
    /// Dimension of the admissible velocity space at a generic point.
    pub kernel_dim: usize,
    /// Momentum components that vanish identically.
    pub degenerate_momenta: &'static [usize],
    build: Builder,
    initial: InitialFn,
}

impl std::fmt::Debug for SystemTemplate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SystemTemplate")
            .field("name", &self.name)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl SystemTemplate {
    /// Defaults overlaid with `overrides`, checked against the schema.
    pub fn resolve(&self, overrides: &Params) -> Result<Params> {
        for key in overrides.keys() {
            if !self.params.iter().any(|p| p.name == key) {
                return Err(Error::InvalidParameter {
                    name: key.clone(),
                    reason: format!("not a parameter of `{}`", self.name),
                });
            }
        }
        let mut out = Params::new();
        for spec in self.params {
            let value = overrides.get(spec.name).copied().unwrap_or(spec.default);
            let reason = if !value.is_finite() {
                Some("must be finite")
            } else {
                match spec.bound {
                    Bound::Positive if value <= 0.0 => Some("must be > 0"),
                    Bound::NonNegative if value < 0.0 => Some("must be >= 0"),
                    _ => None,
                }
            };
            if let Some(reason) = reason {
                return Err(Error::InvalidParameter {
                    name: spec.name.into(),
                    reason: reason.into(),
                });
            }
            out.insert(spec.name.into(), value);
        }
        Ok(out)
    }

    pub fn build(&self, overrides: &Params) -> Result<LagrangeDiracSystem> {
        (self.build)(&self.resolve(overrides)?)
    }

    /// A suggested `(q0, v0)`, consistent with the hidden constraints for
    /// default parameters.
    pub fn default_initial(&self, overrides: &Params) -> Result<(DVector<f64>, DVector<f64>)> {
        let (q, v) = (self.initial)(&self.resolve(overrides)?);
        Ok((DVector::from_vec(q), DVector::from_vec(v)))
    }
}

fn get(p: &Params, k: &str) -> f64 {
    p[k]
}

fn v_sq(n: usize, i: usize, c: f64) -> PolyTerm {
    PolyTerm::single(n, c, i, 2, false)
}

fn q_sq(n: usize, i: usize, c: f64) -> PolyTerm {
    PolyTerm::single(n, c, i, 2, true)
}

/// `−½ k (q_i − q_j)²` as three monomials.
fn spring(n: usize, i: usize, j: usize, k: f64) -> Vec<PolyTerm> {
    let mut cross = vec![0; n];
    cross[i] = 1;
    cross[j] = 1;
    vec![
        q_sq(n, i, -0.5 * k),
        q_sq(n, j, -0.5 * k),
        PolyTerm::new(k, cross, vec![0; n]),
    ]
}

fn subsystem(name: &str, n: usize, terms: Vec<PolyTerm>, force: ForceField, omega: DMatrix<f64>) -> Result<Subsystem> {
    let l = LagrangianModel::polynomial(n, terms)?;
    let c = if omega.nrows() == 0 {
        DistributionField::unconstrained(n)
    } else {
        DistributionField::constant(omega)
    };
    Subsystem::new(name, l, force, c)
}

fn no_rows(n: usize) -> DMatrix<f64> {
    DMatrix::zeros(0, n)
}

fn sum_forces(parts: Vec<ForceField>) -> ForceField {
    let terms: Vec<ForceTerm> = parts
        .into_iter()
        .flat_map(|f| match f {
            ForceField::Polynomial(t) => t,
            _ => Vec::new(),
        })
        .collect();
    if terms.is_empty() {
        ForceField::Zero
    } else {
        ForceField::Polynomial(terms)
    }
}

fn build_harmonic(p: &Params) -> Result<LagrangeDiracSystem> {
    let terms = vec![v_sq(1, 0, 0.5 * get(p, "m")), q_sq(1, 0, -0.5 * get(p, "k"))];
    LagrangeDiracSystem::single(subsystem("oscillator", 1, terms, ForceField::Zero, no_rows(1))?)
}

fn build_damped(p: &Params) -> Result<LagrangeDiracSystem> {
    let terms = vec![v_sq(1, 0, 0.5 * get(p, "m")), q_sq(1, 0, -0.5 * get(p, "k"))];
    let force = ForceField::damping(1, 0, get(p, "r"));
    LagrangeDiracSystem::single(subsystem("oscillator", 1, terms, force, no_rows(1))?)
}

/// Masses 1 and 2 on `(x1, x2)`, springs 1 and 2.
fn mass_spring_first(p: &Params, f2: f64) -> Result<Subsystem> {
    let mut terms = vec![
        v_sq(2, 0, 0.5 * get(p, "m1")),
        v_sq(2, 1, 0.5 * get(p, "m2")),
        q_sq(2, 0, -0.5 * get(p, "k1")),
    ];
    terms.extend(spring(2, 0, 1, get(p, "k2")));
    let force = if f2 != 0.0 {
        ForceField::constant(2, 1, f2)
    } else {
        ForceField::Zero
    };
    subsystem("masses 1-2", 2, terms, force, no_rows(2))
}

/// Massless point `x̄2` and mass 3 on `(x̄2, x3)`, spring 3.
fn mass_spring_second(p: &Params, f2bar: f64) -> Result<Subsystem> {
    let mut terms = vec![v_sq(2, 1, 0.5 * get(p, "m3"))];
    terms.extend(spring(2, 0, 1, get(p, "k3")));
    let force = if f2bar != 0.0 {
        ForceField::constant(2, 0, f2bar)
    } else {
        ForceField::Zero
    };
    subsystem("mass 3", 2, terms, force, no_rows(2))
}

fn build_mass_spring(p: &Params) -> Result<LagrangeDiracSystem> {
    LagrangeDiracSystem::new(
        vec![mass_spring_first(p, 0.0)?, mass_spring_second(p, 0.0)?],
        DistributionField::constant(dmatrix![0.0, 1.0, -1.0, 0.0]),
    )
}

fn build_mass_spring_1(p: &Params) -> Result<LagrangeDiracSystem> {
    LagrangeDiracSystem::single(mass_spring_first(p, get(p, "f2"))?)
}

fn build_mass_spring_2(p: &Params) -> Result<LagrangeDiracSystem> {
    LagrangeDiracSystem::single(mass_spring_second(p, get(p, "f2bar"))?)
}

/// Resistor, inductor and port S1 on `(q_R, q_L, q_S1)` with
/// `v_R − v_L + v_S1 = 0`.
fn circuit_first(p: &Params, r: f64, port: f64) -> Result<Subsystem> {
    let terms = vec![v_sq(3, 1, 0.5 * get(p, "L"))];
    let mut forces = Vec::new();
    if r != 0.0 {
        forces.push(ForceField::damping(3, 0, r));
    }
    if port != 0.0 {
        forces.push(ForceField::constant(3, 2, port));
    }
    subsystem("resistor-inductor", 3, terms, sum_forces(forces), dmatrix![1.0, -1.0, 1.0])
}

/// Port S2 and capacitor on `(q_S2, q_C)` with `v_C − v_S2 = 0`. The stored
/// energy `q_C²/(2C)` enters the Lagrangian with a minus sign.
fn circuit_second(p: &Params, port: f64) -> Result<Subsystem> {
    let terms = vec![q_sq(2, 1, -0.5 / get(p, "C"))];
    let force = if port != 0.0 {
        ForceField::constant(2, 0, port)
    } else {
        ForceField::Zero
    };
    subsystem("capacitor", 2, terms, force, dmatrix![-1.0, 1.0])
}

fn circuit(p: &Params, r: f64) -> Result<LagrangeDiracSystem> {
    LagrangeDiracSystem::new(
        vec![circuit_first(p, r, 0.0)?, circuit_second(p, 0.0)?],
        DistributionField::constant(dmatrix![0.0, 0.0, 1.0, -1.0, 0.0]),
    )
}

fn build_rlc(p: &Params) -> Result<LagrangeDiracSystem> {
    circuit(p, get(p, "R"))
}

fn build_lc(p: &Params) -> Result<LagrangeDiracSystem> {
    circuit(p, 0.0)
}

fn build_rlc_1(p: &Params) -> Result<LagrangeDiracSystem> {
    LagrangeDiracSystem::single(circuit_first(p, get(p, "R"), get(p, "f_s1"))?)
}

fn build_rlc_2(p: &Params) -> Result<LagrangeDiracSystem> {
    LagrangeDiracSystem::single(circuit_second(p, get(p, "f_s2"))?)
}

fn build_rolling_ball(p: &Params) -> Result<LagrangeDiracSystem> {
    rolling_ball::build(&rolling_ball::BallParams::from_params(p), nalgebra::Matrix3::identity())
}

const OSC: &[ParamSpec] = &[
    param("m", 1.0, Bound::Positive, "mass"),
    param("k", 1.0, Bound::Positive, "spring stiffness"),
];
const DAMPED: &[ParamSpec] = &[
    param("m", 1.0, Bound::Positive, "mass"),
    param("k", 1.0, Bound::Positive, "spring stiffness"),
    param("r", 0.5, Bound::NonNegative, "damping coefficient"),
];
const MASS_SPRING: &[ParamSpec] = &[
    param("m1", 1.0, Bound::Positive, "mass 1"),
    param("m2", 1.0, Bound::Positive, "mass 2"),
    param("m3", 1.0, Bound::Positive, "mass 3"),
    param("k1", 1.0, Bound::Positive, "wall spring"),
    param("k2", 1.0, Bound::Positive, "spring between masses 1 and 2"),
    param("k3", 1.0, Bound::Positive, "spring between masses 2 and 3"),
];
const MASS_SPRING_1: &[ParamSpec] = &[
    param("m1", 1.0, Bound::Positive, "mass 1"),
    param("m2", 1.0, Bound::Positive, "mass 2"),
    param("k1", 1.0, Bound::Positive, "wall spring"),
    param("k2", 1.0, Bound::Positive, "spring between masses 1 and 2"),
    param("f2", 0.0, Bound::Any, "constant interface force on x2"),
];
const MASS_SPRING_2: &[ParamSpec] = &[
    param("m3", 1.0, Bound::Positive, "mass 3"),
    param("k3", 1.0, Bound::Positive, "spring between the interface point and mass 3"),
    param("f2bar", 0.0, Bound::Any, "constant interface force on the interface point"),
];
const RLC: &[ParamSpec] = &[
    param("R", 1.0, Bound::NonNegative, "resistance"),
    param("L", 1.0, Bound::Positive, "inductance"),
    param("C", 1.0, Bound::Positive, "capacitance"),
];
const LC: &[ParamSpec] = &[
    param("L", 1.0, Bound::Positive, "inductance"),
    param("C", 1.0, Bound::Positive, "capacitance"),
];
const RLC_1: &[ParamSpec] = &[
    param("R", 1.0, Bound::Positive, "resistance"),
    param("L", 1.0, Bound::Positive, "inductance"),
    param("f_s1", 0.0, Bound::Any, "constant port force on q_S1"),
];
const RLC_2: &[ParamSpec] = &[
    param("C", 1.0, Bound::Positive, "capacitance"),
    param("f_s2", 0.0, Bound::Any, "constant port force on q_S2"),
];

static BUILTINS: &[SystemTemplate] = &[
    SystemTemplate {
        name: "harmonic",
        description: "harmonic oscillator, L = m v²/2 − k q²/2",
        params: OSC,
        config_dim: 1,
        constraint_rows: 0,
        kernel_dim: 1,
        degenerate_momenta: &[],
        build: build_harmonic,
        initial: |_| (vec![1.0], vec![0.0]),
    },
    SystemTemplate {
        name: "damped",
        description: "harmonic oscillator with viscous force −r v dq",
        params: DAMPED,
        config_dim: 1,
        constraint_rows: 0,
        kernel_dim: 1,
        degenerate_momenta: &[],
        build: build_damped,
        initial: |_| (vec![1.0], vec![0.0]),
    },
    SystemTemplate {
        name: "mass-spring",
        description: "three masses and three springs cut at mass 2; coordinates (x1, x2, x̄2, x3), coupling v2 = v̄2",
        params: MASS_SPRING,
        config_dim: 4,
        constraint_rows: 1,
        kernel_dim: 3,
        degenerate_momenta: &[2],
        build: build_mass_spring,
        initial: |_| (vec![1.0, 0.0, 0.0, 0.0], vec![0.0; 4]),
    },
    SystemTemplate {
        name: "mass-spring-1",
        description: "masses 1 and 2 with a constant interface force on x2",
        params: MASS_SPRING_1,
        config_dim: 2,
        constraint_rows: 0,
        kernel_dim: 2,
        degenerate_momenta: &[],
        build: build_mass_spring_1,
        initial: |_| (vec![1.0, 0.0], vec![0.0; 2]),
    },
    SystemTemplate {
        name: "mass-spring-2",
        description: "massless interface point x̄2 and mass 3 with a constant force on x̄2",
        params: MASS_SPRING_2,
        config_dim: 2,
        constraint_rows: 0,
        kernel_dim: 2,
        degenerate_momenta: &[0],
        build: build_mass_spring_2,
        initial: |p| {
            let x3 = 1.0;
            (vec![x3 + p["f2bar"] / p["k3"], x3], vec![0.0; 2])
        },
    },
    SystemTemplate {
        name: "rlc",
        description: "series resistor/inductor loop joined to a capacitor loop through ports S1, S2; coordinates (q_R, q_L, q_S1, q_S2, q_C)",
        params: RLC,
        config_dim: 5,
        constraint_rows: 3,
        kernel_dim: 2,
        degenerate_momenta: &[0, 2, 3, 4],
        build: build_rlc,
        initial: |_| (vec![0.0; 5], vec![0.0, 1.0, 1.0, 1.0, 1.0]),
    },
    SystemTemplate {
        name: "lc",
        description: "the rlc circuit with R = 0",
        params: LC,
        config_dim: 5,
        constraint_rows: 3,
        kernel_dim: 2,
        degenerate_momenta: &[0, 2, 3, 4],
        build: build_lc,
        initial: |_| (vec![0.0; 5], vec![1.0, 1.0, 0.0, 0.0, 0.0]),
    },
    SystemTemplate {
        name: "rlc-1",
        description: "resistor/inductor loop with a constant port force on q_S1",
        params: RLC_1,
        config_dim: 3,
        constraint_rows: 1,
        kernel_dim: 2,
        degenerate_momenta: &[0, 2],
        build: build_rlc_1,
        initial: |p| {
            let vr = -p["f_s1"] / p["R"];
            (vec![0.0; 3], vec![vr, 1.0, 1.0 - vr])
        },
    },
    SystemTemplate {
        name: "rlc-2",
        description: "capacitor loop with a constant port force on q_S2",
        params: RLC_2,
        config_dim: 2,
        constraint_rows: 1,
        kernel_dim: 1,
        degenerate_momenta: &[0, 1],
        build: build_rlc_2,
        initial: |p| (vec![0.0, p["C"] * p["f_s2"]], vec![0.0; 2]),
    },
    SystemTemplate {
        name: "rolling-ball",
        description: "ball rolling without slipping on the larger of two geared tables; coordinates (s1, s2, θ, u) with θ exponential coordinates",
        params: rolling_ball::PARAMS,
        config_dim: 8,
        constraint_rows: 4,
        kernel_dim: 4,
        degenerate_momenta: &[],
        build: build_rolling_ball,
        initial: |_| rolling_ball::default_initial(),
    },
];

/// All builtin templates.
pub fn list_builtins() -> &'static [SystemTemplate] {
    BUILTINS
}

pub fn template(name: &str) -> Result<&'static SystemTemplate> {
    BUILTINS
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| Error::UnknownSystem(name.into()))
}

pub fn build_builtin(name: &str, params: &Params) -> Result<LagrangeDiracSystem> {
    template(name)?.build(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrange::{residual, PontryaginState};
    use nalgebra::dvector;

    #[test]
    fn every_template_builds_with_defaults() {
        assert!(list_builtins().len() >= 6);
        for t in list_builtins() {
            let s = t.build(&Params::new()).unwrap();
            assert_eq!(s.config_dim(), t.config_dim, "{}", t.name);
            assert_eq!(s.constraint_rows(), t.constraint_rows, "{}", t.name);
            let (q, _) = t.default_initial(&Params::new()).unwrap();
            assert_eq!(s.spec().constraint_distribution(&q).unwrap().dim(), t.kernel_dim, "{}", t.name);
        }
    }

    #[test]
    fn harmonic_residual_at_reference_point() {
        let s = build_builtin("harmonic", &Params::new()).unwrap();
        let st = PontryaginState {
            t: 0.0,
            q: dvector![1.0],
            v: dvector![0.0],
            p: dvector![0.0],
            mu: DVector::zeros(0),
        };
        assert!(residual(&s, &st, &dvector![0.0], &dvector![-1.0]).unwrap().amax() < 1e-15);
    }

    #[test]
    fn parameter_validation() {
        let mut p = Params::new();
        p.insert("m1".into(), -1.0);
        assert!(matches!(build_builtin("mass-spring", &p), Err(Error::InvalidParameter { .. })));
        let mut p = Params::new();
        p.insert("R".into(), 0.0);
        assert!(build_builtin("rlc", &p).is_ok());
        let mut p = Params::new();
        p.insert("bogus".into(), 1.0);
        assert!(build_builtin("harmonic", &p).is_err());
        assert!(matches!(build_builtin("pendulum", &Params::new()), Err(Error::UnknownSystem(_))));
    }

    #[test]
    fn degenerate_momenta_vanish() {
        for t in list_builtins() {
            let s = t.build(&Params::new()).unwrap();
            let n = s.config_dim();
            let q = DVector::from_fn(n, |i, _| 0.1 * i as f64 + 0.05);
            let v = DVector::from_fn(n, |i, _| 0.3 - 0.07 * i as f64);
            let gv = s.gradients(&q, &v).1;
            for &i in t.degenerate_momenta {
                assert_eq!(gv[i], 0.0, "{} momentum {i}", t.name);
            }
        }
    }
}
