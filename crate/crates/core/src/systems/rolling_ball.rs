//! Ball rolling without slipping on a rotating table that is geared to a
//! second, driven table.
//!
//! Coordinates are `(s1, s2, θ, u)`: table angles, exponential coordinates
//! of the ball attitude `R = R_ref exp(θ̂)` and the ball centre `u`. The
//! reference attitude `R_ref` is replaced whenever `‖θ‖` exceeds `π/2`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use nalgebra::{dmatrix, DMatrix, DVector, Matrix3, Rotation3, SVector, Vector3};
use num_dual::{gradient, DualNum};

use super::{param, Bound, ParamSpec, Params};
use crate::error::Result;
use crate::induced::DistributionField;
use crate::lagrange::{ChartHandler, ForceField, LagrangeDiracSystem, LagrangianModel, PolyTerm, PontryaginState, Subsystem};

pub const PARAMS: &[ParamSpec] = &[
    param("tau", 0.1, Bound::Any, "constant torque on table 1"),
    param("I1", 1.0, Bound::Positive, "inertia of table 1"),
    param("I2", 1.0, Bound::Positive, "inertia of table 2"),
    param("rho", 1.0, Bound::Positive, "ball density; mass is 4πρ/3"),
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BallParams {
    pub tau: f64,
    pub i1: f64,
    pub i2: f64,
    pub m3: f64,
}

impl BallParams {
    pub fn from_params(p: &Params) -> Self {
        BallParams {
            tau: p["tau"],
            i1: p["I1"],
            i2: p["I2"],
            m3: 4.0 * PI / 3.0 * p["rho"],
        }
    }
}

/// `((1 − cos φ)/φ², (φ − sin φ)/φ³)` as functions of `s = φ²`.
fn coefficients<D: DualNum<Primitive = f64> + Copy>(s: D) -> (D, D) {
    if s < 1e-2 {
        // alternating series in s with factorial denominators
        let a = [2.0, 24.0, 720.0, 40320.0, 3628800.0];
        let b = [6.0, 120.0, 5040.0, 362880.0, 39916800.0];
        let mut pa = D::from(0.0);
        let mut pb = D::from(0.0);
        let mut sk = D::from(1.0);
        for k in 0..5 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            pa += sk * (sign / a[k]);
            pb += sk * (sign / b[k]);
            sk *= s;
        }
        (pa, pb)
    } else {
        let phi = s.sqrt();
        ((D::from(1.0) - phi.cos()) / s, (phi - phi.sin()) / (s * phi))
    }
}

fn hat<D: DualNum<Primitive = f64> + Copy>(t: [D; 3]) -> [[D; 3]; 3] {
    let z = D::from(0.0);
    [[z, -t[2], t[1]], [t[2], z, -t[0]], [-t[1], t[0], z]]
}

/// `J(θ) = I + a θ̂ + b θ̂²`, so that `Ṙ Rᵀ = (R_ref J(θ) θ̇)^`.
fn left_jacobian<D: DualNum<Primitive = f64> + Copy>(t: [D; 3]) -> [[D; 3]; 3] {
    let s = t[0] * t[0] + t[1] * t[1] + t[2] * t[2];
    let (a, b) = coefficients(s);
    let h = hat(t);
    let mut out = [[D::from(0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut h2 = D::from(0.0);
            for k in 0..3 {
                h2 += h[i][k] * h[k][j];
            }
            out[i][j] = a * h[i][j] + b * h2;
        }
        out[i][i] += D::from(1.0);
    }
    out
}

pub fn left_jacobian_matrix(theta: &Vector3<f64>) -> Matrix3<f64> {
    let j = left_jacobian([theta[0], theta[1], theta[2]]);
    Matrix3::from_fn(|i, k| j[i][k])
}

/// `m₃/2 (tr(ṘᵀṘ) + |u̇|²) = m₃ |J(θ) θ̇|² + m₃/2 |u̇|²` with
/// `x = (θ, u, θ̇, u̇)`.
fn ball_lagrangian<D: DualNum<Primitive = f64> + Copy>(m3: f64, x: &[D]) -> D {
    let j = left_jacobian([x[0], x[1], x[2]]);
    let mut out = D::from(0.0);
    for row in &j {
        let w = row[0] * x[6] + row[1] * x[7] + row[2] * x[8];
        out += w * w * m3;
    }
    for &u in &x[9..12] {
        out += u * u * (0.5 * m3);
    }
    out
}

fn stack(q: &DVector<f64>, v: &DVector<f64>) -> SVector<f64, 12> {
    SVector::from_iterator(q.iter().chain(v.iter()).copied())
}

fn ball_model(m3: f64) -> LagrangianModel {
    let grad = Arc::new(move |q: &DVector<f64>, v: &DVector<f64>| {
        let (_, g) = gradient(|x| ball_lagrangian(m3, x.as_slice()), &stack(q, v));
        (
            DVector::from_column_slice(&g.as_slice()[..6]),
            DVector::from_column_slice(&g.as_slice()[6..]),
        )
    });
    LagrangianModel::custom(
        6,
        "rolling ball kinetic energy",
        move |q, v| ball_lagrangian(m3, stack(q, v).as_slice()),
        Some(grad),
    )
}

/// Spatial angular velocity `R_ref J(θ) θ̇`.
pub fn spatial_angular_velocity(r_ref: &Matrix3<f64>, theta: &Vector3<f64>, theta_dot: &Vector3<f64>) -> Vector3<f64> {
    r_ref * left_jacobian_matrix(theta) * theta_dot
}

/// `R_ref exp(θ̂)`.
pub fn attitude(r_ref: &Matrix3<f64>, theta: &Vector3<f64>) -> Matrix3<f64> {
    r_ref * Rotation3::new(*theta).into_inner()
}

fn coupling(r_ref: Matrix3<f64>) -> DistributionField {
    DistributionField::from_fn(8, 3, move |q| {
        let theta = Vector3::new(q[2], q[3], q[4]);
        let m = r_ref * left_jacobian_matrix(&theta);
        let (u1, u2) = (q[5], q[6]);
        // ṡ1 + ṡ2 = 0; no slip in x: −ω₂ + u̇₁ + ṡ₂u₂ = 0; in y: ω₁ + u̇₂ − ṡ₂u₁ = 0
        dmatrix![
            1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0;
            0.0, u2, -m[(1, 0)], -m[(1, 1)], -m[(1, 2)], 1.0, 0.0, 0.0;
            0.0, -u1, m[(0, 0)], m[(0, 1)], m[(0, 2)], 0.0, 1.0, 0.0
        ]
    })
}

/// The interconnected system in the chart centred at `r_ref`.
pub fn build(p: &BallParams, r_ref: Matrix3<f64>) -> Result<LagrangeDiracSystem> {
    let table = |name: &str, inertia: f64, torque: f64| {
        let l = LagrangianModel::polynomial(1, vec![PolyTerm::single(1, 0.5 * inertia, 0, 2, false)])?;
        let f = if torque != 0.0 {
            ForceField::constant(1, 0, torque)
        } else {
            ForceField::Zero
        };
        Subsystem::new(name, l, f, DistributionField::unconstrained(1))
    };
    let ball = Subsystem::new(
        "ball",
        ball_model(p.m3),
        ForceField::Zero,
        DistributionField::constant(DMatrix::from_row_slice(1, 6, &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0])),
    )?;
    let sys = LagrangeDiracSystem::new(
        vec![table("table 1", p.i1, p.tau)?, table("table 2", p.i2, 0.0)?, ball],
        coupling(r_ref),
    )?;
    Ok(sys.with_chart(Arc::new(BallChart { params: *p, r_ref })))
}

/// A generic starting point. The velocity is not admissible as given;
/// [`project_initial`](crate::integrator::project_initial) projects it onto
/// the constraints.
pub fn default_initial() -> (Vec<f64>, Vec<f64>) {
    (
        vec![0.0, 0.0, 0.3, -0.2, 0.1, 1.0, 0.5, 1.0],
        vec![0.5, -0.5, 0.3, -0.2, 0.4, 0.1, 0.2, 0.0],
    )
}

/// Re-centres the attitude chart when `‖θ‖ > π/2`.
pub struct BallChart {
    params: BallParams,
    r_ref: Matrix3<f64>,
}

impl BallChart {
    pub fn reference(&self) -> &Matrix3<f64> {
        &self.r_ref
    }
}

impl ChartHandler for BallChart {
    fn recenter(&self, state: &PontryaginState) -> Option<(LagrangeDiracSystem, PontryaginState)> {
        let theta = Vector3::new(state.q[2], state.q[3], state.q[4]);
        if theta.norm() <= FRAC_PI_2 {
            return None;
        }
        let theta_dot = Vector3::new(state.v[2], state.v[3], state.v[4]);
        let omega = spatial_angular_velocity(&self.r_ref, &theta, &theta_dot);
        let r_new = attitude(&self.r_ref, &theta);
        let new_rate = r_new.transpose() * omega;
        let sys = build(&self.params, r_new).ok()?;
        let mut q = state.q.clone();
        let mut v = state.v.clone();
        for k in 0..3 {
            q[2 + k] = 0.0;
            v[2 + k] = new_rate[k];
        }
        let p = sys.gradients(&q, &v).1;
        let next = PontryaginState {
            t: state.t,
            q,
            v,
            p,
            mu: state.mu.clone(),
        };
        Some((sys, next))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> BallParams {
        BallParams {
            tau: 0.1,
            i1: 1.0,
            i2: 1.0,
            m3: 4.0 * PI / 3.0,
        }
    }

    #[test]
    fn series_and_closed_form_agree() {
        for s in [0.0099f64, 0.0101] {
            let (a, b) = coefficients(s);
            let phi = s.sqrt();
            assert!((a - (1.0 - phi.cos()) / s).abs() < 1e-12);
            assert!((b - (phi - phi.sin()) / (s * phi)).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_rotation_derivative() {
        let theta = Vector3::new(0.3, -0.5, 0.2);
        let rate = Vector3::new(0.7, 0.1, -0.4);
        let h = 1e-6;
        let r = |t: f64| attitude(&Matrix3::identity(), &(theta + rate * t));
        let rdot = (r(h) - r(-h)) / (2.0 * h);
        let w = rdot * r(0.0).transpose();
        let omega = Vector3::new(w[(2, 1)], w[(0, 2)], w[(1, 0)]);
        let expect = spatial_angular_velocity(&Matrix3::identity(), &theta, &rate);
        assert!((omega - expect).amax() < 1e-8);
    }

    #[test]
    fn kinetic_energy_is_trace_form() {
        let m3 = params().m3;
        let theta = Vector3::new(0.4, 0.2, -0.3);
        let rate = Vector3::new(-0.2, 0.5, 0.9);
        let udot = Vector3::new(0.3, -0.1, 0.0);
        let h = 1e-6;
        let r = |t: f64| attitude(&Matrix3::identity(), &(theta + rate * t));
        let rdot = (r(h) - r(-h)) / (2.0 * h);
        let expect = 0.5 * m3 * ((rdot.transpose() * rdot).trace() + udot.norm_squared());
        let q = DVector::from_vec(vec![theta[0], theta[1], theta[2], 0.0, 0.0, 1.0]);
        let v = DVector::from_vec(vec![rate[0], rate[1], rate[2], udot[0], udot[1], udot[2]]);
        assert!((ball_model(m3).eval(&q, &v) - expect).abs() < 1e-8);
    }

    #[test]
    fn dual_gradient_matches_differences() {
        let m = ball_model(params().m3);
        let q = DVector::from_vec(vec![0.3, -0.2, 0.6, 1.0, 0.5, 1.0]);
        let v = DVector::from_vec(vec![0.1, 0.9, -0.4, 0.2, 0.3, 0.0]);
        assert!(m.gradient_check(&q, &v) < 1e-7);
        let q0 = DVector::zeros(6);
        assert!(m.gradient_check(&q0, &v) < 1e-7);
    }

    #[test]
    fn projected_default_is_admissible() {
        let sys = build(&params(), Matrix3::identity()).unwrap();
        let (q, v) = default_initial();
        let (q, v) = (DVector::from_vec(q), DVector::from_vec(v));
        assert!((sys.omega(&q) * &v).amax() > 1e-3);
        let s0 = crate::integrator::project_initial(&sys, &q, &v).unwrap();
        assert!((sys.omega(&q) * &s0.v).amax() < 1e-14);
    }

    #[test]
    fn recentering_preserves_physics() {
        let p = params();
        let sys = build(&p, Matrix3::identity()).unwrap();
        let q = DVector::from_vec(vec![0.1, -0.1, 1.2, -0.9, 0.6, 1.0, 0.2, 1.0]);
        let v = DVector::from_vec(vec![0.5, -0.5, 0.3, 0.2, -0.1, 0.0, 0.0, 0.0]);
        let state = PontryaginState {
            t: 0.0,
            p: sys.gradients(&q, &v).1,
            q,
            v,
            mu: DVector::zeros(4),
        };
        let (sys2, st2) = sys.chart().unwrap().recenter(&state).unwrap();
        let e1 = crate::lagrange::generalized_energy(&sys, &state.q, &state.v, &state.p);
        let e2 = crate::lagrange::generalized_energy(&sys2, &st2.q, &st2.v, &st2.p);
        assert!((e1 - e2).abs() < 1e-12);
        // constraint rows measure physical velocities, so they agree too
        let r1 = sys.omega(&state.q) * &state.v;
        let r2 = sys2.omega(&st2.q) * &st2.v;
        assert!((r1 - r2).amax() < 1e-12);
        let small = PontryaginState {
            q: DVector::zeros(8),
            ..state
        };
        assert!(sys.chart().unwrap().recenter(&small).is_none());
    }
}
