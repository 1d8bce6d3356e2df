//! Acceptance criteria, one line each. Runs without the libtest harness so
//! every line is printed whether or not it passes.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use dirac_mech::integrator::{self, IntegratorConfig, Scheme, Trajectory};
use dirac_mech::lagrange::{self, LagrangeDiracSystem};
use dirac_mech::par::Mode;
use dirac_mech::selftest::{self, SelftestConfig};
use dirac_mech::systems::{self, Params};
use nalgebra::{DVector, Matrix3, Matrix6, Vector6};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Box<dyn Fn() -> Outcome>);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn suite(name: &str, expected_cases: u32, limit_s: f64) -> Outcome {
    let cfg = SelftestConfig {
        mode: Mode::Parallel,
        ..Default::default()
    };
    let r = selftest::run_suite(name, &cfg).ok_or_else(|| format!("no suite {name}"))?;
    if let Some(f) = r.failure {
        return Err(f);
    }
    ensure(r.cases >= expected_cases && r.passed == r.cases, || {
        format!("{}/{} cases passed", r.passed, r.cases)
    })?;
    let secs = r.elapsed.as_secs_f64();
    ensure(secs < limit_s, || format!("took {secs:.2}s, limit {limit_s}s"))?;
    Ok(format!("{}/{} cases in {secs:.2}s", r.passed, r.cases))
}

fn run(name: &str, params: &Params, h: f64, t_final: f64) -> Result<(LagrangeDiracSystem, Trajectory), String> {
    let t = systems::template(name).map_err(|e| e.to_string())?;
    let sys = t.build(params).map_err(|e| e.to_string())?;
    let (q0, v0) = t.default_initial(params).map_err(|e| e.to_string())?;
    let s0 = integrator::project_initial(&sys, &q0, &v0).map_err(|e| e.to_string())?;
    let cfg = IntegratorConfig {
        h,
        ..Default::default()
    };
    let traj = integrator::simulate(&sys, &s0, &cfg, t_final).map_err(|e| e.to_string())?;
    Ok((sys, traj))
}

fn c6_harmonic() -> Outcome {
    let start = Instant::now();
    let (_, traj) = run("harmonic", &Params::new(), 0.01, 10.0)?;
    let err = traj.states.iter().map(|s| (s.q[0] - s.t.cos()).abs()).fold(0.0, f64::max);
    ensure(err <= 1e-3, || format!("max |q − cos t| = {err:e}"))?;
    let drift = traj.energy_drift();
    ensure(drift <= 1e-8, || format!("energy drift {drift:e}"))?;
    let ratio = selftest::convergence_ratio(Scheme::ImplicitMidpoint, 1.0, 1.0, 0.0, 0.01, 10.0).map_err(|e| e.to_string())?;
    ensure((3.5..=4.5).contains(&ratio), || format!("order ratio {ratio}"))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 2.0, || format!("took {secs:.2}s"))?;
    Ok(format!("max err {err:.2e}, drift {drift:.1e}, ratio {ratio:.3}, {secs:.2}s"))
}

fn c7_damped() -> Outcome {
    let h = 0.01;
    let r = 0.5;
    let (_, traj) = run("damped", &Params::new(), h, 10.0)?;
    let power = traj.max_power_residual();
    ensure(power <= 1e-8, || format!("power residual {power:e}"))?;
    let e = traj.energies();
    ensure(e.windows(2).all(|w| w[1] <= w[0]), || "energy increased".into())?;
    let mut worst: f64 = 0.0;
    for (k, pair) in traj.states.windows(2).enumerate() {
        let v = 0.5 * (pair[0].v[0] + pair[1].v[0]);
        worst = worst.max(((e[k + 1] - e[k]) / h + r * v * v).abs());
    }
    ensure(worst <= 1e-8, || format!("|dE/dt + r v²| = {worst:e}"))?;
    Ok(format!("power residual {power:.1e}, |dE/dt + r v²| {worst:.1e}"))
}

/// Implicit midpoint on the monolithic three-mass chain.
fn three_mass(h: f64, steps: usize) -> Vec<[f64; 3]> {
    let k = Matrix3::new(2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0);
    let mut a = Matrix6::zeros();
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
    a.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-k));
    let i = Matrix6::identity();
    let step = (i - a * (h / 2.0)).try_inverse().expect("regular") * (i + a * (h / 2.0));
    let mut z = Vector6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    (0..=steps)
        .map(|_| {
            let x = [z[0], z[1], z[2]];
            z = step * z;
            x
        })
        .collect()
}

fn c8_mass_spring() -> Outcome {
    let h = 1e-3;
    let (sys, traj) = run("mass-spring", &Params::new(), h, 10.0)?;
    let reference = three_mass(h, 10_000);
    ensure(traj.len() == reference.len(), || "trajectory length".into())?;
    let (mut err, mut dv, mut pbar, mut fsum, mut fpow) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (s, x) in traj.states.iter().zip(&reference) {
        err = err.max((s.q[0] - x[0]).abs()).max((s.q[1] - x[1]).abs()).max((s.q[3] - x[2]).abs());
        dv = dv.max((s.v[1] - s.v[2]).abs());
        pbar = pbar.max(s.p[2].abs());
    }
    for pair in traj.states.windows(2) {
        let q = (&pair[0].q + &pair[1].q) * 0.5;
        let v = (&pair[0].v + &pair[1].v) * 0.5;
        let f = lagrange::interface_forces(&sys, &q, &pair[1].mu);
        let (f2, f2bar) = (f.per_subsystem[0][1], f.per_subsystem[1][0]);
        fsum = fsum.max((f2 + f2bar).abs());
        fpow = fpow.max((f2 * v[1] + f2bar * v[2]).abs());
    }
    ensure(err <= 1e-6, || format!("oracle error {err:e}"))?;
    ensure(dv <= 1e-10, || format!("|v2 − v̄2| = {dv:e}"))?;
    ensure(pbar <= 1e-8, || format!("|p̄2| = {pbar:e}"))?;
    ensure(fsum <= 1e-9, || format!("|f2 + f̄2| = {fsum:e}"))?;
    ensure(fpow <= 1e-9, || format!("interface power {fpow:e}"))?;
    Ok(format!(
        "oracle err {err:.1e}, |v2−v̄2| {dv:.1e}, |p̄2| {pbar:.1e}, |f2+f̄2| {fsum:.1e}, power {fpow:.1e}"
    ))
}

fn c9_circuits() -> Outcome {
    let (_, lc) = run("lc", &Params::new(), 0.01, 10.0)?;
    let drift = lc.energy_drift();
    ensure(drift <= 1e-8, || format!("LC drift {drift:e}"))?;
    let h = 0.01;
    let (sys, rlc) = run("rlc", &Params::new(), h, 10.0)?;
    let e = rlc.energies();
    let mut worst: f64 = 0.0;
    for (k, pair) in rlc.states.windows(2).enumerate() {
        let vr = 0.5 * (pair[0].v[0] + pair[1].v[0]);
        worst = worst.max(((e[k + 1] - e[k]) / h + vr * vr).abs());
    }
    ensure(worst <= 1e-8, || format!("|dE/dt + R v_R²| = {worst:e}"))?;
    let omega = sys.omega(&DVector::zeros(5));
    let rows: Vec<Vec<i64>> = omega.row_iter().map(|r| r.iter().map(|&x| x as i64).collect()).collect();
    ensure(omega.iter().all(|x| x.fract() == 0.0), || "non-integer constraint rows".into())?;
    let exact = dirac_oracle::kernel_dim(&rows, 5);
    let numeric = sys.spec().constraint_distribution(&DVector::zeros(5)).map_err(|e| e.to_string())?.dim();
    ensure(exact == 2 && numeric == 2, || format!("kernel dims exact {exact}, numeric {numeric}"))?;
    Ok(format!("LC drift {drift:.1e}, RLC balance {worst:.1e}, kernel dim {exact} (exact) = {numeric}"))
}

fn ball(tau: f64) -> Result<Trajectory, String> {
    let mut p = Params::new();
    p.insert("tau".into(), tau);
    Ok(run("rolling-ball", &p, 1e-3, 1.0)?.1)
}

fn c10_rolling_ball() -> Outcome {
    let driven = ball(0.1)?;
    let c1 = driven.max_constraint_residual();
    let free = ball(0.0)?;
    let c0 = free.max_constraint_residual();
    let drift = free.energy_drift();
    ensure(c1 <= 1e-6 && c0 <= 1e-6, || format!("constraint residuals {c1:e}, {c0:e}"))?;
    ensure(drift <= 1e-6, || format!("energy drift {drift:e}"))?;
    Ok(format!("constraint residual {:.1e}, drift (τ = 0) {drift:.1e}", c1.max(c0)))
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_dirac-mech")
}

fn c12_cli() -> Outcome {
    let status = Command::new(bin())
        .arg("selftest")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.code() == Some(0), || {
        format!("selftest exit {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stdout))
    })?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("mass-spring.json");
    std::fs::write(
        &cfg,
        r#"{"system": {"builtin": "mass-spring"}, "integrator": {"h": 0.01, "t_final": 2}}"#,
    )
    .map_err(|e| e.to_string())?;
    let simulate = |out: &Path| {
        Command::new(bin())
            .arg("simulate")
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .output()
            .map(|o| o.status.code())
    };
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    ensure(simulate(&a).map_err(|e| e.to_string())? == Some(0), || "simulate failed".into())?;
    ensure(simulate(&b).map_err(|e| e.to_string())? == Some(0), || "simulate failed".into())?;
    let (ba, bb) = (std::fs::read(&a).map_err(|e| e.to_string())?, std::fs::read(&b).map_err(|e| e.to_string())?);
    ensure(!ba.is_empty() && ba == bb, || "CSV differs between runs".into())?;
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"system": {"builtin": "harmonic"}, "integrator": {"h": 0.01, "stepsize": 1}}"#)
        .map_err(|e| e.to_string())?;
    let code = Command::new(bin())
        .arg("simulate")
        .arg(&bad)
        .output()
        .map_err(|e| e.to_string())?
        .status
        .code();
    ensure(code == Some(2), || format!("schema violation exited {code:?}"))?;
    Ok(format!("selftest exit 0, CSV identical ({} bytes), schema violation exit 2", ba.len()))
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("Dirac validity", Box::new(|| suite("dirac-validity", 500, 5.0))),
        ("bowtie laws", Box::new(|| suite("bowtie-laws", 200, 10.0))),
        ("elimination and pull-back bowtie agree", Box::new(|| suite("bowtie-pullback", 100, 10.0))),
        ("composition theorem", Box::new(|| suite("composition", 100, 10.0))),
        ("interconnection identity", Box::new(|| {
            let n = systems::list_builtins().len() as u32;
            suite("interconnection", 8 * n, f64::INFINITY)
        })),
        ("harmonic oscillator", Box::new(c6_harmonic)),
        ("damped oscillator", Box::new(c7_damped)),
        ("mass-spring interconnection", Box::new(c8_mass_spring)),
        ("circuits", Box::new(c9_circuits)),
        ("rolling ball", Box::new(c10_rolling_ball)),
        ("gradient checks", Box::new(|| {
            let subs: usize = systems::list_builtins()
                .iter()
                .map(|t| t.build(&Params::new()).map(|s| s.subsystems().len()).unwrap_or(0))
                .sum();
            suite("gradients", 20 * subs as u32, f64::INFINITY)
        })),
        ("CLI contract", Box::new(c12_cli)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("[PASS] {:>2}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {:>2}. {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
