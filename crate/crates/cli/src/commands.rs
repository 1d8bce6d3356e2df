use std::fmt::Write as _;
use std::io::Write as _;

use dirac_mech::dirac::{self, canonical_form, LinearDirac};
use dirac_mech::induced;
use dirac_mech::integrator::{self, Trajectory};
use dirac_mech::lagrange::LagrangeDiracSystem;
use dirac_mech::selftest::{self, SelftestConfig};
use dirac_mech::systems::{self, Params};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Config, CustomSystem, Field, InitialSection, IntegratorSection, Overrides, SystemSection};
use crate::CliError;

const VERIFY_POINTS: usize = 8;
const CHECK_TOL: f64 = 1e-9;

fn core_err(e: dirac_mech::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn fmt_vec(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

/// `c_0 dq_0 + ...` with the largest coefficient scaled to one and the first
/// nonzero coefficient positive.
fn fmt_covector(a: &DVector<f64>) -> String {
    let scale = a.amax();
    let lead = a.iter().find(|x| x.abs() > 1e-9 * scale).copied().unwrap_or(1.0);
    let a = a * (lead.signum() / scale);
    let mut out = String::new();
    for (i, &c) in a.iter().enumerate() {
        if c.abs() <= 1e-9 {
            continue;
        }
        let mag = c.abs();
        let sign = if c < 0.0 { "-" } else { "+" };
        if out.is_empty() {
            if c < 0.0 {
                out.push('-');
            }
        } else {
            let _ = write!(out, " {sign} ");
        }
        if (mag - 1.0).abs() > 1e-9 {
            let _ = write!(out, "{mag:.6} ");
        }
        let _ = write!(out, "dq_{i}");
    }
    out
}

fn sample_points(n: usize, seed: u64) -> Vec<(DVector<f64>, DVector<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..VERIFY_POINTS)
        .map(|_| {
            let q = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let p = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            (q, p)
        })
        .collect()
}

/// Largest entry of `Bᵀ (W − canonical) B` over the extracted distribution.
fn two_form_defect(d: &LinearDirac, n: usize) -> dirac_mech::Result<(usize, f64)> {
    let w = dirac::extract_two_form(d)?;
    let b = w.distribution().basis();
    let diff = b.transpose() * (w.form() - canonical_form(n)) * b;
    Ok((w.distribution().dim(), diff.amax()))
}

struct PointReport {
    dirac: bool,
    identity: bool,
    projection: bool,
    rank: usize,
    kernel: usize,
    form_dim: usize,
    form_defect: f64,
    canonical: bool,
}

fn verify_point(sys: &LagrangeDiracSystem, q: &DVector<f64>, p: &DVector<f64>) -> dirac_mech::Result<PointReport> {
    let n = sys.config_dim();
    let spec = sys.spec();
    let d = induced::interconnect_at(spec, q, p)?;
    let dirac = d.subspace().dim() == 2 * n && d.is_valid();
    let identity = d.equals(&induced::expected_interconnection(spec, q, p)?)?;
    let delta = spec.constraint_distribution(q)?;
    let projection = induced::config_velocity_projection(&d)?.equals(&delta)?;
    let rank = n - delta.dim();
    let (form_dim, form_defect) = two_form_defect(&d, n)?;
    let canonical = d.equals(&dirac::canonical_structure(n)?)?;
    Ok(PointReport {
        dirac,
        identity,
        projection,
        rank,
        kernel: delta.dim(),
        form_dim,
        form_defect,
        canonical,
    })
}

pub fn verify(cfg: &Config, seed: u64) -> Result<String, CliError> {
    let sys = cfg.build()?;
    let (n, m) = (sys.config_dim(), sys.constraint_rows());
    let mut out = String::new();
    let _ = writeln!(out, "system: {} (n = {n}, constraint rows = {m})", cfg.name());
    let mut failures: Vec<String> = Vec::new();
    let mut reports = Vec::new();
    for (k, (q, p)) in sample_points(n, seed).iter().enumerate() {
        let r = verify_point(&sys, q, p).map_err(|e| CliError::Verification(format!("point {k}: {e}")))?;
        let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
        let _ = writeln!(
            out,
            "point {k}: dirac {} | interconnection identity {} | velocity projection {} | rank {} | kernel dim {}",
            mark(r.dirac),
            mark(r.identity),
            mark(r.projection),
            r.rank,
            r.kernel
        );
        for (ok, name) in [
            (r.dirac, "dirac validity"),
            (r.identity, "interconnection identity"),
            (r.projection, "velocity-projection law"),
            (r.form_defect <= CHECK_TOL, "two-form extraction"),
        ] {
            if !ok {
                failures.push(format!("{name} at point {k}"));
            }
        }
        reports.push(r);
    }
    let ranks: Vec<usize> = reports.iter().map(|r| r.rank).collect();
    if ranks.windows(2).all(|w| w[0] == w[1]) {
        let _ = writeln!(
            out,
            "constraint rank: {} at all {VERIFY_POINTS} points; constraint kernel dim {}",
            ranks[0], reports[0].kernel
        );
    } else {
        let _ = writeln!(out, "constraint rank: varies {ranks:?}");
        failures.push("constant constraint rank".into());
    }
    let proj_ok = reports.iter().filter(|r| r.projection).count();
    let _ = writeln!(out, "velocity-projection law: {proj_ok}/{VERIFY_POINTS} points");
    let worst = reports.iter().map(|r| r.form_defect).fold(0.0, f64::max);
    let _ = writeln!(
        out,
        "two-form extraction: distribution dim {} of {}, max deviation from canonical form {worst:.3e}",
        reports[0].form_dim,
        2 * n
    );
    if reports.iter().all(|r| r.canonical) {
        let _ = writeln!(out, "structure: canonical structure, rank {}", 2 * n);
    } else {
        let _ = writeln!(
            out,
            "structure: constrained, dimension {} with velocity projection of dim {}",
            2 * n,
            reports[0].form_dim
        );
    }
    if failures.is_empty() {
        let _ = writeln!(out, "result: PASS");
        Ok(out)
    } else {
        let _ = writeln!(out, "result: FAIL");
        print!("{out}");
        Err(CliError::Verification(failures.join("; ")))
    }
}

pub fn compose(cfg: &Config, point: Option<&[f64]>) -> Result<String, CliError> {
    let sys = cfg.build()?;
    let n = sys.config_dim();
    let (q, p) = match point {
        None => (DVector::zeros(n), DVector::zeros(n)),
        Some(x) if x.len() == n => (DVector::from_column_slice(x), DVector::zeros(n)),
        Some(x) if x.len() == 2 * n => (DVector::from_column_slice(&x[..n]), DVector::from_column_slice(&x[n..])),
        Some(x) => {
            return Err(CliError::Usage(format!(
                "--point needs {n} (q) or {} (q, p) values, got {}",
                2 * n,
                x.len()
            )))
        }
    };
    let d = induced::interconnect_at(sys.spec(), &q, &p).map_err(core_err)?;
    let config_proj = induced::config_velocity_projection(&d).map_err(core_err)?;
    let mut out = String::new();
    let _ = writeln!(out, "system: {} (n = {n})", cfg.name());
    let _ = writeln!(out, "point: q = {}, p = {}", fmt_vec(&q), fmt_vec(&p));
    let _ = writeln!(out, "dimension: {} (phase dimension {})", d.subspace().dim(), 2 * n);
    let _ = writeln!(
        out,
        "velocity projection: dim {} in T(T*Q), configuration part dim {}",
        d.velocity_projection().dim(),
        config_proj.dim()
    );
    if d.equals(&dirac::canonical_structure(n).map_err(core_err)?).map_err(core_err)? {
        let _ = writeln!(out, "canonical structure, rank {}", 2 * n);
    }
    let ann = config_proj.annihilator();
    let _ = writeln!(out, "annihilator directions beyond the symplectic image: {}", ann.dim());
    for c in ann.basis().column_iter() {
        let _ = writeln!(out, "  {}", fmt_covector(&c.into_owned()));
    }
    let _ = writeln!(out, "basis (columns, rows ordered q̇, ṗ, β, w):");
    let b = d.subspace().basis();
    for row in b.row_iter() {
        let cells: Vec<String> = row.iter().map(|x| format!("{:>10.6}", if x.abs() < 5e-13 { 0.0 } else { *x })).collect();
        let _ = writeln!(out, "  {}", cells.join(" "));
    }
    Ok(out)
}

fn header(fields: &[Field], n: usize, m: usize) -> String {
    let mut cols: Vec<String> = Vec::new();
    for f in fields {
        match f {
            Field::T => cols.push("t".into()),
            Field::Q => cols.extend((0..n).map(|i| format!("q_{i}"))),
            Field::V => cols.extend((0..n).map(|i| format!("v_{i}"))),
            Field::P => cols.extend((0..n).map(|i| format!("p_{i}"))),
            Field::Mu => cols.extend((0..m).map(|i| format!("mu_{i}"))),
            Field::Energy => cols.push("E".into()),
            Field::PowerResidual => cols.push("power_residual".into()),
            Field::ConstraintResidual => cols.push("constraint_residual_max".into()),
            Field::NewtonIters => cols.push("newton_iters".into()),
        }
    }
    cols.join(",")
}

/// Trajectory as CSV text; floats carry 17 significant digits.
pub fn trajectory_csv(traj: &Trajectory, fields: &[Field], n: usize, m: usize) -> String {
    let mut out = header(fields, n, m);
    out.push('\n');
    for (s, d) in traj.states.iter().zip(&traj.diagnostics) {
        let mut cells: Vec<String> = Vec::new();
        let float = |x: f64| format!("{x:.16e}");
        for f in fields {
            match f {
                Field::T => cells.push(float(s.t)),
                Field::Q => cells.extend(s.q.iter().map(|&x| float(x))),
                Field::V => cells.extend(s.v.iter().map(|&x| float(x))),
                Field::P => cells.extend(s.p.iter().map(|&x| float(x))),
                Field::Mu => cells.extend(s.mu.iter().map(|&x| float(x))),
                Field::Energy => cells.push(float(d.energy)),
                Field::PowerResidual => cells.push(float(d.power_residual)),
                Field::ConstraintResidual => cells.push(float(d.constraint_residual_max)),
                Field::NewtonIters => cells.push(d.newton_iterations.to_string()),
            }
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn emit(path: Option<&std::path::Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Runtime(e.to_string())),
    }
}

pub fn simulate(cfg: &Config, o: &Overrides) -> Result<SimulateOutcome, CliError> {
    let sys = cfg.build()?;
    let (n, m) = (sys.config_dim(), sys.constraint_rows());
    let (q0, v0) = cfg.initial(n)?;
    let (icfg, t_final) = cfg.integrator(o)?;
    let initial = integrator::project_initial(&sys, &q0, &v0).map_err(|e| CliError::Schema(format!("initial state: {e}")))?;
    let fields = cfg.fields();
    let path = cfg.output_path(o);
    let (traj, failure) = match integrator::simulate(&sys, &initial, &icfg, t_final) {
        Ok(t) => (t, None),
        Err(f) => (f.trajectory.clone(), Some(f)),
    };
    let mut text = trajectory_csv(&traj, &fields, n, m);
    if let Some(f) = &failure {
        let _ = writeln!(text, "# {}", f.to_string().replace('\n', " "));
    }
    emit(path.as_deref(), &text)?;
    if let Some(f) = failure {
        return Err(CliError::Runtime(f.to_string()));
    }
    let summary = format!(
        "{}: {} states, scheme {}, h = {}, energy drift {:.3e}, max power residual {:.3e}, max constraint residual {:.3e}, chart changes {}",
        cfg.name(),
        traj.len(),
        icfg.scheme,
        icfg.h,
        traj.energy_drift(),
        traj.max_power_residual(),
        traj.max_constraint_residual(),
        traj.chart_changes.len()
    );
    Ok(SimulateOutcome {
        summary,
        csv_on_stdout: path.is_none(),
    })
}

pub struct SimulateOutcome {
    pub summary: String,
    pub csv_on_stdout: bool,
}

pub fn selftest_run(seed: u64, scale: f64) -> Result<String, CliError> {
    let cfg = SelftestConfig {
        seed,
        scale,
        ..Default::default()
    };
    let reports = selftest::run_all(&cfg);
    let mut out = String::new();
    let _ = writeln!(out, "selftest: {} suites, seed {seed}", reports.len());
    let mut first_failure = None;
    for r in &reports {
        let status = if r.ok() { "ok" } else { "FAILED" };
        let _ = writeln!(
            out,
            "{:<20} {:>4}/{:<4} passed  {status}  ({:.2}s)",
            r.name,
            r.passed,
            r.cases,
            r.elapsed.as_secs_f64()
        );
        if let (None, Some(f)) = (&first_failure, &r.failure) {
            first_failure = Some(format!("{}: {f}", r.name));
        }
    }
    match first_failure {
        None => {
            let _ = writeln!(out, "all suites passed");
            Ok(out)
        }
        Some(f) => {
            print!("{out}");
            Err(CliError::Verification(f))
        }
    }
}

/// A complete config for a builtin: as polynomial data when every part can
/// be written out, otherwise by name and parameters.
pub fn export(name: &str, params: &Params, as_builtin: bool) -> Result<Config, CliError> {
    let template = systems::template(name).map_err(|e| CliError::Schema(e.to_string()))?;
    let resolved = template.resolve(params).map_err(|e| CliError::Schema(e.to_string()))?;
    let sys = template.build(&resolved).map_err(|e| CliError::Schema(e.to_string()))?;
    let (q0, v0) = template.default_initial(&resolved).map_err(|e| CliError::Schema(e.to_string()))?;
    let custom = if as_builtin { None } else { CustomSystem::export(name, &sys) };
    let system = match custom {
        Some(c) => SystemSection {
            custom: Some(c),
            ..Default::default()
        },
        None => SystemSection {
            builtin: Some(name.into()),
            params: resolved,
            custom: None,
        },
    };
    Ok(Config {
        system,
        integrator: Some(IntegratorSection {
            scheme: Some("implicit-midpoint".into()),
            h: Some(0.01),
            t_final: Some(10.0),
            ..Default::default()
        }),
        initial: Some(InitialSection {
            q0: q0.iter().copied().collect(),
            v0: v0.iter().copied().collect(),
        }),
        output: None,
    })
}

#[cfg(test)]
/// Largest disagreement between two systems' Lagrangians, gradients,
/// forces and constraint rows at `count` seeded points.
pub fn system_distance(a: &LagrangeDiracSystem, b: &LagrangeDiracSystem, count: usize, seed: u64) -> f64 {
    let n = a.config_dim();
    if n != b.config_dim() || a.constraint_rows() != b.constraint_rows() {
        return f64::INFINITY;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let mut draw = || DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let (q, v, p) = (draw(), draw(), draw());
        let (ga, gb) = (a.gradients(&q, &v), b.gradients(&q, &v));
        worst = worst
            .max((a.lagrangian(&q, &v) - b.lagrangian(&q, &v)).abs())
            .max((ga.0 - gb.0).amax())
            .max((ga.1 - gb.1).amax())
            .max((a.force(&q, &v, &p) - b.force(&q, &v, &p)).amax())
            .max((a.omega(&q) - b.omega(&q)).amax());
    }
    worst
}
