use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn dm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dirac-mech")).args(args).output().unwrap()
}

fn dm_path(cmd: &str, cfg: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, cfg.to_str().unwrap()];
    args.extend_from_slice(extra);
    dm(&args)
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], rows: &[Vec<f64>], name: &str) -> Vec<f64> {
    let i = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[i]).collect()
}

const HARMONIC: &str = r#"{"system": {"builtin": "harmonic"}, "integrator": {"h": 0.01, "t_final": 10}}"#;

#[test]
fn verify_harmonic_reports_canonical_structure() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "h.json", HARMONIC);
    let out = dm_path("verify", &cfg, &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("canonical structure, rank 2"));
}

#[test]
fn verify_rlc_reports_kernel_dimension() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "rlc.json", r#"{"system": {"builtin": "rlc"}}"#);
    let out = dm_path("verify", &cfg, &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("constraint kernel dim 2"));
}

#[test]
fn inconsistent_coupling_is_a_schema_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "bad.json",
        r#"{"system": {"custom": {
            "subsystems": [{"dimension": 1, "lagrangian": [{"coeff": 0.5, "q_exps": [0], "v_exps": [2]}]}],
            "coupling": {"constant": [[1, -1]]}}}}"#,
    );
    assert_eq!(dm_path("verify", &cfg, &[]).status.code(), Some(2));
    assert_eq!(dm_path("compose", &cfg, &[]).status.code(), Some(2));
}

#[test]
fn unknown_builtin_and_bad_json_exit_two() {
    let dir = TempDir::new().unwrap();
    let a = write(&dir, "a.json", r#"{"system": {"builtin": "pendulum"}}"#);
    let b = write(&dir, "b.json", "{ not json");
    assert_eq!(dm_path("verify", &a, &[]).status.code(), Some(2));
    assert_eq!(dm_path("simulate", &b, &[]).status.code(), Some(2));
    assert_eq!(dm(&["verify", "/nonexistent/config.json"]).status.code(), Some(2));
}

#[test]
fn simulate_harmonic_matches_cosine() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "h.json", HARMONIC);
    let out_path = dir.path().join("h.csv");
    let out = dm_path("simulate", &cfg, &["--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let (header, rows) = csv(&out_path);
    assert_eq!(header.join(","), "t,q_0,v_0,p_0,E,power_residual,constraint_residual_max,newton_iters");
    assert_eq!(rows.len(), 1001);
    let q = column(&header, &rows, "q_0");
    assert!((q[1000] - 10f64.cos()).abs() < 1e-3);
}

#[test]
fn simulate_floats_carry_seventeen_digits() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "h.json", HARMONIC);
    let out_path = dir.path().join("h.csv");
    dm_path("simulate", &cfg, &["--out", out_path.to_str().unwrap(), "--t-final", "0.02"]);
    let text = std::fs::read_to_string(&out_path).unwrap();
    let cell = text.lines().nth(2).unwrap().split(',').nth(1).unwrap();
    let mantissa = cell.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{cell}");
}

#[test]
fn damped_energy_column_never_increases() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "d.json", r#"{"system": {"builtin": "damped"}, "integrator": {"h": 0.01, "t_final": 5}}"#);
    let out_path = dir.path().join("d.csv");
    assert_eq!(dm_path("simulate", &cfg, &["--out", out_path.to_str().unwrap()]).status.code(), Some(0));
    let (header, rows) = csv(&out_path);
    let e = column(&header, &rows, "E");
    assert!(e.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn mass_spring_constraint_column_stays_small() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "m.json", r#"{"system": {"builtin": "mass-spring"}, "integrator": {"h": 0.01, "t_final": 5}}"#);
    let out_path = dir.path().join("m.csv");
    assert_eq!(dm_path("simulate", &cfg, &["--out", out_path.to_str().unwrap()]).status.code(), Some(0));
    let (header, rows) = csv(&out_path);
    assert!(header.contains(&"mu_0".to_string()));
    assert!(column(&header, &rows, "constraint_residual_max").iter().all(|&c| c <= 1e-8));
}

#[test]
fn output_fields_select_columns() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "h.json",
        r#"{"system": {"builtin": "harmonic"}, "integrator": {"h": 0.1, "t_final": 1}, "output": {"fields": ["t", "E"]}}"#,
    );
    let out_path = dir.path().join("h.csv");
    dm_path("simulate", &cfg, &["--out", out_path.to_str().unwrap()]);
    let (header, rows) = csv(&out_path);
    assert_eq!(header, vec!["t", "E"]);
    assert_eq!(rows.len(), 11);
}

#[test]
fn integration_failure_keeps_partial_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "h.json", HARMONIC);
    let out_path = dir.path().join("h.csv");
    let out = dm_path("simulate", &cfg, &["--out", out_path.to_str().unwrap(), "--tol", "1e-300"]);
    assert_eq!(out.status.code(), Some(3));
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.lines().next().unwrap().starts_with("t,"));
    assert!(text.lines().last().unwrap().starts_with('#'));
}

#[test]
fn simulate_to_stdout_is_pure_csv() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "h.json", HARMONIC);
    let out = dm_path("simulate", &cfg, &["--t-final", "0.05", "--scheme", "backward-euler"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().skip(1).all(|l| l.split(',').all(|c| c.parse::<f64>().is_ok())));
}

#[test]
fn compose_mass_spring_at_origin() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "m.json", r#"{"system": {"builtin": "mass-spring"}}"#);
    let out = dm_path("compose", &cfg, &[]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("dimension: 8"));
    assert!(text.contains("dq_1 - dq_2"));
}

#[test]
fn compose_unconstrained_and_circuit() {
    let dir = TempDir::new().unwrap();
    let free = write(
        &dir,
        "free.json",
        r#"{"system": {"custom": {"subsystems": [{"dimension": 2, "lagrangian": [
            {"coeff": 0.5, "q_exps": [0, 0], "v_exps": [2, 0]},
            {"coeff": 0.5, "q_exps": [0, 0], "v_exps": [0, 2]}]}]}}}"#,
    );
    let out = dm_path("compose", &free, &["--point", "0.5,-1,2,0"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("canonical structure, rank 4"));
    let rlc = write(&dir, "rlc.json", r#"{"system": {"builtin": "rlc"}}"#);
    let out = dm_path("compose", &rlc, &[]);
    assert!(stdout(&out).contains("configuration part dim 2"));
    assert_eq!(dm_path("compose", &rlc, &["--point", "1,2,3"]).status.code(), Some(2));
}

#[test]
fn exported_builtins_verify() {
    let dir = TempDir::new().unwrap();
    let list = stdout(&dm(&["list"]));
    let names: Vec<&str> = list
        .lines()
        .filter(|l| !l.starts_with(' '))
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    assert!(names.len() >= 6 && names.contains(&"mass-spring"));
    for name in names {
        let path = dir.path().join(format!("{name}.json"));
        let out = dm(&["export", name, "--out", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{name}");
        assert_eq!(dm_path("verify", &path, &[]).status.code(), Some(0), "{name}");
    }
}

#[test]
fn exported_config_simulates_like_the_builtin() {
    let dir = TempDir::new().unwrap();
    let exported = dir.path().join("ms.json");
    dm(&["export", "mass-spring", "--out", exported.to_str().unwrap()]);
    let builtin = write(&dir, "b.json", r#"{"system": {"builtin": "mass-spring"}, "integrator": {"h": 0.01, "t_final": 10}}"#);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    dm_path("simulate", &exported, &["--out", a.to_str().unwrap()]);
    dm_path("simulate", &builtin, &["--out", b.to_str().unwrap()]);
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn selftest_lists_suites_and_seed_keeps_outcome() {
    for seed in ["1", "2"] {
        let out = dm(&["selftest", "--seed", seed, "--scale", "0.2"]);
        assert_eq!(out.status.code(), Some(0));
        let text = stdout(&out);
        let suites = text.lines().filter(|l| l.contains(" passed ")).count();
        assert!(suites >= 7, "{text}");
    }
}
