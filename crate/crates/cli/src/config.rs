//! Configuration files: JSON, validated before anything is computed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dirac_mech::induced::{DistributionField, FieldForm};
use dirac_mech::integrator::{IntegratorConfig, Scheme};
use dirac_mech::lagrange::{ForceField, ForceTerm, LagrangeDiracSystem, LagrangianModel, PolyTerm, Subsystem};
use dirac_mech::systems::{self, Params};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub system: SystemSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

/// Exactly one of `builtin` or `custom`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomSystem>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSystem {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub subsystems: Vec<SubsystemConfig>,
    /// Rows over the concatenated coordinates of all subsystems.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<ConstraintConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsystemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dimension: usize,
    pub lagrangian: Vec<TermConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<ConstraintConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub forces: Vec<ForceConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub coeff: f64,
    pub q_exps: Vec<u32>,
    pub v_exps: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceConfig {
    pub index: usize,
    pub coeff: f64,
    pub q_exps: Vec<u32>,
    pub v_exps: Vec<u32>,
}

/// Constraint one-forms, one row each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintConfig {
    Constant(Vec<Vec<f64>>),
    Affine(Vec<AffineRow>),
}

/// `ω_a(q) = constant + linear_in_q · q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineRow {
    pub constant: Vec<f64>,
    pub linear_in_q: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub q0: Vec<f64>,
    pub v0: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fields: Option<Vec<Field>>,
}

/// Column groups of the trajectory CSV.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Field {
    #[serde(rename = "t")]
    T,
    #[serde(rename = "q")]
    Q,
    #[serde(rename = "v")]
    V,
    #[serde(rename = "p")]
    P,
    #[serde(rename = "mu")]
    Mu,
    #[serde(rename = "E")]
    Energy,
    #[serde(rename = "power_residual")]
    PowerResidual,
    #[serde(rename = "constraint_residual_max")]
    ConstraintResidual,
    #[serde(rename = "newton_iters")]
    NewtonIters,
}

impl Field {
    pub const ALL: [Field; 9] = [
        Field::T,
        Field::Q,
        Field::V,
        Field::P,
        Field::Mu,
        Field::Energy,
        Field::PowerResidual,
        Field::ConstraintResidual,
        Field::NewtonIters,
    ];
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub h: Option<f64>,
    pub t_final: Option<f64>,
    pub scheme: Option<Scheme>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
}

fn schema(msg: impl Into<String>) -> CliError {
    CliError::Schema(msg.into())
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, CliError> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Config::parse(&text).map_err(|e| match e {
            CliError::Schema(m) => schema(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Structural checks that need no numerics; building the system
    /// afterwards catches the rest.
    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.system.builtin, &self.system.custom) {
            (Some(_), None) => {}
            (None, Some(c)) => {
                if !self.system.params.is_empty() {
                    return Err(schema("system.params applies to builtin systems only"));
                }
                c.validate()?;
            }
            _ => return Err(schema("system needs exactly one of `builtin` or `custom`")),
        }
        if let Some(i) = &self.integrator {
            if let Some(s) = &i.scheme {
                s.parse::<Scheme>().map_err(|e| schema(e.to_string()))?;
            }
        }
        if let Some(fields) = self.output.as_ref().and_then(|o| o.fields.as_ref()) {
            if fields.is_empty() {
                return Err(schema("output.fields must not be empty"));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        match (&self.system.builtin, &self.system.custom) {
            (Some(b), _) => b.clone(),
            (None, Some(CustomSystem { name: Some(n), .. })) => n.clone(),
            _ => "custom".into(),
        }
    }

    pub fn build(&self) -> Result<LagrangeDiracSystem, CliError> {
        match (&self.system.builtin, &self.system.custom) {
            (Some(name), _) => {
                let params: Params = self.system.params.clone();
                systems::build_builtin(name, &params).map_err(|e| schema(e.to_string()))
            }
            (None, Some(c)) => c.build(),
            (None, None) => Err(schema("system needs exactly one of `builtin` or `custom`")),
        }
    }

    /// `(q0, v0)` from the file, else the builtin's suggestion.
    pub fn initial(&self, n: usize) -> Result<(DVector<f64>, DVector<f64>), CliError> {
        let (q, v) = match (&self.initial, &self.system.builtin) {
            (Some(i), _) => (DVector::from_vec(i.q0.clone()), DVector::from_vec(i.v0.clone())),
            (None, Some(name)) => {
                let t = systems::template(name).map_err(|e| schema(e.to_string()))?;
                t.default_initial(&self.system.params).map_err(|e| schema(e.to_string()))?
            }
            (None, None) => return Err(schema("custom systems need an `initial` section")),
        };
        if q.len() != n || v.len() != n {
            return Err(schema(format!(
                "initial.q0 and initial.v0 need {n} entries, found {} and {}",
                q.len(),
                v.len()
            )));
        }
        Ok((q, v))
    }

    /// Integrator settings and final time with overrides applied.
    pub fn integrator(&self, o: &Overrides) -> Result<(IntegratorConfig, f64), CliError> {
        let file = self.integrator.clone().unwrap_or_default();
        let mut cfg = IntegratorConfig::default();
        if let Some(s) = &file.scheme {
            cfg.scheme = s.parse().map_err(|e: dirac_mech::Error| schema(e.to_string()))?;
        }
        if let Some(s) = o.scheme {
            cfg.scheme = s;
        }
        cfg.h = o.h.or(file.h).ok_or_else(|| schema("integrator.h is required (or pass --h)"))?;
        let t_final = o
            .t_final
            .or(file.t_final)
            .ok_or_else(|| schema("integrator.t_final is required (or pass --t-final)"))?;
        if let Some(tol) = o.tol.or(file.newton_tol) {
            cfg.newton_tol = tol;
        }
        if let Some(it) = file.newton_max_iter {
            cfg.newton_max_iter = it;
        }
        if let Some(r) = file.rank_samples {
            cfg.rank_samples = r;
        }
        if let Some(seed) = o.seed.or(file.seed) {
            cfg.seed = seed;
        }
        cfg.validate().map_err(|e| schema(e.to_string()))?;
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(schema("t_final must be positive and finite"));
        }
        Ok((cfg, t_final))
    }

    pub fn fields(&self) -> Vec<Field> {
        self.output
            .as_ref()
            .and_then(|o| o.fields.clone())
            .unwrap_or_else(|| Field::ALL.to_vec())
    }

    pub fn output_path(&self, o: &Overrides) -> Option<PathBuf> {
        o.out.clone().or_else(|| self.output.as_ref().and_then(|x| x.path.clone()))
    }
}

fn matrix(rows: &[Vec<f64>], cols: usize, what: &str) -> Result<DMatrix<f64>, CliError> {
    if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
        return Err(schema(format!(
            "{what}: row {bad} has {} entries, expected {cols}",
            rows[bad].len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn exps(e: &[u32], n: usize, what: &str) -> Result<(), CliError> {
    if e.len() == n {
        Ok(())
    } else {
        Err(schema(format!("{what}: {} exponents for dimension {n}", e.len())))
    }
}

impl ConstraintConfig {
    fn validate(&self, n: usize, what: &str) -> Result<(), CliError> {
        match self {
            ConstraintConfig::Constant(rows) => matrix(rows, n, what).map(|_| ()),
            ConstraintConfig::Affine(rows) => {
                for (a, r) in rows.iter().enumerate() {
                    let w = format!("{what} row {a}");
                    if r.constant.len() != n {
                        return Err(schema(format!("{w}: constant has {} entries, expected {n}", r.constant.len())));
                    }
                    if r.linear_in_q.len() != n {
                        return Err(schema(format!("{w}: linear_in_q needs {n} rows")));
                    }
                    matrix(&r.linear_in_q, n, &w)?;
                }
                Ok(())
            }
        }
    }

    fn field(&self, n: usize) -> Result<DistributionField, CliError> {
        match self {
            ConstraintConfig::Constant(rows) => Ok(DistributionField::constant(matrix(rows, n, "constraints")?)),
            ConstraintConfig::Affine(rows) => {
                let constant = DMatrix::from_fn(rows.len(), n, |a, i| rows[a].constant[i]);
                let linear = rows
                    .iter()
                    .map(|r| matrix(&r.linear_in_q, n, "linear_in_q"))
                    .collect::<Result<Vec<_>, _>>()?;
                DistributionField::affine(constant, linear).map_err(|e| schema(e.to_string()))
            }
        }
    }

    /// `None` for fields given by an arbitrary function.
    pub fn from_field(f: &DistributionField) -> Option<Option<ConstraintConfig>> {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> { m.row_iter().map(|r| r.iter().copied().collect()).collect() };
        match f.form() {
            FieldForm::Constant(m) if m.nrows() == 0 => Some(None),
            FieldForm::Constant(m) => Some(Some(ConstraintConfig::Constant(rows(m)))),
            FieldForm::Affine { constant, linear } => Some(Some(ConstraintConfig::Affine(
                linear
                    .iter()
                    .enumerate()
                    .map(|(a, l)| AffineRow {
                        constant: constant.row(a).iter().copied().collect(),
                        linear_in_q: rows(l),
                    })
                    .collect(),
            ))),
            FieldForm::Function => None,
        }
    }
}

impl CustomSystem {
    fn validate(&self) -> Result<(), CliError> {
        if self.subsystems.is_empty() {
            return Err(schema("custom.subsystems must not be empty"));
        }
        let mut total = 0;
        for (k, s) in self.subsystems.iter().enumerate() {
            let n = s.dimension;
            let what = format!("subsystem {k}");
            if n == 0 {
                return Err(schema(format!("{what}: dimension must be positive")));
            }
            for t in &s.lagrangian {
                exps(&t.q_exps, n, &format!("{what} lagrangian q_exps"))?;
                exps(&t.v_exps, n, &format!("{what} lagrangian v_exps"))?;
            }
            for f in &s.forces {
                exps(&f.q_exps, n, &format!("{what} force q_exps"))?;
                exps(&f.v_exps, n, &format!("{what} force v_exps"))?;
                if f.index >= n {
                    return Err(schema(format!("{what}: force index {} out of range", f.index)));
                }
            }
            if let Some(c) = &s.constraints {
                c.validate(n, &format!("{what} constraints"))?;
            }
            total += n;
        }
        if let Some(c) = &self.coupling {
            c.validate(total, "coupling")?;
        }
        Ok(())
    }

    fn build(&self) -> Result<LagrangeDiracSystem, CliError> {
        self.validate()?;
        let mut subs = Vec::new();
        for (k, s) in self.subsystems.iter().enumerate() {
            let n = s.dimension;
            let terms = s
                .lagrangian
                .iter()
                .map(|t| PolyTerm::new(t.coeff, t.q_exps.clone(), t.v_exps.clone()))
                .collect();
            let lagrangian = LagrangianModel::polynomial(n, terms).map_err(|e| schema(e.to_string()))?;
            let force = if s.forces.is_empty() {
                ForceField::Zero
            } else {
                ForceField::Polynomial(
                    s.forces
                        .iter()
                        .map(|f| ForceTerm {
                            index: f.index,
                            coeff: f.coeff,
                            q_exps: f.q_exps.clone(),
                            v_exps: f.v_exps.clone(),
                        })
                        .collect(),
                )
            };
            let constraints = match &s.constraints {
                Some(c) => c.field(n)?,
                None => DistributionField::unconstrained(n),
            };
            let name = s.name.clone().unwrap_or_else(|| format!("subsystem-{k}"));
            subs.push(Subsystem::new(name, lagrangian, force, constraints).map_err(|e| schema(e.to_string()))?);
        }
        let total: usize = self.subsystems.iter().map(|s| s.dimension).sum();
        let coupling = match &self.coupling {
            Some(c) => c.field(total)?,
            None => DistributionField::unconstrained(total),
        };
        LagrangeDiracSystem::new(subs, coupling).map_err(|e| schema(e.to_string()))
    }

    /// Writes a polynomial system back out; `None` if any part is not
    /// expressible in the file format.
    pub fn export(name: &str, sys: &LagrangeDiracSystem) -> Option<CustomSystem> {
        let mut subsystems = Vec::new();
        for s in sys.subsystems() {
            let lagrangian = s
                .lagrangian
                .terms()?
                .iter()
                .map(|t| TermConfig {
                    coeff: t.coeff,
                    q_exps: t.q_exps.clone(),
                    v_exps: t.v_exps.clone(),
                })
                .collect();
            let forces = match &s.force {
                ForceField::Zero => Vec::new(),
                ForceField::Polynomial(terms) => terms
                    .iter()
                    .map(|t| ForceConfig {
                        index: t.index,
                        coeff: t.coeff,
                        q_exps: t.q_exps.clone(),
                        v_exps: t.v_exps.clone(),
                    })
                    .collect(),
                ForceField::Custom(_) => return None,
            };
            subsystems.push(SubsystemConfig {
                name: Some(s.name.clone()),
                dimension: s.config_dim(),
                lagrangian,
                constraints: ConstraintConfig::from_field(&s.constraints)?,
                forces,
            });
        }
        Some(CustomSystem {
            name: Some(name.into()),
            subsystems,
            coupling: ConstraintConfig::from_field(sys.spec().coupling())?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let err = Config::parse(r#"{"system": {"builtin": "harmonic", "colour": 1}}"#).unwrap_err();
        assert!(matches!(err, CliError::Schema(_)));
        let err = Config::parse(r#"{"system": {"builtin": "harmonic"}, "extra": {}}"#).unwrap_err();
        assert!(matches!(err, CliError::Schema(_)));
    }

    #[test]
    fn builtin_and_custom_are_exclusive() {
        assert!(Config::parse(r#"{"system": {}}"#).is_err());
        let both = r#"{"system": {"builtin": "harmonic", "custom": {"subsystems": []}}}"#;
        assert!(Config::parse(both).is_err());
    }

    #[test]
    fn coupling_dimension_checked() {
        let text = r#"{"system": {"custom": {
            "subsystems": [{"dimension": 2, "lagrangian": [{"coeff": 0.5, "q_exps": [0, 0], "v_exps": [2, 0]}]}],
            "coupling": {"constant": [[1, -1, 0]]}}}}"#;
        assert!(matches!(Config::parse(text), Err(CliError::Schema(_))));
    }

    #[test]
    fn flags_override_file() {
        let cfg = Config::parse(r#"{"system": {"builtin": "harmonic"}, "integrator": {"h": 0.1, "t_final": 1, "scheme": "backward-euler"}}"#).unwrap();
        let (ic, t) = cfg
            .integrator(&Overrides {
                h: Some(0.05),
                scheme: Some(Scheme::ImplicitMidpoint),
                ..Default::default()
            })
            .unwrap();
        assert_eq!((ic.h, t, ic.scheme), (0.05, 1.0, Scheme::ImplicitMidpoint));
    }

    #[test]
    fn affine_rows_round_trip() {
        let c = ConstraintConfig::Affine(vec![AffineRow {
            constant: vec![1.0, 0.0],
            linear_in_q: vec![vec![0.0, 0.0], vec![1.0, 0.0]],
        }]);
        let f = c.field(2).unwrap();
        assert_eq!(ConstraintConfig::from_field(&f), Some(Some(c)));
        let q = DVector::from_vec(vec![0.0, 3.0]);
        assert_eq!(f.omega(&q)[(0, 0)], 1.0);
        assert_eq!(f.omega(&q)[(0, 1)], 0.0);
        let q = DVector::from_vec(vec![2.0, 0.0]);
        assert_eq!(f.omega(&q)[(0, 1)], 2.0);
    }
}
