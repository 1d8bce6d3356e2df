//! Dirac structures induced on `T*Q` by constraint distributions, evaluated
//! pointwise.
//!
//! At a point `(q, p)` the tangent space of `T*Q` is `R^{2n}` with
//! coordinates `(q̇, ṗ)` and the cotangent space has coordinates `(β, w)`, so
//! every structure built here has base dimension `2n` and lives in `R^{4n}`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dirac::{
    self, canonical_form, direct_sum_all, LinearDirac, TwoFormOnDistribution,
};
use crate::error::{check_dim, Error, Result};
use crate::par::{self, Mode};
use crate::subspace::Subspace;

type OmegaFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// How the one-form rows depend on `q`; kept so configurations can be
/// written back out.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldForm {
    /// `ω(q)` does not depend on `q`.
    Constant(DMatrix<f64>),
    /// Row `a` is `constant[a] + linear[a] · q`.
    Affine {
        constant: DMatrix<f64>,
        linear: Vec<DMatrix<f64>>,
    },
    /// Arbitrary coefficient function.
    Function,
}

/// `q ↦ ω(q)`, an `m × n` matrix of one-form coefficients with
/// `Δ_Q(q) = ker ω(q)`.
#[derive(Clone)]
pub struct DistributionField {
    config_dim: usize,
    rows: usize,
    form: FieldForm,
    omega: Arc<OmegaFn>,
}

impl fmt::Debug for DistributionField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DistributionField")
            .field("config_dim", &self.config_dim)
            .field("rows", &self.rows)
            .field("form", &self.form)
            .finish()
    }
}

impl DistributionField {
    /// No constraints: `Δ_Q = TQ`.
    pub fn unconstrained(config_dim: usize) -> Self {
        Self::constant(DMatrix::zeros(0, config_dim))
    }

    pub fn constant(omega: DMatrix<f64>) -> Self {
        let (rows, config_dim) = omega.shape();
        let m = omega.clone();
        DistributionField {
            config_dim,
            rows,
            form: FieldForm::Constant(omega),
            omega: Arc::new(move |_| m.clone()),
        }
    }

    /// Rows affine in `q`: `ω_a(q) = constant_a + linear_a q`.
    pub fn affine(constant: DMatrix<f64>, linear: Vec<DMatrix<f64>>) -> Result<Self> {
        let (rows, n) = constant.shape();
        check_dim(rows, linear.len())?;
        for l in &linear {
            check_dim(n, l.nrows())?;
            check_dim(n, l.ncols())?;
        }
        let (c, ls) = (constant.clone(), linear.clone());
        Ok(DistributionField {
            config_dim: n,
            rows,
            form: FieldForm::Affine { constant, linear },
            omega: Arc::new(move |q| {
                let mut out = c.clone();
                for (a, l) in ls.iter().enumerate() {
                    let row = l * q;
                    for i in 0..row.len() {
                        out[(a, i)] += row[i];
                    }
                }
                out
            }),
        })
    }

    /// Arbitrary coefficient function with a fixed row count.
    pub fn from_fn<F>(config_dim: usize, rows: usize, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        DistributionField {
            config_dim,
            rows,
            form: FieldForm::Function,
            omega: Arc::new(f),
        }
    }

    pub fn config_dim(&self) -> usize {
        self.config_dim
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn form(&self) -> &FieldForm {
        &self.form
    }

    /// `ω(q)`; panics if the coefficient function returns the wrong shape.
    pub fn omega(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let w = (self.omega)(q);
        assert_eq!(
            w.shape(),
            (self.rows, self.config_dim),
            "distribution field returned a matrix of the wrong shape"
        );
        w
    }

    /// `Δ_Q(q)`.
    pub fn distribution_at(&self, q: &DVector<f64>) -> Result<Subspace> {
        check_dim(self.config_dim, q.len())?;
        Subspace::kernel(&self.omega(q))
    }
}

/// Per-subsystem constraint fields plus the coupling field on the product.
#[derive(Clone, Debug)]
pub struct InterconnectionSpec {
    fields: Vec<DistributionField>,
    coupling: DistributionField,
}

impl InterconnectionSpec {
    pub fn new(fields: Vec<DistributionField>, coupling: DistributionField) -> Result<Self> {
        let total: usize = fields.iter().map(DistributionField::config_dim).sum();
        check_dim(total, coupling.config_dim())?;
        if total == 0 {
            return Err(Error::ZeroAmbient);
        }
        Ok(InterconnectionSpec { fields, coupling })
    }

    pub fn fields(&self) -> &[DistributionField] {
        &self.fields
    }

    pub fn coupling(&self) -> &DistributionField {
        &self.coupling
    }

    pub fn config_dim(&self) -> usize {
        self.coupling.config_dim()
    }

    /// Coordinate offsets of each subsystem in the product.
    pub fn offsets(&self) -> Vec<usize> {
        self.fields
            .iter()
            .scan(0, |acc, f| {
                let start = *acc;
                *acc += f.config_dim();
                Some(start)
            })
            .collect()
    }

    /// Block-diagonal subsystem rows at `q`.
    pub fn subsystem_omega(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let n = self.config_dim();
        let m: usize = self.fields.iter().map(DistributionField::rows).sum();
        let mut out = DMatrix::zeros(m, n);
        let mut row = 0;
        for (f, off) in self.fields.iter().zip(self.offsets()) {
            let qi = q.rows(off, f.config_dim()).into_owned();
            let w = f.omega(&qi);
            out.view_mut((row, off), w.shape()).copy_from(&w);
            row += f.rows();
        }
        out
    }

    /// Subsystem rows stacked above the coupling rows.
    pub fn total_omega(&self, q: &DVector<f64>) -> DMatrix<f64> {
        let sub = self.subsystem_omega(q);
        let cpl = self.coupling.omega(q);
        let n = self.config_dim();
        let mut out = DMatrix::zeros(sub.nrows() + cpl.nrows(), n);
        out.view_mut((0, 0), sub.shape()).copy_from(&sub);
        out.view_mut((sub.nrows(), 0), cpl.shape()).copy_from(&cpl);
        out
    }

    /// `(Δ_{Q_1} × … × Δ_{Q_k}) ∩ Δ_c` at `q`.
    pub fn constraint_distribution(&self, q: &DVector<f64>) -> Result<Subspace> {
        check_dim(self.config_dim(), q.len())?;
        Subspace::kernel(&self.total_omega(q))
    }
}

fn check_point(n: usize, q: &DVector<f64>, p: &DVector<f64>) -> Result<()> {
    check_dim(n, q.len())?;
    check_dim(n, p.len())
}

/// `Δ_{T*Q}(q, p) = {(q̇, ṗ) : ω(q) q̇ = 0}`.
pub fn lift_to_cotangent(d: &DistributionField, q: &DVector<f64>, p: &DVector<f64>) -> Result<Subspace> {
    let n = d.config_dim();
    check_point(n, q, p)?;
    lift_rows(&d.omega(q))
}

fn lift_rows(omega: &DMatrix<f64>) -> Result<Subspace> {
    let (m, n) = omega.shape();
    let mut rows = DMatrix::zeros(m, 2 * n);
    rows.view_mut((0, 0), (m, n)).copy_from(omega);
    Subspace::kernel(&rows)
}

/// The induced structure
/// `{((q̇, ṗ), (β, w)) : q̇ ∈ Δ(q), w = q̇, β + ṗ ∈ Δ°(q)}`, built directly
/// from its local description.
pub fn induced_dirac_at(d: &DistributionField, q: &DVector<f64>, p: &DVector<f64>) -> Result<LinearDirac> {
    let n = d.config_dim();
    check_point(n, q, p)?;
    induced_from_distribution(&d.distribution_at(q)?)
}

fn induced_from_distribution(delta: &Subspace) -> Result<LinearDirac> {
    let n = delta.ambient_dim();
    let ann = delta.annihilator();
    let mut cols = DMatrix::zeros(4 * n, 2 * n);
    let mut k = 0;
    // (q̇, 0, 0, q̇) for q̇ ∈ Δ
    for b in delta.basis().column_iter() {
        cols.view_mut((0, k), (n, 1)).copy_from(&b);
        cols.view_mut((3 * n, k), (n, 1)).copy_from(&b);
        k += 1;
    }
    // (0, e_j, −e_j, 0): ṗ free with β = −ṗ
    for j in 0..n {
        cols[(n + j, k)] = 1.0;
        cols[(2 * n + j, k)] = -1.0;
        k += 1;
    }
    // (0, 0, c, 0) for c ∈ Δ°
    for c in ann.basis().column_iter() {
        cols.view_mut((2 * n, k), (n, 1)).copy_from(&c);
        k += 1;
    }
    LinearDirac::from_columns(&cols)
}

/// The same structure as [`induced_dirac_at`], obtained from the canonical
/// form and the lifted distribution.
pub fn induced_via_form(d: &DistributionField, q: &DVector<f64>, p: &DVector<f64>) -> Result<LinearDirac> {
    let lift = lift_to_cotangent(d, q, p)?;
    dirac::from_form_and_distribution(&TwoFormOnDistribution::new(
        lift,
        canonical_form(d.config_dim()),
    )?)
}

/// `D_int = Δ_int ⊕ Δ_int°` with `Δ_int` the cotangent lift of the coupling
/// distribution; `Δ_int°` consists of `(β, 0)` with `β ∈ Δ_c°(q)`.
pub fn interconnection_dirac_at(
    coupling: &DistributionField,
    q: &DVector<f64>,
    p: &DVector<f64>,
) -> Result<LinearDirac> {
    let n = coupling.config_dim();
    check_point(n, q, p)?;
    let lift = lift_rows(&coupling.omega(q))?;
    let ann_c = coupling.distribution_at(q)?.annihilator();
    let k = 2 * n;
    let mut cols = DMatrix::zeros(2 * k, lift.dim() + ann_c.dim());
    cols.view_mut((0, 0), (k, lift.dim())).copy_from(lift.basis());
    for (j, c) in ann_c.basis().column_iter().enumerate() {
        cols.view_mut((k, lift.dim() + j), (n, 1)).copy_from(&c);
    }
    LinearDirac::from_columns(&cols)
}

/// Permutation taking the Dirac-sum ordering `(q1, p1, q2, p2, …)` to the
/// product ordering `(q1, q2, …, p1, p2, …)`.
fn product_ordering(dims: &[usize]) -> Vec<usize> {
    let n: usize = dims.iter().sum();
    let mut q_idx = Vec::with_capacity(n);
    let mut p_idx = Vec::with_capacity(n);
    let mut off = 0;
    for &d in dims {
        q_idx.extend(off..off + d);
        p_idx.extend(off + d..off + 2 * d);
        off += 2 * d;
    }
    // new coordinate i is old coordinate perm[i]
    let mut perm = q_idx;
    perm.extend(p_idx);
    perm
}

/// `(D_1 ⊕ … ⊕ D_k) ⋈ D_int` at `(q, p)`, in product coordinates `(q, p)`.
pub fn interconnect_at(spec: &InterconnectionSpec, q: &DVector<f64>, p: &DVector<f64>) -> Result<LinearDirac> {
    let n = spec.config_dim();
    check_point(n, q, p)?;
    let offsets = spec.offsets();
    let parts = spec
        .fields()
        .iter()
        .zip(&offsets)
        .map(|(f, &off)| {
            let d = f.config_dim();
            induced_dirac_at(f, &q.rows(off, d).into_owned(), &p.rows(off, d).into_owned())
        })
        .collect::<Result<Vec<_>>>()?;
    let summed = direct_sum_all(&parts)?;
    let dims: Vec<usize> = spec.fields().iter().map(DistributionField::config_dim).collect();
    let reordered = dirac::permute(&summed, &product_ordering(&dims))?;
    let d_int = interconnection_dirac_at(spec.coupling(), q, p)?;
    dirac::bowtie(&reordered, &d_int)
}

/// The right-hand side of the interconnection identity: the canonical form
/// on `T*Q` restricted to the lift of `(∏ Δ_{Q_i}) ∩ Δ_c`.
pub fn expected_interconnection(spec: &InterconnectionSpec, q: &DVector<f64>, p: &DVector<f64>) -> Result<LinearDirac> {
    let n = spec.config_dim();
    check_point(n, q, p)?;
    let lift = lift_rows(&spec.total_omega(q))?;
    dirac::from_form_and_distribution(&TwoFormOnDistribution::new(lift, canonical_form(n))?)
}

/// Configuration-velocity part of `pr_V(D)`: the `q̇` block of the velocity projection.
pub fn config_velocity_projection(d: &LinearDirac) -> Result<Subspace> {
    let n = d.base_dim() / 2;
    d.velocity_projection().project_coords(0, n)
}

/// Constraint ranks of the interconnected structure at several sample points.
#[derive(Clone, Debug, PartialEq)]
pub struct RankSurvey {
    /// `dim pr_TQ(D)` at each sample, in sample order.
    pub velocity_dims: Vec<usize>,
}

impl RankSurvey {
    pub fn is_constant(&self) -> bool {
        self.velocity_dims.windows(2).all(|w| w[0] == w[1])
    }

    pub fn into_result(self) -> Result<usize> {
        if self.is_constant() {
            Ok(self.velocity_dims.first().copied().unwrap_or(0))
        } else {
            Err(Error::RankVariation(self.velocity_dims))
        }
    }
}

/// Evaluates [`interconnect_at`] at every sample and records the rank of the
/// configuration-velocity projection. A non-constant rank is logged.
pub fn survey_ranks(
    spec: &InterconnectionSpec,
    samples: &[(DVector<f64>, DVector<f64>)],
    mode: Mode,
) -> Result<RankSurvey> {
    let dims = par::map(mode, samples, |(q, p)| {
        let d = interconnect_at(spec, q, p)?;
        Ok(config_velocity_projection(&d)?.dim())
    })
    .into_iter()
    .collect::<Result<Vec<usize>>>()?;
    let survey = RankSurvey { velocity_dims: dims };
    if !survey.is_constant() {
        log::warn!(
            "constraint rank varies across samples: {:?}",
            survey.velocity_dims
        );
    }
    Ok(survey)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn zeros(n: usize) -> DVector<f64> {
        DVector::zeros(n)
    }

    #[test]
    fn unconstrained_lift_is_everything() {
        let f = DistributionField::unconstrained(2);
        assert_eq!(lift_to_cotangent(&f, &zeros(2), &zeros(2)).unwrap().dim(), 4);
    }

    #[test]
    fn single_row_lift_dimension() {
        let f = DistributionField::constant(dmatrix![0.0, 1.0, -1.0, 0.0]);
        assert_eq!(lift_to_cotangent(&f, &zeros(4), &zeros(4)).unwrap().dim(), 7);
    }

    #[test]
    fn rlc_lift_dimension() {
        let f = DistributionField::constant(dmatrix![
            1.0, -1.0, 1.0, 0.0, 0.0;
            0.0, 0.0, 0.0, -1.0, 1.0;
            0.0, 0.0, 1.0, -1.0, 0.0
        ]);
        assert_eq!(lift_to_cotangent(&f, &zeros(5), &zeros(5)).unwrap().dim(), 7);
    }

    #[test]
    fn unconstrained_induced_is_canonical() {
        let f = DistributionField::unconstrained(2);
        let d = induced_dirac_at(&f, &zeros(2), &zeros(2)).unwrap();
        let c = dirac::canonical_structure(2).unwrap();
        assert!(d.equals(&c).unwrap());
    }

    #[test]
    fn fully_constrained_line() {
        // n = 1, ω = (1): q̇ = w = 0, ṗ free with β = −ṗ, and β free.
        let f = DistributionField::constant(dmatrix![1.0]);
        let d = induced_dirac_at(&f, &zeros(1), &zeros(1)).unwrap();
        let v = |a: &[f64]| DVector::from_column_slice(a);
        assert!(d.contains_pair(&v(&[0.0, 2.0]), &v(&[5.0, 0.0]), 1e-12).unwrap());
        assert!(!d.contains_pair(&v(&[1.0, 0.0]), &v(&[0.0, 1.0]), 1e-12).unwrap());
        assert_eq!(d.velocity_projection().dim(), 1);
    }

    #[test]
    fn local_form_matches_form_construction() {
        let f = DistributionField::constant(dmatrix![1.0, 2.0, -1.0]);
        let q = zeros(3);
        let a = induced_dirac_at(&f, &q, &q).unwrap();
        let b = induced_via_form(&f, &q, &q).unwrap();
        assert!(a.equals(&b).unwrap());
    }

    #[test]
    fn contact_forces_obey_third_law() {
        let dc = Subspace::kernel(&dmatrix![1.0, -1.0]).unwrap();
        let ann = dc.annihilator();
        assert!(ann.contains(&DVector::from_vec(vec![3.0, -3.0])).unwrap());
        assert!(!ann.contains(&DVector::from_vec(vec![3.0, 3.0])).unwrap());
        let dv = dirac::from_form_and_distribution(
            &TwoFormOnDistribution::new(dc, DMatrix::zeros(2, 2)).unwrap(),
        )
        .unwrap();
        let v = DVector::from_vec(vec![1.5, 1.5]);
        let f = DVector::from_vec(vec![2.0, -2.0]);
        assert!(dv.contains_pair(&v, &f, 1e-12).unwrap());
    }

    #[test]
    fn interconnection_structure_has_zero_form() {
        let f = DistributionField::constant(dmatrix![0.0, 1.0, -1.0, 0.0]);
        let d = interconnection_dirac_at(&f, &zeros(4), &zeros(4)).unwrap();
        let w = dirac::extract_two_form(&d).unwrap();
        assert!(w.form().amax() < 1e-14);
        // Δ_int° = span{(0, 1, −1, 0 | 0, 0, 0, 0)} in the covector block.
        let mut a = DVector::zeros(8);
        a[1] = 1.0;
        a[2] = -1.0;
        assert!(d.contains_pair(&DVector::zeros(8), &a, 1e-12).unwrap());
    }

    #[test]
    fn full_coupling_is_neutral() {
        let f = DistributionField::constant(dmatrix![1.0, 1.0, 0.0]);
        let q = zeros(3);
        let d = induced_dirac_at(&f, &q, &q).unwrap();
        let e = interconnection_dirac_at(&DistributionField::unconstrained(3), &q, &q).unwrap();
        assert!(dirac::bowtie(&d, &e).unwrap().equals(&d).unwrap());
    }

    #[test]
    fn ordering_permutation() {
        // dims [1, 2]: sum order (q1, p1, q2a, q2b, p2a, p2b) → (q1, q2a, q2b, p1, p2a, p2b)
        assert_eq!(product_ordering(&[1, 2]), vec![0, 2, 3, 1, 4, 5]);
    }

    #[test]
    fn mismatched_spec_rejected() {
        let err = InterconnectionSpec::new(
            vec![DistributionField::unconstrained(2)],
            DistributionField::unconstrained(3),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn affine_rows_evaluate() {
        let f = DistributionField::affine(dmatrix![1.0, 0.0], vec![dmatrix![0.0, 0.0; 2.0, 0.0]]).unwrap();
        let w = f.omega(&DVector::from_vec(vec![3.0, 0.0]));
        assert_eq!(w, dmatrix![1.0, 6.0]);
    }

    #[test]
    fn rank_survey_flags_variation() {
        // ω(q) = (q_0, 0): rank drops to zero at q_0 = 0.
        let f = DistributionField::from_fn(2, 1, |q| dmatrix![q[0], 0.0]);
        let spec = InterconnectionSpec::new(vec![f], DistributionField::unconstrained(2)).unwrap();
        let samples = vec![
            (DVector::from_vec(vec![1.0, 0.0]), zeros(2)),
            (DVector::from_vec(vec![0.0, 0.0]), zeros(2)),
        ];
        let survey = survey_ranks(&spec, &samples, Mode::Sequential).unwrap();
        assert_eq!(survey.velocity_dims, vec![1, 2]);
        assert!(matches!(survey.into_result(), Err(Error::RankVariation(_))));
    }
}
