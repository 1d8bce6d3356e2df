//! Linear Dirac structures on `V ⊕ V*`.
//!
//! A vector of the ambient space `R^{2n}` is laid out as `(v, α)`: the first
//! `n` entries are the velocity part and the last `n` the covector part. The
//! symmetric pairing is `⟨⟨(v,α),(v̄,ᾱ)⟩⟩ = ⟨α,v̄⟩ + ⟨ᾱ,v⟩`, i.e. the matrix
//! `J = [[0, I], [I, 0]]`.
//!
//! Two-forms are stored as matrices with `form[(i, j)] = Ω(e_i, e_j)`, so the
//! flat map is `Ω♭ v = formᵀ v`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::subspace::Subspace;

/// Isotropy threshold for `max |Bᵀ J B|` over an orthonormal basis `B`.
pub const ISOTROPY_TOL: f64 = 1e-10;
/// Skew-symmetry threshold for two-form matrices.
pub const SKEW_TOL: f64 = 1e-12;

/// The pairing matrix `J` on `R^{2n}`.
pub fn pairing_matrix(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = 1.0;
    }
    j
}

/// `⟨⟨x, y⟩⟩` for two vectors of `V ⊕ V*`.
pub fn pairing(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let n = x.len() / 2;
    x.rows(n, n).dot(&y.rows(0, n)) + y.rows(n, n).dot(&x.rows(0, n))
}

/// Matrix of the canonical symplectic form on `R^{2k}` with coordinates `(q, p)`.
pub fn canonical_form(k: usize) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(2 * k, 2 * k);
    for i in 0..k {
        w[(i, k + i)] = 1.0;
        w[(k + i, i)] = -1.0;
    }
    w
}

fn half_dim(s: &Subspace) -> Result<usize> {
    let a = s.ambient_dim();
    if a % 2 == 1 {
        return Err(Error::OddAmbient(a));
    }
    Ok(a / 2)
}

/// `{y : ⟨⟨x, y⟩⟩ = 0 for all x ∈ s}`.
pub fn pairing_orthogonal(s: &Subspace) -> Result<Subspace> {
    let n = half_dim(s)?;
    let rows = s.basis().transpose() * pairing_matrix(n);
    Subspace::kernel_with_tol(&rows, s.rank_tol())
}

/// Largest `|⟨⟨b_i, b_j⟩⟩|` over pairs of basis vectors.
pub fn isotropy_defect(s: &Subspace) -> Result<f64> {
    let n = half_dim(s)?;
    let g = s.basis().transpose() * pairing_matrix(n) * s.basis();
    Ok(if g.is_empty() { 0.0 } else { g.amax() })
}

/// True iff `s` is a Dirac structure: dimension `n`, isotropic, and equal to
/// its own pairing-orthogonal.
pub fn validate_dirac(s: &Subspace) -> bool {
    let Ok(n) = half_dim(s) else {
        return false;
    };
    if s.dim() != n {
        return false;
    }
    match isotropy_defect(s) {
        Ok(d) if d <= ISOTROPY_TOL => {}
        _ => return false,
    }
    pairing_orthogonal(s)
        .and_then(|perp| perp.equals(s))
        .unwrap_or(false)
}

/// A Dirac structure on `V ⊕ V*` with `dim V = base_dim`.
#[derive(Clone, Debug)]
pub struct LinearDirac {
    base_dim: usize,
    space: Subspace,
}

impl LinearDirac {
    /// Wraps `space` after checking the Dirac conditions.
    pub fn new(space: Subspace) -> Result<Self> {
        let n = half_dim(&space)?;
        if !validate_dirac(&space) {
            return Err(Error::NotDirac(format!(
                "dim {} (need {n}), isotropy defect {:e}",
                space.dim(),
                isotropy_defect(&space)?
            )));
        }
        Ok(LinearDirac { base_dim: n, space })
    }

    /// Spans the given `(v, α)` columns and validates the result.
    pub fn from_columns(columns: &DMatrix<f64>) -> Result<Self> {
        Self::new(Subspace::span(columns)?)
    }

    /// Wraps a subspace known to be Dirac by construction; only the dimension
    /// is checked. Used by the algebra routines, whose outputs are validated
    /// by the test suite rather than on every call.
    fn assembled(space: Subspace, what: &str) -> Result<Self> {
        let n = half_dim(&space)?;
        if space.dim() != n {
            return Err(Error::Internal(format!(
                "{what} produced dimension {} instead of {n}",
                space.dim()
            )));
        }
        Ok(LinearDirac { base_dim: n, space })
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn subspace(&self) -> &Subspace {
        &self.space
    }

    pub fn into_subspace(self) -> Subspace {
        self.space
    }

    pub fn is_valid(&self) -> bool {
        validate_dirac(&self.space)
    }

    pub fn equals(&self, other: &LinearDirac) -> Result<bool> {
        self.space.equals(&other.space)
    }

    /// `pr_V(D)`.
    pub fn velocity_projection(&self) -> Subspace {
        self.space
            .project_coords(0, self.base_dim)
            .expect("velocity block lies inside the ambient space")
    }

    /// Tests `(v, α) ∈ D` with relative tolerance `tol`.
    pub fn contains_pair(&self, v: &DVector<f64>, alpha: &DVector<f64>, tol: f64) -> Result<bool> {
        check_dim(self.base_dim, v.len())?;
        check_dim(self.base_dim, alpha.len())?;
        let mut x = DVector::zeros(2 * self.base_dim);
        x.rows_mut(0, self.base_dim).copy_from(v);
        x.rows_mut(self.base_dim, self.base_dim).copy_from(alpha);
        self.space.contains_with_tol(&x, tol)
    }

    /// Rows `C` with `x ∈ D ⇔ C x = 0`.
    fn membership_rows(&self) -> DMatrix<f64> {
        self.space.annihilator().basis().transpose()
    }
}

/// `TV ⊕ {0}`, the neutral element of the bowtie product.
pub fn identity_structure(n: usize) -> Result<LinearDirac> {
    if n == 0 {
        return Err(Error::ZeroAmbient);
    }
    let mut cols = DMatrix::zeros(2 * n, n);
    for i in 0..n {
        cols[(i, i)] = 1.0;
    }
    LinearDirac::assembled(Subspace::span(&cols)?, "identity_structure")
}

/// Graph of the canonical symplectic form on `R^{2k}`.
pub fn canonical_structure(k: usize) -> Result<LinearDirac> {
    let form = TwoFormOnDistribution::new(Subspace::full(2 * k)?, canonical_form(k))?;
    from_form_and_distribution(&form)
}

/// A skew form together with the distribution it is restricted to.
#[derive(Clone, Debug)]
pub struct TwoFormOnDistribution {
    distribution: Subspace,
    form: DMatrix<f64>,
}

impl TwoFormOnDistribution {
    pub fn new(distribution: Subspace, form: DMatrix<f64>) -> Result<Self> {
        let n = distribution.ambient_dim();
        check_dim(n, form.nrows())?;
        check_dim(n, form.ncols())?;
        let defect = (&form + form.transpose()).amax();
        if defect > SKEW_TOL {
            return Err(Error::NotSkew(defect));
        }
        Ok(TwoFormOnDistribution { distribution, form })
    }

    pub fn distribution(&self) -> &Subspace {
        &self.distribution
    }

    pub fn form(&self) -> &DMatrix<f64> {
        &self.form
    }

    /// `Ω(v1, v2)`.
    pub fn eval(&self, v1: &DVector<f64>, v2: &DVector<f64>) -> f64 {
        (v1.transpose() * &self.form * v2)[(0, 0)]
    }

    /// The form compressed to the distribution: `P Ω P` with `P` the orthogonal projector.
    pub fn restricted(&self) -> DMatrix<f64> {
        let p = self.distribution.projector();
        &p * &self.form * &p
    }
}

/// `D = {(v, α) : v ∈ Δ, α − Ω♭v ∈ Δ°}`.
pub fn from_form_and_distribution(d: &TwoFormOnDistribution) -> Result<LinearDirac> {
    let n = d.distribution.ambient_dim();
    let delta = d.distribution.basis();
    let ann = d.distribution.annihilator();
    let r = delta.ncols();
    let mut cols = DMatrix::zeros(2 * n, n);
    let flat = d.form.transpose();
    for k in 0..r {
        let b = delta.column(k);
        cols.view_mut((0, k), (n, 1)).copy_from(&b);
        cols.view_mut((n, k), (n, 1)).copy_from(&(&flat * b));
    }
    for (k, c) in ann.basis().column_iter().enumerate() {
        cols.view_mut((n, r + k), (n, 1)).copy_from(&c);
    }
    let space = Subspace::span_with_tol(&cols, d.distribution.rank_tol())?;
    LinearDirac::assembled(space, "from_form_and_distribution")
}

/// Dirac sum on `V1 × V2`, laid out as `(v1, v2, α1, α2)`.
pub fn direct_sum(d1: &LinearDirac, d2: &LinearDirac) -> Result<LinearDirac> {
    let (n1, n2) = (d1.base_dim, d2.base_dim);
    let n = n1 + n2;
    let (b1, b2) = (d1.space.basis(), d2.space.basis());
    let mut cols = DMatrix::zeros(2 * n, n);
    cols.view_mut((0, 0), (n1, n1)).copy_from(&b1.rows(0, n1));
    cols.view_mut((n, 0), (n1, n1)).copy_from(&b1.rows(n1, n1));
    cols.view_mut((n1, n1), (n2, n2)).copy_from(&b2.rows(0, n2));
    cols.view_mut((n + n1, n1), (n2, n2)).copy_from(&b2.rows(n2, n2));
    LinearDirac::assembled(Subspace::span(&cols)?, "direct_sum")
}

/// Iterated Dirac sum.
pub fn direct_sum_all(parts: &[LinearDirac]) -> Result<LinearDirac> {
    let (first, rest) = parts
        .split_first()
        .ok_or_else(|| Error::Internal("direct sum of no structures".into()))?;
    rest.iter()
        .try_fold(first.clone(), |acc, d| direct_sum(&acc, d))
}

/// `Da ⋈ Db = {(v, α) : ∃β, (v, α+β) ∈ Da, (v, −β) ∈ Db}`.
///
/// The two memberships are stacked as linear conditions on `(v, α, β)` and
/// `β` is projected out.
pub fn bowtie(da: &LinearDirac, db: &LinearDirac) -> Result<LinearDirac> {
    let n = da.base_dim;
    check_dim(n, db.base_dim)?;
    let ca = da.membership_rows();
    let cb = db.membership_rows();
    let (ma, mb) = (ca.nrows(), cb.nrows());
    let mut sys = DMatrix::zeros(ma + mb, 3 * n);
    sys.view_mut((0, 0), (ma, n)).copy_from(&ca.columns(0, n));
    sys.view_mut((0, n), (ma, n)).copy_from(&ca.columns(n, n));
    sys.view_mut((0, 2 * n), (ma, n)).copy_from(&ca.columns(n, n));
    sys.view_mut((ma, 0), (mb, n)).copy_from(&cb.columns(0, n));
    sys.view_mut((ma, 2 * n), (mb, n)).copy_from(&(-cb.columns(n, n)));
    let triples = Subspace::kernel_with_tol(&sys, da.space.rank_tol())?;
    LinearDirac::assembled(triples.project_coords(0, 2 * n)?, "bowtie")
}

/// The bowtie product computed as the pull-back of `Da ⊕ Db` to the
/// diagonal: intersect with `{(v, v)} ⊕ T*` and send the coset of
/// `(v, v, αA, αB)` to its representative `(v, v, αA + αB, 0)`, then to
/// `(v, αA + αB)`.
pub fn bowtie_via_pullback(da: &LinearDirac, db: &LinearDirac) -> Result<LinearDirac> {
    let n = da.base_dim;
    check_dim(n, db.base_dim)?;
    let sum = direct_sum(da, db)?;
    let mut diag = DMatrix::zeros(4 * n, 3 * n);
    for i in 0..n {
        diag[(i, i)] = 1.0;
        diag[(n + i, i)] = 1.0;
    }
    for j in 0..2 * n {
        diag[(2 * n + j, n + j)] = 1.0;
    }
    let coisotropic = Subspace::span(&diag)?;
    let restricted = sum.space.intersect(&coisotropic)?;
    let mut quotient = DMatrix::zeros(2 * n, 4 * n);
    for i in 0..n {
        quotient[(i, i)] = 1.0;
        quotient[(n + i, 2 * n + i)] = 1.0;
        quotient[(n + i, 3 * n + i)] = 1.0;
    }
    LinearDirac::assembled(restricted.image(&quotient)?, "bowtie_via_pullback")
}

/// Recovers `(Δ, Ω_Δ)` with `Ω_Δ(v1, v2) = ⟨α1, v2⟩` for any `(v1, α1) ∈ D`.
///
/// The returned matrix vanishes on `Δ^⊥`, so it is the unique representative
/// supported on `Δ`.
pub fn extract_two_form(d: &LinearDirac) -> Result<TwoFormOnDistribution> {
    let n = d.base_dim;
    let delta = d.velocity_projection();
    let basis = d.space.basis();
    let bv = basis.rows(0, n).into_owned();
    let ba = basis.rows(n, n).into_owned();
    let db = delta.basis();
    let r = db.ncols();
    let svd = crate::linalg::svd(&bv);
    let mut alphas = DMatrix::zeros(n, r);
    for k in 0..r {
        let x = svd.solve(&db.column(k).into_owned(), 1e-12);
        alphas.set_column(k, &(&ba * x));
    }
    let s = alphas.transpose() * db;
    let skew = (&s - s.transpose()) * 0.5;
    let form = db * skew * db.transpose();
    // Clean rounding so the skew check holds exactly.
    let form = (&form - form.transpose()) * 0.5;
    TwoFormOnDistribution::new(delta, form)
}

/// Dimensions of a factored composition `V1 × Vs` and `Vs × V2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PortDims {
    pub outer1: usize,
    pub shared: usize,
    pub outer2: usize,
}

/// `D1 ‖ D2 = {(v1, v2, α1, α2) : ∃(vs, αs), (v1, vs, α1, αs) ∈ D1, (−vs, v2, αs, α2) ∈ D2}`.
pub fn compose(d1: &LinearDirac, d2: &LinearDirac, dims: PortDims) -> Result<LinearDirac> {
    let PortDims {
        outer1: a,
        shared: s,
        outer2: b,
    } = dims;
    check_dim(a + s, d1.base_dim)?;
    check_dim(s + b, d2.base_dim)?;
    if a + b == 0 {
        return Err(Error::ZeroAmbient);
    }
    // Unknowns: v1 | v2 | α1 | α2 | vs | αs
    let (o_v1, o_v2, o_a1, o_a2, o_vs, o_as) =
        (0, a, a + b, 2 * a + b, 2 * (a + b), 2 * (a + b) + s);
    let total = 2 * (a + b + s);
    let c1 = d1.membership_rows();
    let c2 = d2.membership_rows();
    let (m1, m2) = (c1.nrows(), c2.nrows());
    let mut sys = DMatrix::zeros(m1 + m2, total);
    // D1 coordinates: (v1, vs, α1, αs)
    let n1 = a + s;
    sys.view_mut((0, o_v1), (m1, a)).copy_from(&c1.columns(0, a));
    sys.view_mut((0, o_vs), (m1, s)).copy_from(&c1.columns(a, s));
    sys.view_mut((0, o_a1), (m1, a)).copy_from(&c1.columns(n1, a));
    sys.view_mut((0, o_as), (m1, s)).copy_from(&c1.columns(n1 + a, s));
    // D2 coordinates: (−vs, v2, αs, α2)
    let n2 = s + b;
    sys.view_mut((m1, o_vs), (m2, s)).copy_from(&(-c2.columns(0, s)));
    sys.view_mut((m1, o_v2), (m2, b)).copy_from(&c2.columns(s, b));
    sys.view_mut((m1, o_as), (m2, s)).copy_from(&c2.columns(n2, s));
    sys.view_mut((m1, o_a2), (m2, b)).copy_from(&c2.columns(n2 + s, b));
    let all = Subspace::kernel_with_tol(&sys, d1.space.rank_tol())?;
    LinearDirac::assembled(all.project_coords(0, 2 * (a + b))?, "compose")
}

/// The same composition obtained by interconnection: `(D1 ⊕ D2) ⋈ D_int`
/// with `Δ_int = {(v1, vs, −vs, v2)}`, pushed forward by the projection
/// `(v1, vs, vs', v2) ↦ (v1, v2)`.
pub fn compose_via_interconnection(d1: &LinearDirac, d2: &LinearDirac, dims: PortDims) -> Result<LinearDirac> {
    let PortDims {
        outer1: a,
        shared: s,
        outer2: b,
    } = dims;
    check_dim(a + s, d1.base_dim)?;
    check_dim(s + b, d2.base_dim)?;
    let n = a + 2 * s + b;
    let mut delta = DMatrix::zeros(n, a + s + b);
    for i in 0..a {
        delta[(i, i)] = 1.0;
    }
    for i in 0..s {
        delta[(a + i, a + i)] = 1.0;
        delta[(a + s + i, a + i)] = -1.0;
    }
    for i in 0..b {
        delta[(a + 2 * s + i, a + s + i)] = 1.0;
    }
    let d_int = from_form_and_distribution(&TwoFormOnDistribution::new(
        Subspace::span(&delta)?,
        DMatrix::zeros(n, n),
    )?)?;
    let joined = bowtie(&direct_sum(d1, d2)?, &d_int)?;
    let mut psi = DMatrix::zeros(a + b, n);
    for i in 0..a {
        psi[(i, i)] = 1.0;
    }
    for i in 0..b {
        psi[(a + i, a + 2 * s + i)] = 1.0;
    }
    pushforward(&joined, &psi)
}

/// `φ_* D = {(φ v, α) : (v, φᵀ α) ∈ D}` for `φ: U → W` given as a `dim W × dim U` matrix.
pub fn pushforward(d: &LinearDirac, phi: &DMatrix<f64>) -> Result<LinearDirac> {
    let u = d.base_dim;
    check_dim(u, phi.ncols())?;
    let w = phi.nrows();
    if w == 0 {
        return Err(Error::ZeroAmbient);
    }
    let c = d.membership_rows();
    let m = c.nrows();
    let mut sys = DMatrix::zeros(m, u + w);
    sys.view_mut((0, 0), (m, u)).copy_from(&c.columns(0, u));
    sys.view_mut((0, u), (m, w))
        .copy_from(&(c.columns(u, u) * phi.transpose()));
    let pairs = Subspace::kernel_with_tol(&sys, d.space.rank_tol())?;
    let mut map = DMatrix::zeros(2 * w, u + w);
    map.view_mut((0, 0), (w, u)).copy_from(phi);
    map.view_mut((w, u), (w, w)).copy_from(&DMatrix::identity(w, w));
    let image = pairs.image(&map)?;
    if image.dim() != w || !validate_dirac(&image) {
        return Err(Error::DegenerateMap {
            expected: w,
            found: image.dim(),
        });
    }
    Ok(LinearDirac {
        base_dim: w,
        space: image,
    })
}

/// Relabels base coordinates: new coordinate `i` is old coordinate `perm[i]`.
pub fn permute(d: &LinearDirac, perm: &[usize]) -> Result<LinearDirac> {
    check_dim(d.base_dim, perm.len())?;
    let mut p = DMatrix::zeros(perm.len(), perm.len());
    for (i, &j) in perm.iter().enumerate() {
        p[(i, j)] = 1.0;
    }
    pushforward(d, &p)
}
