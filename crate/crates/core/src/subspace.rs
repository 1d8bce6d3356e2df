//! Linear subspaces of `R^N` stored as orthonormal bases.
//!
//! Every Dirac-structure computation in this crate reduces to spans, kernels,
//! intersections and sums of these. Numeric rank is decided from singular
//! values relative to the largest one.

use nalgebra::{DMatrix, DVector};

use crate::linalg;
use crate::error::{check_dim, Error, Result};

/// Relative singular-value threshold used for rank decisions.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct Subspace {
    ambient_dim: usize,
    basis: DMatrix<f64>,
    rank_tol: f64,
}

/// Orthonormal basis of the column space of `m`, keeping singular directions
/// above `tol * max(σ_max, scale)`.
fn orthonormal_range(m: &DMatrix<f64>, tol: f64, scale: f64) -> DMatrix<f64> {
    let rows = m.nrows();
    if m.ncols() == 0 || rows == 0 {
        return DMatrix::zeros(rows, 0);
    }
    let svd = linalg::svd(m);
    let u = &svd.u;
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if !(smax > 0.0) {
        return DMatrix::zeros(rows, 0);
    }
    let smax = smax.max(scale);
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > tol * smax)
        .map(|(i, _)| i)
        .collect();
    let mut out = DMatrix::zeros(rows, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        out.set_column(k, &u.column(i));
    }
    out
}

impl Subspace {
    /// Column space of `columns` with the default rank tolerance.
    pub fn span(columns: &DMatrix<f64>) -> Result<Self> {
        Self::span_with_tol(columns, DEFAULT_RANK_TOL)
    }

    pub fn span_with_tol(columns: &DMatrix<f64>, rank_tol: f64) -> Result<Self> {
        Self::span_scaled(columns, rank_tol, 0.0)
    }

    /// Like [`Subspace::span_with_tol`], but singular values are compared
    /// against at least `scale`, so a block that is entirely rounding noise
    /// spans nothing.
    fn span_scaled(columns: &DMatrix<f64>, rank_tol: f64, scale: f64) -> Result<Self> {
        let ambient_dim = columns.nrows();
        if ambient_dim == 0 {
            return Err(Error::ZeroAmbient);
        }
        Ok(Subspace {
            ambient_dim,
            basis: orthonormal_range(columns, rank_tol, scale),
            rank_tol,
        })
    }

    /// Span of a list of vectors in `R^ambient_dim`.
    pub fn span_vectors(ambient_dim: usize, vectors: &[DVector<f64>]) -> Result<Self> {
        if ambient_dim == 0 {
            return Err(Error::ZeroAmbient);
        }
        let mut m = DMatrix::zeros(ambient_dim, vectors.len());
        for (j, v) in vectors.iter().enumerate() {
            check_dim(ambient_dim, v.len())?;
            m.set_column(j, v);
        }
        Self::span(&m)
    }

    /// Null space of `rows`; `dim kernel + rank rows = ncols`.
    pub fn kernel(rows: &DMatrix<f64>) -> Result<Self> {
        Self::kernel_with_tol(rows, DEFAULT_RANK_TOL)
    }

    pub fn kernel_with_tol(rows: &DMatrix<f64>, rank_tol: f64) -> Result<Self> {
        let n = rows.ncols();
        if n == 0 {
            return Err(Error::ZeroAmbient);
        }
        let row_space = orthonormal_range(&rows.transpose(), rank_tol, 0.0);
        Ok(Subspace {
            ambient_dim: n,
            basis: complement_basis(&row_space, n),
            rank_tol,
        })
    }

    pub fn zero(ambient_dim: usize) -> Result<Self> {
        if ambient_dim == 0 {
            return Err(Error::ZeroAmbient);
        }
        Ok(Subspace {
            ambient_dim,
            basis: DMatrix::zeros(ambient_dim, 0),
            rank_tol: DEFAULT_RANK_TOL,
        })
    }

    pub fn full(ambient_dim: usize) -> Result<Self> {
        if ambient_dim == 0 {
            return Err(Error::ZeroAmbient);
        }
        Ok(Subspace {
            ambient_dim,
            basis: DMatrix::identity(ambient_dim, ambient_dim),
            rank_tol: DEFAULT_RANK_TOL,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    /// Orthonormal basis, one column per dimension.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn with_rank_tol(mut self, rank_tol: f64) -> Self {
        self.rank_tol = rank_tol;
        self
    }

    /// Orthogonal projector `B Bᵀ`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    pub fn intersect(&self, other: &Subspace) -> Result<Subspace> {
        check_dim(self.ambient_dim, other.ambient_dim)?;
        let (ra, rb) = (self.dim(), other.dim());
        if ra == 0 || rb == 0 {
            return Subspace::zero(self.ambient_dim);
        }
        // (x, y) with A x = B y.
        let mut stacked = DMatrix::zeros(self.ambient_dim, ra + rb);
        stacked.view_mut((0, 0), (self.ambient_dim, ra)).copy_from(&self.basis);
        stacked
            .view_mut((0, ra), (self.ambient_dim, rb))
            .copy_from(&(-&other.basis));
        let coeffs = Subspace::kernel_with_tol(&stacked, self.rank_tol)?;
        let x = coeffs.basis.rows(0, ra).into_owned();
        Subspace::span_with_tol(&(&self.basis * x), self.rank_tol)
    }

    pub fn sum(&self, other: &Subspace) -> Result<Subspace> {
        check_dim(self.ambient_dim, other.ambient_dim)?;
        let mut cat = DMatrix::zeros(self.ambient_dim, self.dim() + other.dim());
        cat.view_mut((0, 0), (self.ambient_dim, self.dim()))
            .copy_from(&self.basis);
        cat.view_mut((0, self.dim()), (self.ambient_dim, other.dim()))
            .copy_from(&other.basis);
        Subspace::span_with_tol(&cat, self.rank_tol)
    }

    /// Covectors vanishing on `self`, with the dual identified with the
    /// primal through the standard basis.
    pub fn annihilator(&self) -> Subspace {
        Subspace {
            ambient_dim: self.ambient_dim,
            basis: complement_basis(&self.basis, self.ambient_dim),
            rank_tol: self.rank_tol,
        }
    }

    /// Projection residual `‖v − B Bᵀ v‖`.
    pub fn residual(&self, v: &DVector<f64>) -> Result<f64> {
        check_dim(self.ambient_dim, v.len())?;
        let coords = self.basis.transpose() * v;
        Ok((v - &self.basis * coords).norm())
    }

    pub fn contains(&self, v: &DVector<f64>) -> Result<bool> {
        self.contains_with_tol(v, self.rank_tol)
    }

    pub fn contains_with_tol(&self, v: &DVector<f64>, tol: f64) -> Result<bool> {
        let r = self.residual(v)?;
        Ok(r <= tol * v.norm().max(1.0))
    }

    /// Equal dimension and mutual containment of basis vectors.
    pub fn equals(&self, other: &Subspace) -> Result<bool> {
        check_dim(self.ambient_dim, other.ambient_dim)?;
        if self.dim() != other.dim() {
            return Ok(false);
        }
        let tol = self.rank_tol.max(other.rank_tol);
        for c in other.basis.column_iter() {
            if !self.contains_with_tol(&c.into_owned(), tol)? {
                return Ok(false);
            }
        }
        for c in self.basis.column_iter() {
            if !other.contains_with_tol(&c.into_owned(), tol)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Largest principal-angle sine between equal-dimension subspaces.
    pub fn distance(&self, other: &Subspace) -> Result<f64> {
        check_dim(self.ambient_dim, other.ambient_dim)?;
        if self.dim() != other.dim() {
            return Ok(1.0);
        }
        let mut worst: f64 = 0.0;
        for c in other.basis.column_iter() {
            worst = worst.max(self.residual(&c.into_owned())?);
        }
        Ok(worst)
    }

    /// Image under a linear map `m` (rows = target dimension).
    pub fn image(&self, m: &DMatrix<f64>) -> Result<Subspace> {
        check_dim(self.ambient_dim, m.ncols())?;
        Subspace::span_scaled(&(m * &self.basis), self.rank_tol, m.norm())
    }

    /// Image under selecting the coordinates `start..start+len`.
    pub fn project_coords(&self, start: usize, len: usize) -> Result<Subspace> {
        if start + len > self.ambient_dim {
            return Err(Error::DimensionMismatch {
                expected: self.ambient_dim,
                found: start + len,
            });
        }
        // rows of an orthonormal basis: the natural scale is one
        Subspace::span_scaled(&self.basis.rows(start, len).into_owned(), self.rank_tol, 1.0)
    }
}

/// Orthonormal basis of the orthogonal complement of the orthonormal columns `q`.
fn complement_basis(q: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if q.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    if q.ncols() >= n {
        return DMatrix::zeros(n, 0);
    }
    let p = DMatrix::identity(n, n) - q * q.transpose();
    // Singular values of P are 1 (complement) or O(ε) (range of q).
    let c = orthonormal_range(&p, 1e-6, 1.0);
    debug_assert_eq!(c.ncols(), n - q.ncols());
    c
}
