//! Exact rational linear algebra.
//!
//! Every routine here works over arbitrary-precision rationals, so rank and
//! null-space answers are exact for integer or rational inputs. The numeric
//! library never calls into this crate on its hot paths; it exists so that
//! floating-point rank decisions can be checked against ground truth.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Q = BigRational;

/// Dense row-major rational matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Q>,
}

pub fn q(n: i64) -> Q {
    BigRational::from_integer(BigInt::from(n))
}

impl QMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        QMatrix {
            rows,
            cols,
            data: vec![Q::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Q::one();
        }
        m
    }

    /// Builds a matrix from integer rows. All rows must share a length.
    pub fn from_int_rows(rows: &[Vec<i64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        Self::from_int_rows_with_cols(rows, cols)
    }

    /// Like [`QMatrix::from_int_rows`] but keeps the column count when there are no rows.
    pub fn from_int_rows_with_cols(rows: &[Vec<i64>], cols: usize) -> Self {
        let mut m = Self::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols, "ragged integer matrix");
            for (j, &x) in r.iter().enumerate() {
                m[(i, j)] = q(x);
            }
        }
        m
    }

    /// Builds a matrix whose columns are the given integer vectors.
    pub fn from_int_columns(columns: &[Vec<i64>], rows: usize) -> Self {
        let mut m = Self::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            assert_eq!(c.len(), rows, "column length mismatch");
            for (i, &x) in c.iter().enumerate() {
                m[(i, j)] = q(x);
            }
        }
        m
    }

    pub fn from_columns(columns: &[Vec<Q>], rows: usize) -> Self {
        let mut m = Self::zeros(rows, columns.len());
        for (j, c) in columns.iter().enumerate() {
            assert_eq!(c.len(), rows, "column length mismatch");
            for (i, x) in c.iter().enumerate() {
                m[(i, j)] = x.clone();
            }
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> Vec<Q> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn columns(&self) -> Vec<Vec<Q>> {
        (0..self.cols).map(|j| self.column(j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn mul(&self, rhs: &QMatrix) -> QMatrix {
        assert_eq!(self.cols, rhs.rows, "shape mismatch in product");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    let prod = a * &rhs[(k, j)];
                    out[(i, j)] += prod;
                }
            }
        }
        out
    }

    /// Stacks `self` on top of `below`.
    pub fn vstack(&self, below: &QMatrix) -> QMatrix {
        assert_eq!(self.cols, below.cols, "column mismatch in vstack");
        let mut data = self.data.clone();
        data.extend(below.data.iter().cloned());
        QMatrix {
            rows: self.rows + below.rows,
            cols: self.cols,
            data,
        }
    }

    /// Places `right` beside `self`.
    pub fn hstack(&self, right: &QMatrix) -> QMatrix {
        assert_eq!(self.rows, right.rows, "row mismatch in hstack");
        let mut out = Self::zeros(self.rows, self.cols + right.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self[(i, j)].clone();
            }
            for j in 0..right.cols {
                out[(i, self.cols + j)] = right[(i, j)].clone();
            }
        }
        out
    }

    /// Keeps the rows in `range`.
    pub fn row_range(&self, start: usize, end: usize) -> QMatrix {
        let mut out = Self::zeros(end - start, self.cols);
        for i in start..end {
            for j in 0..self.cols {
                out[(i - start, j)] = self[(i, j)].clone();
            }
        }
        out
    }

    /// Reduced row echelon form together with the pivot columns.
    pub fn rref(&self) -> (QMatrix, Vec<usize>) {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..m.cols {
            if row == m.rows {
                break;
            }
            let Some(p) = (row..m.rows).find(|&r| !m[(r, col)].is_zero()) else {
                continue;
            };
            m.swap_rows(row, p);
            let inv = m[(row, col)].recip();
            for j in col..m.cols {
                let x = &m[(row, j)] * &inv;
                m[(row, j)] = x;
            }
            for r in 0..m.rows {
                if r == row || m[(r, col)].is_zero() {
                    continue;
                }
                let f = m[(r, col)].clone();
                for j in col..m.cols {
                    let x = &f * &m[(row, j)];
                    m[(r, j)] -= x;
                }
            }
            pivots.push(col);
            row += 1;
        }
        (m, pivots)
    }

    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    /// Basis of the null space, one column per free variable.
    pub fn null_space(&self) -> QMatrix {
        let (r, pivots) = self.rref();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        let mut out = Self::zeros(self.cols, free.len());
        for (k, &f) in free.iter().enumerate() {
            out[(f, k)] = Q::one();
            for (prow, &pc) in pivots.iter().enumerate() {
                out[(pc, k)] = -r[(prow, f)].clone();
            }
        }
        out
    }

    /// Linearly independent subset of the columns spanning the column space.
    pub fn column_space(&self) -> QMatrix {
        let (_, pivots) = self.rref();
        let cols: Vec<Vec<Q>> = pivots.iter().map(|&j| self.column(j)).collect();
        Self::from_columns(&cols, self.rows)
    }

    /// True when `v` lies in the column space.
    pub fn spans(&self, v: &[Q]) -> bool {
        let aug = self.hstack(&Self::from_columns(&[v.to_vec()], self.rows));
        aug.rank() == self.rank()
    }

    pub fn to_f64_columns(&self) -> Vec<Vec<f64>> {
        self.columns()
            .into_iter()
            .map(|c| c.iter().map(to_f64).collect())
            .collect()
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }
}

impl std::ops::Index<(usize, usize)> for QMatrix {
    type Output = Q;
    fn index(&self, (i, j): (usize, usize)) -> &Q {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for QMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Q {
        &mut self.data[i * self.cols + j]
    }
}

pub fn to_f64(x: &Q) -> f64 {
    let n = x.numer().to_f64().unwrap_or(f64::NAN);
    let d = x.denom().to_f64().unwrap_or(f64::NAN);
    if n.is_finite() && d.is_finite() {
        n / d
    } else {
        // Huge numerators and denominators: shift both before dividing.
        let bits = x.numer().bits().max(x.denom().bits()) as i64 - 60;
        let shift = bits.max(0) as usize;
        let n = (x.numer().abs() >> shift).to_f64().unwrap_or(0.0) * x.numer().signum().to_f64().unwrap_or(1.0);
        let d = (x.denom() >> shift).to_f64().unwrap_or(1.0);
        n / d
    }
}

/// Dimension of the column space of integer columns in `ambient`-space.
pub fn span_dim(columns: &[Vec<i64>], ambient: usize) -> usize {
    QMatrix::from_int_columns(columns, ambient).rank()
}

/// Dimension of the null space of integer rows with `ambient` columns.
pub fn kernel_dim(rows: &[Vec<i64>], ambient: usize) -> usize {
    ambient - QMatrix::from_int_rows_with_cols(rows, ambient).rank()
}

/// Exact intersection of two column spaces via the null space of `[A, -B]`.
pub fn intersect(a: &QMatrix, b: &QMatrix) -> QMatrix {
    assert_eq!(a.nrows(), b.nrows());
    let mut neg_b = b.clone();
    for x in neg_b.data.iter_mut() {
        *x = -x.clone();
    }
    let ker = a.hstack(&neg_b).null_space();
    let coeffs = ker.row_range(0, a.ncols());
    a.mul(&coeffs).column_space()
}

/// Exact sum of two column spaces.
pub fn sum(a: &QMatrix, b: &QMatrix) -> QMatrix {
    a.hstack(b).column_space()
}

/// Exact annihilator (orthogonal complement under the standard pairing).
pub fn annihilator(a: &QMatrix) -> QMatrix {
    a.transpose().null_space()
}

/// The split-signature pairing `J = [[0, I], [I, 0]]` on `V ⊕ V*` with `dim V = n`.
pub fn pairing_matrix(n: usize) -> QMatrix {
    let mut j = QMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = Q::one();
        j[(n + i, i)] = Q::one();
    }
    j
}

/// Membership rows for a maximal isotropic subspace: `x ∈ D ⇔ Dᵀ J x = 0`.
fn isotropic_rows(d: &QMatrix) -> QMatrix {
    let n = d.nrows() / 2;
    d.transpose().mul(&pairing_matrix(n))
}

/// Exact Dirac structure `{(v, α) : v ∈ Δ, α − Ω♭v ∈ Δ°}` for rational inputs.
///
/// `form[i][j] = Ω(e_i, e_j)`, so `Ω♭ = formᵀ`.
pub fn dirac_from_form(distribution: &QMatrix, form: &QMatrix) -> QMatrix {
    let n = distribution.nrows();
    let delta = distribution.column_space();
    let flat = form.transpose();
    let mut cols = Vec::new();
    for b in delta.columns() {
        let bm = QMatrix::from_columns(std::slice::from_ref(&b), n);
        let a = flat.mul(&bm).column(0);
        let mut c = b;
        c.extend(a);
        cols.push(c);
    }
    for ann in annihilator(&delta).columns() {
        let mut c = vec![Q::zero(); n];
        c.extend(ann);
        cols.push(c);
    }
    QMatrix::from_columns(&cols, 2 * n)
}

/// Exact bowtie product: `{(v, α) : ∃β, (v, α+β) ∈ Da, (v, −β) ∈ Db}`.
///
/// Membership is tested through the pairing rows of each factor, which is a
/// different route from the complement-basis elimination used numerically.
pub fn bowtie(da: &QMatrix, db: &QMatrix) -> QMatrix {
    let n = da.nrows() / 2;
    let ra = isotropic_rows(da);
    let rb = isotropic_rows(db);
    // Unknowns (v, α, β) ∈ Q^{3n}.
    let mut sys = QMatrix::zeros(ra.nrows() + rb.nrows(), 3 * n);
    for i in 0..ra.nrows() {
        for j in 0..n {
            sys[(i, j)] = ra[(i, j)].clone();
            sys[(i, n + j)] = ra[(i, n + j)].clone();
            sys[(i, 2 * n + j)] = ra[(i, n + j)].clone();
        }
    }
    let off = ra.nrows();
    for i in 0..rb.nrows() {
        for j in 0..n {
            sys[(off + i, j)] = rb[(i, j)].clone();
            sys[(off + i, 2 * n + j)] = -rb[(i, n + j)].clone();
        }
    }
    sys.null_space().row_range(0, 2 * n).column_space()
}

/// Same-dimension subspace equality through ranks.
pub fn same_space(a: &QMatrix, b: &QMatrix) -> bool {
    let ra = a.rank();
    ra == b.rank() && a.hstack(b).rank() == ra
}
