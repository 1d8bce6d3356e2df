//! Dense SVD through faer, returned as nalgebra matrices.

use nalgebra::{DMatrix, DVector};

pub(crate) struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

/// Thin SVD, singular values in non-increasing order.
pub(crate) fn svd(m: &DMatrix<f64>) -> Svd {
    let (r, c) = m.shape();
    let k = r.min(c);
    if k == 0 {
        return Svd {
            u: DMatrix::zeros(r, 0),
            singular_values: DVector::zeros(0),
            v: DMatrix::zeros(c, 0),
        };
    }
    let f = faer::Mat::<f64>::from_fn(r, c, |i, j| m[(i, j)]);
    let s = f.thin_svd().expect("svd did not converge");
    let (u, sv, v) = (s.U(), s.S().column_vector(), s.V());
    Svd {
        u: DMatrix::from_fn(r, k, |i, j| u[(i, j)]),
        singular_values: DVector::from_fn(k, |i, _| sv[i]),
        v: DMatrix::from_fn(c, k, |i, j| v[(i, j)]),
    }
}

impl Svd {
    /// Minimum-norm least-squares solution, dropping singular values below
    /// `eps` (absolute).
    pub fn solve(&self, b: &DVector<f64>, eps: f64) -> DVector<f64> {
        let mut y = self.u.transpose() * b;
        for (yi, &s) in y.iter_mut().zip(self.singular_values.iter()) {
            *yi = if s > eps { *yi / s } else { 0.0 };
        }
        &self.v * y
    }

    /// Numerical rank relative to the largest singular value.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let smax = self.singular_values.iter().cloned().fold(0.0, f64::max);
        self.singular_values.iter().filter(|&&s| s > rel_tol * smax && s > 0.0).count()
    }
}
