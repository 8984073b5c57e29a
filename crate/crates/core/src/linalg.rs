//! Dense linear-algebra helpers shared across the crate.
//!
//! Everything here wraps LAPACK (via `ndarray-linalg`) or is a small exact
//! kernel (Kronecker product, column-stacking) with a fixed convention:
//!
//! * `vec` stacks **columns**, so `vec(X Y Z) = (Z^T (x) X) vec(Y)`.
//! * Ranks are decided against the tolerance `eps * max(rows, cols) * s_max`
//!   unless the caller supplies one.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use ndarray_linalg::{EigVals, SVD};

use crate::error::{Error, Result};

/// Frobenius norm of a matrix.
pub fn fro_norm(m: &ArrayView2<'_, f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Column-stacking vectorization: `out[j*rows + i] = m[(i, j)]`.
pub fn vec_mat(m: &ArrayView2<'_, f64>) -> Array1<f64> {
    let (rows, cols) = m.dim();
    let mut out = Array1::zeros(rows * cols);
    for j in 0..cols {
        for i in 0..rows {
            out[j * rows + i] = m[(i, j)];
        }
    }
    out
}

/// Inverse of [`vec_mat`]: reshape a length `rows*cols` vector into a
/// `rows x cols` matrix, column by column.
pub fn unvec(v: &ArrayView1<'_, f64>, rows: usize, cols: usize) -> Result<Array2<f64>> {
    if v.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!(
            "cannot reshape a length-{} vector into {rows} x {cols}",
            v.len()
        )));
    }
    let mut out = Array2::zeros((rows, cols));
    for j in 0..cols {
        for i in 0..rows {
            out[(i, j)] = v[j * rows + i];
        }
    }
    Ok(out)
}

/// Kronecker product `a (x) b`.
pub fn kron(a: &ArrayView2<'_, f64>, b: &ArrayView2<'_, f64>) -> Array2<f64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            let mut block = out.slice_mut(ndarray::s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
            block.zip_mut_with(b, |o, &bv| *o = aij * bv);
        }
    }
    out
}

/// Largest real part over the eigenvalues of a square matrix.
pub fn spectral_abscissa(m: &ArrayView2<'_, f64>) -> Result<f64> {
    let (r, c) = m.dim();
    if r != c {
        return Err(Error::DimensionMismatch(format!(
            "spectral abscissa needs a square matrix, got {r} x {c}"
        )));
    }
    if r == 0 {
        return Err(Error::DimensionMismatch("empty matrix".into()));
    }
    let vals = m
        .eigvals()
        .map_err(|e| Error::EigenFailure(format!("dgeev: {e}")))?;
    Ok(vals.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Singular values of a matrix, descending.
pub fn singular_values(m: &ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    let (_, s, _) = m
        .svd(false, false)
        .map_err(|e| Error::EigenFailure(format!("dgesvd: {e}")))?;
    Ok(s)
}

/// Largest singular value (spectral norm). Zero for an all-zero matrix.
pub fn spectral_norm(m: &ArrayView2<'_, f64>) -> Result<f64> {
    let s = singular_values(m)?;
    Ok(s.first().copied().unwrap_or(0.0))
}

/// Default rank-decision tolerance: `eps * max(rows, cols) * s_max`.
pub fn default_rank_tol(rows: usize, cols: usize, s_max: f64) -> f64 {
    f64::EPSILON * rows.max(cols) as f64 * s_max
}

/// Number of singular values strictly above `tol`.
pub fn rank_from_singular_values(s: &ArrayView1<'_, f64>, tol: f64) -> usize {
    s.iter().filter(|&&x| x > tol).count()
}

/// A full singular value decomposition `M = U diag(S) V^T` with square
/// orthogonal `U` (rows x rows) and `V` (cols x cols); `S` has
/// `min(rows, cols)` entries, descending.
#[derive(Debug, Clone)]
pub struct SvdTriplet {
    /// Left factor, `rows x rows`, orthogonal.
    pub u: Array2<f64>,
    /// Singular values, descending, length `min(rows, cols)`.
    pub s: Array1<f64>,
    /// Right factor, `cols x cols`, orthogonal (not transposed).
    pub v: Array2<f64>,
}

impl SvdTriplet {
    /// Full SVD of `m`.
    pub fn full(m: &ArrayView2<'_, f64>) -> Result<Self> {
        let (u, s, vt) = m
            .svd(true, true)
            .map_err(|e| Error::EigenFailure(format!("dgesvd: {e}")))?;
        let u = u.ok_or_else(|| Error::EigenFailure("SVD returned no U factor".into()))?;
        let vt = vt.ok_or_else(|| Error::EigenFailure("SVD returned no V^T factor".into()))?;
        Ok(SvdTriplet { u, s, v: vt.reversed_axes().as_standard_layout().to_owned() })
    }

    /// Rebuild `U diag(S) V^T` (shape `u.nrows() x v.nrows()`).
    pub fn reconstruct(&self) -> Array2<f64> {
        let rows = self.u.nrows();
        let cols = self.v.nrows();
        let k = self.s.len();
        // U * Sigma: scale the first k columns of U by the singular values.
        let mut us = Array2::zeros((rows, cols));
        for j in 0..k.min(cols) {
            let col = self.u.column(j);
            let sv = self.s[j];
            for i in 0..rows {
                us[(i, j)] = col[i] * sv;
            }
        }
        us.dot(&self.v.t())
    }

    /// Rank at the given tolerance.
    pub fn rank(&self, tol: f64) -> usize {
        rank_from_singular_values(&self.s.view(), tol)
    }

    /// Moore-Penrose pseudo-inverse at the given rank tolerance.
    pub fn pinv(&self, tol: f64) -> Array2<f64> {
        let rows = self.u.nrows();
        let cols = self.v.nrows();
        let mut out = Array2::zeros((cols, rows));
        for (k, &sv) in self.s.iter().enumerate() {
            if sv <= tol {
                break; // singular values are descending
            }
            let vk = self.v.column(k);
            let uk = self.u.column(k);
            let inv = 1.0 / sv;
            for i in 0..cols {
                let scale = vk[i] * inv;
                for j in 0..rows {
                    out[(i, j)] += scale * uk[j];
                }
            }
        }
        out
    }
}

/// Pseudo-inverse with the default rank tolerance (or `tol` if given).
pub fn pinv(m: &ArrayView2<'_, f64>, tol: Option<f64>) -> Result<Array2<f64>> {
    let svd = SvdTriplet::full(m)?;
    let s_max = svd.s.first().copied().unwrap_or(0.0);
    let tol = tol.unwrap_or_else(|| default_rank_tol(m.nrows(), m.ncols(), s_max));
    Ok(svd.pinv(tol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn vec_stacks_columns() {
        let m = array![[1.0, 2.0], [3.0, 4.0]];
        let v = vec_mat(&m.view());
        assert_eq!(v.to_vec(), vec![1.0, 3.0, 2.0, 4.0]);
        let back = unvec(&v.view(), 2, 2).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn unvec_rejects_bad_length() {
        let v = array![1.0, 2.0, 3.0];
        assert!(unvec(&v.view(), 2, 2).is_err());
    }

    #[test]
    fn kron_identity_convention() {
        // vec(X Y Z) = (Z^T (x) X) vec(Y) — the whole crate leans on this.
        let x = array![[1.0, 2.0], [0.5, -1.0]];
        let y = array![[2.0, 0.0], [1.0, 3.0]];
        let z = array![[1.0, -1.0], [2.0, 0.0]];
        let lhs = vec_mat(&x.dot(&y).dot(&z).view());
        let k = kron(&z.t(), &x.view());
        let rhs = k.dot(&vec_mat(&y.view()));
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn abscissa_of_companion_pair() {
        // Eigenvalues of [[1,2],[3,4]] are (5 +- sqrt(33))/2.
        let m = array![[1.0, 2.0], [3.0, 4.0]];
        let a = spectral_abscissa(&m.view()).unwrap();
        assert_abs_diff_eq!(a, (5.0 + 33.0_f64.sqrt()) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn abscissa_rejects_rectangular() {
        let m = Array2::<f64>::zeros((2, 3));
        assert!(matches!(
            spectral_abscissa(&m.view()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn full_svd_shapes_and_reconstruction() {
        let m = array![[1.0, 0.0], [0.0, 2.0], [3.0, 0.5]];
        let svd = SvdTriplet::full(&m.view()).unwrap();
        assert_eq!(svd.u.dim(), (3, 3));
        assert_eq!(svd.v.dim(), (2, 2));
        assert_eq!(svd.s.len(), 2);
        let back = svd.reconstruct();
        for (a, b) in m.iter().zip(back.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn pinv_left_inverse_of_tall_full_rank() {
        let m = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let p = pinv(&m.view(), None).unwrap();
        let prod = p.dot(&m);
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(prod[(i, j)], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pinv_drops_tiny_singular_values() {
        // sigma = {1, 1e-16}: the default tolerance treats the matrix as rank 1,
        // so the pseudo-inverse must not blow up to 1e16.
        let m = array![[1.0, 0.0], [0.0, 1e-16]];
        let p = pinv(&m.view(), None).unwrap();
        assert!(spectral_norm(&p.view()).unwrap() < 2.0);
    }
}
