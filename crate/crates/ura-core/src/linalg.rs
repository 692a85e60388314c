//! Dense complex linear algebra used by the estimators: Hermitian Cholesky
//! factorization, positive-definite solves and eigenvalues of Hermitian
//! matrices (Householder tridiagonalization followed by implicit QL).
//!
//! Everything operates on `ndarray::Array2<Complex64>` in standard row-major
//! layout. Sizes in this crate stay in the low thousands, so straightforward
//! cache-friendly loops are sufficient.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("shape mismatch: lhs has {lhs} rows, rhs has {rhs}")]
    ShapeMismatch { lhs: usize, rhs: usize },
    #[error("eigenvalue iteration failed to converge at index {index}")]
    NoConvergence { index: usize },
}

/// Conjugate transpose as an owned matrix.
pub fn conj_transpose(a: &Array2<Complex64>) -> Array2<Complex64> {
    let (r, c) = a.dim();
    Array2::from_shape_fn((c, r), |(i, j)| a[[j, i]].conj())
}

/// Frobenius norm.
pub fn frobenius(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Lower-triangular `L` with `A = L L^H` for Hermitian positive-definite `A`.
///
/// Only the lower triangle of `a` is referenced.
pub fn cholesky(a: &Array2<Complex64>) -> Result<Array2<Complex64>, LinalgError> {
    let (n, c) = a.dim();
    if n != c {
        return Err(LinalgError::NotSquare { rows: n, cols: c });
    }
    let mut l = Array2::<Complex64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]].re;
        {
            let lj = l.row(j);
            let lj = lj.as_slice().expect("row-major layout");
            diag -= lj[..j].iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(LinalgError::NotPositiveDefinite {
                pivot: j,
                value: diag,
            });
        }
        let ljj = diag.sqrt();
        l[[j, j]] = Complex64::new(ljj, 0.0);
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            {
                let (ri, rj) = (l.row(i), l.row(j));
                let (ri, rj) = (ri.as_slice().unwrap(), rj.as_slice().unwrap());
                for k in 0..j {
                    s -= ri[k] * rj[k].conj();
                }
            }
            l[[i, j]] = s / ljj;
        }
    }
    Ok(l)
}

/// Solve `A X = B` for Hermitian positive-definite `A` via Cholesky.
pub fn solve_hermitian(
    a: &Array2<Complex64>,
    b: &Array2<Complex64>,
) -> Result<Array2<Complex64>, LinalgError> {
    let l = cholesky(a)?;
    if l.nrows() != b.nrows() {
        return Err(LinalgError::ShapeMismatch {
            lhs: l.nrows(),
            rhs: b.nrows(),
        });
    }
    Ok(cholesky_solve(&l, b))
}

/// Solve `(L L^H) X = B` given the Cholesky factor `L`.
pub fn cholesky_solve(l: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
    let n = l.nrows();
    let m = b.ncols();
    let mut x = b.clone();
    // Forward substitution: L Y = B.
    for i in 0..n {
        let lii = l[[i, i]].re;
        for col in 0..m {
            let mut s = x[[i, col]];
            let li = l.row(i);
            let li = li.as_slice().unwrap();
            for k in 0..i {
                s -= li[k] * x[[k, col]];
            }
            x[[i, col]] = s / lii;
        }
    }
    // Back substitution: L^H X = Y.
    for i in (0..n).rev() {
        let lii = l[[i, i]].re;
        for col in 0..m {
            let mut s = x[[i, col]];
            for k in (i + 1)..n {
                s -= l[[k, i]].conj() * x[[k, col]];
            }
            x[[i, col]] = s / lii;
        }
    }
    x
}

/// Inverse of a Hermitian positive-definite matrix.
pub fn invert_hermitian(a: &Array2<Complex64>) -> Result<Array2<Complex64>, LinalgError> {
    let n = a.nrows();
    solve_hermitian(a, &Array2::eye(n))
}

/// Eigenvalues of a Hermitian matrix, ascending.
///
/// Householder reduction to tridiagonal form, diagonal phase similarity to
/// make the subdiagonal real, then implicit QL with Wilkinson shifts.
pub fn hermitian_eigenvalues(a: &Array2<Complex64>) -> Result<Vec<f64>, LinalgError> {
    let (n, c) = a.dim();
    if n != c {
        return Err(LinalgError::NotSquare { rows: n, cols: c });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![a[[0, 0]].re]);
    }
    let (mut d, mut e) = tridiagonalize(a.clone());
    tql_eigenvalues(&mut d, &mut e)?;
    d.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(d)
}

/// Reduce Hermitian `a` to real symmetric tridiagonal form; returns
/// (diagonal, subdiagonal magnitudes with a trailing zero).
fn tridiagonalize(mut a: Array2<Complex64>) -> (Vec<f64>, Vec<f64>) {
    let n = a.nrows();
    let mut v = Array1::<Complex64>::zeros(n);
    for k in 0..n.saturating_sub(2) {
        // Householder vector annihilating a[k+2.., k].
        let alpha = a[[k + 1, k]];
        let mut xnorm_sq = 0.0;
        for i in (k + 2)..n {
            xnorm_sq += a[[i, k]].norm_sqr();
        }
        if xnorm_sq == 0.0 && alpha.im == 0.0 {
            continue;
        }
        let norm = (alpha.norm_sqr() + xnorm_sq).sqrt();
        let beta = if alpha.re >= 0.0 { -norm } else { norm };
        let tau = Complex64::new((beta - alpha.re) / beta, -alpha.im / beta);
        let scale = Complex64::new(1.0, 0.0) / (alpha - beta);
        v[k + 1] = Complex64::new(1.0, 0.0);
        for i in (k + 2)..n {
            v[i] = a[[i, k]] * scale;
        }
        // Hermitian rank-2 update of the trailing block with the
        // annihilating reflector Q = I - conj(tau) v v^H:
        //   p = tau A v,  w = p - (conj(tau) (v^H p) / 2) v,
        //   A <- A - v w^H - w v^H.
        let m = n - (k + 1);
        let mut p = vec![Complex64::new(0.0, 0.0); m];
        for (pi, i) in ((k + 1)..n).enumerate() {
            let mut s = Complex64::new(0.0, 0.0);
            let row = a.row(i);
            let row = row.as_slice().unwrap();
            for j in (k + 1)..n {
                s += row[j] * v[j];
            }
            p[pi] = tau * s;
        }
        let mut vhp = Complex64::new(0.0, 0.0);
        for (pi, i) in ((k + 1)..n).enumerate() {
            vhp += v[i].conj() * p[pi];
        }
        let corr = tau.conj() * vhp * 0.5;
        for (pi, i) in ((k + 1)..n).enumerate() {
            p[pi] -= corr * v[i];
        }
        for (pi, i) in ((k + 1)..n).enumerate() {
            for (pj, j) in ((k + 1)..n).enumerate() {
                let upd = v[i] * p[pj].conj() + p[pi] * v[j].conj();
                a[[i, j]] -= upd;
            }
        }
        a[[k + 1, k]] = Complex64::new(beta, 0.0);
        for i in (k + 2)..n {
            a[[i, k]] = Complex64::new(0.0, 0.0);
        }
    }
    let d: Vec<f64> = (0..n).map(|i| a[[i, i]].re).collect();
    // Subdiagonal may be complex; a diagonal phase similarity makes it real.
    let mut e: Vec<f64> = (0..n - 1).map(|i| a[[i + 1, i]].norm()).collect();
    e.push(0.0);
    (d, e)
}

/// Implicit QL with Wilkinson shifts on a real symmetric tridiagonal matrix.
/// `d` holds the diagonal, `e` the subdiagonal (`e[n-1]` unused).
fn tql_eigenvalues(d: &mut [f64], e: &mut [f64]) -> Result<(), LinalgError> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(LinalgError::NoConvergence { index: l });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0, 1.0);
            let mut p = 0.0;
            let mut i = m as isize - 1;
            while i >= l as isize {
                let iu = i as usize;
                let f = s * e[iu];
                let b = c * e[iu];
                r = f.hypot(g);
                e[iu + 1] = r;
                if r == 0.0 {
                    d[iu + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[iu + 1] - p;
                r = (d[iu] - g) * s + 2.0 * c * b;
                p = s * r;
                d[iu + 1] = g + p;
                g = c * r - b;
                i -= 1;
            }
            if i < l as isize {
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        }
    }
    Ok(())
}
