//! Dense complex linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

use crate::Error;

pub type C64 = Complex64;
pub type Mat = DMatrix<C64>;
pub type Vector = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn eye(n: usize) -> Mat {
    Mat::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> Mat {
    Mat::zeros(r, c)
}

/// Largest singular value.
pub fn op_norm(a: &Mat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    if a.iter().all(|z| *z == C64::new(0.0, 0.0)) {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &Mat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn herm_part(a: &Mat) -> Mat {
    (a + a.adjoint()) * c(0.5)
}

pub fn inverse(a: &Mat) -> Result<Mat, Error> {
    if a.nrows() == 0 {
        return Ok(a.clone());
    }
    a.clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular("matrix inverse".into()))
}

pub fn solve(a: &Mat, b: &Mat) -> Result<Mat, Error> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular("linear solve".into()))
}

/// Ratio of extreme singular values.
pub fn condition_number(a: &Mat) -> f64 {
    let s = a.clone().svd(false, false).singular_values;
    let hi = s.iter().cloned().fold(0.0, f64::max);
    let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn herm_eig(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.nrows();
    let eig = herm_part(a).symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = Mat::zeros(n, n);
    for (new, &old) in idx.iter().enumerate() {
        vecs.set_column(new, &eig.eigenvectors.column(old));
    }
    (vals, vecs)
}

pub fn min_herm_eig(a: &Mat) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    herm_eig(a).0[0]
}

/// Applies a real function to a Hermitian matrix.
pub fn herm_fn(a: &Mat, f: impl Fn(f64) -> f64) -> Mat {
    let (vals, v) = herm_eig(a);
    let mut scaled = v.clone();
    for (j, lam) in vals.iter().enumerate() {
        let fj = f(*lam);
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= fj;
        }
    }
    scaled * v.adjoint()
}

fn schur(a: &Mat) -> Result<(Mat, Mat), Error> {
    let (q, t) = Schur::try_new(a.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?
        .unpack();
    Ok((q, t))
}

/// Principal square root by the Schur method (Björck–Hammarling).
pub fn sqrtm(a: &Mat) -> Result<Mat, Error> {
    let n = a.nrows();
    if n == 0 {
        return Ok(a.clone());
    }
    let (q, t) = schur(a)?;
    let mut u = Mat::zeros(n, n);
    for i in 0..n {
        u[(i, i)] = t[(i, i)].sqrt();
    }
    for j in 1..n {
        for i in (0..j).rev() {
            let mut s = t[(i, j)];
            for k in i + 1..j {
                s -= u[(i, k)] * u[(k, j)];
            }
            let den = u[(i, i)] + u[(j, j)];
            if den.norm() == 0.0 {
                return Err(Error::Numerical("square root: repeated zero eigenvalue".into()));
            }
            u[(i, j)] = s / den;
        }
    }
    Ok(&q * u * q.adjoint())
}

/// Solves `e x + x e = rhs` given a Schur factorization `e = q t q^H`.
pub struct SylvesterSym {
    q: Mat,
    t: Mat,
}

impl SylvesterSym {
    pub fn new(e: &Mat) -> Result<Self, Error> {
        let (q, t) = schur(e)?;
        Ok(Self { q, t })
    }

    pub fn solve(&self, rhs: &Mat) -> Mat {
        let n = self.t.nrows();
        let cc = self.q.adjoint() * rhs * &self.q;
        let t = &self.t;
        let mut y = Mat::zeros(n, n);
        for j in 0..n {
            let mut col: Vec<C64> = (0..n).map(|i| cc[(i, j)]).collect();
            for k in 0..j {
                let s = t[(k, j)];
                if s != C64::new(0.0, 0.0) {
                    for i in 0..n {
                        col[i] -= y[(i, k)] * s;
                    }
                }
            }
            // (t + t_jj) y_j = col, upper triangular
            for i in (0..n).rev() {
                let mut s = col[i];
                for k in i + 1..n {
                    s -= t[(i, k)] * y[(k, j)];
                }
                y[(i, j)] = s / (t[(i, i)] + t[(j, j)]);
            }
        }
        &self.q * y * self.q.adjoint()
    }
}

/// Orthonormal basis of the numerical null space (singular values below `tol`).
pub fn null_space(a: &Mat, tol: f64) -> (Mat, Vec<f64>) {
    let (m, n) = a.shape();
    let mut sq = Mat::zeros(n.max(m), n);
    sq.view_mut((0, 0), (m, n)).copy_from(a);
    let svd = sq.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let sv = svd.singular_values;
    let mut cols = Vec::new();
    for (i, s) in sv.iter().enumerate() {
        if *s < tol {
            cols.push(vt.row(i).adjoint());
        }
    }
    let mut out = Mat::zeros(n, cols.len());
    for (j, col) in cols.iter().enumerate() {
        out.set_column(j, col);
    }
    (out, sv.iter().cloned().collect())
}

/// Kronecker product.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Mat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == C64::new(0.0, 0.0) {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// 2×2 block matrix `[[a, b], [c, d]]`.
pub fn block2(a: &Mat, b: &Mat, cc: &Mat, d: &Mat) -> Mat {
    let (r0, c0) = a.shape();
    let (r1, c1) = d.shape();
    let mut out = Mat::zeros(r0 + r1, c0 + c1);
    out.view_mut((0, 0), (r0, c0)).copy_from(a);
    out.view_mut((0, c0), (r0, c1)).copy_from(b);
    out.view_mut((r0, 0), (r1, c0)).copy_from(cc);
    out.view_mut((r0, c0), (r1, c1)).copy_from(d);
    out
}

pub fn block_diag(blocks: &[&Mat]) -> Mat {
    let r: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cc: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(r, cc);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        out.view_mut((i, j), b.shape()).copy_from(*b);
        i += b.nrows();
        j += b.ncols();
    }
    out
}

pub fn sub_block(a: &Mat, i: usize, j: usize, r: usize, cc: usize) -> Mat {
    a.view((i, j), (r, cc)).into_owned()
}

pub fn diag_real(v: &[f64]) -> Mat {
    let n = v.len();
    let mut m = Mat::zeros(n, n);
    for (i, x) in v.iter().enumerate() {
        m[(i, i)] = c(*x);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(r: usize, cc: usize, v: &[f64]) -> Mat {
        Mat::from_row_iterator(r, cc, v.iter().map(|x| c(*x)))
    }

    #[test]
    fn sqrt_of_triangular() {
        let a = mat(2, 2, &[4.0, 1.0, 0.0, 9.0]);
        let s = sqrtm(&a).unwrap();
        let want = mat(2, 2, &[2.0, 0.2, 0.0, 3.0]);
        assert!(max_abs(&(s - want)) < 1e-13);
    }

    #[test]
    fn sylvester_roundtrip() {
        let e = mat(3, 3, &[3.0, 1.0, 0.5, 0.2, 2.0, 0.1, 0.0, 0.3, 4.0]);
        let x = mat(3, 3, &[1.0, -2.0, 0.3, 0.0, 1.5, 2.0, -1.0, 0.4, 0.7]);
        let rhs = &e * &x + &x * &e;
        let y = SylvesterSym::new(&e).unwrap().solve(&rhs);
        assert!(max_abs(&(y - x)) < 1e-12);
    }

    #[test]
    fn null_space_of_wide() {
        let a = mat(1, 3, &[1.0, 1.0, 0.0]);
        let (ns, _) = null_space(&a, 1e-10);
        assert_eq!(ns.ncols(), 2);
        assert!(max_abs(&(&a * &ns)) < 1e-14);
    }

    #[test]
    fn herm_fn_square() {
        let a = mat(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let sq = herm_fn(&a, |x| x * x);
        assert!(max_abs(&(sq - &a * &a)) < 1e-12);
    }
}
