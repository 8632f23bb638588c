//! Small-matrix algebra on 2x2 and 3x3 real matrices.
//!
//! A 2x2 matrix `A` is written uniquely as `A = [z+, z-]`, the sum of a
//! conformal part (rotation-scaling by `z+`) and an anticonformal part
//! (reflection-scaling by `z-`):
//!
//! ```text
//!            | Re z+  -Im z+ |   | Re z-   Im z- |
//! [z+, z-] = |               | + |               |
//!            | Im z+   Re z+ |   | Im z-  -Re z- |
//! ```
//!
//! so that `det A = |z+|^2 - |z-|^2`, `|A|^2 = 2|z+|^2 + 2|z-|^2` and the
//! operator norm is `|z+| + |z-|`.
//!
//! Rows of a 2x2 matrix are identified with complex numbers through
//! `(r1, r2) -> r1 + i r2`. Under this identification the first row of
//! `[z, w]` is `conj(z) + w` and the second row is `i (conj(z) - w)`.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

/// Conformal / anticonformal representation `[zp, zm]` of a 2x2 matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConformalPair {
    pub zp: Complex64,
    pub zm: Complex64,
}

impl Mat2 {
    pub const ZERO: Mat2 = Mat2 { a11: 0.0, a12: 0.0, a21: 0.0, a22: 0.0 };
    pub const IDENTITY: Mat2 = Mat2 { a11: 1.0, a12: 0.0, a21: 0.0, a22: 1.0 };

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Mat2 { a11, a12, a21, a22 }
    }

    pub fn diag(d1: f64, d2: f64) -> Self {
        Mat2::new(d1, 0.0, 0.0, d2)
    }

    pub fn rotation(t: f64) -> Self {
        let (s, c) = t.sin_cos();
        Mat2::new(c, -s, s, c)
    }

    /// Outer product `b ⊗ n`.
    pub fn outer(b: [f64; 2], n: [f64; 2]) -> Self {
        Mat2::new(b[0] * n[0], b[0] * n[1], b[1] * n[0], b[1] * n[1])
    }

    /// Builds the matrix whose rows are the complex numbers `a` and `b`.
    pub fn from_rows(a: Complex64, b: Complex64) -> Self {
        Mat2::new(a.re, a.im, b.re, b.im)
    }

    pub fn row1(&self) -> Complex64 {
        Complex64::new(self.a11, self.a12)
    }

    pub fn row2(&self) -> Complex64 {
        Complex64::new(self.a21, self.a22)
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn transpose(&self) -> Self {
        Mat2::new(self.a11, self.a21, self.a12, self.a22)
    }

    pub fn frob_sq(&self) -> f64 {
        self.a11 * self.a11 + self.a12 * self.a12 + self.a21 * self.a21 + self.a22 * self.a22
    }

    pub fn frob(&self) -> f64 {
        self.frob_sq().sqrt()
    }

    /// Frobenius inner product.
    pub fn dot(&self, other: &Mat2) -> f64 {
        self.a11 * other.a11 + self.a12 * other.a12 + self.a21 * other.a21 + self.a22 * other.a22
    }

    pub fn matmul(&self, o: &Mat2) -> Mat2 {
        Mat2::new(
            self.a11 * o.a11 + self.a12 * o.a21,
            self.a11 * o.a12 + self.a12 * o.a22,
            self.a21 * o.a11 + self.a22 * o.a21,
            self.a21 * o.a12 + self.a22 * o.a22,
        )
    }

    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        [self.a11 * x[0] + self.a12 * x[1], self.a21 * x[0] + self.a22 * x[1]]
    }

    /// Cofactor matrix: `cof([[a, b], [c, d]]) = [[d, -c], [-b, a]]`.
    pub fn cofactor(&self) -> Mat2 {
        Mat2::new(self.a22, -self.a21, -self.a12, self.a11)
    }

    pub fn to_vec4(&self) -> [f64; 4] {
        [self.a11, self.a12, self.a21, self.a22]
    }

    pub fn from_vec4(v: [f64; 4]) -> Self {
        Mat2::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec4().iter().all(|x| x.is_finite())
    }

    pub fn decompose(&self) -> ConformalPair {
        ConformalPair {
            zp: Complex64::new(0.5 * (self.a11 + self.a22), 0.5 * (self.a21 - self.a12)),
            zm: Complex64::new(0.5 * (self.a11 - self.a22), 0.5 * (self.a12 + self.a21)),
        }
    }

    /// Largest singular value.
    pub fn sigma1(&self) -> f64 {
        let p = self.decompose();
        p.zp.norm() + p.zm.norm()
    }

    /// Second singular value; zero exactly when the matrix has rank at most one.
    pub fn sigma2(&self) -> f64 {
        let s1 = self.sigma1();
        if s1 == 0.0 {
            0.0
        } else {
            self.det().abs() / s1
        }
    }
}

impl ConformalPair {
    pub fn new(zp: Complex64, zm: Complex64) -> Self {
        ConformalPair { zp, zm }
    }

    pub fn recompose(&self) -> Mat2 {
        let (p, m) = (self.zp, self.zm);
        Mat2::new(p.re + m.re, -p.im + m.im, p.im + m.im, p.re - m.re)
    }

    /// `(det, |A|^2, ||A||)` computed from the conformal coordinates.
    pub fn norms_and_det(&self) -> (f64, f64, f64) {
        let p2 = self.zp.norm_sqr();
        let m2 = self.zm.norm_sqr();
        (p2 - m2, 2.0 * p2 + 2.0 * m2, self.zp.norm() + self.zm.norm())
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(self.a11 + o.a11, self.a12 + o.a12, self.a21 + o.a21, self.a22 + o.a22)
    }
}

impl AddAssign for Mat2 {
    fn add_assign(&mut self, o: Mat2) {
        *self = *self + o;
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2::new(self.a11 - o.a11, self.a12 - o.a12, self.a21 - o.a21, self.a22 - o.a22)
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        Mat2::new(-self.a11, -self.a12, -self.a21, -self.a22)
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    fn mul(self, s: f64) -> Mat2 {
        Mat2::new(self.a11 * s, self.a12 * s, self.a21 * s, self.a22 * s)
    }
}

impl Mul<Mat2> for f64 {
    type Output = Mat2;
    fn mul(self, m: Mat2) -> Mat2 {
        m * self
    }
}

/// Real 3x3 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mat3 {
    pub m: [[f64; 3]; 3],
}

impl Mat3 {
    pub const ZERO: Mat3 = Mat3 { m: [[0.0; 3]; 3] };

    pub const fn new(m: [[f64; 3]; 3]) -> Self {
        Mat3 { m }
    }

    pub fn identity() -> Self {
        Mat3::diag(1.0, 1.0, 1.0)
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        Mat3::new([[a, 0.0, 0.0], [0.0, b, 0.0], [0.0, 0.0, c]])
    }

    pub fn outer(b: [f64; 3], n: [f64; 3]) -> Self {
        let mut out = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = b[i] * n[j];
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut t = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                t.m[i][j] = self.m[j][i];
            }
        }
        t
    }

    pub fn matmul(&self, o: &Mat3) -> Mat3 {
        let mut out = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] = (0..3).map(|k| self.m[i][k] * o.m[k][j]).sum();
            }
        }
        out
    }

    pub fn apply(&self, x: [f64; 3]) -> [f64; 3] {
        let mut y = [0.0; 3];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = (0..3).map(|k| self.m[i][k] * x[k]).sum();
        }
        y
    }

    pub fn frob_sq(&self) -> f64 {
        self.m.iter().flatten().map(|x| x * x).sum()
    }

    pub fn frob(&self) -> f64 {
        self.frob_sq().sqrt()
    }

    pub fn dot(&self, o: &Mat3) -> f64 {
        self.m.iter().flatten().zip(o.m.iter().flatten()).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().flatten().fold(0.0f64, |acc, x| acc.max(x.abs()))
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Determinant of the 2x2 submatrix on rows `(i1, i2)` and columns
    /// `(j1, j2)`, with 1-based indices.
    pub fn minor(&self, rows: (usize, usize), cols: (usize, usize)) -> Result<f64> {
        let valid = |(a, b): (usize, usize)| a >= 1 && b <= 3 && a < b;
        if !valid(rows) || !valid(cols) {
            return Err(Error::InvalidArgument(format!(
                "minor indices must satisfy 1 <= i1 < i2 <= 3, got rows {rows:?} cols {cols:?}"
            )));
        }
        Ok(self.minor0(rows.0 - 1, rows.1 - 1, cols.0 - 1, cols.1 - 1))
    }

    fn minor0(&self, r1: usize, r2: usize, c1: usize, c2: usize) -> f64 {
        self.m[r1][c1] * self.m[r2][c2] - self.m[r1][c2] * self.m[r2][c1]
    }

    /// Sum of squares of all nine 2x2 minors, i.e. `|cof M|^2`.
    pub fn cofactor_frob_sq(&self) -> f64 {
        const PAIRS: [(usize, usize); 3] = [(0, 1), (0, 2), (1, 2)];
        let mut s = 0.0;
        for &(r1, r2) in &PAIRS {
            for &(c1, c2) in &PAIRS {
                let d = self.minor0(r1, r2, c1, c2);
                s += d * d;
            }
        }
        s
    }

    /// Largest singular value.
    pub fn sigma1(&self) -> f64 {
        let g = self.transpose().matmul(self);
        sym3_max_eigenvalue(&g).max(0.0).sqrt()
    }

    /// Second singular value.
    ///
    /// Computed from the invariants `|M|^2`, `|cof M|^2`, `det M` and the
    /// largest eigenvalue of `M^T M`; the minors are formed directly from the
    /// entries, so exact rank-one inputs give exactly zero.
    pub fn sigma2(&self) -> f64 {
        let s1sq = self.sigma1().powi(2);
        if s1sq == 0.0 {
            return 0.0;
        }
        let d = self.det();
        let prod = d * d / s1sq; // sigma2^2 sigma3^2
        let sum = ((self.cofactor_frob_sq() - prod) / s1sq).max(0.0); // sigma2^2 + sigma3^2
        let disc = (0.25 * sum * sum - prod).max(0.0).sqrt();
        (0.5 * sum + disc).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|x| x.is_finite())
    }
}

/// Largest eigenvalue of a symmetric 3x3 matrix by the trigonometric closed
/// form, polished with one Newton step on the characteristic polynomial.
pub fn sym3_max_eigenvalue(a: &Mat3) -> f64 {
    let m = &a.m;
    let p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    let d0 = m[0][0] - q;
    let d1 = m[1][1] - q;
    let d2 = m[2][2] - q;
    let p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * p1;
    if p2 == 0.0 {
        return q;
    }
    let p = (p2 / 6.0).sqrt();
    let mut b = *a;
    for (i, row) in b.m.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - if i == j { q } else { 0.0 }) / p;
        }
    }
    let r = (b.det() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let mut lam = q + 2.0 * p * phi.cos();

    // char poly: lam^3 - c2 lam^2 + c1 lam - c0
    let c2 = 3.0 * q;
    let c1 = m[0][0] * m[1][1] - m[0][1] * m[1][0] + m[0][0] * m[2][2] - m[0][2] * m[2][0]
        + m[1][1] * m[2][2]
        - m[1][2] * m[2][1];
    let c0 = a.det();
    let f = ((lam - c2) * lam + c1) * lam - c0;
    let df = (3.0 * lam - 2.0 * c2) * lam + c1;
    if df.abs() > 1e-12 * (p * p) {
        let step = f / df;
        if step.abs() < 1e-6 * p {
            lam -= step;
        }
    }
    lam
}

impl Add for Mat3 {
    type Output = Mat3;
    fn add(self, o: Mat3) -> Mat3 {
        let mut out = self;
        out += o;
        out
    }
}

impl AddAssign for Mat3 {
    fn add_assign(&mut self, o: Mat3) {
        for i in 0..3 {
            for j in 0..3 {
                self.m[i][j] += o.m[i][j];
            }
        }
    }
}

impl Sub for Mat3 {
    type Output = Mat3;
    fn sub(self, o: Mat3) -> Mat3 {
        let mut out = self;
        for i in 0..3 {
            for j in 0..3 {
                out.m[i][j] -= o.m[i][j];
            }
        }
        out
    }
}

impl Neg for Mat3 {
    type Output = Mat3;
    fn neg(self) -> Mat3 {
        self * -1.0
    }
}

impl Mul<f64> for Mat3 {
    type Output = Mat3;
    fn mul(self, s: f64) -> Mat3 {
        let mut out = self;
        out.m.iter_mut().flatten().for_each(|x| *x *= s);
        out
    }
}

impl Mul<Mat3> for f64 {
    type Output = Mat3;
    fn mul(self, m: Mat3) -> Mat3 {
        m * self
    }
}

impl Index<(usize, usize)> for Mat3 {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.m[i][j]
    }
}

impl IndexMut<(usize, usize)> for Mat3 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.m[i][j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn decompose_basis_elements() {
        let p = Mat2::IDENTITY.decompose();
        assert_eq!((p.zp, p.zm), (c(1.0, 0.0), c(0.0, 0.0)));
        let p = Mat2::diag(1.0, -1.0).decompose();
        assert_eq!((p.zp, p.zm), (c(0.0, 0.0), c(1.0, 0.0)));
        let p = Mat2::new(0.0, -1.0, 1.0, 0.0).decompose();
        assert_eq!((p.zp, p.zm), (c(0.0, 1.0), c(0.0, 0.0)));
    }

    #[test]
    fn conformal_part_matches_row_formula() {
        // p+(A) = (a11 + a22)/2 - i (a12 - a21)/2
        let a = Mat2::new(0.3, -1.7, 2.2, 0.9);
        let zp = a.decompose().zp;
        assert_relative_eq!(zp.re, (a.a11 + a.a22) / 2.0);
        assert_relative_eq!(zp.im, -(a.a12 - a.a21) / 2.0);
    }

    #[test]
    fn norms_and_det_examples() {
        let (d, f, o) = ConformalPair::new(c(1.0, 0.0), c(0.0, 0.0)).norms_and_det();
        assert_eq!((d, f, o), (1.0, 2.0, 1.0));

        let pair = ConformalPair::new(c(1.0, 0.0), c(1.0, 0.0));
        assert_eq!(pair.recompose(), Mat2::diag(2.0, 0.0));
        assert_eq!(pair.norms_and_det(), (0.0, 4.0, 2.0));

        let pair = ConformalPair::new(c(3.0, 0.0), c(0.0, 1.0));
        let (d, f, o) = pair.norms_and_det();
        assert_eq!((d, f, o), (8.0, 20.0, 4.0));
        let m = pair.recompose();
        assert_relative_eq!(m.det(), 8.0, max_relative = 1e-14);
        assert_relative_eq!(m.frob_sq(), 20.0, max_relative = 1e-14);
        // [[3, 1], [1, 3]] has singular values 4 and 2
        assert_relative_eq!(m.sigma1(), 4.0, max_relative = 1e-14);
        assert_relative_eq!(m.sigma2(), 2.0, max_relative = 1e-14);
    }

    #[test]
    fn cofactor_examples() {
        assert_eq!(Mat2::IDENTITY.cofactor(), Mat2::IDENTITY);
        assert_eq!(Mat2::new(1.0, 2.0, 3.0, 4.0).cofactor(), Mat2::new(4.0, -3.0, -2.0, 1.0));
        let m = Mat2::new(0.7, -2.5, 1.25, 3.0);
        let r = m.matmul(&m.cofactor().transpose()) - Mat2::IDENTITY * m.det();
        assert!(r.frob() < 1e-14);
    }

    #[test]
    fn minor3_examples_and_errors() {
        let id = Mat3::identity();
        assert_eq!(id.minor((1, 2), (1, 2)).unwrap(), 1.0);
        let t1 = Mat3::new([[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [2.0, 0.0, 0.0]]);
        assert_eq!(t1.minor((1, 2), (1, 2)).unwrap(), 2.0);
        assert_eq!(t1.minor((1, 3), (1, 2)).unwrap(), 0.0);
        assert!(id.minor((2, 1), (1, 2)).is_err());
        assert!(id.minor((1, 4), (1, 2)).is_err());
        assert!(id.minor((1, 2), (0, 2)).is_err());
    }

    #[test]
    fn sigma2_examples() {
        let t1 = Mat3::new([[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [2.0, 0.0, 0.0]]);
        let c1 = Mat3::new([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]);
        let d = t1 - c1;
        assert!(d.sigma2() <= 1e-12 * d.frob());
        assert_relative_eq!(Mat3::identity().sigma2(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(Mat3::diag(3.0, 2.0, 1.0).sigma2(), 2.0, max_relative = 1e-14);
        assert_relative_eq!(Mat3::diag(1.0, 3.0, 2.0).sigma2(), 2.0, max_relative = 1e-14);
        assert_eq!(Mat3::ZERO.sigma2(), 0.0);
        let rank_one = Mat2::outer([1.0, 2.0], [-0.5, 3.0]);
        assert!(rank_one.sigma2() <= 1e-15 * rank_one.frob());
    }
}
