//! Fixed-size 2-vectors and 2×2 matrices.
//!
//! Everything in the gasket lives in the plane, so a pair of tiny value
//! types covers all of the linear algebra. The singular value decomposition
//! is the closed-form two-angle decomposition of a 2×2 matrix.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x1: f64,
    pub x2: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x1: 0.0, x2: 0.0 };
    pub const E1: Vec2 = Vec2 { x1: 1.0, x2: 0.0 };
    pub const E2: Vec2 = Vec2 { x1: 0.0, x2: 1.0 };

    pub const fn new(x1: f64, x2: f64) -> Self {
        Vec2 { x1, x2 }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x1 * other.x1 + self.x2 * other.x2
    }

    /// z-component of the planar cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x1 * other.x2 - self.x2 * other.x1
    }

    pub fn norm(self) -> f64 {
        self.x1.hypot(self.x2)
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x1 * s, self.x2 * s)
    }

    /// Counter-clockwise rotation by a right angle.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.x2, self.x1)
    }

    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self.scale(1.0 / n))
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x1.is_finite() && self.x2.is_finite()
    }

    /// Flip the sign so that the first nonzero component is positive.
    pub fn sign_normalized(self) -> Vec2 {
        if self.x1 < 0.0 || (self.x1 == 0.0 && self.x2 < 0.0) {
            -self
        } else {
            self
        }
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x1 + rhs.x1, self.x2 + rhs.x2)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x1 += rhs.x1;
        self.x2 += rhs.x2;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x1 - rhs.x1, self.x2 - rhs.x2)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x1, -self.x2)
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x1, self.x2)
    }
}

/// Row-major 2×2 matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2::new(1.0, 0.0, 0.0, 1.0);
    pub const ZERO: Mat2 = Mat2::new(0.0, 0.0, 0.0, 0.0);

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Mat2 { a11, a12, a21, a22 }
    }

    pub const fn diag(d1: f64, d2: f64) -> Self {
        Mat2::new(d1, 0.0, 0.0, d2)
    }

    pub fn from_columns(c1: Vec2, c2: Vec2) -> Self {
        Mat2::new(c1.x1, c2.x1, c1.x2, c2.x2)
    }

    /// The matrix `u·ᵗv`, mapping `a` to `(v, a)·u`.
    pub fn outer(u: Vec2, v: Vec2) -> Self {
        Mat2::new(u.x1 * v.x1, u.x1 * v.x2, u.x2 * v.x1, u.x2 * v.x2)
    }

    /// Orthogonal projection onto the line spanned by `v`.
    pub fn projection(v: Vec2) -> Self {
        let n2 = v.norm_sq();
        Mat2::outer(v, v).scale(1.0 / n2)
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.a11, self.a21, self.a12, self.a22)
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn scale(&self, s: f64) -> Mat2 {
        Mat2::new(self.a11 * s, self.a12 * s, self.a21 * s, self.a22 * s)
    }

    /// Hilbert–Schmidt (Frobenius) inner product `tr(ᵗA B)`.
    pub fn hs_dot(&self, other: &Mat2) -> f64 {
        self.a11 * other.a11 + self.a12 * other.a12 + self.a21 * other.a21 + self.a22 * other.a22
    }

    pub fn hs_norm_sq(&self) -> f64 {
        self.hs_dot(self)
    }

    pub fn hs_norm(&self) -> f64 {
        self.hs_norm_sq().sqrt()
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.a11 * v.x1 + self.a12 * v.x2,
            self.a21 * v.x1 + self.a22 * v.x2,
        )
    }

    pub fn col1(&self) -> Vec2 {
        Vec2::new(self.a11, self.a21)
    }

    pub fn col2(&self) -> Vec2 {
        Vec2::new(self.a12, self.a22)
    }

    pub fn inverse(&self) -> Option<Mat2> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(Mat2::new(self.a22, -self.a12, -self.a21, self.a11).scale(1.0 / d))
    }

    /// `A·M·ᵗA`, the congruence used by the Gibbs formula.
    pub fn congruence(&self, m: &Mat2) -> Mat2 {
        *self * *m * self.transpose()
    }

    pub fn is_finite(&self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a21.is_finite() && self.a22.is_finite()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (self.a12 - self.a21).abs() <= tol
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn sym_eigenvalues(&self) -> (f64, f64) {
        let off = 0.5 * (self.a12 + self.a21);
        let mean = 0.5 * (self.a11 + self.a22);
        let half_diff = 0.5 * (self.a11 - self.a22);
        let radius = half_diff.hypot(off);
        (mean - radius, mean + radius)
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        self.is_symmetric(tol) && self.sym_eigenvalues().0 >= -tol
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        (*self - *other).max_abs()
    }

    pub fn max_abs(&self) -> f64 {
        self.a11
            .abs()
            .max(self.a12.abs())
            .max(self.a21.abs())
            .max(self.a22.abs())
    }

    pub fn svd(&self) -> Svd2 {
        Svd2::of(self)
    }

    /// Spectral norm, i.e. the largest singular value.
    pub fn op_norm(&self) -> f64 {
        self.svd().s1
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, r: Mat2) -> Mat2 {
        Mat2::new(
            self.a11 + r.a11,
            self.a12 + r.a12,
            self.a21 + r.a21,
            self.a22 + r.a22,
        )
    }
}

impl AddAssign for Mat2 {
    fn add_assign(&mut self, r: Mat2) {
        *self = *self + r;
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, r: Mat2) -> Mat2 {
        Mat2::new(
            self.a11 - r.a11,
            self.a12 - r.a12,
            self.a21 - r.a21,
            self.a22 - r.a22,
        )
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, r: Mat2) -> Mat2 {
        Mat2::new(
            self.a11 * r.a11 + self.a12 * r.a21,
            self.a11 * r.a12 + self.a12 * r.a22,
            self.a21 * r.a11 + self.a22 * r.a21,
            self.a21 * r.a12 + self.a22 * r.a22,
        )
    }
}

impl Mul<Vec2> for Mat2 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        self.apply(v)
    }
}

/// Singular value decomposition `H = s1·u1·ᵗv1 + s2·u2·ᵗv2` with `s1 ≥ s2 ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Svd2 {
    pub s1: f64,
    pub s2: f64,
    pub u1: Vec2,
    pub u2: Vec2,
    pub v1: Vec2,
    pub v2: Vec2,
}

impl Svd2 {
    /// Closed-form decomposition: `M = R(φ)·diag(σ₁, σ₂)·R(θ)` with the two
    /// rotation angles read off the conformal/anticonformal split of `M`.
    pub fn of(m: &Mat2) -> Svd2 {
        let e = 0.5 * (m.a11 + m.a22);
        let f = 0.5 * (m.a11 - m.a22);
        let g = 0.5 * (m.a21 + m.a12);
        let h = 0.5 * (m.a21 - m.a12);
        let q = e.hypot(h);
        let r = f.hypot(g);
        let s1 = q + r;
        let a1 = g.atan2(f);
        let a2 = h.atan2(e);
        let theta = 0.5 * (a2 - a1);
        let phi = 0.5 * (a2 + a1);

        let det = m.det();
        // s2 from the determinant keeps s1·s2 = |det| consistent.
        let s2 = if s1 > 0.0 {
            (det.abs() / s1).min(s1)
        } else {
            0.0
        };

        let (sp, cp) = phi.sin_cos();
        let (st, ct) = theta.sin_cos();
        let u1 = Vec2::new(cp, sp);
        let mut u2 = Vec2::new(-sp, cp);
        let v1 = Vec2::new(ct, -st);
        let v2 = Vec2::new(st, ct);
        if det < 0.0 {
            u2 = -u2;
        }
        Svd2 {
            s1,
            s2,
            u1,
            u2,
            v1,
            v2,
        }
    }

    pub fn reconstruct(&self) -> Mat2 {
        Mat2::outer(self.u1, self.v1).scale(self.s1) + Mat2::outer(self.u2, self.v2).scale(self.s2)
    }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}
