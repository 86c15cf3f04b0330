//! Small fixed-size linear algebra: 2-vectors and 2×2 matrices.
//!
//! The matrix norm is Frobenius throughout.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::MatError;

/// A point or vector in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the planar cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Counter-clockwise rotation by a quarter turn.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        Vec2::new(self.x / n, self.y / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotates by the angle whose cosine and sine are `r.x`, `r.y`.
    pub fn rotate(self, r: Vec2) -> Vec2 {
        Vec2::new(r.x * self.x - r.y * self.y, r.y * self.x + r.x * self.y)
    }

    /// Inverse of [`Vec2::rotate`].
    pub fn unrotate(self, r: Vec2) -> Vec2 {
        Vec2::new(r.x * self.x + r.y * self.y, -r.y * self.x + r.x * self.y)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

/// A real 2×2 matrix `[[a11, a12], [a21, a22]]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct Mat2 {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
}

impl Mat2 {
    pub const ZERO: Mat2 = Mat2::new(0.0, 0.0, 0.0, 0.0);
    pub const IDENTITY: Mat2 = Mat2::new(1.0, 0.0, 0.0, 1.0);

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Mat2 { a11, a12, a21, a22 }
    }

    pub const fn diag(a: f64, d: f64) -> Self {
        Mat2::new(a, 0.0, 0.0, d)
    }

    /// `xi ⊗ zeta`, the matrix with entries `xi_i zeta_j`.
    pub fn outer(xi: Vec2, zeta: Vec2) -> Self {
        Mat2::new(xi.x * zeta.x, xi.x * zeta.y, xi.y * zeta.x, xi.y * zeta.y)
    }

    pub fn entries(&self) -> [f64; 4] {
        [self.a11, self.a12, self.a21, self.a22]
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn transpose(&self) -> Mat2 {
        Mat2::new(self.a11, self.a21, self.a12, self.a22)
    }

    pub fn is_finite(&self) -> bool {
        self.entries().iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        let [a, b, c, d] = self.entries();
        (a * a + b * b + c * c + d * d).sqrt()
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> f64 {
        let g = self.transpose() * *self;
        dominant_eigen(&g).0.max(0.0).sqrt()
    }

    pub fn distance(&self, o: &Mat2) -> f64 {
        (*self - *o).frobenius_norm()
    }

    pub fn mul_vec(&self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.a11 * v.x + self.a12 * v.y,
            self.a21 * v.x + self.a22 * v.y,
        )
    }

    /// First row as a vector.
    pub fn row1(&self) -> Vec2 {
        Vec2::new(self.a11, self.a12)
    }

    pub fn row2(&self) -> Vec2 {
        Vec2::new(self.a21, self.a22)
    }

    /// Relative rank-one test: `|det D| ≤ tol·‖D‖²` with `D ≠ 0`.
    pub fn is_rank_one(&self, tol: f64) -> bool {
        let n = self.frobenius_norm();
        n > 0.0 && self.det().abs() <= tol * n * n
    }

    /// Factor a rank-one matrix as `xi ⊗ zeta` with `zeta` the unit dominant
    /// right-singular direction.
    ///
    /// The sign of `zeta` is fixed so that its first nonzero component is
    /// positive.
    pub fn rank_one_factor(&self) -> Result<RankOneFactorization, MatError> {
        if !self.is_rank_one(RANK_ONE_TOL) {
            return Err(MatError::NotRankOne(*self));
        }
        let g = self.transpose() * *self;
        let (_, v) = dominant_eigen(&g);
        let mut zeta = v.normalized();
        if zeta.x < 0.0 || (zeta.x == 0.0 && zeta.y < 0.0) {
            zeta = -zeta;
        }
        let xi = self.mul_vec(zeta);
        Ok(RankOneFactorization { xi, zeta })
    }

    /// Lexicographic comparison on `(a11, a12, a21, a22)`.
    pub fn lex_cmp(&self, o: &Mat2) -> std::cmp::Ordering {
        for (a, b) in self.entries().iter().zip(o.entries().iter()) {
            match a.total_cmp(b) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        std::cmp::Ordering::Equal
    }
}

/// Default relative tolerance for rank-one tests on constructed differences.
pub const RANK_ONE_TOL: f64 = 1e-9;

/// Dominant eigenpair of a symmetric matrix.
fn dominant_eigen(g: &Mat2) -> (f64, Vec2) {
    let p = g.a11;
    let r = g.a22;
    let q = 0.5 * (g.a12 + g.a21);
    let half = 0.5 * (p - r);
    let mu = 0.5 * (p + r) + half.hypot(q);
    // Two candidate eigenvectors; take the better conditioned one.
    let v1 = Vec2::new(mu - r, q);
    let v2 = Vec2::new(q, mu - p);
    let v = if v1.norm() >= v2.norm() { v1 } else { v2 };
    if v.norm() == 0.0 {
        (mu, Vec2::new(1.0, 0.0))
    } else {
        (mu, v)
    }
}

impl From<[[f64; 2]; 2]> for Mat2 {
    fn from(a: [[f64; 2]; 2]) -> Self {
        Mat2::new(a[0][0], a[0][1], a[1][0], a[1][1])
    }
}

impl From<Mat2> for [[f64; 2]; 2] {
    fn from(m: Mat2) -> Self {
        [[m.a11, m.a12], [m.a21, m.a22]]
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a11 + o.a11,
            self.a12 + o.a12,
            self.a21 + o.a21,
            self.a22 + o.a22,
        )
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a11 - o.a11,
            self.a12 - o.a12,
            self.a21 - o.a21,
            self.a22 - o.a22,
        )
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

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a11 * o.a11 + self.a12 * o.a21,
            self.a11 * o.a12 + self.a12 * o.a22,
            self.a21 * o.a11 + self.a22 * o.a21,
            self.a21 * o.a12 + self.a22 * o.a22,
        )
    }
}

impl Mul<Vec2> for Mat2 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        self.mul_vec(v)
    }
}

/// `D = xi ⊗ zeta` with `|zeta| = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankOneFactorization {
    pub xi: Vec2,
    pub zeta: Vec2,
}

impl RankOneFactorization {
    pub fn reconstruct(&self) -> Mat2 {
        Mat2::outer(self.xi, self.zeta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn frobenius_examples() {
        assert_abs_diff_eq!(
            Mat2::IDENTITY.frobenius_norm(),
            2f64.sqrt(),
            epsilon = 1e-15
        );
        assert_eq!(Mat2::ZERO.frobenius_norm(), 0.0);
        let g = Mat2::new(6.75, 1.0, -1.0, 13.5);
        let direct = (6.75f64 * 6.75 + 1.0 + 1.0 + 13.5 * 13.5).sqrt();
        assert_abs_diff_eq!(g.frobenius_norm(), direct, epsilon = 1e-14);
        assert_abs_diff_eq!(g.frobenius_norm(), 15.1596, epsilon = 1e-4);
    }

    #[test]
    fn rank_one_examples() {
        assert!(Mat2::new(2.0, 0.0, 0.0, 0.0).is_rank_one(1e-12));
        assert!(!Mat2::IDENTITY.is_rank_one(1e-12));
        assert!(Mat2::new(-7.75, 0.0, 0.0, 0.0).is_rank_one(1e-12));
        assert!(!Mat2::ZERO.is_rank_one(1e-12));
    }

    #[test]
    fn factor_examples() {
        let f = Mat2::new(2.0, 0.0, 0.0, 0.0).rank_one_factor().unwrap();
        assert_eq!(f.xi, Vec2::new(2.0, 0.0));
        assert_eq!(f.zeta, Vec2::new(1.0, 0.0));

        let f = Mat2::new(0.0, 0.0, 3.0, 0.0).rank_one_factor().unwrap();
        assert_abs_diff_eq!(f.xi.x, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f.xi.y, 3.0, epsilon = 1e-15);
        assert_eq!(f.zeta, Vec2::new(1.0, 0.0));

        let f = Mat2::new(1.0, 1.0, 1.0, 1.0).rank_one_factor().unwrap();
        let s = 0.5f64.sqrt();
        assert_abs_diff_eq!(f.zeta.x, s, epsilon = 1e-15);
        assert_abs_diff_eq!(f.zeta.y, s, epsilon = 1e-15);
        assert_abs_diff_eq!(f.xi.x, 2f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(f.xi.y, 2f64.sqrt(), epsilon = 1e-14);

        let f = Mat2::new(0.0, 0.0, 0.0, -4.0).rank_one_factor().unwrap();
        assert_eq!(f.zeta, Vec2::new(0.0, 1.0));
        assert_eq!(f.xi, Vec2::new(0.0, -4.0));

        assert!(matches!(
            Mat2::IDENTITY.rank_one_factor(),
            Err(MatError::NotRankOne(_))
        ));
    }

    #[test]
    fn rotation_round_trip() {
        let r = Vec2::new(0.6, 0.8);
        let v = Vec2::new(1.5, -2.0);
        let w = v.rotate(r).unrotate(r);
        assert_abs_diff_eq!(w.x, v.x, epsilon = 1e-15);
        assert_abs_diff_eq!(w.y, v.y, epsilon = 1e-15);
        assert_eq!(
            Vec2::new(1.0, 0.0).rotate(Vec2::new(0.0, 1.0)),
            Vec2::new(0.0, 1.0)
        );
    }

    #[test]
    fn serializes_row_major() {
        let m = Mat2::new(1.0, 2.0, 3.0, 4.5);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, "[[1.0,2.0],[3.0,4.5]]");
        let back: Mat2 = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }

    fn vec2() -> impl Strategy<Value = Vec2> {
        (-10.0f64..10.0, -10.0f64..10.0).prop_map(|(x, y)| Vec2::new(x, y))
    }

    fn mat2() -> impl Strategy<Value = Mat2> {
        prop::array::uniform4(-10.0f64..10.0).prop_map(|a| Mat2::new(a[0], a[1], a[2], a[3]))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn factor_reconstructs(xi in vec2(), zeta in vec2()) {
            prop_assume!(xi.norm() > 1e-3 && zeta.norm() > 1e-3);
            let d = Mat2::outer(xi, zeta);
            let f = d.rank_one_factor().unwrap();
            prop_assert!((f.zeta.norm() - 1.0).abs() <= 1e-12);
            let err = f.reconstruct().distance(&d) / d.frobenius_norm();
            prop_assert!(err <= 1e-9, "relative error {err}");
        }

        #[test]
        fn norms_are_equivalent(m in mat2()) {
            let f = m.frobenius_norm();
            let o = m.operator_norm();
            prop_assert!(o <= f * (1.0 + 1e-12) + 1e-12);
            prop_assert!(f <= 2f64.sqrt() * o * (1.0 + 1e-12) + 1e-12);
        }
    }
}
