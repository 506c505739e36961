//! Fixed-size linear algebra used by the encoder and the loss.
//!
//! Matrices are row-major `[[f64; N]; M]`. Quaternions are scalar-first
//! `(w, x, y, z)`, right-handed, acting on column vectors.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

/// Inversion fails when `|det|` is at or below this value.
pub const SINGULAR_DET: f64 = 1e-12;

pub type Vec3 = [f64; 3];
pub type Vec2 = [f64; 2];

#[inline]
pub fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn sub3(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Euclidean distance. Every neighborhood test in the crate goes through this
/// function so that `< r` decisions agree bit-for-bit between implementations.
#[inline]
pub fn dist3(a: &Vec3, b: &Vec3) -> f64 {
    let d = sub3(a, b);
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3(pub [[f64; 3]; 3]);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2(pub [[f64; 2]; 2]);

/// 2×3 matrix; the shape of the BEV projection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2x3(pub [[f64; 3]; 2]);

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    pub const ZERO: Mat3 = Mat3([[0.0; 3]; 3]);

    pub fn diag(d: Vec3) -> Mat3 {
        Mat3([[d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.0;
        Mat3([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1] + self.0[2][2]
    }

    /// Adjugate inverse.
    pub fn inverse(&self) -> Result<Mat3> {
        let det = self.det();
        if !(det.abs() > SINGULAR_DET) {
            return Err(Error::SingularMatrix { det });
        }
        let m = &self.0;
        let inv_det = 1.0 / det;
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        Ok(Mat3([
            [
                cof(1, 2, 1, 2) * inv_det,
                -cof(0, 2, 1, 2) * inv_det,
                cof(0, 1, 1, 2) * inv_det,
            ],
            [
                -cof(1, 2, 0, 2) * inv_det,
                cof(0, 2, 0, 2) * inv_det,
                -cof(0, 1, 0, 2) * inv_det,
            ],
            [
                cof(1, 2, 0, 1) * inv_det,
                -cof(0, 2, 0, 1) * inv_det,
                cof(0, 1, 0, 1) * inv_det,
            ],
        ]))
    }

    pub fn mul_vec(&self, v: &Vec3) -> Vec3 {
        let m = &self.0;
        [dot3(&m[0], v), dot3(&m[1], v), dot3(&m[2], v)]
    }

    pub fn col(&self, c: usize) -> Vec3 {
        [self.0[0][c], self.0[1][c], self.0[2][c]]
    }

    /// `vᵀ A v`
    pub fn quad_form(&self, v: &Vec3) -> f64 {
        dot3(v, &self.mul_vec(v))
    }

    pub fn scale(&self, k: f64) -> Mat3 {
        let mut out = *self;
        out.0.iter_mut().flatten().for_each(|x| *x *= k);
        out
    }

    pub fn max_abs_diff(&self, other: &Mat3) -> f64 {
        self.0
            .iter()
            .flatten()
            .zip(other.0.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Mul for Mat3 {
    type Output = Mat3;
    fn mul(self, rhs: Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.0[i][0] * rhs.0[0][j] + self.0[i][1] * rhs.0[1][j] + self.0[i][2] * rhs.0[2][j];
            }
        }
        Mat3(out)
    }
}

impl Add for Mat3 {
    type Output = Mat3;
    fn add(self, rhs: Mat3) -> Mat3 {
        let mut out = self;
        out.0
            .iter_mut()
            .flatten()
            .zip(rhs.0.iter().flatten())
            .for_each(|(a, b)| *a += b);
        out
    }
}

impl Sub for Mat3 {
    type Output = Mat3;
    fn sub(self, rhs: Mat3) -> Mat3 {
        let mut out = self;
        out.0
            .iter_mut()
            .flatten()
            .zip(rhs.0.iter().flatten())
            .for_each(|(a, b)| *a -= b);
        out
    }
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn inverse(&self) -> Result<Mat2> {
        let det = self.det();
        if !(det.abs() > SINGULAR_DET) {
            return Err(Error::SingularMatrix { det });
        }
        let m = &self.0;
        Ok(Mat2([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]))
    }

    pub fn mul_vec(&self, v: &Vec2) -> Vec2 {
        [
            self.0[0][0] * v[0] + self.0[0][1] * v[1],
            self.0[1][0] * v[0] + self.0[1][1] * v[1],
        ]
    }

    /// Largest eigenvalue of a symmetric 2×2 matrix.
    pub fn max_eigenvalue_sym(&self) -> f64 {
        let a = self.0[0][0];
        let b = self.0[0][1];
        let d = self.0[1][1];
        let mid = 0.5 * (a + d);
        let half_gap = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        mid + half_gap
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }
}

impl Mat2x3 {
    pub fn mul_vec(&self, v: &Vec3) -> Vec2 {
        [dot3(&self.0[0], v), dot3(&self.0[1], v)]
    }

    /// `M Σ Mᵀ`
    pub fn congruence(&self, sigma: &Mat3) -> Mat2 {
        let m = &self.0;
        let ms: [Vec3; 2] = [
            [
                dot3(&m[0], &sigma.col(0)),
                dot3(&m[0], &sigma.col(1)),
                dot3(&m[0], &sigma.col(2)),
            ],
            [
                dot3(&m[1], &sigma.col(0)),
                dot3(&m[1], &sigma.col(1)),
                dot3(&m[1], &sigma.col(2)),
            ],
        ];
        Mat2([
            [dot3(&ms[0], &m[0]), dot3(&ms[0], &m[1])],
            [dot3(&ms[1], &m[0]), dot3(&ms[1], &m[1])],
        ])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalize(&self) -> Result<Quaternion> {
        let norm = self.norm();
        if !(norm > 1e-12) {
            return Err(Error::DegenerateQuaternion { norm });
        }
        Ok(Quaternion::new(
            self.w / norm,
            self.x / norm,
            self.y / norm,
            self.z / norm,
        ))
    }

    /// Rotation matrix of a unit quaternion.
    pub fn to_rotation(&self) -> Mat3 {
        let Quaternion { w, x, y, z } = *self;
        Mat3([
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ])
    }
}

/// Rotation about +z by `theta` radians.
pub fn rot_z(theta: f64) -> Mat3 {
    let (s, c) = theta.sin_cos();
    Mat3([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
}

/// `Σ = R S Sᵀ Rᵀ` with `S = diag(s)`.
pub fn covariance_from_scale_rot(s: &Vec3, r: &Mat3) -> Result<Mat3> {
    for (index, &value) in s.iter().enumerate() {
        if !(value > 0.0) {
            return Err(Error::NonPositiveScale { index, value });
        }
    }
    Ok(congruence_diag(r, &[s[0] * s[0], s[1] * s[1], s[2] * s[2]]))
}

/// `R diag(d) Rᵀ`, symmetric by construction.
pub(crate) fn congruence_diag(r: &Mat3, d: &Vec3) -> Mat3 {
    let m = &r.0;
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in i..3 {
            let v = m[i][0] * d[0] * m[j][0] + m[i][1] * d[1] * m[j][1] + m[i][2] * d[2] * m[j][2];
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    Mat3(out)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_4;

    use proptest::prelude::*;

    use super::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(Quaternion::IDENTITY.normalize().unwrap(), Quaternion::IDENTITY);
        assert_eq!(
            Quaternion::new(2.0, 0.0, 0.0, 0.0).normalize().unwrap(),
            Quaternion::IDENTITY
        );
        let q = Quaternion::new(1.0, 1.0, 1.0, 1.0).normalize().unwrap();
        assert_eq!(q, Quaternion::new(0.5, 0.5, 0.5, 0.5));
        assert!((q.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_rejects_tiny() {
        let err = Quaternion::new(1e-13, 0.0, 0.0, 0.0).normalize().unwrap_err();
        assert!(matches!(err, Error::DegenerateQuaternion { .. }));
        assert!(Quaternion::new(0.0, 0.0, 0.0, 0.0).normalize().is_err());
    }

    #[test]
    fn quarter_turn_about_z() {
        let q = Quaternion::new(FRAC_PI_4.cos(), 0.0, 0.0, FRAC_PI_4.sin());
        let r = q.to_rotation();
        let want = Mat3([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(r.max_abs_diff(&want) < 1e-15);
        // x axis goes to y, y axis goes to -x
        let ex = r.mul_vec(&[1.0, 0.0, 0.0]);
        let ey = r.mul_vec(&[0.0, 1.0, 0.0]);
        assert!((ex[1] - 1.0).abs() < 1e-15 && (ey[0] + 1.0).abs() < 1e-15);
        assert_eq!(Quaternion::IDENTITY.to_rotation(), Mat3::IDENTITY);
    }

    #[test]
    fn covariance_examples() {
        let c = covariance_from_scale_rot(&[1.0, 2.0, 3.0], &Mat3::IDENTITY).unwrap();
        assert_eq!(c, Mat3::diag([1.0, 4.0, 9.0]));

        let r = Quaternion::new(0.3, -0.2, 0.9, 0.1).normalize().unwrap().to_rotation();
        let c = covariance_from_scale_rot(&[1.0, 1.0, 1.0], &r).unwrap();
        assert!(c.max_abs_diff(&Mat3::IDENTITY) < 1e-15);

        // explicit product R diag(4,1,1) Rᵀ with R the quarter turn about z
        let c = covariance_from_scale_rot(&[2.0, 1.0, 1.0], &rot_z(std::f64::consts::FRAC_PI_2)).unwrap();
        assert!(c.max_abs_diff(&Mat3::diag([1.0, 4.0, 1.0])) < 1e-15);

        let err = covariance_from_scale_rot(&[1.0, 0.0, 1.0], &Mat3::IDENTITY).unwrap_err();
        assert!(matches!(err, Error::NonPositiveScale { index: 1, .. }));
    }

    #[test]
    fn det_trace_inverse_basics() {
        assert_eq!(Mat3::IDENTITY.inverse().unwrap(), Mat3::IDENTITY);
        assert_eq!(Mat3::diag([2.0, 3.0, 4.0]).det(), 24.0);
        assert_eq!(Mat3::diag([2.0, 3.0, 4.0]).trace(), 9.0);
        assert!(Mat3::diag([1.0, 1.0, 0.0]).inverse().is_err());
        assert_eq!(Mat2::IDENTITY.inverse().unwrap(), Mat2::IDENTITY);
        assert_eq!(Mat2([[2.0, 1.0], [1.0, 3.0]]).det(), 5.0);
        assert!(Mat2([[1.0, 2.0], [2.0, 4.0]]).inverse().is_err());
    }

    #[test]
    fn mat2_eigen() {
        let m = Mat2([[3.0, 1.0], [1.0, 3.0]]);
        assert!((m.max_eigenvalue_sym() - 4.0).abs() < 1e-15);
    }

    fn unit_quat() -> impl Strategy<Value = Quaternion> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-2)
            .prop_map(|(w, x, y, z)| Quaternion::new(w, x, y, z))
    }

    proptest! {
        #[test]
        fn rotation_is_orthonormal(q in unit_quat()) {
            let r = q.normalize().unwrap().to_rotation();
            prop_assert!((r.transpose() * r).max_abs_diff(&Mat3::IDENTITY) < 1e-12);
            prop_assert!((r.det() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rotation_scale_invariant(q in unit_quat(), k in 0.01..100.0f64) {
            let scaled = Quaternion::new(q.w * k, q.x * k, q.y * k, q.z * k);
            let a = q.normalize().unwrap().to_rotation();
            let b = scaled.normalize().unwrap().to_rotation();
            prop_assert!(a.max_abs_diff(&b) < 1e-14);
        }

        #[test]
        fn covariance_spectrum(q in unit_quat(), s in prop::array::uniform3(0.1..5.0f64)) {
            let r = q.normalize().unwrap().to_rotation();
            let c = covariance_from_scale_rot(&s, &r).unwrap();
            prop_assert_eq!(c, c.transpose());
            let want_det = (s[0] * s[1] * s[2]).powi(2);
            prop_assert!((c.det() - want_det).abs() <= 1e-10 * want_det.max(1.0));
            let want_tr = s[0] * s[0] + s[1] * s[1] + s[2] * s[2];
            prop_assert!((c.trace() - want_tr).abs() < 1e-11 * want_tr);
        }

        #[test]
        fn inverse_roundtrips(q in unit_quat(), s in prop::array::uniform3(0.3..3.0f64)) {
            let r = q.normalize().unwrap().to_rotation();
            let a = covariance_from_scale_rot(&s, &r).unwrap();
            let inv = a.inverse().unwrap();
            prop_assert!((inv * a).max_abs_diff(&Mat3::IDENTITY) < 1e-10);
            prop_assert!(inv.inverse().unwrap().max_abs_diff(&a) < 1e-9);
        }
    }
}
