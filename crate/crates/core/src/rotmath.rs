//! Unit quaternions, rotations and the 4x4 data matrices built from point pairs.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{eigh_small, Mat, Mat3, Mat4, Vec3, Vec4, Vector};
use crate::scalar::Real;

/// Unit quaternion, scalar first, with the first nonzero coordinate positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent, bound = "")]
pub struct UnitQuaternion<T: Real> {
    w: Vec4<T>,
}

impl<T: Real> UnitQuaternion<T> {
    /// Accepts a 4-vector whose norm is within 1e-9 of one, renormalises it and
    /// applies the canonical sign.
    pub fn new(w: Vec4<T>) -> Result<Self> {
        let n = w.norm();
        if !n.is_finite() || (n - T::one()).abs() > T::tol(1e-9) {
            return invalid(format!("quaternion norm {n} is not 1"));
        }
        Ok(Self::canonical(w.scale(T::one() / n)))
    }

    /// Normalises any nonzero 4-vector.
    pub fn from_vector(w: Vec4<T>) -> Result<Self> {
        match w.normalized() {
            Some(u) => Ok(Self::canonical(u)),
            None => invalid("cannot normalise a zero or non-finite quaternion"),
        }
    }

    fn canonical(w: Vec4<T>) -> Self {
        let first = w.0.iter().copied().find(|x| *x != T::zero()).unwrap_or(T::one());
        let w = if first < T::zero() { -w } else { w };
        UnitQuaternion { w }
    }

    pub fn identity() -> Self {
        UnitQuaternion { w: Vec4::unit(0) }
    }

    pub fn as_vec(&self) -> &Vec4<T> {
        &self.w
    }

    pub fn to_vec(self) -> Vec4<T> {
        self.w
    }

    pub fn dot(&self, o: &Self) -> T {
        self.w.dot(&o.w)
    }

    pub fn to_rotation(&self) -> Rotation<T> {
        quat_to_rot(self)
    }

    pub fn cast<U: Real>(&self) -> UnitQuaternion<U> {
        UnitQuaternion::<U>::canonical(self.w.cast())
    }
}

/// Proper rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent, bound = "")]
pub struct Rotation<T: Real> {
    #[serde(with = "mat3_row_major")]
    r: Mat3<T>,
}

impl<T: Real> Rotation<T> {
    /// Accepts a matrix orthogonal with unit determinant to within 1e-9.
    pub fn new(r: Mat3<T>) -> Result<Self> {
        if !r.is_finite() {
            return invalid("rotation has non-finite entries");
        }
        let tol = T::tol(1e-9);
        let orth = (r.transpose() * r - Mat3::identity()).max_abs();
        let det = r.det();
        if orth > tol || (det - T::one()).abs() > tol {
            return invalid(format!("not a rotation: |RᵀR - I| = {orth}, det = {det}"));
        }
        Ok(Rotation { r })
    }

    pub fn identity() -> Self {
        Rotation { r: Mat3::identity() }
    }

    /// Rotation by `angle` about the unit `axis` (Rodrigues).
    pub fn from_axis_angle(axis: &Vec3<T>, angle: T) -> Result<Self> {
        let b = match axis.normalized() {
            Some(b) => b,
            None => return invalid("rotation axis must be nonzero"),
        };
        let (s, c) = angle.sin_cos();
        let k = cross_matrix(&b);
        let bbt = b.outer(&b);
        Ok(Rotation { r: bbt + k.scale(s) + (Mat3::identity() - bbt).scale(c) })
    }

    pub fn matrix(&self) -> &Mat3<T> {
        &self.r
    }

    pub fn apply(&self, x: &Vec3<T>) -> Vec3<T> {
        self.r.mul_vec(x)
    }

    pub fn transpose(&self) -> Self {
        Rotation { r: self.r.transpose() }
    }

    pub fn compose(&self, o: &Self) -> Self {
        Rotation { r: self.r * o.r }
    }

    pub fn to_quaternion(&self) -> UnitQuaternion<T> {
        rot_to_quat_unchecked(&self.r)
    }

    /// Rotation angle in `[0, π]` from the trace.
    pub fn angle(&self) -> T {
        ((self.r.trace() - T::one()) * T::c(0.5)).max(-T::one()).min(T::one()).acos()
    }

    pub fn row_major(&self) -> Vec<T> {
        self.r.row_major()
    }
}

/// `[b]×`, the matrix with `[b]× q = b × q`.
pub fn cross_matrix<T: Real>(b: &Vec3<T>) -> Mat3<T> {
    let z = T::zero();
    Mat3::from_row_major(&[z, -b[2], b[1], b[2], z, -b[0], -b[1], b[0], z]).expect("nine entries")
}

pub(crate) mod mat3_row_major {
    use super::*;
    use serde::de::Error as _;
    use serde::{Deserializer, Serializer};

    pub fn serialize<T: Real, S: Serializer>(m: &Mat3<T>, s: S) -> std::result::Result<S::Ok, S::Error> {
        m.row_major().serialize(s)
    }

    pub fn deserialize<'de, T: Real, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat3<T>, D::Error> {
        let v: Vec<T> = Vec::deserialize(d)?;
        Mat3::from_row_major(&v).ok_or_else(|| D::Error::invalid_length(v.len(), &"9 row-major entries"))
    }
}

/// Quaternion to rotation matrix.
pub fn quat_to_rot<T: Real>(q: &UnitQuaternion<T>) -> Rotation<T> {
    let [w1, w2, w3, w4] = q.w.0;
    let two = T::c(2.0);
    let r = Mat([
        [w1 * w1 + w2 * w2 - w3 * w3 - w4 * w4, two * (w2 * w3 - w1 * w4), two * (w2 * w4 + w1 * w3)],
        [two * (w2 * w3 + w1 * w4), w1 * w1 + w3 * w3 - w2 * w2 - w4 * w4, two * (w3 * w4 - w1 * w2)],
        [two * (w2 * w4 - w1 * w3), two * (w3 * w4 + w1 * w2), w1 * w1 + w4 * w4 - w2 * w2 - w3 * w3],
    ]);
    Rotation { r }
}

/// Rotation matrix to canonical quaternion. Fails for matrices that are not rotations.
pub fn rot_to_quat<T: Real>(r: &Mat3<T>) -> Result<UnitQuaternion<T>> {
    Rotation::new(*r)?;
    Ok(rot_to_quat_unchecked(r))
}

// Shepperd: pivot on the largest of the four squared components.
fn rot_to_quat_unchecked<T: Real>(r: &Mat3<T>) -> UnitQuaternion<T> {
    let m = &r.0;
    let one = T::one();
    let quarter = T::c(0.25);
    let t = [
        one + m[0][0] + m[1][1] + m[2][2],
        one + m[0][0] - m[1][1] - m[2][2],
        one - m[0][0] + m[1][1] - m[2][2],
        one - m[0][0] - m[1][1] + m[2][2],
    ];
    let k = (0..4).fold(0, |b, i| if t[i] > t[b] { i } else { b });
    let s = t[k].max(T::zero()).sqrt() * T::c(2.0);
    let w = match k {
        0 => [s * quarter, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s],
        1 => [(m[2][1] - m[1][2]) / s, s * quarter, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s],
        2 => [(m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, s * quarter, (m[1][2] + m[2][1]) / s],
        _ => [(m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, s * quarter],
    };
    UnitQuaternion::from_vector(Vector(w)).unwrap_or_else(|_| UnitQuaternion::identity())
}

/// The 4x4 data matrix of one point pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent, bound = "")]
pub struct DataMatrix<T: Real> {
    #[serde(with = "mat4_row_major")]
    q: Mat4<T>,
}

impl<T: Real> DataMatrix<T> {
    pub fn from_matrix(q: Mat4<T>) -> Self {
        DataMatrix { q }
    }

    pub fn matrix(&self) -> &Mat4<T> {
        &self.q
    }

    /// `wᵀ Q w`.
    pub fn residual(&self, w: &Vec4<T>) -> T {
        self.q.quad(w)
    }

    pub fn lambda_min(&self) -> T {
        eigh_small(&self.q).min()
    }

    pub fn lambda_max(&self) -> T {
        eigh_small(&self.q).max()
    }
}

pub(crate) mod mat4_row_major {
    use super::*;
    use serde::de::Error as _;
    use serde::{Deserializer, Serializer};

    pub fn serialize<T: Real, S: Serializer>(m: &Mat4<T>, s: S) -> std::result::Result<S::Ok, S::Error> {
        m.row_major().serialize(s)
    }

    pub fn deserialize<'de, T: Real, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat4<T>, D::Error> {
        let v: Vec<T> = Vec::deserialize(d)?;
        Mat4::from_row_major(&v).ok_or_else(|| D::Error::invalid_length(v.len(), &"16 row-major entries"))
    }
}

fn x_patterns<T: Real>(x: &Vec3<T>) -> [Mat4<T>; 3] {
    let [x1, x2, x3] = x.0;
    let z = T::zero();
    [
        Mat([[x1, z, x3, -x2], [z, x1, x2, x3], [x3, x2, -x1, z], [-x2, x3, z, -x1]]),
        Mat([[x2, -x3, z, x1], [-x3, -x2, x1, z], [z, x1, x2, x3], [x1, z, x3, -x2]]),
        Mat([[x3, x2, -x1, z], [x2, -x3, z, x1], [-x1, z, -x3, x2], [z, x1, x2, x3]]),
    ]
}

/// `U(y, x) = y₁X₁ + y₂X₂ + y₃X₃`, so that `wᵀUw = yᵀR(w)x`.
pub fn u_matrix<T: Real>(y: &Vec3<T>, x: &Vec3<T>) -> Mat4<T> {
    let [a, b, c] = x_patterns(x);
    a.scale(y[0]) + b.scale(y[1]) + c.scale(y[2])
}

/// `Q = (‖y‖² + ‖x‖²) I − 2U(y, x)`.
pub fn build_q<T: Real>(y: &Vec3<T>, x: &Vec3<T>) -> DataMatrix<T> {
    let q = Mat4::scalar(y.norm_sq() + x.norm_sq()) - u_matrix(y, x).scale(T::c(2.0));
    DataMatrix { q }
}

/// Eigenvalues of `build_q(y, x)` in descending order.
pub fn q_spectrum_closed_form<T: Real>(y: &Vec3<T>, x: &Vec3<T>) -> [T; 4] {
    let (ny, nx) = (y.norm(), x.norm());
    let hi = (ny + nx) * (ny + nx);
    let lo = (ny - nx) * (ny - nx);
    [hi, hi, lo, lo]
}

/// Split of an inlier data matrix into pure data, noise cross term and `‖ε‖²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InlierDecomposition<T: Real> {
    pub p: Mat4<T>,
    pub e: Mat4<T>,
    pub eps_sq: T,
}

impl<T: Real> InlierDecomposition<T> {
    pub fn reconstruct(&self) -> Mat4<T> {
        self.p + self.e + Mat4::scalar(self.eps_sq)
    }
}

pub fn decompose_inlier<T: Real>(x: &Vec3<T>, r_star: &Rotation<T>, eps: &Vec3<T>) -> InlierDecomposition<T> {
    let rx = r_star.apply(x);
    let two = T::c(2.0);
    let p = *build_q(&rx, x).matrix();
    let e = Mat4::scalar(two * eps.dot(&rx)) - u_matrix(eps, x).scale(two);
    InlierDecomposition { p, e, eps_sq: eps.norm_sq() }
}

/// Angle in `[0, π]` of the relative rotation between two quaternions.
pub fn quat_angle<T: Real>(w1: &UnitQuaternion<T>, w2: &UnitQuaternion<T>) -> T {
    let d = w1.dot(w2).abs().min(T::one());
    T::c(2.0) * d.acos()
}

/// Axis and angle of a rotation, angle in `[0, π]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AxisAngle<T: Real> {
    pub axis: Vec3<T>,
    pub angle: T,
}

impl<T: Real> AxisAngle<T> {
    pub fn new(axis: Vec3<T>, angle: T) -> Result<Self> {
        match axis.normalized() {
            Some(axis) if angle.is_finite() => Ok(AxisAngle { axis, angle }),
            _ => invalid("axis must be nonzero and angle finite"),
        }
    }

    /// Via the quaternion `[cos(φ/2); b sin(φ/2)]`. The identity gets axis `e₁`.
    pub fn from_rotation(r: &Rotation<T>) -> Self {
        Self::from_quaternion(&r.to_quaternion())
    }

    pub fn from_quaternion(q: &UnitQuaternion<T>) -> Self {
        let w = q.as_vec();
        let v = Vec3::new(w[1], w[2], w[3]);
        let s = v.norm();
        let angle = T::c(2.0) * s.atan2(w[0]);
        let axis = v.normalized().unwrap_or(Vec3::new(T::one(), T::zero(), T::zero()));
        // atan2 with w[0] ≥ 0 (canonical sign) keeps angle in [0, π].
        AxisAngle { axis, angle }
    }

    pub fn to_quaternion(&self) -> UnitQuaternion<T> {
        let h = self.angle * T::c(0.5);
        let (s, c) = h.sin_cos();
        let b = self.axis;
        UnitQuaternion::from_vector(Vec4::new(c, b[0] * s, b[1] * s, b[2] * s)).expect("unit by construction")
    }

    pub fn to_rotation(&self) -> Rotation<T> {
        Rotation::from_axis_angle(&self.axis, self.angle).expect("unit axis")
    }
}

/// `cos(φ₁₂/2)` for the composition `R₁ᵀR₂`, from the two axis-angle pairs.
pub fn composition_cos_half<T: Real>(a1: &AxisAngle<T>, a2: &AxisAngle<T>) -> T {
    let h1 = a1.angle * T::c(0.5);
    let h2 = a2.angle * T::c(0.5);
    h1.cos() * h2.cos() - (-a1.axis).dot(&a2.axis) * h1.sin() * h2.sin()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v3(a: f64, b: f64, c: f64) -> Vec3<f64> {
        Vec3::new(a, b, c)
    }

    #[test]
    fn identity_and_half_turn() {
        let r = quat_to_rot(&UnitQuaternion::<f64>::identity());
        assert_eq!(*r.matrix(), Mat3::identity());
        let q = UnitQuaternion::new(Vec4::new(0.0, 1.0, 0.0, 0.0)).unwrap();
        let r = quat_to_rot(&q);
        assert_eq!(*r.matrix(), Mat3::from_diag(&v3(1.0, -1.0, -1.0)));
        assert_eq!(rot_to_quat(r.matrix()).unwrap(), q);
        assert_eq!(rot_to_quat(&Mat3::<f64>::identity()).unwrap(), UnitQuaternion::identity());
    }

    #[test]
    fn canonical_sign() {
        let q = UnitQuaternion::new(Vec4::new(0.0, -0.6, 0.8, 0.0)).unwrap();
        assert_eq!(q.as_vec().0, [0.0, 0.6, -0.8, 0.0]);
    }

    #[test]
    fn rejects_non_unit_and_non_rotation() {
        assert!(UnitQuaternion::new(Vec4::new(1.0, 0.1, 0.0, 0.0)).is_err());
        assert!(rot_to_quat(&Mat3::from_diag(&v3(1.0, 1.0, -1.0))).is_err());
        assert!(rot_to_quat(&Mat3::scalar(2.0)).is_err());
    }

    #[test]
    fn spectrum_two_one() {
        let y = v3(0.0, 2.0, 0.0);
        let x = v3(0.6, 0.0, 0.8);
        assert_eq!(q_spectrum_closed_form(&y, &x), [9.0, 9.0, 1.0, 1.0]);
        let e = eigh_small(build_q(&y, &x).matrix()).values;
        for (a, b) in e.0.iter().rev().zip([9.0, 9.0, 1.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_unit_vectors() {
        let e = v3(1.0, 0.0, 0.0);
        let s = eigh_small(build_q(&e, &e).matrix()).values;
        assert!((s[0]).abs() < 1e-14 && (s[1]).abs() < 1e-14);
        assert!((s[2] - 4.0).abs() < 1e-14 && (s[3] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn noiseless_decomposition() {
        let r = Rotation::from_axis_angle(&v3(1.0, 2.0, 3.0), 0.7).unwrap();
        let x = v3(0.3, -1.0, 2.0);
        let d = decompose_inlier(&x, &r, &Vec3::zeros());
        assert_eq!(d.e, Mat4::zeros());
        assert_eq!(d.eps_sq, 0.0);
        let w = r.to_quaternion();
        assert!(d.p.mul_vec(w.as_vec()).max_abs() < 1e-14);
    }

    #[test]
    fn angle_cases() {
        let a = UnitQuaternion::new(Vec4::new(0.5, 0.5, 0.5, 0.5)).unwrap();
        assert_eq!(quat_angle(&a, &a), 0.0);
        let b = UnitQuaternion::new(Vec4::new(0.5, -0.5, 0.5, -0.5)).unwrap();
        assert!((quat_angle(&a, &b) - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn rotation_json_is_row_major() {
        let r = Rotation::from_axis_angle(&v3(0.0, 0.0, 1.0), std::f64::consts::FRAC_PI_2).unwrap();
        let s = serde_json::to_string(&r).unwrap();
        let v: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert!((v[1] + 1.0).abs() < 1e-15 && (v[3] - 1.0).abs() < 1e-15);
        let back: Rotation<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
