//! Quaternion algebra, rotation matrices, Euler angles and the exponential
//! and logarithmic maps between rotation vectors and orientations.
//!
//! Quaternions are stored scalar first, `(q0, q1, q2, q3)`, and multiply with
//! the Hamilton product. A unit quaternion `q^nb` rotates a body-frame vector
//! into the navigation frame as `q ⊙ v̄ ⊙ q^c`.
//!
//! Axis-angle construction follows the frame-rotation convention
//! `q(n, α) = (cos α/2, −n sin α/2)`, matching `R(n, α) = I − sin α [n×] +
//! (1 − cos α)[n×]²`. The exponential maps take the full rotation vector for
//! `exp_r` and the half vector for `exp_q`, so `quat_to_rotmat(exp_q(η / 2))`
//! equals `exp_r(η)`.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Matrix4x3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this norm `exp_q` and `exp_r` switch to their first-order expansion.
pub const EXP_SMALL_ANGLE: f64 = 1e-8;
/// Below this vector-part norm `log_q` returns the zero vector.
pub const LOG_ZERO: f64 = 1e-12;
/// `|R13|` this close to one is treated as gimbal lock.
pub const GIMBAL_LOCK: f64 = 1e-9;
/// Tolerance used when validating unit norm and orthonormality of inputs.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Rotation vector η in radians.
pub type RotationVector = Vector3<f64>;

/// Skew-symmetric cross-product matrix so that `cross_matrix(u) * v == u × v`.
pub fn cross_matrix(u: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0)
}

/// A general (not necessarily unit) quaternion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub coords: Vector4<f64>,
}

impl Quaternion {
    pub fn new(q0: f64, q1: f64, q2: f64, q3: f64) -> Self {
        Self { coords: Vector4::new(q0, q1, q2, q3) }
    }

    pub fn from_vector(coords: Vector4<f64>) -> Self {
        Self { coords }
    }

    /// The quaternion representation `(0, v)` of a 3-vector.
    pub fn pure(v: &Vector3<f64>) -> Self {
        Self::new(0.0, v.x, v.y, v.z)
    }

    pub fn identity() -> Self {
        Self::new(1.0, 0.0, 0.0, 0.0)
    }

    pub fn scalar(&self) -> f64 {
        self.coords[0]
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.coords[1], self.coords[2], self.coords[3])
    }

    pub fn norm(&self) -> f64 {
        self.coords.norm()
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.coords[0], -self.coords[1], -self.coords[2], -self.coords[3])
    }

    /// Hamilton product `self ⊙ rhs`.
    pub fn multiply(&self, rhs: &Quaternion) -> Quaternion {
        let (p0, pv) = (self.scalar(), self.vector());
        let (q0, qv) = (rhs.scalar(), rhs.vector());
        let v = p0 * qv + q0 * pv + pv.cross(&qv);
        Quaternion::new(p0 * q0 - pv.dot(&qv), v.x, v.y, v.z)
    }

    /// Left-multiplication matrix `pᴸ` with `p ⊙ q = pᴸ q`.
    pub fn left_matrix(&self) -> Matrix4<f64> {
        let p = &self.coords;
        Matrix4::new(
            p[0], -p[1], -p[2], -p[3], //
            p[1], p[0], -p[3], p[2], //
            p[2], p[3], p[0], -p[1], //
            p[3], -p[2], p[1], p[0],
        )
    }

    /// Right-multiplication matrix `qᴿ` with `p ⊙ q = qᴿ p`.
    pub fn right_matrix(&self) -> Matrix4<f64> {
        let q = &self.coords;
        Matrix4::new(
            q[0], -q[1], -q[2], -q[3], //
            q[1], q[0], q[3], -q[2], //
            q[2], -q[3], q[0], q[1], //
            q[3], q[2], -q[1], q[0],
        )
    }

    /// Rejects quaternions whose norm differs from one by more than
    /// [`UNIT_TOLERANCE`] and renormalizes the rest.
    pub fn to_unit(&self) -> Result<UnitQuaternion> {
        UnitQuaternion::try_new(*self)
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, rhs: Quaternion) -> Quaternion {
        self.multiply(&rhs)
    }
}

impl fmt::Display for Quaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.coords;
        write!(f, "({}, {}, {}, {})", c[0], c[1], c[2], c[3])
    }
}

/// A quaternion of unit norm, parametrizing an orientation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Quaternion", into = "Quaternion")]
pub struct UnitQuaternion(Quaternion);

impl TryFrom<Quaternion> for UnitQuaternion {
    type Error = Error;
    fn try_from(q: Quaternion) -> Result<Self> {
        Self::try_new(q)
    }
}

impl From<UnitQuaternion> for Quaternion {
    fn from(q: UnitQuaternion) -> Quaternion {
        q.0
    }
}

impl UnitQuaternion {
    pub fn identity() -> Self {
        Self(Quaternion::identity())
    }

    /// Validates unit norm within [`UNIT_TOLERANCE`] and renormalizes.
    pub fn try_new(q: Quaternion) -> Result<Self> {
        let n = q.norm();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::NotUnit { norm: n });
        }
        Ok(Self(Quaternion::from_vector(q.coords / n)))
    }

    /// Normalizes an arbitrary nonzero quaternion.
    pub fn normalize(q: Quaternion) -> Self {
        Self(Quaternion::from_vector(q.coords / q.norm()))
    }

    /// Wraps a quaternion the caller guarantees to be unit norm.
    pub fn new_unchecked(q: Quaternion) -> Self {
        Self(q)
    }

    pub fn from_components(q0: f64, q1: f64, q2: f64, q3: f64) -> Result<Self> {
        Self::try_new(Quaternion::new(q0, q1, q2, q3))
    }

    pub fn quaternion(&self) -> &Quaternion {
        &self.0
    }

    pub fn coords(&self) -> &Vector4<f64> {
        &self.0.coords
    }

    pub fn scalar(&self) -> f64 {
        self.0.scalar()
    }

    pub fn vector(&self) -> Vector3<f64> {
        self.0.vector()
    }

    pub fn conjugate(&self) -> Self {
        Self(self.0.conjugate())
    }

    pub fn negated(&self) -> Self {
        Self(Quaternion::from_vector(-self.0.coords))
    }

    /// Sign-canonical representative with `q0 ≥ 0`.
    pub fn canonical(&self) -> Self {
        if self.scalar() < 0.0 {
            self.negated()
        } else {
            *self
        }
    }

    pub fn left_matrix(&self) -> Matrix4<f64> {
        self.0.left_matrix()
    }

    pub fn right_matrix(&self) -> Matrix4<f64> {
        self.0.right_matrix()
    }

    /// Vector part of `q ⊙ v̄ ⊙ q^c`.
    pub fn rotate_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0.multiply(&Quaternion::pure(v)).multiply(&self.0.conjugate()).vector()
    }

    pub fn to_rotation_matrix(&self) -> RotationMatrix {
        quat_to_rotmat(self)
    }

    /// Angle between the two rotations, in radians, in `[0, π]`.
    pub fn angle_to(&self, other: &UnitQuaternion) -> f64 {
        // atan2 keeps full precision for nearby rotations, where acos of the
        // dot product bottoms out near 3e-8.
        let d = self.0.conjugate().multiply(&other.0);
        2.0 * d.vector().norm().atan2(d.scalar().abs())
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;
    fn mul(self, rhs: UnitQuaternion) -> UnitQuaternion {
        UnitQuaternion(self.0.multiply(&rhs.0))
    }
}

impl fmt::Display for UnitQuaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A proper orthonormal 3×3 rotation matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates `R Rᵀ = I` and `det R = 1` within [`UNIT_TOLERANCE`].
    pub fn try_new(m: Matrix3<f64>) -> Result<Self> {
        let dev = (m * m.transpose() - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if !dev.is_finite() || dev > UNIT_TOLERANCE || (det - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::NotOrthonormal { deviation: dev.max((det - 1.0).abs()) });
        }
        Ok(Self(m))
    }

    pub fn new_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

/// Euler angles in the (z, y, x) convention, radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl EulerAngles {
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        Self { yaw, pitch, roll }
    }
}

/// Quaternion for a rotation of `angle` about the unit axis `axis`.
pub fn axis_angle_to_quat(axis: &Vector3<f64>, angle: f64) -> UnitQuaternion {
    let n = axis.normalize();
    let (s, c) = (0.5 * angle).sin_cos();
    UnitQuaternion(Quaternion::new(c, -n.x * s, -n.y * s, -n.z * s))
}

/// `exp_q(η) = (cos‖η‖, η/‖η‖ sin‖η‖)`.
pub fn exp_q(eta: &RotationVector) -> UnitQuaternion {
    let a = eta.norm();
    if a < EXP_SMALL_ANGLE {
        return UnitQuaternion::normalize(Quaternion::new(1.0, eta.x, eta.y, eta.z));
    }
    let s = a.sin() / a;
    UnitQuaternion(Quaternion::new(a.cos(), s * eta.x, s * eta.y, s * eta.z))
}

/// `exp_R(η) = I + sin‖η‖ [n×] + (1 − cos‖η‖)[n×]²` with `n = η/‖η‖`.
pub fn exp_r(eta: &RotationVector) -> RotationMatrix {
    let a = eta.norm();
    if a < EXP_SMALL_ANGLE {
        return RotationMatrix(Matrix3::identity() + cross_matrix(eta));
    }
    let k = cross_matrix(&(eta / a));
    RotationMatrix(Matrix3::identity() + a.sin() * k + (1.0 - a.cos()) * k * k)
}

/// `log_q(q) = arccos(q0) / ‖qv‖ · qv`, evaluated on the `q0 ≥ 0` representative.
///
/// The result has norm at most π/2 and is the inverse of [`exp_q`].
pub fn log_q(q: &UnitQuaternion) -> RotationVector {
    let q = q.canonical();
    let v = q.vector();
    let n = v.norm();
    if n < LOG_ZERO {
        return Vector3::zeros();
    }
    // atan2 is better conditioned than arccos near q0 = 1.
    n.atan2(q.scalar()) / n * v
}

/// Derivative of `exp_q(v)` with respect to `v`, a 4×3 matrix.
///
/// Collapses to `[0₁ₓ₃; I₃]` at `v = 0`.
pub fn dexp_q(v: &Vector3<f64>) -> Matrix4x3<f64> {
    let a = v.norm();
    let (top, sinc, k) = if a < 1e-6 {
        // Series: sin a / a ≈ 1 − a²/6, (a cos a − sin a)/a³ ≈ −1/3.
        (-v.transpose(), 1.0 - a * a / 6.0, -1.0 / 3.0)
    } else {
        let (s, c) = a.sin_cos();
        (-(s / a) * v.transpose(), s / a, (a * c - s) / (a * a * a))
    };
    let lower = sinc * Matrix3::identity() + k * v * v.transpose();
    let mut d = Matrix4x3::zeros();
    d.fixed_view_mut::<1, 3>(0, 0).copy_from(&top);
    d.fixed_view_mut::<3, 3>(1, 0).copy_from(&lower);
    d
}

/// Derivative of `log_q` with respect to the four quaternion coordinates,
/// a 3×4 matrix evaluated at the raw coordinates of `q`.
///
/// Collapses to `[0₃ₓ₁ I₃]` at the identity.
pub fn dlog_q(q: &Vector4<f64>) -> Matrix3x4<f64> {
    // log_q(−q) = log_q(q), so differentiate on the canonical side and
    // carry the sign through the chain rule.
    let (q, sign) = if q[0] < 0.0 { (-q, -1.0) } else { (*q, 1.0) };
    let q0 = q[0];
    let v = Vector3::new(q[1], q[2], q[3]);
    let n = v.norm();
    let r2 = q0 * q0 + n * n;
    let mut d = Matrix3x4::zeros();
    d.fixed_view_mut::<3, 1>(0, 0).copy_from(&(-v / r2));
    let block = if n < 1e-8 {
        Matrix3::identity() / q0
    } else {
        let theta = n.atan2(q0);
        let g = theta / n;
        let dg_dn = (q0 / r2 * n - theta) / (n * n);
        g * Matrix3::identity() + (dg_dn / n) * v * v.transpose()
    };
    d.fixed_view_mut::<3, 3>(0, 1).copy_from(&block);
    sign * d
}

/// Rotation vector of a rotation matrix, the inverse of [`exp_r`].
pub fn log_r(r: &RotationMatrix) -> RotationVector {
    2.0 * log_q(&rotmat_to_quat(r))
}

/// Checked variant of [`log_r`] for unvalidated matrices.
pub fn log_r_checked(m: &Matrix3<f64>) -> Result<RotationVector> {
    Ok(log_r(&RotationMatrix::try_new(*m)?))
}

/// Rotation matrix of a unit quaternion, `q_v q_vᵀ + q0² I + 2 q0 [q_v×] + [q_v×]²`.
pub fn quat_to_rotmat(q: &UnitQuaternion) -> RotationMatrix {
    RotationMatrix(rotmat_polynomial(q.coords()))
}

/// The quaternion-to-matrix polynomial evaluated on an arbitrary 4-vector.
///
/// This is the function whose derivative the quaternion-state filters use.
pub fn rotmat_polynomial(q: &Vector4<f64>) -> Matrix3<f64> {
    let (q0, q1, q2, q3) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        2.0 * (q0 * q0 + q1 * q1) - 1.0,
        2.0 * (q1 * q2 - q0 * q3),
        2.0 * (q1 * q3 + q0 * q2),
        2.0 * (q1 * q2 + q0 * q3),
        2.0 * (q0 * q0 + q2 * q2) - 1.0,
        2.0 * (q2 * q3 - q0 * q1),
        2.0 * (q1 * q3 - q0 * q2),
        2.0 * (q2 * q3 + q0 * q1),
        2.0 * (q0 * q0 + q3 * q3) - 1.0,
    )
}

/// Derivative of `rotmat_polynomial(q) * v` with respect to `q`.
pub fn d_rotate_dq(q: &Vector4<f64>, v: &Vector3<f64>) -> Matrix3x4<f64> {
    let (q0, q1, q2, q3) = (q[0], q[1], q[2], q[3]);
    let (x, y, z) = (v.x, v.y, v.z);
    2.0 * Matrix3x4::new(
        2.0 * q0 * x - q3 * y + q2 * z,
        2.0 * q1 * x + q2 * y + q3 * z,
        q1 * y + q0 * z,
        -q0 * y + q1 * z,
        q3 * x + 2.0 * q0 * y - q1 * z,
        q2 * x - q0 * z,
        q1 * x + 2.0 * q2 * y + q3 * z,
        q0 * x + q2 * z,
        -q2 * x + q1 * y + 2.0 * q0 * z,
        q3 * x + q0 * y,
        -q0 * x + q3 * y,
        q1 * x + q2 * y + 2.0 * q3 * z,
    )
}

/// Derivative of `rotmat_polynomial(q)ᵀ * v` with respect to `q`.
pub fn d_rotate_transpose_dq(q: &Vector4<f64>, v: &Vector3<f64>) -> Matrix3x4<f64> {
    // Rᵀ(q) equals R(q^c) for the polynomial form, so flip the vector-part columns.
    let qc = Vector4::new(q[0], -q[1], -q[2], -q[3]);
    let mut d = d_rotate_dq(&qc, v);
    for col in 1..4 {
        d.set_column(col, &(-d.column(col)));
    }
    d
}

/// Quaternion of a rotation matrix.
///
/// Uses the trace formula when `1 + tr R` is comfortably positive and the
/// largest-diagonal branch otherwise. The result is returned with `q0 ≥ 0`.
pub fn rotmat_to_quat(r: &RotationMatrix) -> UnitQuaternion {
    let m = &r.0;
    let tr = m.trace();
    let q = if tr > 0.0 {
        let s = 2.0 * (1.0 + tr).sqrt();
        Quaternion::new(0.25 * s, (m[(2, 1)] - m[(1, 2)]) / s, (m[(0, 2)] - m[(2, 0)]) / s, (m[(1, 0)] - m[(0, 1)]) / s)
    } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
        let s = 2.0 * (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
        Quaternion::new((m[(2, 1)] - m[(1, 2)]) / s, 0.25 * s, (m[(0, 1)] + m[(1, 0)]) / s, (m[(0, 2)] + m[(2, 0)]) / s)
    } else if m[(1, 1)] > m[(2, 2)] {
        let s = 2.0 * (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt();
        Quaternion::new((m[(0, 2)] - m[(2, 0)]) / s, (m[(0, 1)] + m[(1, 0)]) / s, 0.25 * s, (m[(1, 2)] + m[(2, 1)]) / s)
    } else {
        let s = 2.0 * (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt();
        Quaternion::new((m[(1, 0)] - m[(0, 1)]) / s, (m[(0, 2)] + m[(2, 0)]) / s, (m[(1, 2)] + m[(2, 1)]) / s, 0.25 * s)
    };
    UnitQuaternion::normalize(q).canonical()
}

/// Checked variant of [`rotmat_to_quat`] for unvalidated matrices.
pub fn rotmat_to_quat_checked(m: &Matrix3<f64>) -> Result<UnitQuaternion> {
    Ok(rotmat_to_quat(&RotationMatrix::try_new(*m)?))
}

/// `R = R(e1, φ) R(e2, θ) R(e3, ψ)` with the frame-rotation elementary matrices.
pub fn euler_to_rotmat(e: &EulerAngles) -> RotationMatrix {
    let (sp, cp) = e.roll.sin_cos();
    let (st, ct) = e.pitch.sin_cos();
    let (sy, cy) = e.yaw.sin_cos();
    RotationMatrix(Matrix3::new(
        ct * cy,
        ct * sy,
        -st,
        sp * st * cy - cp * sy,
        sp * st * sy + cp * cy,
        sp * ct,
        cp * st * cy + sp * sy,
        cp * st * sy - sp * cy,
        cp * ct,
    ))
}

/// Inverse of [`euler_to_rotmat`].
///
/// At gimbal lock the roll is set to zero and the remaining freedom is
/// absorbed into the yaw.
pub fn rotmat_to_euler(r: &RotationMatrix) -> EulerAngles {
    let m = &r.0;
    let r13 = m[(0, 2)].clamp(-1.0, 1.0);
    if 1.0 - r13.abs() < GIMBAL_LOCK {
        // With φ = 0: R21 = −sin ψ, R22 = cos ψ for either sign of θ.
        let pitch = -r13.signum() * std::f64::consts::FRAC_PI_2;
        let yaw = wrap_angle((-m[(1, 0)]).atan2(m[(1, 1)]));
        return EulerAngles::new(yaw, pitch, 0.0);
    }
    EulerAngles::new(wrap_angle(m[(0, 1)].atan2(m[(0, 0)])), -r13.asin(), wrap_angle(m[(1, 2)].atan2(m[(2, 2)])))
}

/// Maps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn basis_products() {
        let i = Quaternion::new(0.0, 1.0, 0.0, 0.0);
        let j = Quaternion::new(0.0, 0.0, 1.0, 0.0);
        assert_eq!(i * j, Quaternion::new(0.0, 0.0, 0.0, 1.0));
        assert_eq!(j * i, Quaternion::new(0.0, 0.0, 0.0, -1.0));
    }

    #[test]
    fn left_and_right_matrices_agree_with_product() {
        let p = Quaternion::new(0.3, -1.2, 0.4, 2.0);
        let q = Quaternion::new(-0.7, 0.1, 0.9, -0.3);
        let pq = (p * q).coords;
        assert_abs_diff_eq!(p.left_matrix() * q.coords, pq, epsilon = 1e-14);
        assert_abs_diff_eq!(q.right_matrix() * p.coords, pq, epsilon = 1e-14);
    }

    #[test]
    fn cross_matrix_of_e3() {
        let m = cross_matrix(&Vector3::z());
        assert_eq!(m, Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn axis_angle_about_z_rotates_x_to_minus_y() {
        let q = axis_angle_to_quat(&Vector3::z(), FRAC_PI_2);
        assert_abs_diff_eq!(q.rotate_vector(&Vector3::x()), -Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn exp_and_log_special_values() {
        let q = exp_q(&Vector3::new(FRAC_PI_2, 0.0, 0.0));
        assert_abs_diff_eq!(*q.coords(), Vector4::new(0.0, 1.0, 0.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(log_q(&q), Vector3::new(FRAC_PI_2, 0.0, 0.0), epsilon = 1e-15);
        assert_eq!(log_q(&UnitQuaternion::identity()), Vector3::zeros());
        assert_eq!(*exp_q(&Vector3::zeros()).coords(), Vector4::new(1.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn log_of_negative_scalar_uses_canonical_sign() {
        let q = exp_q(&Vector3::new(0.0, 0.4, 0.0)).negated();
        assert_abs_diff_eq!(log_q(&q), Vector3::new(0.0, 0.4, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn quarter_turn_matrix() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let q = UnitQuaternion::from_components(h, 0.0, 0.0, -h).unwrap();
        let r = quat_to_rotmat(&q);
        let expected = Matrix3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert_abs_diff_eq!(*r.matrix(), expected, epsilon = 1e-15);
    }

    #[test]
    fn yaw_only_euler_matrix() {
        let r = euler_to_rotmat(&EulerAngles::new(FRAC_PI_2, 0.0, 0.0));
        assert_abs_diff_eq!(r.apply(&Vector3::x()), -Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn gimbal_lock_sets_roll_to_zero() {
        let e = EulerAngles::new(0.3, FRAC_PI_2, 0.5);
        let back = rotmat_to_euler(&euler_to_rotmat(&e));
        assert_eq!(back.roll, 0.0);
        assert_abs_diff_eq!(back.pitch, FRAC_PI_2);
        let again = euler_to_rotmat(&back);
        assert_abs_diff_eq!(*again.matrix(), *euler_to_rotmat(&e).matrix(), epsilon = 1e-12);
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(UnitQuaternion::from_components(1.0, 0.1, 0.0, 0.0).is_err());
        assert!(RotationMatrix::try_new(Matrix3::identity() * 1.01).is_err());
        assert!(RotationMatrix::try_new(-Matrix3::identity()).is_err());
    }

    #[test]
    fn half_turn_conversions() {
        let q = exp_q(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        let back = rotmat_to_quat(&quat_to_rotmat(&q));
        assert!(q.angle_to(&back) < 1e-12);
        assert_abs_diff_eq!(log_r(&exp_r(&Vector3::new(0.0, PI - 1e-3, 0.0))).y, PI - 1e-3, epsilon = 1e-10);
    }

    #[test]
    fn wrap_angle_range() {
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(0.25), 0.25);
    }
}
