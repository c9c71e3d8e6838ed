//! Frame algebra: vectors, unit quaternions, rigid transforms, twists and wrenches.
//!
//! Frames are right-handed with +Z up in the world. Quaternions are stored
//! `(w, x, y, z)` and renormalized after every composition.

use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

// Accepts `{x, y, z}` as well as the compact `[x, y, z]` used in config files.
impl<'de> Deserialize<'de> for Vec3 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Array([f64; 3]),
            Map { x: f64, y: f64, z: f64 },
        }
        match Repr::deserialize(d)
            .map_err(|_| serde::de::Error::custom("expected a 3-vector `[x, y, z]` or `{x, y, z}`"))?
        {
            Repr::Array(a) => Ok(Vec3::from_array(a)),
            Repr::Map { x, y, z } => Ok(Vec3::new(x, y, z)),
        }
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn splat(v: f64) -> Self {
        Self::new(v, v, v)
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction, or `None` for (near) zero input.
    pub fn try_normalize(self) -> Option<Vec3> {
        let n = self.norm();
        if n > 1e-300 && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    pub fn normalize(self) -> Vec3 {
        self.try_normalize().unwrap_or(Vec3::ZERO)
    }

    pub fn abs(self) -> Vec3 {
        Vec3::new(self.x.abs(), self.y.abs(), self.z.abs())
    }

    pub fn component_mul(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn max_abs(self) -> f64 {
        self.x.abs().max(self.y.abs()).max(self.z.abs())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn get(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }

    pub fn set(&mut self, i: usize, v: f64) {
        match i {
            0 => self.x = v,
            1 => self.y = v,
            2 => self.z = v,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }

    /// Two unit vectors completing `self` (assumed unit) to an orthonormal basis.
    pub fn orthonormal_basis(self) -> (Vec3, Vec3) {
        let t1 = if self.x.abs() > 0.57735 {
            Vec3::new(self.y, -self.x, 0.0)
        } else {
            Vec3::new(0.0, self.z, -self.y)
        }
        .normalize();
        let t2 = self.cross(t1);
        (t1, t2)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl MulAssign<f64> for Vec3 {
    fn mul_assign(&mut self, s: f64) {
        *self = *self * s;
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

/// Row-major 3x3 matrix, used for rotations and inertia tensors.
pub type Mat3 = [[f64; 3]; 3];

pub fn mat3_mul_vec(m: &Mat3, v: Vec3) -> Vec3 {
    Vec3::new(
        m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
        m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
        m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
    )
}

pub fn mat3_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat3_transpose(m: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in m.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[j][i] = *v;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quat {
    fn default() -> Self {
        Quat::IDENTITY
    }
}

impl Quat {
    pub const IDENTITY: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Raw constructor; does not normalize.
    pub const fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Normalizing constructor. A zero quaternion maps to identity.
    pub fn new_normalize(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quat { w, x, y, z }.normalized()
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let Some(a) = axis.try_normalize() else {
            return Quat::IDENTITY;
        };
        let (s, c) = (angle * 0.5).sin_cos();
        Quat::new_normalize(c, a.x * s, a.y * s, a.z * s)
    }

    /// Rotation from a rotation vector (axis times angle).
    pub fn from_scaled_axis(v: Vec3) -> Self {
        let angle = v.norm();
        if angle < 1e-12 {
            // first-order expansion keeps tiny rotations exact to machine precision
            return Quat::new_normalize(1.0, v.x * 0.5, v.y * 0.5, v.z * 0.5);
        }
        Quat::from_axis_angle(v / angle, angle)
    }

    /// Fixed-axis roll (X), pitch (Y), yaw (Z): R = Rz(yaw)·Ry(pitch)·Rx(roll).
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        Quat::from_axis_angle(Vec3::Z, yaw)
            * Quat::from_axis_angle(Vec3::Y, pitch)
            * Quat::from_axis_angle(Vec3::X, roll)
    }

    pub fn rz(angle: f64) -> Self {
        Quat::from_axis_angle(Vec3::Z, angle)
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> Quat {
        let n = self.norm();
        if n < 1e-300 || !n.is_finite() {
            return Quat::IDENTITY;
        }
        Quat::from_wxyz(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn conjugate(self) -> Quat {
        Quat::from_wxyz(self.w, -self.x, -self.y, -self.z)
    }

    /// Inverse of a unit quaternion.
    pub fn inverse(self) -> Quat {
        self.conjugate()
    }

    pub fn dot(self, o: Quat) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn vector(self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        // v' = v + 2w(u×v) + 2u×(u×v)
        let u = self.vector();
        let uv = u.cross(v);
        let uuv = u.cross(uv);
        v + uv * (2.0 * self.w) + uuv * 2.0
    }

    pub fn to_matrix(self) -> Mat3 {
        let Quat { w, x, y, z } = self;
        [
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
        ]
    }

    pub fn from_matrix(m: &Mat3) -> Quat {
        let trace = m[0][0] + m[1][1] + m[2][2];
        if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Quat::new_normalize(
                0.25 * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            )
        } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
            let s = (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt() * 2.0;
            Quat::new_normalize(
                (m[2][1] - m[1][2]) / s,
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            )
        } else if m[1][1] > m[2][2] {
            let s = (1.0 + m[1][1] - m[0][0] - m[2][2]).sqrt() * 2.0;
            Quat::new_normalize(
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
            )
        } else {
            let s = (1.0 + m[2][2] - m[0][0] - m[1][1]).sqrt() * 2.0;
            Quat::new_normalize(
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
            )
        }
    }

    /// Log map: rotation vector (axis times angle) with angle in [0, π].
    pub fn log(self) -> Vec3 {
        let q = if self.w < 0.0 { -self } else { self };
        let v = q.vector();
        let s = v.norm();
        if s < 1e-12 {
            return v * 2.0;
        }
        let angle = 2.0 * s.atan2(q.w);
        v * (angle / s)
    }

    pub fn angle_to(self, o: Quat) -> f64 {
        (self.inverse() * o).log().norm()
    }

    /// Integrate an angular velocity (world frame) over `dt`.
    pub fn integrate(self, omega: Vec3, dt: f64) -> Quat {
        (Quat::from_scaled_axis(omega * dt) * self).normalized()
    }
}

impl Neg for Quat {
    type Output = Quat;
    fn neg(self) -> Quat {
        Quat::from_wxyz(-self.w, -self.x, -self.y, -self.z)
    }
}

impl Mul for Quat {
    type Output = Quat;
    fn mul(self, o: Quat) -> Quat {
        Quat::from_wxyz(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }
}

/// Shortest-arc spherical interpolation. `s` is clamped to [0, 1].
pub fn quat_slerp(q0: Quat, q1: Quat, s: f64) -> Quat {
    let s = s.clamp(0.0, 1.0);
    let mut q1 = q1;
    let mut d = q0.dot(q1);
    if d < 0.0 {
        q1 = -q1;
        d = -d;
    }
    if s == 0.0 {
        return q0;
    }
    if s == 1.0 {
        return q1;
    }
    if d > 0.9995 {
        let q = Quat::from_wxyz(
            q0.w + s * (q1.w - q0.w),
            q0.x + s * (q1.x - q0.x),
            q0.y + s * (q1.y - q0.y),
            q0.z + s * (q1.z - q0.z),
        );
        return q.normalized();
    }
    let theta = d.clamp(-1.0, 1.0).acos();
    let sin_t = theta.sin();
    let a = ((1.0 - s) * theta).sin() / sin_t;
    let b = (s * theta).sin() / sin_t;
    Quat::from_wxyz(
        a * q0.w + b * q1.w,
        a * q0.x + b * q1.x,
        a * q0.y + b * q1.y,
        a * q0.z + b * q1.z,
    )
    .normalized()
}

/// Rigid transform. Maps points of the child frame into the parent frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub translation: Vec3,
    pub rotation: Quat,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::IDENTITY
    }
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        translation: Vec3::ZERO,
        rotation: Quat::IDENTITY,
    };

    pub fn new(translation: Vec3, rotation: Quat) -> Self {
        Self {
            translation,
            rotation: rotation.normalized(),
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(t, Quat::IDENTITY)
    }

    pub fn from_rotation(q: Quat) -> Self {
        Self::new(Vec3::ZERO, q)
    }

    pub fn compose(&self, b: &Pose) -> Pose {
        pose_compose(self, b)
    }

    pub fn inverse(&self) -> Pose {
        pose_inverse(self)
    }

    pub fn transform_point(&self, x: Vec3) -> Vec3 {
        transform_point(self, x)
    }

    pub fn transform_vector(&self, v: Vec3) -> Vec3 {
        self.rotation.rotate(v)
    }

    pub fn is_finite(&self) -> bool {
        self.translation.is_finite() && self.rotation.w.is_finite() && self.rotation.vector().is_finite()
    }
}

/// `a ∘ b`: apply `b`, then `a`.
pub fn pose_compose(a: &Pose, b: &Pose) -> Pose {
    Pose {
        translation: a.translation + a.rotation.rotate(b.translation),
        rotation: (a.rotation * b.rotation).normalized(),
    }
}

pub fn pose_inverse(p: &Pose) -> Pose {
    let r = p.rotation.inverse();
    Pose {
        translation: -r.rotate(p.translation),
        rotation: r,
    }
}

pub fn transform_point(p: &Pose, x: Vec3) -> Vec3 {
    p.rotation.rotate(x) + p.translation
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub linear: Vec3,
    pub angular: Vec3,
}

impl Twist {
    pub const ZERO: Twist = Twist {
        linear: Vec3::ZERO,
        angular: Vec3::ZERO,
    };

    pub fn new(linear: Vec3, angular: Vec3) -> Self {
        Self { linear, angular }
    }

    /// Velocity of the material point at `r` relative to the reference point.
    pub fn point_velocity(&self, r: Vec3) -> Vec3 {
        self.linear + self.angular.cross(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub force: Vec3,
    pub torque: Vec3,
}

impl Wrench {
    pub const ZERO: Wrench = Wrench {
        force: Vec3::ZERO,
        torque: Vec3::ZERO,
    };

    pub fn new(force: Vec3, torque: Vec3) -> Self {
        Self { force, torque }
    }

    /// Power delivered against a twist referenced at the same point and frame.
    pub fn power(&self, v: &Twist) -> f64 {
        self.force.dot(v.linear) + self.torque.dot(v.angular)
    }
}

impl Add for Wrench {
    type Output = Wrench;
    fn add(self, o: Wrench) -> Wrench {
        Wrench::new(self.force + o.force, self.torque + o.torque)
    }
}

impl AddAssign for Wrench {
    fn add_assign(&mut self, o: Wrench) {
        *self = *self + o;
    }
}

impl Neg for Wrench {
    type Output = Wrench;
    fn neg(self) -> Wrench {
        Wrench::new(-self.force, -self.torque)
    }
}

/// Re-express a wrench through `p`, which maps source coordinates to target
/// coordinates: `f' = R f`, `τ' = R τ + t × (R f)`.
pub fn transform_wrench(p: &Pose, w: &Wrench) -> Wrench {
    let f = p.rotation.rotate(w.force);
    let tau = p.rotation.rotate(w.torque) + p.translation.cross(f);
    Wrench::new(f, tau)
}

/// Twist counterpart of [`transform_wrench`]: `ω' = R ω`, `v' = R v + t × (R ω)`.
pub fn transform_twist(p: &Pose, v: &Twist) -> Twist {
    let w = p.rotation.rotate(v.angular);
    let lin = p.rotation.rotate(v.linear) + p.translation.cross(w);
    Twist::new(lin, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn assert_vec_close(a: Vec3, b: Vec3, tol: f64) {
        assert!((a - b).max_abs() <= tol, "{a:?} vs {b:?}");
    }

    fn assert_pose_identity(p: &Pose, tol: f64) {
        assert!(p.translation.max_abs() <= tol, "{p:?}");
        assert!(p.rotation.vector().max_abs() <= tol, "{p:?}");
        assert!((p.rotation.w.abs() - 1.0).abs() <= tol, "{p:?}");
    }

    #[test]
    fn compose_identity_is_neutral() {
        let p = Pose::new(Vec3::new(0.3, -1.0, 2.0), Quat::from_rpy(0.1, 0.2, 0.3));
        let out = pose_compose(&Pose::IDENTITY, &p);
        assert_vec_close(out.translation, p.translation, 1e-15);
        assert!((out.rotation.dot(p.rotation) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn compose_rz90_twice_matches_matrix_product() {
        let a = Pose::from_rotation(Quat::rz(FRAC_PI_2));
        let out = pose_compose(&a, &a);
        let ma = a.rotation.to_matrix();
        let expected = mat3_mul(&ma, &ma);
        let got = out.rotation.to_matrix();
        for i in 0..3 {
            for j in 0..3 {
                assert!((got[i][j] - expected[i][j]).abs() < 1e-12);
            }
        }
        // Rz(180°): x → -x
        assert_vec_close(out.transform_point(Vec3::X), -Vec3::X, 1e-12);
    }

    #[test]
    fn inverse_of_translation() {
        let p = Pose::from_translation(Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(pose_inverse(&p).translation, Vec3::new(-1.0, -2.0, -3.0));
        assert_pose_identity(&pose_inverse(&Pose::IDENTITY), 0.0);
    }

    #[test]
    fn transform_point_cases() {
        assert_eq!(transform_point(&Pose::IDENTITY, Vec3::X), Vec3::X);
        let t = Pose::from_translation(Vec3::Z);
        assert_eq!(transform_point(&t, Vec3::ZERO), Vec3::Z);
        let r = Pose::from_rotation(Quat::rz(FRAC_PI_2));
        assert_vec_close(transform_point(&r, Vec3::X), Vec3::Y, 1e-12);
    }

    #[test]
    fn wrench_lever_arm() {
        let w = Wrench::new(Vec3::new(0.0, 0.0, -10.0), Vec3::ZERO);
        let p = Pose::from_translation(Vec3::X);
        let out = transform_wrench(&p, &w);
        assert_vec_close(out.force, w.force, 1e-15);
        // (1,0,0) × (0,0,-10) = (0,10,0)
        assert_vec_close(out.torque, Vec3::new(0.0, 10.0, 0.0), 1e-12);
        let unchanged = transform_wrench(&Pose::IDENTITY, &w);
        assert_eq!(unchanged, w);
        let p = Pose::new(Vec3::new(1.0, 2.0, 3.0), Quat::from_rpy(0.4, 0.5, 0.6));
        assert_eq!(transform_wrench(&p, &Wrench::ZERO), Wrench::ZERO);
    }

    #[test]
    fn slerp_endpoints_and_midpoint() {
        let q0 = Quat::IDENTITY;
        let q1 = Quat::rz(FRAC_PI_2);
        assert_eq!(quat_slerp(q0, q1, 0.0), q0);
        assert_eq!(quat_slerp(q0, q1, 1.0), q1);
        let mid = quat_slerp(q0, q1, 0.5);
        // axis-angle oracle: Rz(45°) = (cos 22.5°, 0, 0, sin 22.5°)
        let half = FRAC_PI_4 / 2.0;
        assert!((mid.w - half.cos()).abs() < 1e-9);
        assert!((mid.z - half.sin()).abs() < 1e-9);
        assert!(mid.x.abs() < 1e-9 && mid.y.abs() < 1e-9);
    }

    #[test]
    fn slerp_takes_shortest_arc_for_antipodal_sign() {
        let q0 = Quat::IDENTITY;
        let q1 = -Quat::rz(0.2);
        let mid = quat_slerp(q0, q1, 0.5);
        assert!(mid.angle_to(Quat::rz(0.1)) < 1e-9);
    }

    #[test]
    fn log_roundtrip() {
        let v = Vec3::new(0.3, -0.2, 1.1);
        let q = Quat::from_scaled_axis(v);
        assert_vec_close(q.log(), v, 1e-12);
        assert!((Quat::rz(PI).log().norm() - PI).abs() < 1e-12);
    }

    #[test]
    fn matrix_roundtrip() {
        for q in [
            Quat::from_rpy(0.1, 0.2, 0.3),
            Quat::from_rpy(3.0, -1.2, 2.0),
            Quat::rz(PI),
            Quat::from_axis_angle(Vec3::X, PI),
        ] {
            let back = Quat::from_matrix(&q.to_matrix());
            assert!(back.dot(q).abs() > 1.0 - 1e-12);
        }
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        (prop::array::uniform3(-5.0..5.0f64), prop::array::uniform4(-1.0..1.0f64))
            .prop_filter("nonzero quaternion", |(_, q)| {
                q.iter().map(|v| v * v).sum::<f64>() > 1e-3
            })
            .prop_map(|(t, q)| Pose::new(Vec3::from_array(t), Quat::new_normalize(q[0], q[1], q[2], q[3])))
    }

    fn arb_vec() -> impl Strategy<Value = Vec3> {
        prop::array::uniform3(-5.0..5.0f64).prop_map(Vec3::from_array)
    }

    proptest! {
        #[test]
        fn inverse_composes_to_identity(p in arb_pose()) {
            assert_pose_identity(&pose_compose(&pose_inverse(&p), &p), 1e-12);
            assert_pose_identity(&pose_compose(&p, &pose_inverse(&p)), 1e-12);
        }

        #[test]
        fn composition_acts_like_sequential_application(a in arb_pose(), b in arb_pose(), x in arb_vec()) {
            let lhs = transform_point(&pose_compose(&a, &b), x);
            let rhs = transform_point(&a, transform_point(&b, x));
            prop_assert!((lhs - rhs).max_abs() <= 1e-10);
        }

        #[test]
        fn composition_is_associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let l = pose_compose(&pose_compose(&a, &b), &c);
            let r = pose_compose(&a, &pose_compose(&b, &c));
            prop_assert!((l.translation - r.translation).max_abs() <= 1e-12 * 50.0);
            prop_assert!(l.rotation.dot(r.rotation).abs() >= 1.0 - 1e-12);
        }

        #[test]
        fn wrench_power_is_frame_invariant(p in arb_pose(), f in arb_vec(), tau in arb_vec(), v in arb_vec(), w in arb_vec()) {
            let wr = Wrench::new(f, tau);
            let tw = Twist::new(v, w);
            let before = wr.power(&tw);
            let after = transform_wrench(&p, &wr).power(&transform_twist(&p, &tw));
            prop_assert!((before - after).abs() <= 1e-10 * (1.0 + before.abs()));
        }

        #[test]
        fn slerp_stays_unit(a in arb_pose(), b in arb_pose(), s in 0.0..1.0f64) {
            let q = quat_slerp(a.rotation, b.rotation, s);
            prop_assert!((q.norm() - 1.0).abs() <= 1e-9);
        }
    }
}
