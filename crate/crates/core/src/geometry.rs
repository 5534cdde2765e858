//! Rigid transforms, plane parameterizations and frame changes.
//!
//! Poses live on SO(3) × R³. The 6-vector tangent is ordered `[ω; ρ]`
//! (rotation first, then translation) and retraction is by right
//! multiplication: `T ⊕ δ = T ∘ exp(δ)`.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3, Vector6};

use crate::math;

pub type Vec3 = Vector3<f64>;
pub type Vec6 = Vector6<f64>;
pub type Mat3 = Matrix3<f64>;

/// Rigid transform `p_parent = R · p_child + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

/// Normalizes `(w, x, y, z)` to unit length with `w >= 0`.
fn unit_quaternion(w: f64, x: f64, y: f64, z: f64) -> UnitQuaternion<f64> {
    let n = math::sqrt(w * w + x * x + y * y + z * z);
    // already unit: keep the bits so stored quaternions reload unchanged
    let inv = if math::abs(n - 1.0) <= 4.0 * f64::EPSILON { 1.0 } else { 1.0 / n };
    let s = if w < 0.0 { -inv } else { inv };
    UnitQuaternion::new_unchecked(Quaternion::new(w * s, x * s, y * s, z * s))
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Builds a pose from a (not necessarily normalized) quaternion `(w, x, y, z)`.
    pub fn from_quaternion(w: f64, x: f64, y: f64, z: f64, translation: Vec3) -> Self {
        Self {
            rotation: unit_quaternion(w, x, y, z),
            translation,
        }
    }

    pub fn from_rotation(rotation: UnitQuaternion<f64>, translation: Vec3) -> Self {
        let q = rotation.quaternion();
        Self::from_quaternion(q.w, q.i, q.j, q.k, translation)
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation,
        }
    }

    /// Builds a pose whose rotation maps the local axes onto the given orthonormal columns.
    pub fn from_axes(x: Vec3, y: Vec3, z: Vec3, translation: Vec3) -> Self {
        let m = Mat3::from_columns(&[x, y, z]);
        Self::from_rotation(rotation_from_matrix(&m), translation)
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    /// Quaternion as `(w, x, y, z)`.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        let q = self.rotation * other.rotation;
        let t = self.translation + self.rotation * other.translation;
        Pose::from_rotation(q, t)
    }

    pub fn inverse(&self) -> Pose {
        let qi = self.rotation.inverse();
        Pose::from_rotation(qi, -(qi * self.translation))
    }

    /// Relative transform `self⁻¹ ∘ other`.
    pub fn between(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.inverse() * (p - self.translation)
    }

    /// Tangent coordinates `[ω; ρ]`: rotation vector, then translation.
    pub fn log(&self) -> Vec6 {
        let w = so3_log(&self.rotation);
        Vec6::new(
            w.x,
            w.y,
            w.z,
            self.translation.x,
            self.translation.y,
            self.translation.z,
        )
    }

    pub fn exp(v: &Vec6) -> Pose {
        let w = Vec3::new(v[0], v[1], v[2]);
        Pose {
            rotation: so3_exp(&w),
            translation: Vec3::new(v[3], v[4], v[5]),
        }
    }

    /// Right retraction `self ∘ exp(δ)`.
    pub fn retract(&self, delta: &Vec6) -> Pose {
        self.compose(&Pose::exp(delta))
    }

    /// Local axis `i` (0 = x, 1 = y, 2 = z) expressed in the parent frame.
    pub fn axis(&self, i: usize) -> Vec3 {
        let mut e = Vec3::zeros();
        e[i] = 1.0;
        self.rotation * e
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        so3_log(&self.rotation).norm()
    }

    pub fn is_finite(&self) -> bool {
        let [w, x, y, z] = self.quaternion_wxyz();
        [w, x, y, z].iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite())
    }
}

impl core::ops::Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl core::ops::Mul<&Pose> for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

/// Shepperd's method; the matrix must be a rotation.
pub fn rotation_from_matrix(m: &Mat3) -> UnitQuaternion<f64> {
    let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
    let (w, x, y, z);
    if tr > 0.0 {
        let s = math::sqrt(tr + 1.0) * 2.0;
        w = 0.25 * s;
        x = (m[(2, 1)] - m[(1, 2)]) / s;
        y = (m[(0, 2)] - m[(2, 0)]) / s;
        z = (m[(1, 0)] - m[(0, 1)]) / s;
    } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
        let s = math::sqrt(1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]) * 2.0;
        w = (m[(2, 1)] - m[(1, 2)]) / s;
        x = 0.25 * s;
        y = (m[(0, 1)] + m[(1, 0)]) / s;
        z = (m[(0, 2)] + m[(2, 0)]) / s;
    } else if m[(1, 1)] > m[(2, 2)] {
        let s = math::sqrt(1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]) * 2.0;
        w = (m[(0, 2)] - m[(2, 0)]) / s;
        x = (m[(0, 1)] + m[(1, 0)]) / s;
        y = 0.25 * s;
        z = (m[(1, 2)] + m[(2, 1)]) / s;
    } else {
        let s = math::sqrt(1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]) * 2.0;
        w = (m[(1, 0)] - m[(0, 1)]) / s;
        x = (m[(0, 2)] + m[(2, 0)]) / s;
        y = (m[(1, 2)] + m[(2, 1)]) / s;
        z = 0.25 * s;
    }
    unit_quaternion(w, x, y, z)
}

/// Rotation vector of a unit quaternion. Uses `atan2` on the half angle so the
/// branch near π stays well conditioned.
pub fn so3_log(q: &UnitQuaternion<f64>) -> Vec3 {
    let q = q.quaternion();
    let (w, v) = if q.w < 0.0 {
        (-q.w, -q.vector().into_owned())
    } else {
        (q.w, q.vector().into_owned())
    };
    let n = math::sqrt(v.norm_squared());
    if n < 1e-10 {
        // angle ≈ 2n/w; first-order series with the cubic correction
        let scale = 2.0 / w * (1.0 - n * n / (3.0 * w * w));
        return v * scale;
    }
    let angle = 2.0 * math::atan2(n, w);
    v * (angle / n)
}

pub fn so3_exp(w: &Vec3) -> UnitQuaternion<f64> {
    let theta2 = w.norm_squared();
    let theta = math::sqrt(theta2);
    let (re, k) = if theta < 1e-8 {
        (1.0 - theta2 / 8.0, 0.5 - theta2 / 48.0)
    } else {
        let half = 0.5 * theta;
        (math::cos(half), math::sin(half) / theta)
    };
    unit_quaternion(re, w.x * k, w.y * k, w.z * k)
}

pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of the SO(3) right Jacobian at rotation vector `w`.
pub fn so3_right_jacobian_inv(w: &Vec3) -> Mat3 {
    let theta2 = w.norm_squared();
    let k = skew(w);
    let coeff = if theta2 < 1e-8 {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        let theta = math::sqrt(theta2);
        1.0 / theta2 - (1.0 + math::cos(theta)) / (2.0 * theta * math::sin(theta))
    };
    Mat3::identity() + k * 0.5 + k * k * coeff
}

/// Infinite plane `n · p + d = 0` with unit normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub d: f64,
}

impl Plane {
    /// Normalizes `(normal, d)` jointly so the normal has unit length.
    pub fn new(normal: Vec3, d: f64) -> Self {
        let n = math::sqrt(normal.norm_squared());
        Self {
            normal: normal / n,
            d: d / n,
        }
    }

    /// Plane with the given unit normal passing through `point`.
    pub fn through_point(normal: Vec3, point: &Vec3) -> Self {
        let p = Self::new(normal, 0.0);
        Self {
            normal: p.normal,
            d: -p.normal.dot(point),
        }
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) + self.d
    }

    pub fn flipped(&self) -> Self {
        Self {
            normal: -self.normal,
            d: -self.d,
        }
    }

    /// Closest point on the plane to the origin, `-d · n`.
    pub fn foot_point(&self) -> Vec3 {
        self.normal * -self.d
    }

    /// Same point set with `d <= 0`; planes through the origin get a normal
    /// whose first nonzero component is positive.
    pub fn canonical(&self) -> Self {
        if self.d > 0.0 {
            return self.flipped();
        }
        if self.d == 0.0 {
            let first = self.normal.iter().copied().find(|c| *c != 0.0);
            if matches!(first, Some(c) if c < 0.0) {
                return Self {
                    normal: -self.normal,
                    d: 0.0,
                };
            }
        }
        *self
    }

    /// Expresses this plane in the frame whose pose (in this plane's frame) is `t`.
    pub fn transformed(&self, t: &Pose) -> Self {
        Self {
            normal: t.rotation().inverse() * self.normal,
            d: self.d + self.normal.dot(t.translation()),
        }
    }

    /// Plane of a marker board: its local +z axis through its center.
    /// The sign is kept as-is so the normal carries the facing direction.
    pub fn from_marker(pose: &Pose) -> Self {
        let normal = pose.axis(2);
        Self {
            normal,
            d: -normal.dot(pose.translation()),
        }
    }

    /// Angle between the two normals after aligning their signs, in `[0, π/2]`.
    pub fn unsigned_angle_to(&self, other: &Plane) -> f64 {
        math::acos(math::abs(self.normal.dot(&other.normal)))
    }
}

/// Wall state: normal azimuth/elevation plus plane offset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WallAngles {
    pub azimuth: f64,
    pub elevation: f64,
    pub d: f64,
}

impl WallAngles {
    /// Wraps the azimuth into `(-π, π]` and clamps the elevation to `[-π/2, π/2]`.
    pub fn new(azimuth: f64, elevation: f64, d: f64) -> Self {
        use core::f64::consts::FRAC_PI_2;
        Self {
            azimuth: math::wrap_angle(azimuth),
            elevation: elevation.clamp(-FRAC_PI_2, FRAC_PI_2),
            d,
        }
    }

    pub fn normal(&self) -> Vec3 {
        let (st, ct) = (math::sin(self.elevation), math::cos(self.elevation));
        let (sp, cp) = (math::sin(self.azimuth), math::cos(self.azimuth));
        Vec3::new(ct * cp, ct * sp, st)
    }

    /// Partial derivatives of the normal w.r.t. azimuth and elevation.
    pub fn normal_derivatives(&self) -> (Vec3, Vec3) {
        let (st, ct) = (math::sin(self.elevation), math::cos(self.elevation));
        let (sp, cp) = (math::sin(self.azimuth), math::cos(self.azimuth));
        (
            Vec3::new(-ct * sp, ct * cp, 0.0),
            Vec3::new(-st * cp, -st * sp, ct),
        )
    }

    pub fn to_plane(&self) -> Plane {
        Plane {
            normal: self.normal(),
            d: self.d,
        }
    }

    /// Inverse of [`WallAngles::to_plane`]; at the poles (normal = ±z) the azimuth is 0.
    pub fn from_plane(q: &Plane) -> Self {
        let n = &q.normal;
        let horizontal = math::sqrt(n.x * n.x + n.y * n.y);
        let azimuth = if horizontal < 1e-12 {
            0.0
        } else {
            math::atan2(n.y, n.x)
        };
        let elevation = math::atan2(n.z, horizontal);
        Self::new(azimuth, elevation, q.d)
    }

    /// Additive update; the azimuth is re-wrapped and the elevation re-clamped.
    pub fn retract(&self, delta: &Vec3) -> Self {
        Self::new(
            self.azimuth + delta.x,
            self.elevation + delta.y,
            self.d + delta.z,
        )
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.azimuth, self.elevation, self.d]
    }
}

pub fn angles_to_plane(a: &WallAngles) -> Plane {
    a.to_plane()
}

pub fn plane_to_angles(q: &Plane) -> WallAngles {
    WallAngles::from_plane(q)
}

pub fn transform_plane(t: &Pose, q: &Plane) -> Plane {
    q.transformed(t)
}

pub fn plane_from_marker(pose: &Pose) -> Plane {
    Plane::from_marker(pose)
}

pub fn canonicalize_plane(q: &Plane) -> Plane {
    q.canonical()
}

pub fn pose_log(t: &Pose) -> Vec6 {
    t.log()
}

pub fn pose_exp(v: &Vec6) -> Pose {
    Pose::exp(v)
}
