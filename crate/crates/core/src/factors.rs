//! Residuals and analytic Jacobians for every edge of the map graph.
//!
//! Jacobians are taken w.r.t. each variable's local parameterization:
//! poses use the right-perturbation tangent `[ω; ρ]` (6), walls use
//! `(azimuth, elevation, d)` (3), room centers and map points are additive (3).

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector, Matrix2x3, Vector2};

use crate::geometry::{skew, so3_log, so3_right_jacobian_inv, Mat3, Plane, Pose, Vec3, Vec6, WallAngles};
use crate::map::{HierMap, Intrinsics, KeyframeId, MarkerId, PointId, RoomId, WallId, PARALLEL_WALL_TOLERANCE};
use crate::math;

/// Minimum camera-frame depth for a projection to be valid, meters.
pub const MIN_DEPTH: f64 = 1e-6;

/// Below this norm the corridor-center direction is undefined.
pub const DEGENERATE_ROOM_NORM: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum FactorError {
    #[error("point is behind the camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("walls are symmetric about the origin (|k| = {norm}); corridor center undefined")]
    DegenerateRoom { norm: f64 },
    #[error("room walls do not split into two perpendicular parallel pairs")]
    MisclassifiedWalls,
    #[error("variable {0} is missing from the map")]
    MissingVariable(VarId),
    #[error("information matrix must be symmetric positive-definite of size {expected}")]
    InvalidInformation { expected: usize },
}

/// A graph variable, ordered by kind then id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarId {
    Keyframe(KeyframeId),
    Marker(MarkerId),
    Point(PointId),
    Wall(WallId),
    Room(RoomId),
}

impl VarId {
    /// Dimension of the local parameterization.
    pub fn dim(self) -> usize {
        match self {
            VarId::Keyframe(_) | VarId::Marker(_) => 6,
            VarId::Point(_) | VarId::Wall(_) | VarId::Room(_) => 3,
        }
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarId::Keyframe(i) => write!(f, "{i}"),
            VarId::Marker(i) => write!(f, "{i}"),
            VarId::Point(i) => write!(f, "{i}"),
            VarId::Wall(i) => write!(f, "{i}"),
            VarId::Room(i) => write!(f, "{i}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FactorKind {
    Odometry,
    MarkerObs,
    PointProj,
    MarkerWall,
    TwoWallRoom,
    FourWallRoom,
}

impl FactorKind {
    pub fn residual_dim(self) -> usize {
        match self {
            FactorKind::Odometry | FactorKind::MarkerObs => 6,
            FactorKind::PointProj => 2,
            FactorKind::MarkerWall | FactorKind::TwoWallRoom | FactorKind::FourWallRoom => 3,
        }
    }

    /// Wall and room constraints; disabled in baseline runs.
    pub fn is_semantic(self) -> bool {
        matches!(
            self,
            FactorKind::MarkerWall | FactorKind::TwoWallRoom | FactorKind::FourWallRoom
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FactorKind::Odometry => "odometry",
            FactorKind::MarkerObs => "marker_obs",
            FactorKind::PointProj => "point_proj",
            FactorKind::MarkerWall => "marker_wall",
            FactorKind::TwoWallRoom => "room2",
            FactorKind::FourWallRoom => "room4",
        }
    }
}

/// Edge variables plus the kind-specific measurement.
#[derive(Clone, Debug, PartialEq)]
pub enum FactorModel {
    /// `measured` is keyframe `to` expressed in keyframe `from`.
    Odometry {
        from: KeyframeId,
        to: KeyframeId,
        measured: Pose,
    },
    /// `measured` is the marker pose in the camera frame.
    MarkerObs {
        keyframe: KeyframeId,
        marker: MarkerId,
        measured: Pose,
    },
    PointProj {
        keyframe: KeyframeId,
        point: PointId,
        pixel: Vector2<f64>,
        intrinsics: Intrinsics,
    },
    MarkerWall {
        wall: WallId,
        marker: MarkerId,
    },
    TwoWallRoom {
        room: RoomId,
        walls: [WallId; 2],
        marker: MarkerId,
    },
    FourWallRoom {
        room: RoomId,
        /// `[x_a, x_b, y_a, y_b]`
        walls: [WallId; 4],
    },
}

impl FactorModel {
    pub fn kind(&self) -> FactorKind {
        match self {
            FactorModel::Odometry { .. } => FactorKind::Odometry,
            FactorModel::MarkerObs { .. } => FactorKind::MarkerObs,
            FactorModel::PointProj { .. } => FactorKind::PointProj,
            FactorModel::MarkerWall { .. } => FactorKind::MarkerWall,
            FactorModel::TwoWallRoom { .. } => FactorKind::TwoWallRoom,
            FactorModel::FourWallRoom { .. } => FactorKind::FourWallRoom,
        }
    }

    /// Variables in Jacobian-block order.
    pub fn variables(&self) -> Vec<VarId> {
        match self {
            FactorModel::Odometry { from, to, .. } => {
                vec![VarId::Keyframe(*from), VarId::Keyframe(*to)]
            }
            FactorModel::MarkerObs {
                keyframe, marker, ..
            } => vec![VarId::Keyframe(*keyframe), VarId::Marker(*marker)],
            FactorModel::PointProj {
                keyframe, point, ..
            } => vec![VarId::Keyframe(*keyframe), VarId::Point(*point)],
            FactorModel::MarkerWall { wall, marker } => {
                vec![VarId::Wall(*wall), VarId::Marker(*marker)]
            }
            FactorModel::TwoWallRoom {
                room,
                walls,
                marker,
            } => vec![
                VarId::Room(*room),
                VarId::Wall(walls[0]),
                VarId::Wall(walls[1]),
                VarId::Marker(*marker),
            ],
            FactorModel::FourWallRoom { room, walls } => {
                let mut v = vec![VarId::Room(*room)];
                v.extend(walls.iter().map(|w| VarId::Wall(*w)));
                v
            }
        }
    }
}

/// Default information matrices (diagonals), keyed by factor kind.
#[derive(Clone, Debug, PartialEq)]
pub struct InformationDefaults {
    pub odometry: [f64; 6],
    pub marker_obs: [f64; 6],
    pub point_proj: [f64; 2],
    pub marker_wall: [f64; 3],
    pub room: [f64; 3],
}

impl Default for InformationDefaults {
    fn default() -> Self {
        Self {
            odometry: [100.0, 100.0, 100.0, 400.0, 400.0, 400.0],
            marker_obs: [100.0, 100.0, 100.0, 400.0, 400.0, 400.0],
            point_proj: [1.0, 1.0],
            marker_wall: [100.0; 3],
            room: [50.0; 3],
        }
    }
}

impl InformationDefaults {
    pub fn for_kind(&self, kind: FactorKind) -> DMatrix<f64> {
        let diag: &[f64] = match kind {
            FactorKind::Odometry => &self.odometry,
            FactorKind::MarkerObs => &self.marker_obs,
            FactorKind::PointProj => &self.point_proj,
            FactorKind::MarkerWall => &self.marker_wall,
            FactorKind::TwoWallRoom | FactorKind::FourWallRoom => &self.room,
        };
        DMatrix::from_diagonal(&DVector::from_column_slice(diag))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Factor {
    pub model: FactorModel,
    /// Λ, symmetric positive-definite, residual-sized.
    pub information: DMatrix<f64>,
}

/// Residual and one Jacobian block per variable (same order as `variables()`).
#[derive(Clone, Debug)]
pub struct Linearization {
    pub residual: DVector<f64>,
    pub jacobians: Vec<DMatrix<f64>>,
}

impl Factor {
    pub fn new(model: FactorModel, information: DMatrix<f64>) -> Result<Self, FactorError> {
        let n = model.kind().residual_dim();
        if !is_spd(&information, n) {
            return Err(FactorError::InvalidInformation { expected: n });
        }
        Ok(Self { model, information })
    }

    pub fn with_defaults(model: FactorModel, defaults: &InformationDefaults) -> Self {
        let information = defaults.for_kind(model.kind());
        Self { model, information }
    }

    pub fn kind(&self) -> FactorKind {
        self.model.kind()
    }

    pub fn variables(&self) -> Vec<VarId> {
        self.model.variables()
    }

    /// Squared Mahalanobis norm `rᵀ Λ r`.
    pub fn squared_norm(&self, r: &DVector<f64>) -> f64 {
        r.dot(&(&self.information * r))
    }

    pub fn residual(&self, map: &HierMap) -> Result<DVector<f64>, FactorError> {
        Ok(self.linearize_inner(map, false)?.residual)
    }

    pub fn linearize(&self, map: &HierMap) -> Result<Linearization, FactorError> {
        self.linearize_inner(map, true)
    }

    fn linearize_inner(&self, map: &HierMap, jac: bool) -> Result<Linearization, FactorError> {
        match &self.model {
            FactorModel::Odometry { from, to, measured } => {
                let ti = keyframe_pose(map, *from)?;
                let tj = keyframe_pose(map, *to)?;
                Ok(relative_pose_linearization(&ti, &tj, measured, jac))
            }
            FactorModel::MarkerObs {
                keyframe,
                marker,
                measured,
            } => {
                let tk = keyframe_pose(map, *keyframe)?;
                let tm = marker_pose(map, *marker)?;
                Ok(relative_pose_linearization(&tk, &tm, measured, jac))
            }
            FactorModel::PointProj {
                keyframe,
                point,
                pixel,
                intrinsics,
            } => {
                let tk = keyframe_pose(map, *keyframe)?;
                let x = map
                    .point(*point)
                    .ok_or(FactorError::MissingVariable(VarId::Point(*point)))?
                    .position;
                point_proj_linearization(&tk, &x, intrinsics, pixel, jac)
            }
            FactorModel::MarkerWall { wall, marker } => {
                let w = wall_state(map, *wall)?;
                let tm = marker_pose(map, *marker)?;
                Ok(marker_wall_linearization(&w, &tm, jac))
            }
            FactorModel::TwoWallRoom {
                room,
                walls,
                marker,
            } => {
                let center = room_center(map, *room)?;
                let wa = wall_state(map, walls[0])?;
                let wb = wall_state(map, walls[1])?;
                let tm = marker_pose(map, *marker)?;
                two_wall_linearization(&center, &wa, &wb, &tm, jac)
            }
            FactorModel::FourWallRoom { room, walls } => {
                let center = room_center(map, *room)?;
                let mut states = [WallAngles::new(0.0, 0.0, 0.0); 4];
                for (s, w) in states.iter_mut().zip(walls) {
                    *s = wall_state(map, *w)?;
                }
                Ok(four_wall_linearization(&center, &states, jac))
            }
        }
    }
}

fn is_spd(m: &DMatrix<f64>, n: usize) -> bool {
    if m.nrows() != n || m.ncols() != n {
        return false;
    }
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 {
                return false;
            }
        }
    }
    m.clone().cholesky().is_some()
}

fn keyframe_pose(map: &HierMap, id: KeyframeId) -> Result<Pose, FactorError> {
    map.keyframe(id)
        .map(|k| k.pose)
        .ok_or(FactorError::MissingVariable(VarId::Keyframe(id)))
}

fn marker_pose(map: &HierMap, id: MarkerId) -> Result<Pose, FactorError> {
    map.marker(id)
        .map(|m| m.pose)
        .ok_or(FactorError::MissingVariable(VarId::Marker(id)))
}

fn wall_state(map: &HierMap, id: WallId) -> Result<WallAngles, FactorError> {
    map.wall(id)
        .map(|w| w.state)
        .ok_or(FactorError::MissingVariable(VarId::Wall(id)))
}

fn room_center(map: &HierMap, id: RoomId) -> Result<Vec3, FactorError> {
    map.room(id)
        .map(|r| r.center)
        .ok_or(FactorError::MissingVariable(VarId::Room(id)))
}

fn pose_residual(e: &Pose) -> DVector<f64> {
    DVector::from_column_slice(e.log().as_slice())
}

/// `log(Z⁻¹ ∘ A⁻¹ ∘ B)` and its Jacobians w.r.t. `A` and `B`.
fn relative_pose_linearization(a: &Pose, b: &Pose, z: &Pose, jac: bool) -> Linearization {
    let d = a.between(b);
    let e = z.inverse().compose(&d);
    let residual = pose_residual(&e);
    if !jac {
        return Linearization {
            residual,
            jacobians: Vec::new(),
        };
    }
    let phi = so3_log(e.rotation());
    let jr_inv = so3_right_jacobian_inv(&phi);
    let rz_t = z.rotation_matrix().transpose();
    let rd = d.rotation_matrix();
    let re = e.rotation_matrix();

    let mut ja = DMatrix::zeros(6, 6);
    ja.view_mut((0, 0), (3, 3)).copy_from(&(-jr_inv * rd.transpose()));
    ja.view_mut((3, 0), (3, 3))
        .copy_from(&(rz_t * skew(d.translation())));
    ja.view_mut((3, 3), (3, 3)).copy_from(&(-rz_t));

    let mut jb = DMatrix::zeros(6, 6);
    jb.view_mut((0, 0), (3, 3)).copy_from(&jr_inv);
    jb.view_mut((3, 3), (3, 3)).copy_from(&re);

    Linearization {
        residual,
        jacobians: vec![ja, jb],
    }
}

/// `log(Z_ij⁻¹ ∘ T_i⁻¹ ∘ T_j)`; zero iff the measurement is consistent.
pub fn odometry_residual(ti: &Pose, tj: &Pose, z: &Pose) -> Vec6 {
    z.inverse().compose(&ti.between(tj)).log()
}

/// `log(Z⁻¹ ∘ T_kf⁻¹ ∘ T_m)` with `Z` the marker pose measured in the camera.
pub fn marker_obs_residual(t_kf: &Pose, t_m: &Pose, z: &Pose) -> Vec6 {
    z.inverse().compose(&t_kf.between(t_m)).log()
}

pub fn project(p_cam: &Vec3, k: &Intrinsics) -> Result<Vector2<f64>, FactorError> {
    if p_cam.z <= MIN_DEPTH {
        return Err(FactorError::BehindCamera { depth: p_cam.z });
    }
    Ok(Vector2::new(
        k.fx * p_cam.x / p_cam.z + k.cx,
        k.fy * p_cam.y / p_cam.z + k.cy,
    ))
}

/// Pinhole reprojection error `π(T_kf⁻¹ x) − z`, pixels.
pub fn point_proj_residual(
    t_kf: &Pose,
    x: &Vec3,
    k: &Intrinsics,
    z: &Vector2<f64>,
) -> Result<Vector2<f64>, FactorError> {
    Ok(project(&t_kf.inverse_transform_point(x), k)? - z)
}

fn point_proj_linearization(
    t_kf: &Pose,
    x: &Vec3,
    k: &Intrinsics,
    z: &Vector2<f64>,
    jac: bool,
) -> Result<Linearization, FactorError> {
    let pc = t_kf.inverse_transform_point(x);
    let r = project(&pc, k)? - z;
    let residual = DVector::from_column_slice(r.as_slice());
    if !jac {
        return Ok(Linearization {
            residual,
            jacobians: Vec::new(),
        });
    }
    let iz = 1.0 / pc.z;
    let jp = Matrix2x3::new(
        k.fx * iz,
        0.0,
        -k.fx * pc.x * iz * iz,
        0.0,
        k.fy * iz,
        -k.fy * pc.y * iz * iz,
    );
    let mut jk = DMatrix::zeros(2, 6);
    jk.view_mut((0, 0), (2, 3)).copy_from(&(jp * skew(&pc)));
    jk.view_mut((0, 3), (2, 3)).copy_from(&(-jp));
    let jx = jp * t_kf.rotation_matrix().transpose();
    Ok(Linearization {
        residual,
        jacobians: vec![jk, DMatrix::from_column_slice(2, 3, jx.as_slice())],
    })
}

/// Wall plane with its normal flipped, if needed, to agree with the marker's +z.
fn aligned_sign(n: &Vec3, t_m: &Pose) -> f64 {
    if n.dot(&t_m.axis(2)) < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Tangential components of the wall normal in the marker frame, then the
/// signed marker-center-to-wall distance. Zero iff the marker lies on the
/// wall with its board parallel to it.
pub fn marker_wall_residual(w: &WallAngles, t_m: &Pose) -> Vec3 {
    let q = w.to_plane();
    let s = aligned_sign(&q.normal, t_m);
    let qm = Plane {
        normal: q.normal * s,
        d: q.d * s,
    }
    .transformed(t_m);
    Vec3::new(qm.normal.x, qm.normal.y, qm.d)
}

fn marker_wall_linearization(w: &WallAngles, t_m: &Pose, jac: bool) -> Linearization {
    let r = marker_wall_residual(w, t_m);
    let residual = DVector::from_column_slice(r.as_slice());
    if !jac {
        return Linearization {
            residual,
            jacobians: Vec::new(),
        };
    }
    let n = w.normal();
    let s = aligned_sign(&n, t_m);
    let rm_t = t_m.rotation_matrix().transpose();
    let t = t_m.translation();
    let (n_phi, n_theta) = w.normal_derivatives();
    let mut jw = DMatrix::zeros(3, 3);
    for (col, dn) in [(0, n_phi), (1, n_theta)] {
        let dn_m = rm_t * dn * s;
        jw[(0, col)] = dn_m.x;
        jw[(1, col)] = dn_m.y;
        jw[(2, col)] = s * dn.dot(t);
    }
    jw[(2, 2)] = s;

    let n_m = rm_t * n * s;
    let nx = skew(&n_m);
    let mut jm = DMatrix::zeros(3, 6);
    for c in 0..3 {
        jm[(0, c)] = nx[(0, c)];
        jm[(1, c)] = nx[(1, c)];
        jm[(2, 3 + c)] = n_m[c];
    }
    Linearization {
        residual,
        jacobians: vec![jw, jm],
    }
}

/// `½(|d_a| n_a + |d_b| n_b)` on canonical planes: the midpoint of the two
/// foot points, independent of argument order and of each plane's sign.
pub fn wall_pair_midpoint(a: &Plane, b: &Plane) -> Vec3 {
    let (a, b) = (a.canonical(), b.canonical());
    (a.normal * math::abs(a.d) + b.normal * math::abs(b.d)) * 0.5
}

/// Corridor center: midpoint between the walls along their shared normal,
/// with the remaining coordinates taken from the marker center `c`.
pub fn two_wall_room_center(a: &Plane, b: &Plane, c: &Vec3) -> Result<Vec3, FactorError> {
    let k = wall_pair_midpoint(a, b);
    let norm = math::sqrt(k.norm_squared());
    if norm < DEGENERATE_ROOM_NORM {
        return Err(FactorError::DegenerateRoom { norm });
    }
    let kh = k / norm;
    Ok(k + (c - kh * c.dot(&kh)))
}

pub fn two_wall_room_residual(
    center: &Vec3,
    a: &WallAngles,
    b: &WallAngles,
    c: &Vec3,
) -> Result<Vec3, FactorError> {
    Ok(center - two_wall_room_center(&a.to_plane(), &b.to_plane(), c)?)
}

/// `∂k/∂(φ, θ, d)` for `k = −½ d n(φ, θ)`, this wall's share of the pair midpoint.
fn midpoint_wall_jacobian(w: &WallAngles) -> Mat3 {
    let (n_phi, n_theta) = w.normal_derivatives();
    Mat3::from_columns(&[n_phi * (-0.5 * w.d), n_theta * (-0.5 * w.d), w.normal() * -0.5])
}

/// Partials of the corridor center w.r.t. the pair midpoint `k` and the marker center `c`.
pub fn two_wall_center_jacobians(k: &Vec3, c: &Vec3) -> (Mat3, Mat3) {
    let norm = math::sqrt(k.norm_squared());
    let kh = k / norm;
    let proj = Mat3::identity() - kh * kh.transpose();
    let d_k = Mat3::identity() - (kh * c.transpose() + Mat3::identity() * c.dot(&kh)) * proj / norm;
    (d_k, proj)
}

fn two_wall_linearization(
    center: &Vec3,
    wa: &WallAngles,
    wb: &WallAngles,
    t_m: &Pose,
    jac: bool,
) -> Result<Linearization, FactorError> {
    let c = *t_m.translation();
    let r = two_wall_room_residual(center, wa, wb, &c)?;
    let residual = DVector::from_column_slice(r.as_slice());
    if !jac {
        return Ok(Linearization {
            residual,
            jacobians: Vec::new(),
        });
    }
    let k = wall_pair_midpoint(&wa.to_plane(), &wb.to_plane());
    let (d_k, d_c) = two_wall_center_jacobians(&k, &c);
    let ja = -(d_k * midpoint_wall_jacobian(wa));
    let jb = -(d_k * midpoint_wall_jacobian(wb));
    let mut jm = DMatrix::zeros(3, 6);
    jm.view_mut((0, 3), (3, 3))
        .copy_from(&(-(d_c * t_m.rotation_matrix())));
    Ok(Linearization {
        residual,
        jacobians: vec![
            DMatrix::identity(3, 3),
            to_dmatrix(&ja),
            to_dmatrix(&jb),
            jm,
        ],
    })
}

/// Center of a room bounded by two perpendicular pairs of parallel walls.
/// Checks that each pair is parallel and the pairs are perpendicular (10° each).
pub fn four_wall_room_center(
    xa: &Plane,
    xb: &Plane,
    ya: &Plane,
    yb: &Plane,
) -> Result<Vec3, FactorError> {
    let tol = PARALLEL_WALL_TOLERANCE;
    let perpendicular = core::f64::consts::FRAC_PI_2 - tol;
    if xa.unsigned_angle_to(xb) >= tol
        || ya.unsigned_angle_to(yb) >= tol
        || xa.unsigned_angle_to(ya) <= perpendicular
    {
        return Err(FactorError::MisclassifiedWalls);
    }
    Ok(four_wall_center_unchecked(xa, xb, ya, yb))
}

fn four_wall_center_unchecked(xa: &Plane, xb: &Plane, ya: &Plane, yb: &Plane) -> Vec3 {
    wall_pair_midpoint(xa, xb) + wall_pair_midpoint(ya, yb)
}

pub fn four_wall_room_residual(center: &Vec3, walls: &[WallAngles; 4]) -> Result<Vec3, FactorError> {
    let p = walls.map(|w| w.to_plane());
    Ok(center - four_wall_room_center(&p[0], &p[1], &p[2], &p[3])?)
}

fn four_wall_linearization(center: &Vec3, walls: &[WallAngles; 4], jac: bool) -> Linearization {
    let p = walls.map(|w| w.to_plane());
    let r = center - four_wall_center_unchecked(&p[0], &p[1], &p[2], &p[3]);
    let residual = DVector::from_column_slice(r.as_slice());
    if !jac {
        return Linearization {
            residual,
            jacobians: Vec::new(),
        };
    }
    let mut jacobians = vec![DMatrix::identity(3, 3)];
    jacobians.extend(walls.iter().map(|w| to_dmatrix(&-midpoint_wall_jacobian(w))));
    Linearization {
        residual,
        jacobians,
    }
}

fn to_dmatrix(m: &Mat3) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::WallAngles;
    use crate::map::Keyframe;
    use approx::assert_relative_eq;
    use core::f64::consts::PI;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wall_x(x: f64) -> Plane {
        Plane::new(Vec3::x(), -x).canonical()
    }

    fn wall_y(y: f64) -> Plane {
        Plane::new(Vec3::y(), -y).canonical()
    }

    #[test]
    fn odometry_consistent_is_zero() {
        let ti = Pose::exp(&Vec6::new(0.1, -0.2, 0.3, 1.0, 2.0, 3.0));
        let z = Pose::exp(&Vec6::new(0.05, 0.0, -0.1, 0.5, 0.0, 0.1));
        let tj = ti.compose(&z);
        assert!(odometry_residual(&ti, &tj, &z).norm() < 1e-12);
    }

    #[test]
    fn odometry_small_translation() {
        let ti = Pose::exp(&Vec6::new(0.0, 0.0, 0.0, 1.0, 2.0, 3.0));
        let tj = Pose::from_translation(ti.translation() + Vec3::new(1e-3, 0.0, 0.0));
        let r = odometry_residual(&ti, &tj, &Pose::identity());
        assert_relative_eq!(
            r,
            Vec6::new(0.0, 0.0, 0.0, 1e-3, 0.0, 0.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn odometry_perturbation_matches_tangent() {
        let ti = Pose::exp(&Vec6::new(0.2, 0.1, -0.4, 1.0, -1.0, 0.5));
        let z = Pose::exp(&Vec6::new(-0.1, 0.3, 0.2, 0.4, 0.2, -0.3));
        let delta = Vec6::new(1e-5, -2e-5, 3e-5, 4e-5, -1e-5, 2e-5);
        let tj = ti.compose(&z).retract(&delta);
        let r = odometry_residual(&ti, &tj, &z);
        assert!((r - delta).norm() < 1e-9);
    }

    #[test]
    fn marker_obs_examples() {
        let tk = Pose::exp(&Vec6::new(0.3, -0.1, 0.2, 0.0, 1.0, 0.5));
        let z = Pose::exp(&Vec6::new(0.0, 0.2, 0.0, 0.1, 0.0, 2.0));
        let tm = tk.compose(&z);
        assert!(marker_obs_residual(&tk, &tm, &z).norm() < 1e-12);
        // shift 1 cm along camera x
        let shifted = Pose::from_rotation(*tm.rotation(), tm.translation() + tk.axis(0) * 0.01);
        let r = marker_obs_residual(&tk, &shifted, &z);
        assert_relative_eq!(Vec3::new(r[3], r[4], r[5]).norm(), 0.01, epsilon = 1e-12);
        assert!(Vec3::new(r[0], r[1], r[2]).norm() < 1e-12);
    }

    #[test]
    fn point_projection_examples() {
        let k = Intrinsics {
            fx: 500.0,
            fy: 500.0,
            cx: 320.0,
            cy: 240.0,
        };
        let r = point_proj_residual(
            &Pose::identity(),
            &Vec3::new(0.0, 0.0, 3.0),
            &k,
            &Vector2::new(320.0, 240.0),
        )
        .unwrap();
        assert_eq!(r, Vector2::zeros());
        let r = point_proj_residual(
            &Pose::identity(),
            &Vec3::new(0.1, 0.0, 1.0),
            &k,
            &Vector2::new(370.0, 240.0),
        )
        .unwrap();
        assert_relative_eq!(r, Vector2::zeros(), epsilon = 1e-12);
        let err = point_proj_residual(
            &Pose::identity(),
            &Vec3::new(0.1, 0.0, -1.0),
            &k,
            &Vector2::zeros(),
        );
        assert!(matches!(err, Err(FactorError::BehindCamera { .. })));
        assert!(point_proj_residual(&Pose::identity(), &Vec3::zeros(), &k, &Vector2::zeros()).is_err());
    }

    /// Marker on the plane x = 2, board facing -x, at height 1.2.
    fn marker_on_x_wall() -> (WallAngles, Pose) {
        let w = WallAngles::from_plane(&Plane::new(Vec3::x(), -2.0));
        let pose = Pose::from_axes(-Vec3::y(), Vec3::z(), -Vec3::x(), Vec3::new(2.0, 0.7, 1.2));
        (w, pose)
    }

    #[test]
    fn marker_wall_zero_on_wall() {
        let (w, pose) = marker_on_x_wall();
        assert!(marker_wall_residual(&w, &pose).norm() < 1e-15);
    }

    #[test]
    fn marker_wall_lift_along_normal() {
        let (w, pose) = marker_on_x_wall();
        let lifted = Pose::from_rotation(*pose.rotation(), pose.translation() + pose.axis(2) * 0.1);
        let r = marker_wall_residual(&w, &lifted);
        assert_relative_eq!(r, Vec3::new(0.0, 0.0, 0.1), epsilon = 1e-12);
    }

    #[test]
    fn marker_wall_tilt_about_local_x() {
        let (w, pose) = marker_on_x_wall();
        let a = 5f64.to_radians();
        let tilted = pose.compose(&Pose::exp(&Vec6::new(a, 0.0, 0.0, 0.0, 0.0, 0.0)));
        let r = marker_wall_residual(&w, &tilted);
        assert_relative_eq!(r, Vec3::new(0.0, a.sin(), 0.0), epsilon = 1e-12);
    }

    #[test]
    fn marker_wall_zero_set_characterization() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let w = WallAngles::new(rng.random_range(-PI..PI), rng.random_range(-0.3..0.3), rng.random_range(-5.0..5.0));
            let q = w.to_plane();
            let helper = if q.normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            let u = q.normal.cross(&helper).normalize();
            let v = q.normal.cross(&u);
            let p = q.foot_point() + u * rng.random_range(-3.0..3.0) + v * rng.random_range(-3.0..3.0);
            let spin = rng.random_range(-PI..PI);
            let facing = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let z = q.normal * facing;
            let x = u * spin.cos() + v * spin.sin();
            let pose = Pose::from_axes(x, z.cross(&x), z, p);
            assert!(marker_wall_residual(&w, &pose).norm() < 1e-12);

            // off the plane, or tilted: nonzero
            let off = Pose::from_rotation(*pose.rotation(), p + q.normal * 0.05);
            assert!(marker_wall_residual(&w, &off).norm() > 0.04);
            let tilted = pose.compose(&Pose::exp(&Vec6::new(0.0, 0.05, 0.0, 0.0, 0.0, 0.0)));
            assert!(marker_wall_residual(&w, &tilted).norm() > 0.04);
        }
    }

    #[test]
    fn two_wall_center_examples() {
        let c = two_wall_room_center(&wall_x(1.0), &wall_x(5.0), &Vec3::new(2.0, 7.0, 1.0)).unwrap();
        assert_relative_eq!(c, Vec3::new(3.0, 7.0, 1.0), epsilon = 1e-12);
        let c = two_wall_room_center(&wall_x(-1.0), &wall_x(5.0), &Vec3::new(0.0, 4.0, 0.0)).unwrap();
        assert_relative_eq!(c, Vec3::new(2.0, 4.0, 0.0), epsilon = 1e-12);
        let c = two_wall_room_center(&wall_y(0.0), &wall_y(6.0), &Vec3::new(3.0, 2.0, 1.0)).unwrap();
        assert_relative_eq!(c, Vec3::new(3.0, 3.0, 1.0), epsilon = 1e-12);
    }

    #[test]
    fn two_wall_center_ignores_plane_sign_and_order() {
        let c = Vec3::new(0.5, 2.0, 1.0);
        let a = Plane::new(Vec3::x(), -1.0);
        let b = Plane::new(-Vec3::x(), 5.0);
        let ref_c = two_wall_room_center(&a, &b, &c).unwrap();
        assert_eq!(two_wall_room_center(&b, &a, &c).unwrap(), ref_c);
        assert_relative_eq!(
            two_wall_room_center(&a.flipped(), &b.flipped(), &c).unwrap(),
            ref_c,
            epsilon = 1e-15
        );
    }

    #[test]
    fn symmetric_corridor_is_degenerate() {
        let err = two_wall_room_center(&wall_x(-2.0), &wall_x(2.0), &Vec3::new(0.0, 1.0, 0.0));
        assert!(matches!(err, Err(FactorError::DegenerateRoom { .. })));
    }

    #[test]
    fn two_wall_residual_examples() {
        let a = WallAngles::from_plane(&wall_x(1.0));
        let b = WallAngles::from_plane(&wall_x(5.0));
        let c = Vec3::new(2.0, 7.0, 1.0);
        let center = two_wall_room_center(&a.to_plane(), &b.to_plane(), &c).unwrap();
        assert!(two_wall_room_residual(&center, &a, &b, &c).unwrap().norm() < 1e-15);
        let r = two_wall_room_residual(&(center + Vec3::new(0.1, 0.0, 0.0)), &a, &b, &c).unwrap();
        assert_relative_eq!(r, Vec3::new(0.1, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn four_wall_center_examples() {
        let c = four_wall_room_center(&wall_x(0.0), &wall_x(4.0), &wall_y(0.0), &wall_y(6.0)).unwrap();
        assert_relative_eq!(c, Vec3::new(2.0, 3.0, 0.0), epsilon = 1e-12);
        let c = four_wall_room_center(&wall_x(-2.5), &wall_x(2.5), &wall_y(-1.5), &wall_y(1.5)).unwrap();
        assert_relative_eq!(c, Vec3::zeros(), epsilon = 1e-12);
        let c2 = four_wall_room_center(&wall_x(4.0), &wall_x(0.0), &wall_y(0.0), &wall_y(6.0)).unwrap();
        assert_eq!(c2, Vec3::new(2.0, 3.0, 0.0));
        let swapped = four_wall_room_center(&wall_y(0.0), &wall_y(6.0), &wall_x(0.0), &wall_x(4.0)).unwrap();
        assert_relative_eq!(swapped, c2, epsilon = 1e-15);
    }

    #[test]
    fn four_wall_rejects_misclassified() {
        let err = four_wall_room_center(&wall_x(0.0), &wall_y(4.0), &wall_x(1.0), &wall_y(6.0));
        assert_eq!(err, Err(FactorError::MisclassifiedWalls));
        let err = four_wall_room_center(&wall_x(0.0), &wall_x(4.0), &wall_x(1.0), &wall_x(6.0));
        assert_eq!(err, Err(FactorError::MisclassifiedWalls));
    }

    #[test]
    fn four_wall_residual_linear_in_d() {
        let walls = [wall_x(0.5), wall_x(4.0), wall_y(1.0), wall_y(6.0)].map(|p| WallAngles::from_plane(&p));
        let center = four_wall_room_center(
            &walls[0].to_plane(),
            &walls[1].to_plane(),
            &walls[2].to_plane(),
            &walls[3].to_plane(),
        )
        .unwrap();
        assert!(four_wall_room_residual(&center, &walls).unwrap().norm() < 1e-15);
        let eps = 0.2;
        let mut moved = walls;
        moved[1].d -= eps; // x = 4 -> x = 4.2
        let r = four_wall_room_residual(&center, &moved).unwrap();
        assert_relative_eq!(r, Vec3::new(-eps / 2.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn information_validation() {
        let model = FactorModel::MarkerWall {
            wall: WallId(0),
            marker: MarkerId(0),
        };
        assert!(Factor::new(model.clone(), DMatrix::identity(3, 3)).is_ok());
        assert!(Factor::new(model.clone(), DMatrix::identity(2, 2)).is_err());
        let mut asym = DMatrix::identity(3, 3);
        asym[(0, 1)] = 0.5;
        assert!(Factor::new(model.clone(), asym).is_err());
        assert!(Factor::new(model, -DMatrix::identity(3, 3)).is_err());
    }

    #[test]
    fn scaling_information_keeps_zero_set() {
        let f = Factor::with_defaults(
            FactorModel::MarkerWall {
                wall: WallId(0),
                marker: MarkerId(0),
            },
            &InformationDefaults::default(),
        );
        let r0 = DVector::zeros(3);
        let r1 = DVector::from_column_slice(&[0.1, 0.0, 0.2]);
        let scaled = Factor {
            information: &f.information * 7.5,
            ..f.clone()
        };
        assert_eq!(scaled.squared_norm(&r0), 0.0);
        assert!(scaled.squared_norm(&r1) > 0.0);
        assert_relative_eq!(scaled.squared_norm(&r1), 7.5 * f.squared_norm(&r1), epsilon = 1e-12);
    }

    #[test]
    fn odometry_jacobian_nondegenerate_at_zero_residual() {
        let mut map = HierMap::new();
        let t0 = Pose::exp(&Vec6::new(0.1, 0.2, 0.3, 1.0, 0.0, 0.0));
        let z = Pose::exp(&Vec6::new(0.0, 0.0, 0.1, 0.3, 0.0, 0.0));
        for (i, p) in [t0, t0.compose(&z)].into_iter().enumerate() {
            map.add_keyframe(Keyframe {
                id: KeyframeId(i as u32),
                timestamp: i as f64,
                pose: p,
                intrinsics: Intrinsics::default(),
            })
            .unwrap();
        }
        let f = Factor::with_defaults(
            FactorModel::Odometry {
                from: KeyframeId(0),
                to: KeyframeId(1),
                measured: z,
            },
            &InformationDefaults::default(),
        );
        let lin = f.linearize(&map).unwrap();
        assert!(lin.residual.norm() < 1e-12);
        for j in &lin.jacobians {
            assert!(j.clone().svd(false, false).singular_values.min() > 0.5);
        }
    }

    #[test]
    fn two_wall_marker_jacobian_is_projector() {
        let k = Vec3::new(3.0, 0.0, 0.0);
        let c = Vec3::new(2.0, 7.0, 1.0);
        let (_, d_c) = two_wall_center_jacobians(&k, &c);
        let expect = Mat3::new(0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert_relative_eq!(d_c, expect, epsilon = 1e-15);
        let four = FactorModel::FourWallRoom {
            room: RoomId(0),
            walls: [WallId(0), WallId(1), WallId(2), WallId(3)],
        };
        assert!(four.variables().iter().all(|v| !matches!(v, VarId::Marker(_))));
    }

    #[test]
    fn missing_variable_reported() {
        let map = HierMap::new();
        let f = Factor::with_defaults(
            FactorModel::MarkerWall {
                wall: WallId(2),
                marker: MarkerId(0),
            },
            &InformationDefaults::default(),
        );
        assert_eq!(
            f.residual(&map).unwrap_err(),
            FactorError::MissingVariable(VarId::Wall(WallId(2)))
        );
    }
}
