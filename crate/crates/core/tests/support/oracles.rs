//! Independent reference computations used by the integration and acceptance suites.
#![allow(dead_code)]

use msgraph_core::factors::{Factor, FactorKind, FactorModel, InformationDefaults, VarId};
use msgraph_core::geometry::{Plane, Pose, Vec3, Vec6, WallAngles};
use msgraph_core::map::{
    HierMap, Intrinsics, Keyframe, KeyframeId, MapPoint, Marker, MarkerId, PointId, Room, RoomId,
    RoomKind, Wall, WallId,
};
use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::Rng;
use std::f64::consts::PI;

/// Central finite-difference Jacobian of `factor` w.r.t. `var`, perturbing
/// through the variable's retraction.
pub fn fd_jacobian(factor: &Factor, map: &HierMap, var: VarId, step: f64) -> DMatrix<f64> {
    let m = factor.kind().residual_dim();
    let n = var.dim();
    let mut out = DMatrix::zeros(m, n);
    for c in 0..n {
        let mut plus = map.clone();
        let mut minus = map.clone();
        perturb(&mut plus, var, c, step);
        perturb(&mut minus, var, c, -step);
        let rp = factor.residual(&plus).expect("evaluable");
        let rm = factor.residual(&minus).expect("evaluable");
        out.set_column(c, &((rp - rm) / (2.0 * step)));
    }
    out
}

fn perturb(map: &mut HierMap, var: VarId, coord: usize, h: f64) {
    match var {
        VarId::Keyframe(id) => {
            let k = map.keyframes.get_mut(&id).unwrap();
            let mut d = Vec6::zeros();
            d[coord] = h;
            k.pose = k.pose.retract(&d);
        }
        VarId::Marker(id) => {
            let mk = map.markers.get_mut(&id).unwrap();
            let mut d = Vec6::zeros();
            d[coord] = h;
            mk.pose = mk.pose.retract(&d);
        }
        VarId::Point(id) => map.points.get_mut(&id).unwrap().position[coord] += h,
        VarId::Room(id) => map.rooms.get_mut(&id).unwrap().center[coord] += h,
        VarId::Wall(id) => {
            let w = &mut map.walls.get_mut(&id).unwrap().state;
            let mut a = [w.azimuth, w.elevation, w.d];
            a[coord] += h;
            *w = WallAngles::new(a[0], a[1], a[2]);
        }
    }
}

/// Largest relative error over all Jacobian blocks of one factor:
/// `‖J − J_fd‖_F / max(‖J_fd‖_F, 1e-6)` with the norms taken over the stacked blocks.
pub fn jacobian_relative_error(factor: &Factor, map: &HierMap) -> f64 {
    let lin = factor.linearize(map).expect("evaluable");
    let mut diff2 = 0.0;
    let mut ref2 = 0.0;
    for (v, j) in factor.variables().iter().zip(&lin.jacobians) {
        let fd = fd_jacobian(factor, map, *v, 1e-6);
        diff2 += (j - &fd).norm_squared();
        ref2 += fd.norm_squared();
    }
    diff2.sqrt() / ref2.sqrt().max(1e-6)
}

pub fn random_pose<R: Rng>(rng: &mut R, rot: f64, trans: f64) -> Pose {
    let v = Vec6::from_fn(|i, _| {
        let r = if i < 3 { rot } else { trans };
        if r > 0.0 {
            rng.random_range(-r..r)
        } else {
            0.0
        }
    });
    Pose::exp(&v)
}

fn random_unit<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n < 1.0 {
            return v / n;
        }
    }
}

fn keyframe(id: u32, pose: Pose) -> Keyframe {
    Keyframe {
        id: KeyframeId(id),
        timestamp: id as f64,
        pose,
        intrinsics: Intrinsics::default(),
    }
}

fn marker(id: u32, pose: Pose) -> Marker {
    Marker {
        id: MarkerId(id),
        size: 0.17,
        pose,
    }
}

/// Near-vertical wall with azimuth in a band that keeps away from the wrap.
fn random_wall<R: Rng>(rng: &mut R, azimuth: f64) -> WallAngles {
    WallAngles::new(
        azimuth + rng.random_range(-0.1..0.1),
        rng.random_range(-0.1..0.1),
        rng.random_range(-6.0..-0.5),
    )
}

/// A random, evaluable factor of `kind` together with a map holding its variables.
pub fn random_case<R: Rng>(kind: FactorKind, rng: &mut R) -> (Factor, HierMap) {
    let defaults = InformationDefaults::default();
    let mut map = HierMap::new();
    let model = match kind {
        FactorKind::Odometry => {
            let a = random_pose(rng, 2.0, 5.0);
            let b = random_pose(rng, 2.0, 5.0);
            map.add_keyframe(keyframe(0, a)).unwrap();
            map.add_keyframe(keyframe(1, b)).unwrap();
            let noise = random_pose(rng, 0.3, 0.3);
            FactorModel::Odometry {
                from: KeyframeId(0),
                to: KeyframeId(1),
                measured: a.between(&b).compose(&noise),
            }
        }
        FactorKind::MarkerObs => {
            let a = random_pose(rng, 2.0, 5.0);
            let m = random_pose(rng, 2.0, 5.0);
            map.add_keyframe(keyframe(0, a)).unwrap();
            map.add_marker(marker(4, m)).unwrap();
            FactorModel::MarkerObs {
                keyframe: KeyframeId(0),
                marker: MarkerId(4),
                measured: a.between(&m).compose(&random_pose(rng, 0.3, 0.3)),
            }
        }
        FactorKind::PointProj => {
            let cam = random_pose(rng, 2.0, 5.0);
            let local = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(1.0..6.0),
            );
            map.add_keyframe(keyframe(0, cam)).unwrap();
            map.add_point(MapPoint {
                id: PointId(2),
                position: cam.transform_point(&local),
                viewing_direction: None,
                descriptor: Vec::new(),
            })
            .unwrap();
            FactorModel::PointProj {
                keyframe: KeyframeId(0),
                point: PointId(2),
                pixel: Vector2::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0)),
                intrinsics: Intrinsics::default(),
            }
        }
        FactorKind::MarkerWall => {
            let az = rng.random_range(-3.0..3.0);
            let w = random_wall(rng, az);
            map.add_marker(marker(1, near_wall_marker(rng, &w))).unwrap();
            map.add_wall(Wall {
                id: WallId(0),
                state: w,
                markers: vec![MarkerId(1)],
            })
            .unwrap();
            FactorModel::MarkerWall {
                wall: WallId(0),
                marker: MarkerId(1),
            }
        }
        FactorKind::TwoWallRoom => {
            let az = rng.random_range(-3.0..3.0);
            let a = random_wall(rng, az);
            // opposite wall facing back, both on the same side of the origin
            let b = WallAngles::new(
                a.azimuth + PI + rng.random_range(-0.05..0.05),
                -a.elevation + rng.random_range(-0.05..0.05),
                a.d.abs() + rng.random_range(1.0..4.0),
            );
            let mpose = near_wall_marker(rng, &a);
            map.add_marker(marker(7, mpose)).unwrap();
            add_walls(&mut map, &[a, b], 7);
            map.add_room(Room {
                id: RoomId(0),
                label: "corridor".into(),
                kind: RoomKind::TwoWall,
                center: Vec3::new(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-1.0..1.0),
                ),
                walls: vec![WallId(0), WallId(1)],
                anchor_marker: Some(MarkerId(7)),
            })
            .unwrap();
            FactorModel::TwoWallRoom {
                room: RoomId(0),
                walls: [WallId(0), WallId(1)],
                marker: MarkerId(7),
            }
        }
        FactorKind::FourWallRoom => {
            let yaw = rng.random_range(-3.0..3.0);
            let walls = [
                random_wall(rng, yaw),
                random_wall(rng, yaw + PI),
                random_wall(rng, yaw + PI / 2.0),
                random_wall(rng, yaw - PI / 2.0),
            ];
            map.add_marker(marker(0, Pose::identity())).unwrap();
            add_walls(&mut map, &walls, 0);
            map.add_room(Room {
                id: RoomId(0),
                label: "room".into(),
                kind: RoomKind::FourWall,
                center: Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), 0.0),
                walls: vec![WallId(0), WallId(1), WallId(2), WallId(3)],
                anchor_marker: None,
            })
            .unwrap();
            FactorModel::FourWallRoom {
                room: RoomId(0),
                walls: [WallId(0), WallId(1), WallId(2), WallId(3)],
            }
        }
    };
    (Factor::with_defaults(model, &defaults), map)
}

fn add_walls(map: &mut HierMap, walls: &[WallAngles], marker_id: u32) {
    for (i, w) in walls.iter().enumerate() {
        map.add_wall(Wall {
            id: WallId(i as u32),
            state: *w,
            markers: vec![MarkerId(marker_id)],
        })
        .unwrap();
    }
}

/// Marker roughly on `w`, board roughly parallel, random spin, random facing.
fn near_wall_marker<R: Rng>(rng: &mut R, w: &WallAngles) -> Pose {
    let q = w.to_plane();
    let helper = if q.normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = q.normal.cross(&helper).normalize();
    let v = q.normal.cross(&u);
    let p = q.foot_point()
        + u * rng.random_range(-3.0..3.0)
        + v * rng.random_range(-3.0..3.0)
        + q.normal * rng.random_range(-0.2..0.2);
    let facing = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let z = q.normal * facing;
    let spin = rng.random_range(-PI..PI);
    let x = u * spin.cos() + v * spin.sin();
    let base = Pose::from_axes(x, z.cross(&x), z, p);
    base.compose(&random_pose(rng, 0.2, 0.0))
}

/// Midpoint of the segment cut from the line `c + t·n_a` by two parallel planes.
pub fn corridor_center_by_intersection(a: &Plane, b: &Plane, c: &Vec3) -> Vec3 {
    let dir = a.normal;
    let ta = -(a.normal.dot(c) + a.d) / a.normal.dot(&dir);
    let tb = -(b.normal.dot(c) + b.d) / b.normal.dot(&dir);
    c + dir * (0.5 * (ta + tb))
}

/// Center of the rectangle cut by two perpendicular pairs of vertical walls,
/// averaging the four corner intersections in the horizontal plane.
pub fn rectangle_center_by_corners(walls: &[Plane; 4]) -> Vec3 {
    let mut sum = Vector2::zeros();
    for x in &walls[0..2] {
        for y in &walls[2..4] {
            let m = Matrix2::new(x.normal.x, x.normal.y, y.normal.x, y.normal.y);
            let rhs = Vector2::new(-x.d, -y.d);
            sum += m.lu().solve(&rhs).expect("perpendicular walls intersect");
        }
    }
    let c = sum / 4.0;
    Vec3::new(c.x, c.y, 0.0)
}

/// Random exactly-parallel wall pair with canonical planes and a marker center.
pub fn random_corridor<R: Rng>(rng: &mut R) -> (Plane, Plane, Vec3) {
    let n = random_unit(rng);
    let da: f64 = rng.random_range(-8.0..8.0);
    let mut db: f64 = rng.random_range(-8.0..8.0);
    while (da + db).abs() < 0.5 {
        db = rng.random_range(-8.0..8.0);
    }
    let a = Plane::new(n, da).canonical();
    let b = Plane::new(n, db).canonical();
    let c = Vec3::new(
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
        rng.random_range(-10.0..10.0),
    );
    (a, b, c)
}

/// Random rectangular room of vertical walls at a random yaw, as canonical planes `[xa, xb, ya, yb]`.
pub fn random_rectangle<R: Rng>(rng: &mut R) -> [Plane; 4] {
    let yaw: f64 = rng.random_range(-PI..PI);
    let nx = Vec3::new(yaw.cos(), yaw.sin(), 0.0);
    let ny = Vec3::new(-yaw.sin(), yaw.cos(), 0.0);
    let center = Vec3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), 0.0);
    let hx = rng.random_range(0.5..6.0);
    let hy = rng.random_range(0.5..6.0);
    let wall = |n: Vec3, p: Vec3| Plane::through_point(n, &p).canonical();
    let mut planes = [
        wall(nx, center + nx * hx),
        wall(nx, center - nx * hx),
        wall(ny, center + ny * hy),
        wall(ny, center - ny * hy),
    ];
    if rng.random_bool(0.5) {
        planes.swap(0, 1);
    }
    planes
}
