//! Synthetic worlds and observation streams standing in for a camera front-end.

use alloc::vec::Vec;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::factors::{project, MIN_DEPTH};
use crate::geometry::{Plane, Pose, Vec3, Vec6};
use crate::map::{
    HierMap, Intrinsics, MapPoint, Marker, MarkerId, PointId, DEFAULT_MARKER_SIZE,
};
use crate::math;
use crate::semantic::{
    DictionaryError, RoomDictionary, RoomEntry, SemanticAnalyzer, SemanticConfig,
};

/// Direction a wall faces, i.e. its normal pointing into walkable space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Facing {
    PosX,
    NegX,
    PosY,
    NegY,
}

impl Facing {
    pub fn normal(self) -> Vec3 {
        match self {
            Facing::PosX => Vec3::x(),
            Facing::NegX => -Vec3::x(),
            Facing::PosY => Vec3::y(),
            Facing::NegY => -Vec3::y(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Facing::PosX => "+x",
            Facing::NegX => "-x",
            Facing::PosY => "+y",
            Facing::NegY => "-y",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "+x" => Facing::PosX,
            "-x" => Facing::NegX,
            "+y" => Facing::PosY,
            "-y" => Facing::NegY,
            _ => return None,
        })
    }
}

/// Vertical rectangle. Spans `corner + s·along() + t·z` for `s ∈ [0, length]`, `t ∈ [0, height]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WallRect {
    pub corner: Vec3,
    pub length: f64,
    pub height: f64,
    pub facing: Facing,
}

impl WallRect {
    pub fn normal(&self) -> Vec3 {
        self.facing.normal()
    }

    /// In-wall horizontal axis; with `z` up and the normal it forms a right-handed frame.
    pub fn along(&self) -> Vec3 {
        Vec3::z().cross(&self.normal())
    }

    pub fn point(&self, s: f64, t: f64) -> Vec3 {
        self.corner + self.along() * s + Vec3::z() * t
    }

    pub fn plane(&self) -> Plane {
        Plane::through_point(self.normal(), &self.corner)
    }

    /// Whether the segment `a → b` touches the rectangle.
    pub fn intersects_segment(&self, a: &Vec3, b: &Vec3) -> bool {
        let plane = self.plane();
        let (da, db) = (plane.signed_distance(a), plane.signed_distance(b));
        if da * db > 0.0 || (da == 0.0 && db == 0.0) {
            return false;
        }
        let p = a + (b - a) * (da / (da - db));
        let rel = p - self.corner;
        let s = rel.dot(&self.along());
        let t = rel.z;
        (0.0..=self.length).contains(&s) && (0.0..=self.height).contains(&t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkerPlacement {
    pub id: MarkerId,
    /// Index into `WorldSpec::walls`.
    pub wall: usize,
    /// Marker center in wall coordinates `(s, t)`.
    pub offset: [f64; 2],
    pub size: f64,
}

impl MarkerPlacement {
    pub fn new(id: u32, wall: usize, s: f64, t: f64) -> Self {
        Self {
            id: MarkerId(id),
            wall,
            offset: [s, t],
            size: DEFAULT_MARKER_SIZE,
        }
    }
}

/// Random feature points on the wall surfaces.
#[derive(Clone, Debug, PartialEq)]
pub struct PointScatter {
    pub count: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WorldSpec {
    pub walls: Vec<WallRect>,
    pub markers: Vec<MarkerPlacement>,
    pub rooms: Vec<RoomEntry>,
    pub points: Vec<Vec3>,
    pub scatter: Option<PointScatter>,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("marker {marker} does not fit on wall {wall}")]
    MarkerOffWall { marker: u32, wall: usize },
    #[error("marker {marker} references missing wall {wall}")]
    UnknownWall { marker: u32, wall: usize },
    #[error("duplicate marker id {0}")]
    DuplicateMarkerId(u32),
    #[error("invalid wall {0}: length and height must be positive")]
    DegenerateWall(usize),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
    #[error("trajectory segment {segment} crosses wall {wall}")]
    TrajectoryCollision { segment: usize, wall: usize },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(&'static str),
    #[error("invalid noise: {0}")]
    InvalidNoise(&'static str),
}

/// Ground truth for a world: markers, walls, rooms and points in one map.
#[derive(Clone, Debug)]
pub struct World {
    pub spec: WorldSpec,
    pub truth: HierMap,
    pub dictionary: RoomDictionary,
}

impl World {
    pub fn marker_pose(&self, id: MarkerId) -> Option<&Pose> {
        self.truth.markers.get(&id).map(|m| &m.pose)
    }
}

pub fn build_world(spec: WorldSpec) -> Result<World, SimError> {
    let mut truth = HierMap::new();
    for (i, w) in spec.walls.iter().enumerate() {
        if !(w.length > 0.0 && w.height > 0.0) {
            return Err(SimError::DegenerateWall(i));
        }
    }
    let mut placements: Vec<&MarkerPlacement> = spec.markers.iter().collect();
    placements.sort_by_key(|m| m.id);
    for pair in placements.windows(2) {
        if pair[0].id == pair[1].id {
            return Err(SimError::DuplicateMarkerId(pair[0].id.0));
        }
    }
    let dictionary = RoomDictionary::new(spec.rooms.clone())?;
    let mut analyzer = SemanticAnalyzer::new(SemanticConfig::default(), dictionary.clone());
    for m in placements {
        let wall = spec.walls.get(m.wall).ok_or(SimError::UnknownWall {
            marker: m.id.0,
            wall: m.wall,
        })?;
        let [s, t] = m.offset;
        let h = m.size / 2.0;
        if !(m.size > 0.0 && s - h >= 0.0 && s + h <= wall.length && t - h >= 0.0 && t + h <= wall.height) {
            return Err(SimError::MarkerOffWall {
                marker: m.id.0,
                wall: m.wall,
            });
        }
        let pose = Pose::from_axes(wall.along(), Vec3::z(), wall.normal(), wall.point(s, t));
        let marker = Marker {
            id: m.id,
            size: m.size,
            pose,
        };
        truth.add_marker(marker.clone()).expect("ids checked unique");
        analyzer.infer_wall(&marker, &mut truth);
    }
    analyzer.detect_rooms(&mut truth);

    let mut points = spec.points.clone();
    if let Some(sc) = &spec.scatter {
        if !spec.walls.is_empty() {
            let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
            for _ in 0..sc.count {
                let w = &spec.walls[rng.random_range(0..spec.walls.len())];
                let s = rng.random::<f64>() * w.length;
                let t = rng.random::<f64>() * w.height;
                points.push(w.point(s, t));
            }
        }
    }
    for (i, p) in points.into_iter().enumerate() {
        truth
            .add_point(MapPoint {
                id: PointId(i as u32),
                position: p,
                viewing_direction: None,
                descriptor: Vec::new(),
            })
            .expect("sequential point ids");
    }
    Ok(World {
        spec,
        truth,
        dictionary,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Waypoint {
    pub position: Vec3,
    pub yaw: f64,
    /// Seconds spent standing at the waypoint.
    pub hold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySpec {
    pub waypoints: Vec<Waypoint>,
    /// Meters per second.
    pub speed: f64,
    /// Frames per second.
    pub rate: f64,
    /// Max yaw rate in rad/s; slows segments that turn sharply.
    pub turn_rate: f64,
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.waypoints.len() < 2 {
            return Err(SimError::InvalidTrajectory("need at least 2 waypoints"));
        }
        if !(self.speed > 0.0 && self.rate > 0.0 && self.turn_rate > 0.0) {
            return Err(SimError::InvalidTrajectory("speed, rate and turn rate must be positive"));
        }
        let finite = self
            .waypoints
            .iter()
            .all(|w| w.position.iter().all(|v| v.is_finite()) && w.yaw.is_finite() && w.hold >= 0.0);
        if !finite {
            return Err(SimError::InvalidTrajectory("non-finite waypoint or negative hold"));
        }
        Ok(())
    }

    /// Ground-truth camera poses at every frame time.
    pub fn sample(&self) -> Result<Vec<(f64, Pose)>, SimError> {
        self.validate()?;
        // phases: hold at each waypoint, then the segment to the next one
        let mut phases: Vec<(f64, usize, bool)> = Vec::new();
        for (i, w) in self.waypoints.iter().enumerate() {
            if w.hold > 0.0 {
                phases.push((w.hold, i, true));
            }
            if let Some(next) = self.waypoints.get(i + 1) {
                let len = (next.position - w.position).norm();
                let turn = math::abs(math::wrap_angle(next.yaw - w.yaw));
                let dur = (len / self.speed).max(turn / self.turn_rate);
                if dur > 0.0 {
                    phases.push((dur, i, false));
                }
            }
        }
        let total: f64 = phases.iter().map(|p| p.0).sum();
        let dt = 1.0 / self.rate;
        let n = libm::floor(total * self.rate + 1e-9) as usize + 1;
        let mut out = Vec::with_capacity(n);
        let (mut phase, mut phase_start) = (0usize, 0.0f64);
        for k in 0..n {
            let t = k as f64 * dt;
            while phase + 1 < phases.len() && t > phase_start + phases[phase].0 {
                phase_start += phases[phase].0;
                phase += 1;
            }
            let pose = match phases.get(phase) {
                None => camera_pose(&self.waypoints[0].position, self.waypoints[0].yaw),
                Some(&(dur, i, hold)) => {
                    let a = &self.waypoints[i];
                    if hold {
                        camera_pose(&a.position, a.yaw)
                    } else {
                        let b = &self.waypoints[i + 1];
                        let u = ((t - phase_start) / dur).clamp(0.0, 1.0);
                        let yaw = a.yaw + u * math::wrap_angle(b.yaw - a.yaw);
                        camera_pose(&(a.position + (b.position - a.position) * u), yaw)
                    }
                }
            };
            out.push((t, pose));
        }
        Ok(out)
    }
}

/// Level camera at `position` looking along `yaw`: z forward, x right, y down.
pub fn camera_pose(position: &Vec3, yaw: f64) -> Pose {
    let (s, c) = (math::sin(yaw), math::cos(yaw));
    Pose::from_axes(
        Vec3::new(s, -c, 0.0),
        Vec3::new(0.0, 0.0, -1.0),
        Vec3::new(c, s, 0.0),
        *position,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSpec {
    /// Odometry translation σ per frame step, meters.
    pub odom_trans: f64,
    /// Odometry rotation σ per frame step, radians.
    pub odom_rot: f64,
    pub marker_trans: f64,
    pub marker_rot: f64,
    /// Pixel σ for point detections.
    pub pixel: f64,
    /// Detection range, meters.
    pub max_range: f64,
    /// Half-angle of the detection cone around the optical axis, radians.
    pub fov_half_angle: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            odom_trans: 0.0,
            odom_rot: 0.0,
            marker_trans: 0.0,
            marker_rot: 0.0,
            pixel: 0.0,
            max_range: 5.0,
            fov_half_angle: 0.6,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let sig = [self.odom_trans, self.odom_rot, self.marker_trans, self.marker_rot, self.pixel];
        if !sig.iter().all(|s| *s >= 0.0 && s.is_finite()) {
            return Err(SimError::InvalidNoise("sigmas must be finite and non-negative"));
        }
        if !(self.max_range > 0.0) {
            return Err(SimError::InvalidNoise("max range must be positive"));
        }
        if !(self.fov_half_angle > 0.0 && self.fov_half_angle < core::f64::consts::FRAC_PI_2) {
            return Err(SimError::InvalidNoise("fov half-angle must be in (0, pi/2)"));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.odom_trans == 0.0
            && self.odom_rot == 0.0
            && self.marker_trans == 0.0
            && self.marker_rot == 0.0
            && self.pixel == 0.0
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::noiseless()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkerDetection {
    pub marker: MarkerId,
    /// Marker pose in the camera frame.
    pub pose: Pose,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PointDetection {
    pub point: PointId,
    pub pixel: Vector2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameObservation {
    pub timestamp: f64,
    /// Relative motion from the previous frame; identity on the first frame.
    pub odometry: Pose,
    pub markers: Vec<MarkerDetection>,
    pub points: Vec<PointDetection>,
    /// Withheld from SLAM; used for evaluation.
    pub ground_truth: Pose,
}

/// Range, field-of-view and facing gates for a marker seen from `camera`.
pub fn marker_visible(marker: &Marker, camera: &Pose, noise: &NoiseSpec) -> bool {
    let center = marker.center();
    let ray = center - camera.translation();
    let dist = ray.norm();
    if dist > noise.max_range || dist == 0.0 {
        return false;
    }
    let forward = camera.axis(2);
    if math::acos(ray.dot(&forward) / dist) > noise.fov_half_angle {
        return false;
    }
    marker.pose.axis(2).dot(&ray) < 0.0
}

fn point_pixel(p: &Vec3, camera: &Pose, k: &Intrinsics, noise: &NoiseSpec) -> Option<Vector2<f64>> {
    let pc = camera.inverse_transform_point(p);
    if pc.z <= MIN_DEPTH || pc.norm() > noise.max_range {
        return None;
    }
    let px = project(&pc, k).ok()?;
    let inside = (0.0..2.0 * k.cx).contains(&px.x) && (0.0..2.0 * k.cy).contains(&px.y);
    inside.then_some(px)
}

fn tangent_noise(rng: &mut ChaCha8Rng, rot: f64, trans: f64) -> Vec6 {
    let mut v = Vec6::zeros();
    for i in 0..6 {
        let z: f64 = rng.sample(StandardNormal);
        v[i] = z * if i < 3 { rot } else { trans };
    }
    v
}

/// Lazily generated observation stream. Each frame uses its own RNG stream.
#[derive(Clone, Debug)]
pub struct Simulation<'w> {
    world: &'w World,
    noise: NoiseSpec,
    intrinsics: Intrinsics,
    poses: Vec<(f64, Pose)>,
    next: usize,
}

impl Simulation<'_> {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn ground_truth(&self) -> &[(f64, Pose)] {
        &self.poses
    }

    fn frame(&self, k: usize) -> FrameObservation {
        let (timestamp, pose) = self.poses[k];
        let n = &self.noise;
        let mut rng = ChaCha8Rng::seed_from_u64(n.seed);
        rng.set_stream(k as u64);

        let mut odometry = match k {
            0 => Pose::identity(),
            _ => self.poses[k - 1].1.between(&pose),
        };
        let odom_noise = tangent_noise(&mut rng, n.odom_rot, n.odom_trans);
        if k > 0 && (n.odom_rot > 0.0 || n.odom_trans > 0.0) {
            odometry = odometry.retract(&odom_noise);
        }

        let inv = pose.inverse();
        let mut markers = Vec::new();
        for m in self.world.truth.markers.values() {
            if !marker_visible(m, &pose, n) {
                continue;
            }
            let mut z = inv.compose(&m.pose);
            let xi = tangent_noise(&mut rng, n.marker_rot, n.marker_trans);
            if n.marker_rot > 0.0 || n.marker_trans > 0.0 {
                z = z.retract(&xi);
            }
            markers.push(MarkerDetection {
                marker: m.id,
                pose: z,
            });
        }

        let mut points = Vec::new();
        for p in self.world.truth.points.values() {
            if let Some(mut px) = point_pixel(&p.position, &pose, &self.intrinsics, n) {
                let e: [f64; 2] = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
                if n.pixel > 0.0 {
                    px += Vector2::new(e[0], e[1]) * n.pixel;
                }
                points.push(PointDetection { point: p.id, pixel: px });
            }
        }

        FrameObservation {
            timestamp,
            odometry,
            markers,
            points,
            ground_truth: pose,
        }
    }
}

impl Iterator for Simulation<'_> {
    type Item = FrameObservation;

    fn next(&mut self) -> Option<FrameObservation> {
        if self.next >= self.poses.len() {
            return None;
        }
        let f = self.frame(self.next);
        self.next += 1;
        Some(f)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let r = self.poses.len() - self.next;
        (r, Some(r))
    }
}

impl ExactSizeIterator for Simulation<'_> {}

/// Validates the trajectory against the world's walls and returns the frame stream.
pub fn simulate<'w>(
    world: &'w World,
    traj: &TrajectorySpec,
    noise: &NoiseSpec,
) -> Result<Simulation<'w>, SimError> {
    noise.validate()?;
    traj.validate()?;
    for (i, seg) in traj.waypoints.windows(2).enumerate() {
        for (j, w) in world.spec.walls.iter().enumerate() {
            if w.intersects_segment(&seg[0].position, &seg[1].position) {
                return Err(SimError::TrajectoryCollision { segment: i, wall: j });
            }
        }
    }
    Ok(Simulation {
        world,
        noise: noise.clone(),
        intrinsics: Intrinsics::default(),
        poses: traj.sample()?,
        next: 0,
    })
}
