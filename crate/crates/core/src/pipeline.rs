//! The SLAM loop: keyframe selection, graph assembly and optimization scheduling.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use core::borrow::Borrow;

use nalgebra::Vector2;

use crate::eval::Trajectory;
use crate::factors::{Factor, FactorKind, FactorModel, InformationDefaults, VarId};
use crate::geometry::{Pose, Vec3};
use crate::graph::{marginal_cost, FactorGraph, Kernel};
use crate::map::{
    HierMap, Intrinsics, Keyframe, KeyframeId, MapPoint, Marker, MarkerId, PointId, RoomId,
    RoomKind, WallId, DEFAULT_MARKER_SIZE,
};
use crate::math;
use crate::optimizer::{optimize_filtered, OptimizeConfig, OptimizeError, OptimizeReport};
use crate::semantic::{
    LoopEvent, RoomDictionary, RoomError, SemanticAnalyzer, SemanticConfig, WallAssociation,
};
use crate::sim::FrameObservation;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// All factors, including walls and rooms.
    Full,
    /// Odometry, markers and points only.
    Baseline,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::Baseline => "baseline",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(Mode::Full),
            "baseline" => Some(Mode::Baseline),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeyframeGates {
    pub min_translation: f64,
    pub min_rotation: f64,
    pub force_on_new_marker: bool,
}

impl Default for KeyframeGates {
    fn default() -> Self {
        Self {
            min_translation: 0.25,
            min_rotation: 10.0 * core::f64::consts::PI / 180.0,
            force_on_new_marker: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub gates: KeyframeGates,
    /// Number of most recent keyframes optimized after each keyframe.
    pub local_window: usize,
    pub local: OptimizeConfig,
    pub global: OptimizeConfig,
    pub semantic: SemanticConfig,
    pub information: InformationDefaults,
    pub intrinsics: Intrinsics,
    /// Pose assigned to the first keyframe; fixes the map frame.
    pub initial_pose: Pose,
    pub marker_size: f64,
    /// Minimum odometric baseline before a point is triangulated, meters.
    pub point_min_baseline: f64,
    /// Minimum ray angle before a point is triangulated, radians.
    pub point_min_parallax: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Full,
            gates: KeyframeGates::default(),
            local_window: 10,
            local: OptimizeConfig {
                max_iterations: 10,
                ..OptimizeConfig::default()
            },
            global: OptimizeConfig {
                max_iterations: 100,
                ..OptimizeConfig::default()
            },
            semantic: SemanticConfig::default(),
            information: InformationDefaults::default(),
            intrinsics: Intrinsics::default(),
            initial_pose: level_camera(),
            marker_size: DEFAULT_MARKER_SIZE,
            point_min_baseline: 0.2,
            point_min_parallax: 2.0 * core::f64::consts::PI / 180.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("keyframe gates must be positive")]
    Gates,
    #[error("local window must be at least 2")]
    Window,
    #[error("marker size must be positive")]
    MarkerSize,
    #[error("semantic gates must be positive")]
    Semantic,
    #[error(transparent)]
    Optimizer(#[from] OptimizeError),
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.gates.min_translation > 0.0 && self.gates.min_rotation > 0.0) {
            return Err(ConfigError::Gates);
        }
        if self.local_window < 2 {
            return Err(ConfigError::Window);
        }
        if !(self.marker_size > 0.0) {
            return Err(ConfigError::MarkerSize);
        }
        let s = &self.semantic;
        if !(s.wall_angle_gate > 0.0 && s.wall_distance_gate > 0.0 && s.revisit_window > 0) {
            return Err(ConfigError::Semantic);
        }
        self.local.validate()?;
        self.global.validate()?;
        Ok(())
    }
}

/// Camera at the origin looking along +x with z up (x right, y down in the camera).
pub fn level_camera() -> Pose {
    Pose::from_axes(-Vec3::y(), -Vec3::z(), Vec3::x(), Vec3::zeros())
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("frame {index} at t={timestamp} is not after t={previous}")]
    OutOfOrderFrame {
        index: usize,
        timestamp: f64,
        previous: f64,
    },
    #[error("empty observation stream")]
    EmptyStream,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("final optimization failed: {0}")]
    Optimize(#[from] OptimizeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeyframeReason {
    First,
    Motion,
    NewMarker,
    /// Imposed by a replayed decision list.
    Replay,
}

impl KeyframeReason {
    pub fn as_str(self) -> &'static str {
        match self {
            KeyframeReason::First => "first",
            KeyframeReason::Motion => "motion",
            KeyframeReason::NewMarker => "new_marker",
            KeyframeReason::Replay => "replay",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    Local,
    Global,
    Final,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Local => "local",
            Scope::Global => "global",
            Scope::Final => "final",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Event {
    Keyframe {
        frame: usize,
        keyframe: KeyframeId,
        timestamp: f64,
        reason: KeyframeReason,
    },
    Skip {
        frame: usize,
        timestamp: f64,
    },
    Wall {
        keyframe: KeyframeId,
        marker: MarkerId,
        wall: WallId,
        created: bool,
    },
    Room {
        keyframe: KeyframeId,
        room: RoomId,
        label: String,
        kind: RoomKind,
    },
    RoomPending {
        keyframe: KeyframeId,
        label: String,
        reason: String,
    },
    Loop(LoopEvent),
    Optimization {
        keyframe: KeyframeId,
        scope: Scope,
        report: OptimizeReport,
    },
    OptimizationFailed {
        keyframe: KeyframeId,
        scope: Scope,
        error: OptimizeError,
    },
}

/// What happened to one frame.
#[derive(Clone, Debug, PartialEq)]
pub enum FrameOutcome {
    Skipped,
    Keyframe {
        id: KeyframeId,
        loops: Vec<LoopEvent>,
    },
}

#[derive(Clone, Debug)]
struct PendingPoint {
    /// `(keyframe, pixel)` in arrival order.
    observations: Vec<(KeyframeId, Vector2<f64>)>,
}

/// Incremental SLAM state. Feed frames with [`Pipeline::process_frame`], then call [`Pipeline::finish`].
#[derive(Clone, Debug)]
pub struct Pipeline {
    cfg: PipelineConfig,
    map: HierMap,
    graph: FactorGraph,
    analyzer: SemanticAnalyzer,
    events: Vec<Event>,
    frames_seen: usize,
    last_timestamp: Option<f64>,
    /// Odometry accumulated since the last keyframe.
    since_keyframe: Pose,
    /// Keyframe poses from odometry alone; observation-only, shared by both modes.
    dead_reckoned: BTreeMap<KeyframeId, Pose>,
    pending_points: BTreeMap<PointId, PendingPoint>,
    reported_pending: BTreeMap<String, String>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, dictionary: RoomDictionary) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let analyzer = SemanticAnalyzer::new(cfg.semantic.clone(), dictionary);
        Ok(Self {
            cfg,
            map: HierMap::new(),
            graph: FactorGraph::new(),
            analyzer,
            events: Vec::new(),
            frames_seen: 0,
            last_timestamp: None,
            since_keyframe: Pose::identity(),
            dead_reckoned: BTreeMap::new(),
            pending_points: BTreeMap::new(),
            reported_pending: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn map(&self) -> &HierMap {
        &self.map
    }

    pub fn graph(&self) -> &FactorGraph {
        &self.graph
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Current pose estimate: last keyframe composed with odometry since.
    pub fn cursor(&self) -> Pose {
        match self.map.keyframes.values().next_back() {
            Some(kf) => kf.pose.compose(&self.since_keyframe),
            None => self.cfg.initial_pose,
        }
    }

    /// Keyframe trajectory with the current variable values.
    pub fn trajectory(&self) -> Trajectory {
        let poses = self.map.keyframes.values().map(|k| (k.timestamp, k.pose)).collect();
        Trajectory::new(poses).expect("keyframe timestamps increase")
    }

    /// Total cost of the factors active in the configured mode.
    pub fn cost(&self) -> f64 {
        let mode = self.cfg.mode;
        let active = FactorGraph::from_factors(
            self.graph.factors().iter().filter(|f| keep(mode, f)).cloned().collect(),
        );
        marginal_cost(&active, &self.map, Kernel::Identity)
    }

    pub fn process_frame(&mut self, obs: &FrameObservation) -> Result<FrameOutcome, PipelineError> {
        self.process_frame_with(obs, None)
    }

    /// Processes a frame; `decision` overrides the keyframe gates when given.
    pub fn process_frame_with(
        &mut self,
        obs: &FrameObservation,
        decision: Option<bool>,
    ) -> Result<FrameOutcome, PipelineError> {
        let index = self.frames_seen;
        if let Some(prev) = self.last_timestamp {
            if !(obs.timestamp > prev) {
                return Err(PipelineError::OutOfOrderFrame {
                    index,
                    timestamp: obs.timestamp,
                    previous: prev,
                });
            }
        }
        self.frames_seen += 1;
        self.last_timestamp = Some(obs.timestamp);
        let first = self.map.keyframes.is_empty();
        if !first {
            self.since_keyframe = self.since_keyframe.compose(&obs.odometry);
        }

        let reason = match decision {
            Some(false) => None,
            Some(true) if first => Some(KeyframeReason::First),
            Some(true) => Some(KeyframeReason::Replay),
            None => self.gate(obs, first),
        };
        let Some(reason) = reason else {
            self.events.push(Event::Skip {
                frame: index,
                timestamp: obs.timestamp,
            });
            return Ok(FrameOutcome::Skipped);
        };

        let id = KeyframeId(self.map.keyframes.len() as u32);
        self.events.push(Event::Keyframe {
            frame: index,
            keyframe: id,
            timestamp: obs.timestamp,
            reason,
        });
        let loops = self.add_keyframe(id, obs);
        self.optimize_local(id);
        if !loops.is_empty() {
            let _ = self.run_global(id, Scope::Global);
        }
        Ok(FrameOutcome::Keyframe { id, loops })
    }

    fn gate(&self, obs: &FrameObservation, first: bool) -> Option<KeyframeReason> {
        if first {
            return Some(KeyframeReason::First);
        }
        let g = &self.cfg.gates;
        let d = &self.since_keyframe;
        if d.translation().norm() >= g.min_translation || d.rotation_angle() >= g.min_rotation {
            return Some(KeyframeReason::Motion);
        }
        let unseen = obs.markers.iter().any(|m| !self.map.markers.contains_key(&m.marker));
        (g.force_on_new_marker && unseen).then_some(KeyframeReason::NewMarker)
    }

    fn factor(&self, model: FactorModel) -> Factor {
        Factor::with_defaults(model, &self.cfg.information)
    }

    fn add_keyframe(&mut self, id: KeyframeId, obs: &FrameObservation) -> Vec<LoopEvent> {
        let prev = self.map.keyframes.values().next_back().map(|k| (k.id, k.pose));
        let pose = match prev {
            Some((_, p)) => p.compose(&self.since_keyframe),
            None => self.cfg.initial_pose,
        };
        let reckoned = match prev {
            Some((pid, _)) => self.dead_reckoned[&pid].compose(&self.since_keyframe),
            None => self.cfg.initial_pose,
        };
        self.dead_reckoned.insert(id, reckoned);
        self.map
            .add_keyframe(Keyframe {
                id,
                timestamp: obs.timestamp,
                pose,
                intrinsics: self.cfg.intrinsics,
            })
            .expect("sequential keyframes");
        if let Some((pid, _)) = prev {
            let f = self.factor(FactorModel::Odometry {
                from: pid,
                to: id,
                measured: self.since_keyframe,
            });
            self.graph.add(f);
        }
        self.since_keyframe = Pose::identity();

        let mut fresh: Vec<MarkerId> = Vec::new();
        let mut observed: Vec<MarkerId> = Vec::new();
        for det in &obs.markers {
            if observed.contains(&det.marker) {
                continue;
            }
            observed.push(det.marker);
            if !self.map.markers.contains_key(&det.marker) {
                self.map
                    .add_marker(Marker {
                        id: det.marker,
                        size: self.cfg.marker_size,
                        pose: pose.compose(&det.pose),
                    })
                    .expect("marker is new");
                fresh.push(det.marker);
            }
            let f = self.factor(FactorModel::MarkerObs {
                keyframe: id,
                marker: det.marker,
                measured: det.pose,
            });
            self.graph.add(f);
        }

        for det in &obs.points {
            self.observe_point(id, det.point, det.pixel);
        }

        let mut associations = Vec::new();
        for m in &fresh {
            let marker = self.map.markers[m].clone();
            let assoc = self.analyzer.infer_wall(&marker, &mut self.map);
            let f = self.factor(FactorModel::MarkerWall {
                wall: assoc.wall(),
                marker: *m,
            });
            self.graph.add(f);
            self.events.push(Event::Wall {
                keyframe: id,
                marker: *m,
                wall: assoc.wall(),
                created: matches!(assoc, WallAssociation::Created(_)),
            });
            associations.push((*m, assoc));
        }

        let loops = self.analyzer.check_loops(id, &observed, &associations, &self.map);
        self.detect_rooms(id);
        self.events.extend(loops.iter().copied().map(Event::Loop));
        loops
    }

    fn detect_rooms(&mut self, id: KeyframeId) {
        let det = self.analyzer.detect_rooms(&mut self.map);
        for r in det.created {
            let room = self.map.rooms[&r].clone();
            let model = match room.kind {
                RoomKind::TwoWall => FactorModel::TwoWallRoom {
                    room: r,
                    walls: [room.walls[0], room.walls[1]],
                    marker: room.anchor_marker.expect("corridors carry an anchor"),
                },
                RoomKind::FourWall => FactorModel::FourWallRoom {
                    room: r,
                    walls: [room.walls[0], room.walls[1], room.walls[2], room.walls[3]],
                },
            };
            let f = self.factor(model);
            self.graph.add(f);
            self.reported_pending.remove(&room.label);
            self.events.push(Event::Room {
                keyframe: id,
                room: r,
                label: room.label,
                kind: room.kind,
            });
        }
        for e in det.pending {
            let label = match &e {
                RoomError::AmbiguousRoomGeometry { label, .. } | RoomError::Degenerate { label, .. } => label.clone(),
            };
            let reason = e.to_string();
            if self.reported_pending.get(&label) != Some(&reason) {
                self.reported_pending.insert(label.clone(), reason.clone());
                self.events.push(Event::RoomPending {
                    keyframe: id,
                    label,
                    reason,
                });
            }
        }
    }

    fn observe_point(&mut self, kf: KeyframeId, point: PointId, pixel: Vector2<f64>) {
        if self.map.points.contains_key(&point) {
            let f = self.factor(FactorModel::PointProj {
                keyframe: kf,
                point,
                pixel,
                intrinsics: self.cfg.intrinsics,
            });
            self.graph.add(f);
            return;
        }
        let pending = self
            .pending_points
            .entry(point)
            .or_insert(PendingPoint { observations: Vec::new() });
        pending.observations.push((kf, pixel));
        let (k0, px0) = pending.observations[0];
        if k0 == kf {
            return;
        }
        let k = &self.cfg.intrinsics;
        // gate on odometry-only poses so both modes build the same graph
        let (a, b) = (&self.dead_reckoned[&k0], &self.dead_reckoned[&kf]);
        let baseline = (b.translation() - a.translation()).norm();
        let (ra, rb) = (a.rotation() * bearing(&px0, k), b.rotation() * bearing(&pixel, k));
        let parallax = math::acos(ra.dot(&rb) / (ra.norm() * rb.norm()));
        if baseline < self.cfg.point_min_baseline || parallax < self.cfg.point_min_parallax {
            return;
        }
        if triangulate(a, &px0, b, &pixel, k).is_none() {
            return;
        }
        let (ta, tb) = (&self.map.keyframes[&k0].pose, &self.map.keyframes[&kf].pose);
        let position = triangulate(ta, &px0, tb, &pixel, k)
            .or_else(|| triangulate(a, &px0, b, &pixel, k).map(|x| tb.transform_point(&b.inverse_transform_point(&x))))
            .expect("odometry triangulation succeeded");
        let pending = self.pending_points.remove(&point).expect("just inserted");
        self.map
            .add_point(MapPoint {
                id: point,
                position,
                viewing_direction: None,
                descriptor: Vec::new(),
            })
            .expect("point is new");
        for (kf, pixel) in pending.observations {
            let f = self.factor(FactorModel::PointProj {
                keyframe: kf,
                point,
                pixel,
                intrinsics: self.cfg.intrinsics,
            });
            self.graph.add(f);
        }
    }

    /// Variables touched by the last `local_window` keyframes, plus walls and rooms above them.
    pub fn local_variables(&self, newest: KeyframeId) -> BTreeSet<VarId> {
        let start = (newest.0 + 1).saturating_sub(self.cfg.local_window as u32);
        let mut free: BTreeSet<VarId> = (start..=newest.0).map(|i| VarId::Keyframe(KeyframeId(i))).collect();
        for f in self.graph.factors() {
            match &f.model {
                FactorModel::MarkerObs { keyframe, marker, .. } if keyframe.0 >= start => {
                    free.insert(VarId::Marker(*marker));
                }
                FactorModel::PointProj { keyframe, point, .. } if keyframe.0 >= start => {
                    free.insert(VarId::Point(*point));
                }
                _ => {}
            }
        }
        if self.cfg.mode == Mode::Full {
            let walls: BTreeSet<WallId> = free
                .iter()
                .filter_map(|v| match v {
                    VarId::Marker(m) => self.map.wall_of_marker(*m),
                    _ => None,
                })
                .collect();
            for r in self.map.rooms.values() {
                if r.walls.iter().any(|w| walls.contains(w)) {
                    free.insert(VarId::Room(r.id));
                }
            }
            free.extend(walls.into_iter().map(VarId::Wall));
        }
        free
    }

    fn optimize_local(&mut self, id: KeyframeId) {
        let free = self.local_variables(id);
        let mode = self.cfg.mode;
        let cfg = self.cfg.local.clone();
        let res = optimize_filtered(&self.graph, &mut self.map, &cfg, Some(&free), &|f| keep(mode, f));
        self.log_optimization(id, Scope::Local, res);
    }

    fn run_global(&mut self, id: KeyframeId, scope: Scope) -> Result<OptimizeReport, OptimizeError> {
        let mode = self.cfg.mode;
        let cfg = self.cfg.global.clone();
        let res = optimize_filtered(&self.graph, &mut self.map, &cfg, None, &|f| keep(mode, f));
        self.log_optimization(id, scope, res.clone());
        res
    }

    fn log_optimization(&mut self, keyframe: KeyframeId, scope: Scope, res: Result<OptimizeReport, OptimizeError>) {
        self.events.push(match res {
            Ok(report) => Event::Optimization { keyframe, scope, report },
            Err(error) => Event::OptimizationFailed { keyframe, scope, error },
        });
    }

    /// Runs the closing global optimization and returns the results.
    pub fn finish(mut self) -> Result<PipelineOutput, PipelineError> {
        let last = *self.map.keyframes.keys().next_back().ok_or(PipelineError::EmptyStream)?;
        self.run_global(last, Scope::Final)?;
        self.detect_rooms(last);
        Ok(PipelineOutput {
            trajectory: self.trajectory(),
            cost: self.cost(),
            map: self.map,
            graph: self.graph,
            events: self.events,
            mode: self.cfg.mode,
        })
    }
}

fn keep(mode: Mode, f: &Factor) -> bool {
    mode == Mode::Full || !f.kind().is_semantic()
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub map: HierMap,
    pub trajectory: Trajectory,
    pub graph: FactorGraph,
    pub events: Vec<Event>,
    /// Total cost of the active factors at the final state.
    pub cost: f64,
    pub mode: Mode,
}

impl PipelineOutput {
    /// Keyframe decision per frame, in stream order.
    pub fn decisions(&self) -> Vec<bool> {
        self.events
            .iter()
            .filter_map(|e| match e {
                Event::Keyframe { .. } => Some(true),
                Event::Skip { .. } => Some(false),
                _ => None,
            })
            .collect()
    }

    pub fn factor_count(&self, kind: FactorKind) -> usize {
        self.graph.count(kind)
    }
}

pub fn run_sequence<I>(frames: I, cfg: PipelineConfig, dictionary: RoomDictionary) -> Result<PipelineOutput, PipelineError>
where
    I: IntoIterator,
    I::Item: Borrow<FrameObservation>,
{
    let mut p = Pipeline::new(cfg, dictionary)?;
    for f in frames {
        p.process_frame(f.borrow())?;
    }
    p.finish()
}

/// Replays a stream with fixed keyframe decisions.
pub fn replay_sequence<I>(
    frames: I,
    decisions: &[bool],
    cfg: PipelineConfig,
    dictionary: RoomDictionary,
) -> Result<PipelineOutput, PipelineError>
where
    I: IntoIterator,
    I::Item: Borrow<FrameObservation>,
{
    let mut p = Pipeline::new(cfg, dictionary)?;
    for (f, d) in frames.into_iter().zip(decisions) {
        p.process_frame_with(f.borrow(), Some(*d))?;
    }
    p.finish()
}

fn bearing(px: &Vector2<f64>, k: &Intrinsics) -> Vec3 {
    Vec3::new((px.x - k.cx) / k.fx, (px.y - k.cy) / k.fy, 1.0)
}

/// Midpoint of the closest points between two viewing rays; `None` if parallel or behind either camera.
pub fn triangulate(a: &Pose, pa: &Vector2<f64>, b: &Pose, pb: &Vector2<f64>, k: &Intrinsics) -> Option<Vec3> {
    let da = a.rotation() * bearing(pa, k);
    let db = b.rotation() * bearing(pb, k);
    let (ca, cb) = (a.translation(), b.translation());
    let w = ca - cb;
    let (aa, ab, bb) = (da.dot(&da), da.dot(&db), db.dot(&db));
    let (aw, bw) = (da.dot(&w), db.dot(&w));
    let den = aa * bb - ab * ab;
    if den <= 1e-12 * aa * bb {
        return None;
    }
    let s = (ab * bw - bb * aw) / den;
    let t = (aa * bw - ab * aw) / den;
    if s <= 0.0 || t <= 0.0 {
        return None;
    }
    Some(((ca + da * s) + (cb + db * t)) * 0.5)
}
