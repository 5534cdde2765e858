//! TOML configuration files. Every top-level file carries `format_version = 1`.

use std::path::{Path, PathBuf};

use msgraph_core::eval::Alignment;
use msgraph_core::factors::InformationDefaults;
use msgraph_core::geometry::Vec3;
use msgraph_core::map::{Intrinsics, MarkerId, DEFAULT_MARKER_SIZE};
use msgraph_core::optimizer::OptimizeConfig;
use msgraph_core::pipeline::{Mode, PipelineConfig};
use msgraph_core::semantic::RoomEntry;
use msgraph_core::sim::{
    Facing, MarkerPlacement, NoiseSpec, PointScatter, TrajectorySpec, WallRect, Waypoint, WorldSpec,
};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{self, Error};
use crate::{num, report};

pub const FORMAT_VERSION: u32 = 1;

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses `text` as `T`, reporting the offending line on failure.
pub fn parse_toml<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T, Error> {
    toml::from_str(text).map_err(|e: toml::de::Error| match e.span() {
        Some(span) => Error::Parse {
            path: path.to_path_buf(),
            line: line_of(text, span.start),
            reason: e.message().to_string(),
        },
        None => Error::config(path, e.message()),
    })
}

fn check_version(v: Option<u32>, path: &Path) -> Result<(), Error> {
    match v {
        Some(FORMAT_VERSION) => Ok(()),
        Some(other) => Err(Error::config(path, format!("unsupported format_version {other}"))),
        None => Err(Error::config(path, "missing format_version")),
    }
}

fn nested_version(v: Option<u32>, path: &Path, section: &str) -> Result<(), Error> {
    match v {
        None => Ok(()),
        Some(_) => Err(Error::config(path, format!("format_version is not allowed inside [{section}]"))),
    }
}

fn load<T: DeserializeOwned>(path: &Path) -> Result<T, Error> {
    parse_toml(&error::read(path)?, path)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallFile {
    pub corner: [f64; 3],
    pub length: f64,
    pub height: f64,
    /// One of `+x`, `-x`, `+y`, `-y`.
    pub facing: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerFile {
    pub id: u32,
    pub wall: usize,
    pub offset: [f64; 2],
    pub size: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomFile {
    pub label: String,
    pub markers: Vec<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatterFile {
    pub count: usize,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldFile {
    pub format_version: Option<u32>,
    #[serde(default)]
    pub walls: Vec<WallFile>,
    #[serde(default)]
    pub markers: Vec<MarkerFile>,
    #[serde(default)]
    pub rooms: Vec<RoomFile>,
    #[serde(default)]
    pub points: Vec<[f64; 3]>,
    pub scatter: Option<ScatterFile>,
}

impl WorldFile {
    pub fn into_spec(self, path: &Path) -> Result<WorldSpec, Error> {
        let walls = self
            .walls
            .into_iter()
            .enumerate()
            .map(|(i, w)| {
                let facing = Facing::parse(&w.facing)
                    .ok_or_else(|| Error::config(path, format!("wall {i}: unknown facing `{}`", w.facing)))?;
                Ok(WallRect {
                    corner: Vec3::from(w.corner),
                    length: w.length,
                    height: w.height,
                    facing,
                })
            })
            .collect::<Result<_, Error>>()?;
        Ok(WorldSpec {
            walls,
            markers: self
                .markers
                .into_iter()
                .map(|m| MarkerPlacement {
                    id: MarkerId(m.id),
                    wall: m.wall,
                    offset: m.offset,
                    size: m.size.unwrap_or(DEFAULT_MARKER_SIZE),
                })
                .collect(),
            rooms: self
                .rooms
                .into_iter()
                .map(|r| RoomEntry {
                    label: r.label,
                    markers: r.markers.into_iter().map(MarkerId).collect(),
                })
                .collect(),
            points: self.points.into_iter().map(Vec3::from).collect(),
            scatter: self.scatter.map(|s| PointScatter {
                count: s.count,
                seed: s.seed,
            }),
        })
    }
}

pub fn load_world(path: &Path) -> Result<WorldSpec, Error> {
    let f: WorldFile = load(path)?;
    check_version(f.format_version, path)?;
    f.into_spec(path)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaypointFile {
    pub position: [f64; 3],
    /// Radians, counter-clockwise from +x.
    pub yaw: f64,
    #[serde(default)]
    pub hold: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryFile {
    pub format_version: Option<u32>,
    pub speed: f64,
    pub rate: f64,
    pub turn_rate: f64,
    pub waypoints: Vec<WaypointFile>,
}

impl TrajectoryFile {
    pub fn into_spec(self) -> TrajectorySpec {
        TrajectorySpec {
            waypoints: self
                .waypoints
                .into_iter()
                .map(|w| Waypoint {
                    position: Vec3::from(w.position),
                    yaw: w.yaw,
                    hold: w.hold,
                })
                .collect(),
            speed: self.speed,
            rate: self.rate,
            turn_rate: self.turn_rate,
        }
    }
}

pub fn load_trajectory(path: &Path) -> Result<TrajectorySpec, Error> {
    let f: TrajectoryFile = load(path)?;
    check_version(f.format_version, path)?;
    Ok(f.into_spec())
}

/// Sensor noise. Omitted fields take the noiseless defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseFile {
    pub format_version: Option<u32>,
    pub odom_trans: Option<f64>,
    pub odom_rot: Option<f64>,
    pub marker_trans: Option<f64>,
    pub marker_rot: Option<f64>,
    pub pixel: Option<f64>,
    pub max_range: Option<f64>,
    pub fov_half_angle: Option<f64>,
    pub seed: Option<u64>,
}

impl NoiseFile {
    pub fn into_spec(self) -> NoiseSpec {
        let d = NoiseSpec::noiseless();
        NoiseSpec {
            odom_trans: self.odom_trans.unwrap_or(d.odom_trans),
            odom_rot: self.odom_rot.unwrap_or(d.odom_rot),
            marker_trans: self.marker_trans.unwrap_or(d.marker_trans),
            marker_rot: self.marker_rot.unwrap_or(d.marker_rot),
            pixel: self.pixel.unwrap_or(d.pixel),
            max_range: self.max_range.unwrap_or(d.max_range),
            fov_half_angle: self.fov_half_angle.unwrap_or(d.fov_half_angle),
            seed: self.seed.unwrap_or(d.seed),
        }
    }
}

pub fn load_noise(path: &Path) -> Result<NoiseSpec, Error> {
    let f: NoiseFile = load(path)?;
    check_version(f.format_version, path)?;
    Ok(f.into_spec())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatesFile {
    pub min_translation: Option<f64>,
    pub min_rotation: Option<f64>,
    pub force_on_new_marker: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerFile {
    pub max_iterations: Option<usize>,
    pub initial_damping: Option<f64>,
    pub damping_up: Option<f64>,
    pub damping_down: Option<f64>,
    pub convergence_tol: Option<f64>,
    pub huber_delta: Option<f64>,
}

impl OptimizerFile {
    fn apply(self, c: &mut OptimizeConfig) {
        set(&mut c.max_iterations, self.max_iterations);
        set(&mut c.initial_damping, self.initial_damping);
        set(&mut c.damping_up, self.damping_up);
        set(&mut c.damping_down, self.damping_down);
        set(&mut c.convergence_tol, self.convergence_tol);
        if self.huber_delta.is_some() {
            c.huber_delta = self.huber_delta;
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemanticFile {
    pub wall_angle_gate: Option<f64>,
    pub wall_distance_gate: Option<f64>,
    pub revisit_window: Option<u32>,
}

/// Diagonal information overrides, one array per factor kind.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InformationFile {
    pub odometry: Option<[f64; 6]>,
    pub marker_obs: Option<[f64; 6]>,
    pub point_proj: Option<[f64; 2]>,
    pub marker_wall: Option<[f64; 3]>,
    pub room: Option<[f64; 3]>,
}

impl InformationFile {
    fn apply(self, i: &mut InformationDefaults) {
        set(&mut i.odometry, self.odometry);
        set(&mut i.marker_obs, self.marker_obs);
        set(&mut i.point_proj, self.point_proj);
        set(&mut i.marker_wall, self.marker_wall);
        set(&mut i.room, self.room);
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicsFile {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsFile {
    pub min_baseline: Option<f64>,
    pub min_parallax: Option<f64>,
}

/// Pipeline settings. Omitted fields keep their defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineFile {
    pub format_version: Option<u32>,
    pub mode: Option<String>,
    pub local_window: Option<usize>,
    pub marker_size: Option<f64>,
    /// `tx ty tz qx qy qz qw`
    pub initial_pose: Option<[f64; 7]>,
    #[serde(default)]
    pub gates: GatesFile,
    #[serde(default)]
    pub local: OptimizerFile,
    #[serde(default)]
    pub global: OptimizerFile,
    #[serde(default)]
    pub semantic: SemanticFile,
    #[serde(default)]
    pub information: InformationFile,
    pub intrinsics: Option<IntrinsicsFile>,
    #[serde(default)]
    pub points: PointsFile,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl PipelineFile {
    pub fn into_config(self, path: &Path) -> Result<PipelineConfig, Error> {
        let mut c = PipelineConfig::default();
        if let Some(m) = &self.mode {
            c.mode = Mode::parse(m).ok_or_else(|| Error::config(path, format!("unknown mode `{m}`")))?;
        }
        set(&mut c.local_window, self.local_window);
        set(&mut c.marker_size, self.marker_size);
        if let Some(f) = self.initial_pose {
            c.initial_pose = num::pose_from_fields(&f).ok_or_else(|| Error::config(path, "initial_pose is not a valid pose"))?;
        }
        set(&mut c.gates.min_translation, self.gates.min_translation);
        set(&mut c.gates.min_rotation, self.gates.min_rotation);
        set(&mut c.gates.force_on_new_marker, self.gates.force_on_new_marker);
        self.local.apply(&mut c.local);
        self.global.apply(&mut c.global);
        set(&mut c.semantic.wall_angle_gate, self.semantic.wall_angle_gate);
        set(&mut c.semantic.wall_distance_gate, self.semantic.wall_distance_gate);
        set(&mut c.semantic.revisit_window, self.semantic.revisit_window);
        self.information.apply(&mut c.information);
        if let Some(k) = self.intrinsics {
            c.intrinsics = Intrinsics {
                fx: k.fx,
                fy: k.fy,
                cx: k.cx,
                cy: k.cy,
            };
        }
        set(&mut c.point_min_baseline, self.points.min_baseline);
        set(&mut c.point_min_parallax, self.points.min_parallax);
        c.validate().map_err(|e| Error::config(path, e))?;
        Ok(c)
    }
}

pub fn load_pipeline(path: &Path) -> Result<PipelineConfig, Error> {
    let f: PipelineFile = load(path)?;
    check_version(f.format_version, path)?;
    f.into_config(path)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub format_version: Option<u32>,
    /// World file, relative to this file.
    pub world: PathBuf,
    /// Trajectory file, relative to this file.
    pub trajectory: PathBuf,
    /// Seed of the first run; run `i` uses `seed + i`.
    pub seed: u64,
    pub runs: usize,
    pub align: Option<String>,
    #[serde(default)]
    pub noise: NoiseFile,
    #[serde(default)]
    pub pipeline: PipelineFile,
}

/// A fully resolved paired experiment.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub world: WorldSpec,
    pub trajectory: TrajectorySpec,
    pub noise: NoiseSpec,
    /// Mode is overridden per run.
    pub pipeline: PipelineConfig,
    pub seed: u64,
    pub runs: usize,
    pub align: Alignment,
}

pub fn load_experiment(path: &Path) -> Result<Experiment, Error> {
    let f: ExperimentFile = load(path)?;
    check_version(f.format_version, path)?;
    nested_version(f.noise.format_version, path, "noise")?;
    nested_version(f.pipeline.format_version, path, "pipeline")?;
    if f.noise.seed.is_some() {
        return Err(Error::config(path, "set the experiment seed at the top level, not in [noise]"));
    }
    if f.pipeline.mode.is_some() {
        return Err(Error::config(path, "experiments run both modes; remove [pipeline] mode"));
    }
    if f.runs == 0 {
        return Err(Error::config(path, "runs must be at least 1"));
    }
    let align = match f.align.as_deref() {
        None => Alignment::Rigid,
        Some(a) => report::parse_alignment(a).ok_or_else(|| Error::config(path, format!("unknown align `{a}`")))?,
    };
    let dir = path.parent().unwrap_or(Path::new(""));
    Ok(Experiment {
        world: load_world(&dir.join(&f.world))?,
        trajectory: load_trajectory(&dir.join(&f.trajectory))?,
        noise: f.noise.into_spec(),
        pipeline: f.pipeline.into_config(path)?,
        seed: f.seed,
        runs: f.runs,
        align,
    })
}
