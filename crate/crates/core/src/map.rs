//! The layered map: keyframes, map points, markers, walls and rooms.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::geometry::{Plane, Pose, Vec3, WallAngles};

macro_rules! id_type {
    ($(#[$m:meta])* $name:ident, $tag:literal) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($tag, "{}"), self.0)
            }
        }
    };
}

id_type!(KeyframeId, "kf");
id_type!(PointId, "pt");
id_type!(
    /// The id printed on the fiducial marker itself.
    MarkerId,
    "m"
);
id_type!(WallId, "w");
id_type!(RoomId, "r");

/// Default fiducial side length, meters.
pub const DEFAULT_MARKER_SIZE: f64 = 0.17;

/// Max angle between the normals of the two walls of a corridor, radians (10°).
pub const PARALLEL_WALL_TOLERANCE: f64 = 10.0 * core::f64::consts::PI / 180.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Default for Intrinsics {
    fn default() -> Self {
        Self {
            fx: 460.0,
            fy: 460.0,
            cx: 320.0,
            cy: 240.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Keyframe {
    pub id: KeyframeId,
    pub timestamp: f64,
    /// Camera-in-global.
    pub pose: Pose,
    pub intrinsics: Intrinsics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MapPoint {
    pub id: PointId,
    pub position: Vec3,
    pub viewing_direction: Option<Vec3>,
    /// Carried for completeness; never matched.
    pub descriptor: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Marker {
    pub id: MarkerId,
    /// Side length, meters.
    pub size: f64,
    /// Marker-in-global; the board normal is the local +z axis.
    pub pose: Pose,
}

impl Marker {
    pub fn corners(&self) -> [Vec3; 4] {
        marker_corners(self)
    }

    pub fn center(&self) -> Vec3 {
        *self.pose.translation()
    }
}

/// Corners counter-clockwise seen from the marker's +z, starting at (−s/2, −s/2).
pub fn marker_corners(m: &Marker) -> [Vec3; 4] {
    let h = 0.5 * m.size;
    [
        Vec3::new(-h, -h, 0.0),
        Vec3::new(h, -h, 0.0),
        Vec3::new(h, h, 0.0),
        Vec3::new(-h, h, 0.0),
    ]
    .map(|c| m.pose.transform_point(&c))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Wall {
    pub id: WallId,
    pub state: WallAngles,
    pub markers: Vec<MarkerId>,
}

impl Wall {
    pub fn plane(&self) -> Plane {
        self.state.to_plane()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoomKind {
    TwoWall,
    FourWall,
}

impl RoomKind {
    pub fn wall_count(self) -> usize {
        match self {
            RoomKind::TwoWall => 2,
            RoomKind::FourWall => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RoomKind::TwoWall => "two_wall",
            RoomKind::FourWall => "four_wall",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Room {
    pub id: RoomId,
    pub label: String,
    pub kind: RoomKind,
    pub center: Vec3,
    /// Two-wall: `[a, b]`. Four-wall: `[x_a, x_b, y_a, y_b]`.
    pub walls: Vec<WallId>,
    /// Marker whose center fixes the along-wall position of a corridor center.
    pub anchor_marker: Option<MarkerId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntityKind {
    Keyframe,
    Point,
    Marker,
    Wall,
    Room,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityKind::Keyframe => "keyframe",
            EntityKind::Point => "point",
            EntityKind::Marker => "marker",
            EntityKind::Wall => "wall",
            EntityKind::Room => "room",
        })
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum MapError {
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: EntityKind, id: u32 },
    #[error("{from} references missing {kind} {id}")]
    DanglingReference {
        from: String,
        kind: EntityKind,
        id: u32,
    },
    #[error("invalid {kind} {id}: {reason}")]
    Invalid {
        kind: EntityKind,
        id: u32,
        reason: &'static str,
    },
}

/// One broken invariant found by [`HierMap::audit`].
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub entity: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HierMap {
    pub keyframes: BTreeMap<KeyframeId, Keyframe>,
    pub points: BTreeMap<PointId, MapPoint>,
    pub markers: BTreeMap<MarkerId, Marker>,
    pub walls: BTreeMap<WallId, Wall>,
    pub rooms: BTreeMap<RoomId, Room>,
}

impl HierMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_keyframe(&mut self, kf: Keyframe) -> Result<(), MapError> {
        if self.keyframes.contains_key(&kf.id) {
            return Err(dup(EntityKind::Keyframe, kf.id.0));
        }
        if let Some((last_id, last)) = self.keyframes.iter().next_back() {
            if kf.id < *last_id || kf.timestamp <= last.timestamp {
                return Err(invalid(
                    EntityKind::Keyframe,
                    kf.id.0,
                    "ids must increase with timestamp",
                ));
            }
        }
        let k = &kf.intrinsics;
        if !(k.fx > 0.0 && k.fy > 0.0) {
            return Err(invalid(
                EntityKind::Keyframe,
                kf.id.0,
                "focal lengths must be positive",
            ));
        }
        self.keyframes.insert(kf.id, kf);
        Ok(())
    }

    pub fn add_point(&mut self, p: MapPoint) -> Result<(), MapError> {
        if self.points.contains_key(&p.id) {
            return Err(dup(EntityKind::Point, p.id.0));
        }
        if !p.position.iter().all(|v| v.is_finite()) {
            return Err(invalid(EntityKind::Point, p.id.0, "non-finite position"));
        }
        if let Some(v) = &p.viewing_direction {
            if (v.norm() - 1.0).abs() > 1e-9 {
                return Err(invalid(
                    EntityKind::Point,
                    p.id.0,
                    "viewing direction must be unit length",
                ));
            }
        }
        self.points.insert(p.id, p);
        Ok(())
    }

    pub fn add_marker(&mut self, m: Marker) -> Result<(), MapError> {
        if self.markers.contains_key(&m.id) {
            return Err(dup(EntityKind::Marker, m.id.0));
        }
        if !(m.size > 0.0) {
            return Err(invalid(EntityKind::Marker, m.id.0, "size must be positive"));
        }
        self.markers.insert(m.id, m);
        Ok(())
    }

    pub fn add_wall(&mut self, w: Wall) -> Result<(), MapError> {
        if self.walls.contains_key(&w.id) {
            return Err(dup(EntityKind::Wall, w.id.0));
        }
        if w.markers.is_empty() {
            return Err(invalid(EntityKind::Wall, w.id.0, "wall has no markers"));
        }
        for (i, m) in w.markers.iter().enumerate() {
            if w.markers[..i].contains(m) {
                return Err(invalid(EntityKind::Wall, w.id.0, "duplicate marker"));
            }
            if !self.markers.contains_key(m) {
                return Err(dangling(w.id, EntityKind::Marker, m.0));
            }
        }
        self.walls.insert(w.id, w);
        Ok(())
    }

    /// Appends a marker to an existing wall.
    pub fn attach_marker(&mut self, wall: WallId, marker: MarkerId) -> Result<(), MapError> {
        if !self.markers.contains_key(&marker) {
            return Err(dangling(wall, EntityKind::Marker, marker.0));
        }
        let w = self
            .walls
            .get_mut(&wall)
            .ok_or(MapError::DanglingReference {
                from: alloc::format!("{marker}"),
                kind: EntityKind::Wall,
                id: wall.0,
            })?;
        if w.markers.contains(&marker) {
            return Err(invalid(EntityKind::Wall, wall.0, "duplicate marker"));
        }
        w.markers.push(marker);
        Ok(())
    }

    pub fn add_room(&mut self, r: Room) -> Result<(), MapError> {
        if self.rooms.contains_key(&r.id) {
            return Err(dup(EntityKind::Room, r.id.0));
        }
        if r.walls.len() != r.kind.wall_count() {
            return Err(invalid(
                EntityKind::Room,
                r.id.0,
                "wall count does not match room kind",
            ));
        }
        for w in &r.walls {
            if !self.walls.contains_key(w) {
                return Err(dangling(r.id, EntityKind::Wall, w.0));
            }
        }
        if let Some(m) = r.anchor_marker {
            if !self.markers.contains_key(&m) {
                return Err(dangling(r.id, EntityKind::Marker, m.0));
            }
        }
        if r.kind == RoomKind::TwoWall {
            let a = self.walls[&r.walls[0]].plane();
            let b = self.walls[&r.walls[1]].plane();
            if a.unsigned_angle_to(&b) >= PARALLEL_WALL_TOLERANCE {
                return Err(invalid(
                    EntityKind::Room,
                    r.id.0,
                    "two-wall room walls are not parallel",
                ));
            }
        }
        self.rooms.insert(r.id, r);
        Ok(())
    }

    pub fn keyframe(&self, id: KeyframeId) -> Option<&Keyframe> {
        self.keyframes.get(&id)
    }

    pub fn point(&self, id: PointId) -> Option<&MapPoint> {
        self.points.get(&id)
    }

    pub fn marker(&self, id: MarkerId) -> Option<&Marker> {
        self.markers.get(&id)
    }

    pub fn wall(&self, id: WallId) -> Option<&Wall> {
        self.walls.get(&id)
    }

    pub fn room(&self, id: RoomId) -> Option<&Room> {
        self.rooms.get(&id)
    }

    /// The wall a marker is attached to, if any.
    pub fn wall_of_marker(&self, m: MarkerId) -> Option<WallId> {
        self.walls
            .values()
            .find(|w| w.markers.contains(&m))
            .map(|w| w.id)
    }

    pub fn next_wall_id(&self) -> WallId {
        WallId(self.walls.keys().next_back().map_or(0, |w| w.0 + 1))
    }

    pub fn next_room_id(&self) -> RoomId {
        RoomId(self.rooms.keys().next_back().map_or(0, |r| r.0 + 1))
    }

    /// Full referential-integrity check; an empty result means the map is consistent.
    pub fn audit(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |entity: String, reason: String| out.push(Violation { entity, reason });
        let mut owner: BTreeMap<MarkerId, WallId> = BTreeMap::new();
        for w in self.walls.values() {
            if w.markers.is_empty() {
                push(alloc::format!("{}", w.id), "wall has no markers".into());
            }
            for (i, m) in w.markers.iter().enumerate() {
                if !self.markers.contains_key(m) {
                    push(alloc::format!("{}", w.id), alloc::format!("missing {m}"));
                }
                if w.markers[..i].contains(m) {
                    push(alloc::format!("{}", w.id), alloc::format!("duplicate {m}"));
                }
                if let Some(prev) = owner.insert(*m, w.id) {
                    if prev != w.id {
                        push(
                            alloc::format!("{m}"),
                            alloc::format!("attached to both {prev} and {}", w.id),
                        );
                    }
                }
            }
        }
        for r in self.rooms.values() {
            if r.walls.len() != r.kind.wall_count() {
                push(alloc::format!("{}", r.id), "wall count mismatch".into());
            }
            for w in &r.walls {
                if !self.walls.contains_key(w) {
                    push(alloc::format!("{}", r.id), alloc::format!("missing {w}"));
                }
            }
            if let Some(m) = r.anchor_marker {
                if !self.markers.contains_key(&m) {
                    push(alloc::format!("{}", r.id), alloc::format!("missing {m}"));
                }
            }
        }
        let mut last: Option<&Keyframe> = None;
        for k in self.keyframes.values() {
            if let Some(prev) = last {
                if k.timestamp <= prev.timestamp {
                    push(
                        alloc::format!("{}", k.id),
                        "timestamp not increasing".into(),
                    );
                }
            }
            last = Some(k);
        }
        out
    }
}

fn dup(kind: EntityKind, id: u32) -> MapError {
    MapError::DuplicateId { kind, id }
}

fn invalid(kind: EntityKind, id: u32, reason: &'static str) -> MapError {
    MapError::Invalid { kind, id, reason }
}

fn dangling(from: impl fmt::Display, kind: EntityKind, id: u32) -> MapError {
    MapError::DanglingReference {
        from: alloc::format!("{from}"),
        kind,
        id,
    }
}
