//! Marker-driven wall and room inference, plus loop detection.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::factors::{four_wall_room_center, two_wall_room_center, FactorError};
use crate::geometry::{Plane, WallAngles};
use crate::map::{
    HierMap, KeyframeId, Marker, MarkerId, Room, RoomId, RoomKind, Wall, WallId,
    PARALLEL_WALL_TOLERANCE,
};
use crate::math;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoomEntry {
    pub label: String,
    pub markers: Vec<MarkerId>,
}

/// Room label to the marker ids on its walls. No geometry.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RoomDictionary {
    entries: Vec<RoomEntry>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DictionaryError {
    #[error("duplicate room label `{0}`")]
    DuplicateLabel(String),
    #[error("room `{label}` lists marker {marker} twice")]
    DuplicateMarker { label: String, marker: u32 },
    #[error("room `{0}` lists no markers")]
    Empty(String),
}

impl RoomDictionary {
    pub fn new(entries: Vec<RoomEntry>) -> Result<Self, DictionaryError> {
        let mut labels = BTreeSet::new();
        for e in &entries {
            if !labels.insert(e.label.as_str()) {
                return Err(DictionaryError::DuplicateLabel(e.label.clone()));
            }
            if e.markers.is_empty() {
                return Err(DictionaryError::Empty(e.label.clone()));
            }
            for (i, m) in e.markers.iter().enumerate() {
                if e.markers[..i].contains(m) {
                    return Err(DictionaryError::DuplicateMarker {
                        label: e.label.clone(),
                        marker: m.0,
                    });
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[RoomEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SemanticConfig {
    /// Max angle between a marker board and a wall to associate them, radians.
    pub wall_angle_gate: f64,
    /// Max marker-center-to-wall distance to associate them, meters.
    pub wall_distance_gate: f64,
    /// Keyframe gap after which a re-observation counts as a loop.
    pub revisit_window: u32,
}

impl Default for SemanticConfig {
    fn default() -> Self {
        Self {
            wall_angle_gate: 10.0 * core::f64::consts::PI / 180.0,
            wall_distance_gate: 0.3,
            revisit_window: 30,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WallAssociation {
    /// The marker was attached to a wall already in the map.
    Existing(WallId),
    /// A new wall was created from the marker.
    Created(WallId),
}

impl WallAssociation {
    pub fn wall(self) -> WallId {
        match self {
            WallAssociation::Existing(w) | WallAssociation::Created(w) => w,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum LoopKind {
    MarkerRevisit,
    WallRematch,
}

impl LoopKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LoopKind::MarkerRevisit => "marker_revisit",
            LoopKind::WallRematch => "wall_rematch",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LoopEvent {
    pub kind: LoopKind,
    /// Marker id for revisits, wall id for rematches.
    pub subject: u32,
    pub keyframe: KeyframeId,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum RoomError {
    #[error("room `{label}`: {walls} walls match neither the corridor nor the four-wall template")]
    AmbiguousRoomGeometry { label: String, walls: usize },
    #[error("room `{label}`: {source}")]
    Degenerate { label: String, source: FactorError },
}

/// Outcome of one room-detection pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoomDetection {
    pub created: Vec<RoomId>,
    /// Entries whose markers are all mapped but whose walls fit no template yet.
    pub pending: Vec<RoomError>,
}

/// Candidate wall for a marker: the existing wall (either normal sign) within
/// both gates with the smallest center distance, if any.
pub fn matching_wall(marker: &Marker, map: &HierMap, cfg: &SemanticConfig) -> Option<WallId> {
    let candidate = Plane::from_marker(&marker.pose);
    let center = marker.center();
    let mut best: Option<(f64, WallId)> = None;
    for w in map.walls.values() {
        let plane = w.plane();
        if plane.unsigned_angle_to(&candidate) >= cfg.wall_angle_gate {
            continue;
        }
        let dist = math::abs(plane.signed_distance(&center));
        if dist >= cfg.wall_distance_gate {
            continue;
        }
        if best.is_none_or(|(d, _)| dist < d) {
            best = Some((dist, w.id));
        }
    }
    best.map(|(_, id)| id)
}

/// Tracks first/last sightings and turns marker observations into walls, rooms and loop events.
#[derive(Clone, Debug)]
pub struct SemanticAnalyzer {
    cfg: SemanticConfig,
    dictionary: RoomDictionary,
    first_seen: BTreeMap<MarkerId, KeyframeId>,
    last_seen: BTreeMap<MarkerId, KeyframeId>,
    wall_support: BTreeMap<WallId, KeyframeId>,
}

impl SemanticAnalyzer {
    pub fn new(cfg: SemanticConfig, dictionary: RoomDictionary) -> Self {
        Self {
            cfg,
            dictionary,
            first_seen: BTreeMap::new(),
            last_seen: BTreeMap::new(),
            wall_support: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &SemanticConfig {
        &self.cfg
    }

    pub fn dictionary(&self) -> &RoomDictionary {
        &self.dictionary
    }

    pub fn first_seen(&self, m: MarkerId) -> Option<KeyframeId> {
        self.first_seen.get(&m).copied()
    }

    /// Attaches `marker` (already in the map) to a matching wall or creates a new one.
    /// A marker that already belongs to a wall keeps it.
    pub fn infer_wall(&mut self, marker: &Marker, map: &mut HierMap) -> WallAssociation {
        if let Some(w) = map.wall_of_marker(marker.id) {
            return WallAssociation::Existing(w);
        }
        if let Some(w) = matching_wall(marker, map, &self.cfg) {
            map.attach_marker(w, marker.id)
                .expect("marker and wall are both in the map");
            return WallAssociation::Existing(w);
        }
        let id = map.next_wall_id();
        let state = WallAngles::from_plane(&Plane::from_marker(&marker.pose));
        map.add_wall(Wall {
            id,
            state,
            markers: alloc::vec![marker.id],
        })
        .expect("fresh wall id with a mapped marker");
        WallAssociation::Created(id)
    }

    /// Loop events for one keyframe, then records the sightings.
    ///
    /// `observed` are the marker ids detected in the keyframe; `fresh` are the
    /// markers first mapped in this keyframe together with their wall association.
    pub fn check_loops(
        &mut self,
        keyframe: KeyframeId,
        observed: &[MarkerId],
        fresh: &[(MarkerId, WallAssociation)],
        map: &HierMap,
    ) -> Vec<LoopEvent> {
        let window = self.cfg.revisit_window;
        let stale = |last: KeyframeId| keyframe.0.saturating_sub(last.0) > window;
        let mut events = Vec::new();
        for m in observed {
            if let Some(last) = self.last_seen.get(m) {
                if stale(*last) {
                    events.push(LoopEvent {
                        kind: LoopKind::MarkerRevisit,
                        subject: m.0,
                        keyframe,
                    });
                }
            }
        }
        let mut rematched = BTreeSet::new();
        for (_, assoc) in fresh {
            if let WallAssociation::Existing(w) = assoc {
                if let Some(last) = self.wall_support.get(w) {
                    if stale(*last) && rematched.insert(*w) {
                        events.push(LoopEvent {
                            kind: LoopKind::WallRematch,
                            subject: w.0,
                            keyframe,
                        });
                    }
                }
            }
        }
        for m in observed {
            self.first_seen.entry(*m).or_insert(keyframe);
            self.last_seen.insert(*m, keyframe);
            if let Some(w) = map.wall_of_marker(*m) {
                self.wall_support.insert(w, keyframe);
            }
        }
        events
    }

    /// Creates rooms for dictionary entries whose markers are all mapped.
    /// Entries already realized (by label) are skipped.
    pub fn detect_rooms(&self, map: &mut HierMap) -> RoomDetection {
        let mut out = RoomDetection::default();
        for entry in self.dictionary.entries() {
            if map.rooms.values().any(|r| r.label == entry.label) {
                continue;
            }
            if !entry.markers.iter().all(|m| map.markers.contains_key(m)) {
                continue;
            }
            let mut walls: Vec<WallId> = Vec::new();
            for m in &entry.markers {
                if let Some(w) = map.wall_of_marker(*m) {
                    if !walls.contains(&w) {
                        walls.push(w);
                    }
                }
            }
            match self.build_room(&entry.label, &entry.markers, &walls, map) {
                Ok(room) => {
                    let id = room.id;
                    map.add_room(room).expect("room references mapped walls");
                    out.created.push(id);
                }
                Err(e) => out.pending.push(e),
            }
        }
        out
    }

    fn build_room(
        &self,
        label: &str,
        markers: &[MarkerId],
        walls: &[WallId],
        map: &HierMap,
    ) -> Result<Room, RoomError> {
        let plane = |w: &WallId| map.walls[w].plane();
        let ambiguous = || RoomError::AmbiguousRoomGeometry {
            label: label.into(),
            walls: walls.len(),
        };
        let id = map.next_room_id();
        match walls.len() {
            2 => {
                let (a, b) = (plane(&walls[0]), plane(&walls[1]));
                if a.unsigned_angle_to(&b) >= PARALLEL_WALL_TOLERANCE {
                    return Err(ambiguous());
                }
                let anchor = markers
                    .iter()
                    .copied()
                    .min_by_key(|m| (self.first_seen(*m).map_or(u32::MAX, |k| k.0), m.0))
                    .expect("entries are non-empty");
                let c = map.markers[&anchor].center();
                let center = two_wall_room_center(&a, &b, &c).map_err(|source| RoomError::Degenerate {
                    label: label.into(),
                    source,
                })?;
                Ok(Room {
                    id,
                    label: label.into(),
                    kind: RoomKind::TwoWall,
                    center,
                    walls: walls.to_vec(),
                    anchor_marker: Some(anchor),
                })
            }
            4 => {
                let ordered = pair_walls(walls, map).ok_or_else(ambiguous)?;
                let p = ordered.map(|w| plane(&w));
                let center = four_wall_room_center(&p[0], &p[1], &p[2], &p[3]).map_err(|source| {
                    RoomError::Degenerate {
                        label: label.into(),
                        source,
                    }
                })?;
                Ok(Room {
                    id,
                    label: label.into(),
                    kind: RoomKind::FourWall,
                    center,
                    walls: ordered.to_vec(),
                    anchor_marker: None,
                })
            }
            _ => Err(ambiguous()),
        }
    }
}

/// Splits four walls into two parallel pairs that are perpendicular to each
/// other, returned as `[x_a, x_b, y_a, y_b]`; the x pair is the one whose
/// normal is closer to the map x axis.
fn pair_walls(walls: &[WallId], map: &HierMap) -> Option<[WallId; 4]> {
    let planes: Vec<Plane> = walls.iter().map(|w| map.walls[w].plane()).collect();
    let perpendicular = core::f64::consts::FRAC_PI_2 - PARALLEL_WALL_TOLERANCE;
    for (i, j, k, l) in [(0, 1, 2, 3), (0, 2, 1, 3), (0, 3, 1, 2)] {
        let pair_a = planes[i].unsigned_angle_to(&planes[j]) < PARALLEL_WALL_TOLERANCE;
        let pair_b = planes[k].unsigned_angle_to(&planes[l]) < PARALLEL_WALL_TOLERANCE;
        if pair_a && pair_b && planes[i].unsigned_angle_to(&planes[k]) > perpendicular {
            let first = [walls[i], walls[j], walls[k], walls[l]];
            let second = [walls[k], walls[l], walls[i], walls[j]];
            return Some(if math::abs(planes[i].normal.x) >= math::abs(planes[k].normal.x) {
                first
            } else {
                second
            });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose, Vec3};
    use alloc::vec;

    /// Board on the vertical plane with the given inward normal (horizontal), at `p`.
    fn marker_facing(id: u32, normal: Vec3, p: Vec3) -> Marker {
        let up = Vec3::z();
        let x = up.cross(&normal);
        Marker {
            id: MarkerId(id),
            size: 0.17,
            pose: Pose::from_axes(x, up, normal, p),
        }
    }

    fn analyzer(dict: Vec<(&str, Vec<u32>)>) -> SemanticAnalyzer {
        let entries = dict
            .into_iter()
            .map(|(l, m)| RoomEntry {
                label: l.into(),
                markers: m.into_iter().map(MarkerId).collect(),
            })
            .collect();
        SemanticAnalyzer::new(SemanticConfig::default(), RoomDictionary::new(entries).unwrap())
    }

    fn add(map: &mut HierMap, sa: &mut SemanticAnalyzer, m: Marker) -> WallAssociation {
        map.add_marker(m.clone()).unwrap();
        sa.infer_wall(&m, map)
    }

    #[test]
    fn dictionary_validation() {
        let e = |l: &str, m: Vec<u32>| RoomEntry {
            label: l.into(),
            markers: m.into_iter().map(MarkerId).collect(),
        };
        assert!(matches!(
            RoomDictionary::new(vec![e("a", vec![1]), e("a", vec![2])]),
            Err(DictionaryError::DuplicateLabel(_))
        ));
        assert!(matches!(
            RoomDictionary::new(vec![e("a", vec![1, 1])]),
            Err(DictionaryError::DuplicateMarker { .. })
        ));
    }

    #[test]
    fn first_marker_creates_wall_through_its_center() {
        let mut map = HierMap::new();
        let mut sa = analyzer(vec![]);
        let m = marker_facing(0, -Vec3::y(), Vec3::new(1.0, 2.0, 1.2));
        let a = add(&mut map, &mut sa, m.clone());
        assert_eq!(a, WallAssociation::Created(WallId(0)));
        let w = &map.walls[&WallId(0)];
        assert!(w.plane().signed_distance(&m.center()).abs() < 1e-12);
        assert_eq!(w.markers, vec![MarkerId(0)]);
    }

    #[test]
    fn coplanar_marker_joins_existing_wall() {
        let mut map = HierMap::new();
        let mut sa = analyzer(vec![]);
        add(&mut map, &mut sa, marker_facing(0, -Vec3::y(), Vec3::new(1.0, 2.0, 1.2)));
        // 2 m along the wall with a little noise in position and angle
        let mut m = marker_facing(1, -Vec3::y(), Vec3::new(3.0, 2.02, 1.1));
        m.pose = m.pose.compose(&Pose::exp(&crate::geometry::Vec6::new(0.02, -0.01, 0.0, 0.0, 0.0, 0.0)));
        let a = add(&mut map, &mut sa, m);
        assert_eq!(a, WallAssociation::Existing(WallId(0)));
        assert_eq!(map.walls[&WallId(0)].markers.len(), 2);
    }

    #[test]
    fn parallel_wall_across_corridor_is_new() {
        let mut map = HierMap::new();
        let mut sa = analyzer(vec![]);
        add(&mut map, &mut sa, marker_facing(0, -Vec3::y(), Vec3::new(1.0, 2.0, 1.2)));
        let a = add(&mut map, &mut sa, marker_facing(1, Vec3::y(), Vec3::new(1.0, -1.0, 1.2)));
        assert_eq!(a, WallAssociation::Created(WallId(1)));
    }

    #[test]
    fn corridor_entry_becomes_two_wall_room() {
        let mut map = HierMap::new();
        let mut sa = analyzer(vec![("corridor", vec![0, 1, 2])]);
        let markers = [
            marker_facing(0, -Vec3::y(), Vec3::new(1.0, 2.0, 1.2)),
            marker_facing(1, Vec3::y(), Vec3::new(2.0, -1.0, 1.2)),
            marker_facing(2, -Vec3::y(), Vec3::new(4.0, 2.0, 1.2)),
        ];
        for (k, m) in markers.iter().enumerate() {
            add(&mut map, &mut sa, m.clone());
            sa.check_loops(KeyframeId(k as u32), &[m.id], &[], &map);
        }
        let det = sa.detect_rooms(&mut map);
        assert_eq!(det.created, vec![RoomId(0)]);
        let r = &map.rooms[&RoomId(0)];
        assert_eq!(r.kind, RoomKind::TwoWall);
        assert_eq!(r.anchor_marker, Some(MarkerId(0)));
        assert!((r.center - Vec3::new(1.0, 0.5, 1.2)).norm() < 1e-9);
        // idempotent
        assert!(sa.detect_rooms(&mut map).created.is_empty());
        assert_eq!(map.rooms.len(), 1);
    }

    #[test]
    fn rectangle_entry_becomes_four_wall_room() {
        let mut map = HierMap::new();
        let mut sa = analyzer(vec![("office", vec![10, 11, 12, 13])]);
        for m in [
            marker_facing(10, Vec3::x(), Vec3::new(0.0, 2.0, 1.0)),
            marker_facing(11, -Vec3::x(), Vec3::new(4.0, 3.0, 1.0)),
            marker_facing(12, Vec3::y(), Vec3::new(1.0, 0.0, 1.0)),
            marker_facing(13, -Vec3::y(), Vec3::new(3.0, 6.0, 1.0)),
        ] {
            add(&mut map, &mut sa, m);
        }
        let det = sa.detect_rooms(&mut map);
        assert_eq!(det.created.len(), 1);
        let r = &map.rooms[&det.created[0]];
        assert_eq!(r.kind, RoomKind::FourWall);
        assert!((r.center - Vec3::new(2.0, 3.0, 0.0)).norm() < 1e-9);
        assert_eq!(r.walls[..2], [WallId(0), WallId(1)]);
    }

    #[test]
    fn partially_observed_entry_waits() {
        let mut map = HierMap::new();
        let mut sa = analyzer(vec![("corridor", vec![0, 1])]);
        add(&mut map, &mut sa, marker_facing(0, -Vec3::y(), Vec3::new(1.0, 2.0, 1.2)));
        let det = sa.detect_rooms(&mut map);
        assert!(det.created.is_empty() && det.pending.is_empty());
    }

    #[test]
    fn three_walls_are_ambiguous() {
        let mut map = HierMap::new();
        let mut sa = analyzer(vec![("odd", vec![0, 1, 2])]);
        add(&mut map, &mut sa, marker_facing(0, Vec3::x(), Vec3::new(0.0, 2.0, 1.0)));
        add(&mut map, &mut sa, marker_facing(1, -Vec3::x(), Vec3::new(4.0, 2.0, 1.0)));
        add(&mut map, &mut sa, marker_facing(2, Vec3::y(), Vec3::new(2.0, 0.0, 1.0)));
        let det = sa.detect_rooms(&mut map);
        assert!(matches!(det.pending[..], [RoomError::AmbiguousRoomGeometry { walls: 3, .. }]));
    }

    #[test]
    fn symmetric_corridor_is_left_pending() {
        let mut map = HierMap::new();
        let mut sa = analyzer(vec![("c", vec![0, 1])]);
        add(&mut map, &mut sa, marker_facing(0, -Vec3::y(), Vec3::new(1.0, 1.5, 1.2)));
        add(&mut map, &mut sa, marker_facing(1, Vec3::y(), Vec3::new(1.0, -1.5, 1.2)));
        let det = sa.detect_rooms(&mut map);
        assert!(matches!(det.pending[..], [RoomError::Degenerate { .. }]));
        assert!(map.rooms.is_empty());
    }

    #[test]
    fn revisit_gap_rule() {
        let map = HierMap::new();
        let mut sa = analyzer(vec![]);
        let m = [MarkerId(3)];
        assert!(sa.check_loops(KeyframeId(5), &m, &[], &map).is_empty());
        assert!(sa.check_loops(KeyframeId(10), &m, &[], &map).is_empty());
        let ev = sa.check_loops(KeyframeId(50), &m, &[], &map);
        assert_eq!(
            ev,
            vec![LoopEvent {
                kind: LoopKind::MarkerRevisit,
                subject: 3,
                keyframe: KeyframeId(50)
            }]
        );
    }

    #[test]
    fn fresh_marker_on_stale_wall_is_a_rematch() {
        let mut map = HierMap::new();
        let mut sa = analyzer(vec![]);
        add(&mut map, &mut sa, marker_facing(0, -Vec3::y(), Vec3::new(1.0, 2.0, 1.2)));
        sa.check_loops(KeyframeId(3), &[MarkerId(0)], &[], &map);
        let assoc = add(&mut map, &mut sa, marker_facing(1, -Vec3::y(), Vec3::new(6.0, 2.0, 1.2)));
        assert_eq!(assoc, WallAssociation::Existing(WallId(0)));
        let ev = sa.check_loops(KeyframeId(60), &[MarkerId(1)], &[(MarkerId(1), assoc)], &map);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, LoopKind::WallRematch);
        assert_eq!(ev[0].subject, 0);
    }
}
