//! Small synthetic worlds shared by the integration tests.
#![allow(dead_code)]

use msgraph_core::geometry::Vec3;
use msgraph_core::map::MarkerId;
use msgraph_core::semantic::RoomEntry;
use msgraph_core::sim::{Facing, MarkerPlacement, PointScatter, TrajectorySpec, WallRect, Waypoint, WorldSpec};

/// Straight corridor along +x between `y = ±width/2`, markers every `spacing` meters on both walls.
pub fn corridor(length: f64, width: f64, spacing: f64, points: usize) -> WorldSpec {
    let h = width / 2.0;
    let walls = vec![
        WallRect { corner: Vec3::new(0.0, h, 0.0), length, height: 2.5, facing: Facing::NegY },
        WallRect { corner: Vec3::new(length, -h, 0.0), length, height: 2.5, facing: Facing::PosY },
    ];
    let mut markers = Vec::new();
    let mut id = 0;
    // the first meters are never inside the camera cone from the walk
    let mut x = 3.0;
    while x + spacing / 2.0 < length - 0.5 {
        markers.push(MarkerPlacement::new(id, 0, x, 1.4));
        // wall 1 runs from x = length back to 0
        markers.push(MarkerPlacement::new(id + 1, 1, length - x - spacing / 2.0, 1.2));
        id += 2;
        x += spacing;
    }
    let rooms = vec![RoomEntry {
        label: "corridor".into(),
        markers: (0..id).map(MarkerId).collect(),
    }];
    WorldSpec {
        walls,
        markers,
        rooms,
        points: vec![],
        scatter: (points > 0).then_some(PointScatter { count: points, seed: 5 }),
    }
}

/// Walk down the corridor centerline offset by `lateral`, at constant height.
pub fn corridor_walk(length: f64, lateral: f64) -> TrajectorySpec {
    TrajectorySpec {
        waypoints: vec![
            Waypoint { position: Vec3::new(0.3, lateral, 1.3), yaw: 0.0, hold: 0.0 },
            Waypoint { position: Vec3::new(length - 0.3, lateral, 1.3), yaw: 0.0, hold: 0.0 },
        ],
        speed: 0.5,
        rate: 10.0,
        turn_rate: 0.5,
    }
}
