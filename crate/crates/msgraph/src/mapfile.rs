//! Hierarchical map export.
//!
//! A versioned header, then five sections in fixed order. Each section header
//! carries its entry count; entries are sorted by id.

use std::fmt::Write;
use std::path::Path;

use msgraph_core::map::HierMap;

use crate::error::{self, Error};
use crate::num;

pub const HEADER: &str = "msgraph-map 1";

pub fn format_map(map: &HierMap) -> String {
    let mut out = String::new();
    writeln!(out, "{HEADER}").unwrap();

    writeln!(out, "keyframes {}", map.keyframes.len()).unwrap();
    for k in map.keyframes.values() {
        writeln!(out, "{} {} {}", k.id.0, num::fmt(k.timestamp), num::join(&num::pose_fields(&k.pose))).unwrap();
    }

    writeln!(out, "points {}", map.points.len()).unwrap();
    for p in map.points.values() {
        writeln!(out, "{} {}", p.id.0, num::join(p.position.as_slice())).unwrap();
    }

    writeln!(out, "markers {}", map.markers.len()).unwrap();
    for m in map.markers.values() {
        let corners: Vec<f64> = m.corners().iter().flat_map(|c| [c.x, c.y, c.z]).collect();
        writeln!(
            out,
            "{} {} {} {}",
            m.id.0,
            num::fmt(m.size),
            num::join(&num::pose_fields(&m.pose)),
            num::join(&corners)
        )
        .unwrap();
    }

    writeln!(out, "walls {}", map.walls.len()).unwrap();
    for w in map.walls.values() {
        writeln!(
            out,
            "{} {} {}",
            w.id.0,
            num::join(&w.state.as_array()),
            num::join_ids(w.markers.iter().map(|m| m.0))
        )
        .unwrap();
    }

    writeln!(out, "rooms {}", map.rooms.len()).unwrap();
    for r in map.rooms.values() {
        let anchor = r.anchor_marker.map_or("-".to_string(), |m| m.0.to_string());
        writeln!(
            out,
            "{} {} {} {} {} {}",
            r.id.0,
            r.kind.as_str(),
            num::join(r.center.as_slice()),
            num::join_ids(r.walls.iter().map(|w| w.0)),
            anchor,
            r.label
        )
        .unwrap();
    }
    out
}

pub fn export_map(map: &HierMap, path: &Path) -> Result<(), Error> {
    error::write(path, &format_map(map))
}
