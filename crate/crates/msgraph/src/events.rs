//! Event log: one whitespace-separated record per line, keyword first.

use std::fmt::Write;
use std::path::Path;

use msgraph_core::pipeline::Event;

use crate::error::{self, Error};
use crate::num;

pub fn format_event(e: &Event) -> String {
    let mut s = String::new();
    match e {
        Event::Keyframe {
            frame,
            keyframe,
            timestamp,
            reason,
        } => write!(s, "keyframe {frame} {} {} {}", keyframe.0, num::fmt(*timestamp), reason.as_str()),
        Event::Skip { frame, timestamp } => write!(s, "skip {frame} {}", num::fmt(*timestamp)),
        Event::Wall {
            keyframe,
            marker,
            wall,
            created,
        } => write!(
            s,
            "wall {} {} {} {}",
            keyframe.0,
            marker.0,
            wall.0,
            if *created { "created" } else { "existing" }
        ),
        Event::Room {
            keyframe,
            room,
            label,
            kind,
        } => write!(s, "room {} {} {} {label}", keyframe.0, room.0, kind.as_str()),
        Event::RoomPending { keyframe, label, reason } => {
            write!(s, "room_pending {} {label} {reason}", keyframe.0)
        }
        Event::Loop(l) => write!(s, "loop {} {} {}", l.keyframe.0, l.kind.as_str(), l.subject),
        Event::Optimization { keyframe, scope, report } => write!(
            s,
            "optimize {} {} {} {} {} {} {}",
            keyframe.0,
            scope.as_str(),
            report.iterations,
            num::fmt(report.initial_cost),
            num::fmt(report.final_cost),
            report.free_variables,
            report.termination.as_str()
        ),
        Event::OptimizationFailed { keyframe, scope, error } => {
            write!(s, "optimize_failed {} {} {error}", keyframe.0, scope.as_str())
        }
    }
    .unwrap();
    s
}

pub fn format_events(events: &[Event]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&format_event(e));
        out.push('\n');
    }
    out
}

pub fn write_events(events: &[Event], path: &Path) -> Result<(), Error> {
    error::write(path, &format_events(events))
}
