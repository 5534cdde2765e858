//! Observation record files: a header line, then one frame per line.
//!
//! ```text
//! msgraph-record 1
//! <t> odom <pose> gt <pose> markers <n> (<id> <pose>)* points <k> (<id> <u> <v>)*
//! ```
//! `<pose>` is `tx ty tz qx qy qz qw`.

use std::path::Path;

use msgraph_core::map::{MarkerId, PointId};
use msgraph_core::sim::{FrameObservation, MarkerDetection, PointDetection};
use nalgebra::Vector2;

use crate::error::{self, Error, LineError};
use crate::num;

pub const HEADER: &str = "msgraph-record 1";

pub fn format_frame(f: &FrameObservation) -> String {
    let mut s = num::fmt(f.timestamp);
    s.push_str(" odom ");
    num::push(&mut s, &num::pose_fields(&f.odometry));
    s.push_str(" gt ");
    num::push(&mut s, &num::pose_fields(&f.ground_truth));
    s.push_str(&format!(" markers {}", f.markers.len()));
    for m in &f.markers {
        s.push_str(&format!(" {} ", m.marker.0));
        num::push(&mut s, &num::pose_fields(&m.pose));
    }
    s.push_str(&format!(" points {}", f.points.len()));
    for p in &f.points {
        s.push_str(&format!(" {} ", p.point.0));
        num::push(&mut s, &[p.pixel.x, p.pixel.y]);
    }
    s
}

pub fn format_record<'a>(frames: impl IntoIterator<Item = &'a FrameObservation>) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for f in frames {
        out.push_str(&format_frame(f));
        out.push('\n');
    }
    out
}

struct Tokens<'a> {
    it: std::str::SplitWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> Result<&'a str, String> {
        self.it.next().ok_or_else(|| "record ends early".to_string())
    }

    fn keyword(&mut self, k: &str) -> Result<(), String> {
        let t = self.next()?;
        if t == k {
            Ok(())
        } else {
            Err(format!("expected `{k}`, found `{t}`"))
        }
    }

    fn float(&mut self) -> Result<f64, String> {
        num::parse_f64(self.next()?)
    }

    fn count(&mut self) -> Result<usize, String> {
        let t = self.next()?;
        t.parse().map_err(|_| format!("`{t}` is not a count"))
    }

    fn pose(&mut self) -> Result<msgraph_core::geometry::Pose, String> {
        let mut f = [0.0; 7];
        for v in &mut f {
            *v = self.float()?;
        }
        num::pose_from_fields(&f).ok_or_else(|| "invalid pose".to_string())
    }
}

pub fn parse_frame(line: &str) -> Result<FrameObservation, String> {
    let mut t = Tokens {
        it: line.split_whitespace(),
    };
    let timestamp = t.float()?;
    t.keyword("odom")?;
    let odometry = t.pose()?;
    t.keyword("gt")?;
    let ground_truth = t.pose()?;
    t.keyword("markers")?;
    let n = t.count()?;
    let mut markers = Vec::with_capacity(n);
    for _ in 0..n {
        let id = num::parse_u32(t.next()?)?;
        markers.push(MarkerDetection {
            marker: MarkerId(id),
            pose: t.pose()?,
        });
    }
    t.keyword("points")?;
    let k = t.count()?;
    let mut points = Vec::with_capacity(k);
    for _ in 0..k {
        let id = num::parse_u32(t.next()?)?;
        let (u, v) = (t.float()?, t.float()?);
        points.push(PointDetection {
            point: PointId(id),
            pixel: Vector2::new(u, v),
        });
    }
    if let Some(extra) = t.it.next() {
        return Err(format!("unexpected trailing `{extra}`"));
    }
    Ok(FrameObservation {
        timestamp,
        odometry,
        markers,
        points,
        ground_truth,
    })
}

pub fn parse_record(text: &str) -> Result<Vec<FrameObservation>, LineError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == HEADER => {}
        _ => return Err(LineError::new(1, format!("expected header `{HEADER}`"))),
    }
    let mut frames = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        frames.push(parse_frame(line).map_err(|e| LineError::new(i + 1, e))?);
    }
    Ok(frames)
}

pub fn write_record(frames: &[FrameObservation], path: &Path) -> Result<(), Error> {
    error::write(path, &format_record(frames))
}

pub fn read_record(path: &Path) -> Result<Vec<FrameObservation>, Error> {
    parse_record(&error::read(path)?).map_err(|e| e.at(path))
}
