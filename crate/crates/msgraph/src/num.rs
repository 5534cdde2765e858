use std::fmt::Write;

use msgraph_core::geometry::{Pose, Vec3};

/// Shortest decimal that parses back to the same `f64`; negative zero prints as `0`.
/// Magnitudes outside `[1e-5, 1e16)` use exponent notation.
pub fn fmt(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let a = x.abs();
    if (1e-5..1e16).contains(&a) || !a.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn push(out: &mut String, xs: &[f64]) {
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&fmt(*x));
    }
}

pub fn join(xs: &[f64]) -> String {
    let mut s = String::new();
    push(&mut s, xs);
    s
}

pub fn join_ids(ids: impl IntoIterator<Item = u32>) -> String {
    let mut s = String::new();
    for (i, id) in ids.into_iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{id}").unwrap();
    }
    s
}

/// `tx ty tz qx qy qz qw`
pub fn pose_fields(p: &Pose) -> [f64; 7] {
    let t = p.translation();
    let [w, x, y, z] = p.quaternion_wxyz();
    [t.x, t.y, t.z, x, y, z, w]
}

pub fn pose_from_fields(f: &[f64]) -> Option<Pose> {
    let [tx, ty, tz, qx, qy, qz, qw] = <[f64; 7]>::try_from(f).ok()?;
    if !f.iter().all(|v| v.is_finite()) {
        return None;
    }
    let n = qw * qw + qx * qx + qy * qy + qz * qz;
    if n < 1e-12 {
        return None;
    }
    Some(Pose::from_quaternion(qw, qx, qy, qz, Vec3::new(tx, ty, tz)))
}

pub fn parse_f64(tok: &str) -> Result<f64, String> {
    tok.parse::<f64>().map_err(|_| format!("`{tok}` is not a number"))
}

pub fn parse_u32(tok: &str) -> Result<u32, String> {
    tok.parse::<u32>().map_err(|_| format!("`{tok}` is not an id"))
}
