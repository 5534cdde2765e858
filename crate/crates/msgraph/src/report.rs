//! ATE reports and per-frame error series.

use std::fmt::Write;
use std::path::Path;

use msgraph_core::eval::{Alignment, AteResult};

use crate::error::{self, Error};
use crate::num;

pub const CSV_HEADER: &str = "frame_index,timestamp,error_m";

pub fn alignment_name(a: Alignment) -> &'static str {
    match a {
        Alignment::None => "none",
        Alignment::Rigid => "rigid",
    }
}

pub fn parse_alignment(s: &str) -> Option<Alignment> {
    match s {
        "none" => Some(Alignment::None),
        "rigid" => Some(Alignment::Rigid),
        _ => None,
    }
}

/// TOML-formatted summary of one evaluation.
pub fn format_report(r: &AteResult, align: Alignment) -> String {
    let mut s = String::new();
    writeln!(s, "format_version = 1").unwrap();
    writeln!(s, "align = \"{}\"", alignment_name(align)).unwrap();
    writeln!(s, "rmse = {}", toml_float(r.rmse)).unwrap();
    writeln!(s, "mean = {}", toml_float(r.mean)).unwrap();
    writeln!(s, "std = {}", toml_float(r.std)).unwrap();
    writeln!(s, "matched = {}", r.errors.len()).unwrap();
    writeln!(s, "unmatched = {}", r.unmatched).unwrap();
    let fields: Vec<String> = num::pose_fields(&r.alignment).iter().map(|v| toml_float(*v)).collect();
    writeln!(s, "alignment = [{}]", fields.join(", ")).unwrap();
    s
}

/// Shortest round-trip decimal that TOML reads as a float.
fn toml_float(x: f64) -> String {
    let s = num::fmt(x);
    if s.contains(['.', 'e']) {
        s
    } else {
        s + ".0"
    }
}

pub fn format_error_series(r: &AteResult) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for e in &r.errors {
        writeln!(s, "{},{},{}", e.index, num::fmt(e.timestamp), num::fmt(e.error)).unwrap();
    }
    s
}

pub fn write_report(r: &AteResult, align: Alignment, path: &Path) -> Result<(), Error> {
    error::write(path, &format_report(r, align))
}

pub fn write_error_series(r: &AteResult, path: &Path) -> Result<(), Error> {
    error::write(path, &format_error_series(r))
}
