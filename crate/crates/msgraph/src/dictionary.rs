//! Room dictionary files: `label: id,id,id` per line, `#` comments.

use std::path::Path;

use msgraph_core::map::MarkerId;
use msgraph_core::semantic::{DictionaryError, RoomDictionary, RoomEntry};

use crate::error::{self, Error, LineError};
use crate::num;

pub fn parse_dictionary(text: &str) -> Result<RoomDictionary, LineError> {
    let mut entries: Vec<RoomEntry> = Vec::new();
    let mut lines: Vec<usize> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (label, ids) = line
            .split_once(':')
            .ok_or_else(|| LineError::new(line_no, "expected `label: id,id,...`"))?;
        let label = label.trim();
        if label.is_empty() {
            return Err(LineError::new(line_no, "empty room label"));
        }
        let markers = ids
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| num::parse_u32(s).map(MarkerId))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| LineError::new(line_no, e))?;
        entries.push(RoomEntry {
            label: label.to_string(),
            markers,
        });
        lines.push(line_no);
    }
    RoomDictionary::new(entries.clone()).map_err(|e| {
        let label = match &e {
            DictionaryError::DuplicateLabel(l) | DictionaryError::Empty(l) => l,
            DictionaryError::DuplicateMarker { label, .. } => label,
        };
        // report the last line carrying the offending label
        let at = entries
            .iter()
            .zip(&lines)
            .filter(|(en, _)| &en.label == label)
            .map(|(_, l)| *l)
            .next_back()
            .unwrap_or(0);
        LineError::new(at, e)
    })
}

pub fn format_dictionary(d: &RoomDictionary) -> String {
    let mut out = String::new();
    for e in d.entries() {
        out.push_str(&e.label);
        out.push_str(": ");
        out.push_str(&num::join_ids(e.markers.iter().map(|m| m.0)));
        out.push('\n');
    }
    out
}

pub fn read_dictionary(path: &Path) -> Result<RoomDictionary, Error> {
    parse_dictionary(&error::read(path)?).map_err(|e| e.at(path))
}
