//! Detection interchange formats.
//!
//! Text: one object per line, `class cx cy width length yaw confidence` with
//! six decimals, optionally preceded by a frame id column. Blank lines and
//! lines starting with `#` are ignored. JSON: an array of [`OrientedBox`]
//! objects, which round-trips exactly.

use std::fmt::Write as _;

use super::OrientedBox;
use crate::error::{Error, Result};

/// One text line (no trailing newline).
pub fn format_detection(frame: Option<&str>, b: &OrientedBox) -> String {
    let mut s = String::new();
    if let Some(f) = frame {
        s.push_str(f);
        s.push(' ');
    }
    write!(
        s,
        "{} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}",
        b.class, b.cx, b.cy, b.width, b.length, b.yaw, b.confidence
    )
    .expect("writing to a String");
    s
}

pub fn format_detections(frame: Option<&str>, boxes: &[OrientedBox]) -> String {
    boxes
        .iter()
        .map(|b| format_detection(frame, b) + "\n")
        .collect()
}

fn field(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::MalformedFile(format!("line {line}: bad number {tok:?}")))?;
    if !v.is_finite() {
        return Err(Error::MalformedFile(format!(
            "line {line}: non-finite value"
        )));
    }
    Ok(v)
}

/// Parses one line with 7 fields, or 8 when the first is a frame id.
pub fn parse_detection_line(line: &str, line_no: usize) -> Result<(Option<String>, OrientedBox)> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    let (frame, rest) = match toks.len() {
        7 => (None, &toks[..]),
        8 => (Some(toks[0].to_string()), &toks[1..]),
        n => {
            return Err(Error::MalformedFile(format!(
                "line {line_no}: expected 7 or 8 fields, got {n}"
            )))
        }
    };
    let class = rest[0].parse().map_err(|_| {
        Error::MalformedFile(format!("line {line_no}: unknown class {:?}", rest[0]))
    })?;
    let b = OrientedBox {
        class,
        cx: field(rest[1], line_no)?,
        cy: field(rest[2], line_no)?,
        width: field(rest[3], line_no)?,
        length: field(rest[4], line_no)?,
        yaw: field(rest[5], line_no)?,
        confidence: field(rest[6], line_no)?,
    };
    if !(b.width > 0.0 && b.length > 0.0) {
        return Err(Error::DegenerateBox {
            width: b.width,
            length: b.length,
        });
    }
    Ok((frame, b))
}

pub fn parse_detections(text: &str) -> Result<Vec<(Option<String>, OrientedBox)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !t.is_empty() && !t.starts_with('#')
        })
        .map(|(i, l)| parse_detection_line(l, i + 1))
        .collect()
}

pub fn detections_to_json(boxes: &[OrientedBox]) -> String {
    serde_json::to_string_pretty(boxes).expect("boxes serialize")
}

pub fn detections_from_json(text: &str) -> Result<Vec<OrientedBox>> {
    serde_json::from_str(text).map_err(|e| Error::MalformedFile(e.to_string()))
}
