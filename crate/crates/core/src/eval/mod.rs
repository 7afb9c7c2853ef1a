//! Metrics: rotated BEV IoU, interpolated AP (global and per range bucket),
//! and segmentation IoU.

mod ap;
mod iou;
mod seg;

use std::fmt::Write as _;

use serde::Serialize;

pub use ap::{
    greedy_match, match_and_ap, range_bucketed_ap, BucketAp, EvalConfig, Interpolation, MatchResult,
};
pub use iou::{clip_convex, intersection_area, polygon_area, rotated_iou};
pub use seg::{scores_from, segmentation_iou, ConfusionMatrix, SegmentationScores};

use crate::error::Result;
use crate::labels::{Det3, Seg7};
use crate::postprocess::OrientedBox;

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{:.2}", 100.0 * v))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAp {
    pub class: Det3,
    pub iou_threshold: f64,
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    pub frames: usize,
    pub overall: Vec<ClassAp>,
    pub buckets: Vec<BucketAp>,
}

/// Global and range-bucketed AP for every object class.
pub fn evaluate_detections(
    dets: &[Vec<OrientedBox>],
    gts: &[Vec<OrientedBox>],
    cfg: &EvalConfig,
) -> Result<DetectionReport> {
    cfg.validate()?;
    let overall = Det3::OBJECTS
        .iter()
        .map(|&class| {
            Ok(ClassAp {
                class,
                iou_threshold: cfg.iou_threshold(class),
                ap: match_and_ap(dets, gts, cfg, class)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(DetectionReport {
        frames: gts.len(),
        overall,
        buckets: range_bucketed_ap(dets, gts, cfg)?,
    })
}

impl DetectionReport {
    /// Plain-text table, AP in percent; `-` marks an undefined AP.
    pub fn to_table(&self) -> String {
        let mut s = format!("frames: {}\n", self.frames);
        let mut header = format!("{:<12}{:>6}{:>10}", "class", "IoU", "all");
        let ranges: Vec<(f64, f64)> = self
            .buckets
            .iter()
            .filter(|b| b.class == Det3::Vehicle)
            .map(|b| (b.lo, b.hi))
            .collect();
        for (lo, hi) in &ranges {
            header.push_str(&format!("{:>12}", format!("{lo}-{hi} m")));
        }
        s.push_str(&header);
        s.push('\n');
        for c in &self.overall {
            write!(
                s,
                "{:<12}{:>6.2}{:>10}",
                c.class.to_string(),
                c.iou_threshold,
                pct(c.ap)
            )
            .expect("writing to a String");
            for b in self.buckets.iter().filter(|b| b.class == c.class) {
                write!(s, "{:>12}", pct(b.ap)).expect("writing to a String");
            }
            s.push('\n');
        }
        s
    }
}

impl SegmentationScores {
    /// Seg7 IoU table in percent.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for (c, iou) in self.per_class.iter().enumerate() {
            let name = Seg7::from_id(c as u32).map_or_else(|| c.to_string(), |l| l.name().into());
            writeln!(s, "{name:<12}{:>8}", pct(*iou)).expect("writing to a String");
        }
        writeln!(s, "{:<12}{:>8}", "mIoU", pct(self.miou)).expect("writing to a String");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_for_perfect_detections() {
        let g = OrientedBox {
            class: Det3::Vehicle,
            cx: 12.0,
            cy: 0.0,
            width: 1.8,
            length: 4.2,
            yaw: 0.1,
            confidence: 1.0,
        };
        let r = evaluate_detections(&[vec![g]], &[vec![g]], &EvalConfig::default()).unwrap();
        assert_eq!(r.overall[0].ap, Some(1.0));
        assert_eq!(r.overall[1].ap, None);
        let table = r.to_table();
        assert!(table.contains("vehicle"), "{table}");
        assert!(table.contains("100.00"));
    }
}
