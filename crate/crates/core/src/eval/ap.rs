//! Interpolated average precision for BEV detections.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::iou::rotated_iou;
use crate::error::{Error, Result};
use crate::labels::Det3;
use crate::postprocess::OrientedBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpolation {
    /// Recall levels `1/40, 2/40, …, 1`.
    Point40,
    /// Recall levels `0, 0.1, …, 1`.
    Point11,
}

impl Interpolation {
    pub fn recall_levels(self) -> Vec<f64> {
        match self {
            Interpolation::Point40 => (1..=40).map(|k| k as f64 / 40.0).collect(),
            Interpolation::Point11 => (0..=10).map(|k| k as f64 / 10.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub vehicle_iou: f64,
    pub pedestrian_iou: f64,
    /// Half-open `[lo, hi)` centroid-range intervals, meters.
    pub range_buckets: Vec<(f64, f64)>,
    pub interpolation: Interpolation,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            vehicle_iou: 0.7,
            pedestrian_iou: 0.5,
            range_buckets: vec![(0.0, 10.0), (10.0, 25.0), (25.0, 50.0)],
            interpolation: Interpolation::Point40,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        for t in [self.vehicle_iou, self.pedestrian_iou] {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "iou threshold {t} outside (0, 1]"
                )));
            }
        }
        let mut prev = f64::NEG_INFINITY;
        for &(lo, hi) in &self.range_buckets {
            if !(lo < hi && lo >= prev) {
                return Err(Error::InvalidConfig(
                    "range buckets must be non-empty, disjoint and ascending".into(),
                ));
            }
            prev = hi;
        }
        Ok(())
    }

    pub fn iou_threshold(&self, class: Det3) -> f64 {
        match class {
            Det3::Pedestrian => self.pedestrian_iou,
            _ => self.vehicle_iou,
        }
    }
}

/// Outcome of greedy matching: one `(confidence, is_true_positive)` per
/// detection in evaluation order, and the number of ground-truth boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub ranked: Vec<(f64, bool)>,
    pub n_gt: usize,
}

impl MatchResult {
    /// `(recall, precision)` after each ranked detection.
    pub fn pr_curve(&self) -> Vec<(f64, f64)> {
        let mut tp = 0usize;
        self.ranked
            .iter()
            .enumerate()
            .map(|(k, &(_, hit))| {
                tp += hit as usize;
                (tp as f64 / self.n_gt as f64, tp as f64 / (k + 1) as f64)
            })
            .collect()
    }

    /// Mean over the recall levels of the best precision at any recall at
    /// least that level. `None` without ground truth.
    pub fn average_precision(&self, interp: Interpolation) -> Option<f64> {
        if self.n_gt == 0 {
            return None;
        }
        let curve = self.pr_curve();
        // Suffix maximum of precision gives the interpolated envelope.
        let mut envelope = curve.clone();
        for k in (0..envelope.len().saturating_sub(1)).rev() {
            envelope[k].1 = envelope[k].1.max(envelope[k + 1].1);
        }
        let levels = interp.recall_levels();
        let sum: f64 = levels
            .iter()
            .map(|&r| {
                envelope
                    .iter()
                    .find(|&&(rec, _)| rec >= r - 1e-12)
                    .map_or(0.0, |&(_, p)| p)
            })
            .sum();
        Some(sum / levels.len() as f64)
    }
}

fn check_frames(dets: &[Vec<OrientedBox>], gts: &[Vec<OrientedBox>]) -> Result<()> {
    if dets.len() != gts.len() {
        return Err(Error::LengthMismatch {
            expected: gts.len(),
            actual: dets.len(),
        });
    }
    Ok(())
}

/// Greedy matching of the `class` detections in `dets` to the `class`
/// ground truth in `gts` (frames aligned by index). Detections are visited by
/// descending confidence (ties by frame, then position); each takes the
/// unmatched ground-truth box of its frame with the highest IoU, and counts
/// as a true positive if that IoU is at least `iou_threshold`.
pub fn greedy_match(
    dets: &[Vec<OrientedBox>],
    gts: &[Vec<OrientedBox>],
    class: Det3,
    iou_threshold: f64,
) -> Result<MatchResult> {
    check_frames(dets, gts)?;
    let gts: Vec<Vec<&OrientedBox>> = gts
        .iter()
        .map(|f| f.iter().filter(|b| b.class == class).collect())
        .collect();
    let mut order: Vec<(usize, &OrientedBox)> = dets
        .iter()
        .enumerate()
        .flat_map(|(f, ds)| ds.iter().filter(|d| d.class == class).map(move |d| (f, d)))
        .collect();
    // Stable sort keeps frame/position order among equal confidences.
    order.sort_by(|a, b| {
        b.1.confidence
            .partial_cmp(&a.1.confidence)
            .unwrap_or(Ordering::Equal)
    });

    let mut taken: Vec<Vec<bool>> = gts.iter().map(|f| vec![false; f.len()]).collect();
    let mut ranked = Vec::with_capacity(order.len());
    for (f, d) in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts[f].iter().enumerate() {
            if taken[f][g] {
                continue;
            }
            let iou = rotated_iou(d, gt);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        let hit = match best {
            Some((g, iou)) if iou >= iou_threshold => {
                taken[f][g] = true;
                true
            }
            _ => false,
        };
        ranked.push((d.confidence, hit));
    }
    Ok(MatchResult {
        ranked,
        n_gt: gts.iter().map(Vec::len).sum(),
    })
}

/// AP of `class` at the configured IoU threshold and interpolation; `None`
/// when there is no ground truth of that class.
pub fn match_and_ap(
    dets: &[Vec<OrientedBox>],
    gts: &[Vec<OrientedBox>],
    cfg: &EvalConfig,
    class: Det3,
) -> Result<Option<f64>> {
    Ok(greedy_match(dets, gts, class, cfg.iou_threshold(class))?
        .average_precision(cfg.interpolation))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketAp {
    pub class: Det3,
    pub lo: f64,
    pub hi: f64,
    pub ap: Option<f64>,
}

/// AP per class and range bucket. Ground truth and detections are assigned
/// to the bucket containing their centroid range; anything outside every
/// bucket is ignored.
pub fn range_bucketed_ap(
    dets: &[Vec<OrientedBox>],
    gts: &[Vec<OrientedBox>],
    cfg: &EvalConfig,
) -> Result<Vec<BucketAp>> {
    cfg.validate()?;
    check_frames(dets, gts)?;
    let select = |frames: &[Vec<OrientedBox>], lo: f64, hi: f64| -> Vec<Vec<OrientedBox>> {
        frames
            .iter()
            .map(|f| {
                f.iter()
                    .filter(|b| (lo..hi).contains(&b.range()))
                    .copied()
                    .collect()
            })
            .collect()
    };
    let mut out = Vec::new();
    for class in Det3::OBJECTS {
        for &(lo, hi) in &cfg.range_buckets {
            let ap = match_and_ap(&select(dets, lo, hi), &select(gts, lo, hi), cfg, class)?;
            out.push(BucketAp { class, lo, hi, ap });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vehicle(cx: f64, cy: f64, confidence: f64) -> OrientedBox {
        OrientedBox {
            class: Det3::Vehicle,
            cx,
            cy,
            width: 2.0,
            length: 4.0,
            yaw: 0.0,
            confidence,
        }
    }

    fn ap(dets: Vec<OrientedBox>, gts: Vec<OrientedBox>) -> Option<f64> {
        match_and_ap(&[dets], &[gts], &EvalConfig::default(), Det3::Vehicle).unwrap()
    }

    #[test]
    fn perfect_and_missing() {
        let g = vehicle(5.0, 5.0, 1.0);
        assert_eq!(ap(vec![g], vec![g]), Some(1.0));
        assert_eq!(ap(vec![], vec![g]), Some(0.0));
        assert_eq!(ap(vec![], vec![]), None);
        assert_eq!(ap(vec![g], vec![]), None);
    }

    #[test]
    fn tp_fp_tp_ranking() {
        let (g1, g2) = (vehicle(0.0, 0.0, 1.0), vehicle(20.0, 0.0, 1.0));
        let dets = vec![
            vehicle(0.0, 0.0, 0.9),
            vehicle(40.0, 0.0, 0.8),
            vehicle(20.0, 0.0, 0.7),
        ];
        // Recall 1/2 at precision 1 covers 20 levels, recall 1 at 2/3 the rest.
        let expected = (20.0 * 1.0 + 20.0 * 2.0 / 3.0) / 40.0;
        assert!((ap(dets.clone(), vec![g1, g2]).unwrap() - expected).abs() < 1e-12);

        let mut cfg = EvalConfig::default();
        cfg.interpolation = Interpolation::Point11;
        let ap11 = match_and_ap(&[dets], &[vec![g1, g2]], &cfg, Det3::Vehicle)
            .unwrap()
            .unwrap();
        assert!((ap11 - (6.0 + 5.0 * 2.0 / 3.0) / 11.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_detection_is_false_positive() {
        let g = vehicle(0.0, 0.0, 1.0);
        let m = greedy_match(&[vec![g, g]], &[vec![g]], Det3::Vehicle, 0.7).unwrap();
        assert_eq!(
            m.ranked.iter().map(|r| r.1).collect::<Vec<_>>(),
            vec![true, false]
        );
    }

    #[test]
    fn other_class_ignored() {
        let g = vehicle(0.0, 0.0, 1.0);
        let p = OrientedBox {
            class: Det3::Pedestrian,
            ..g
        };
        assert_eq!(ap(vec![p], vec![g]), Some(0.0));
    }

    #[test]
    fn frames_must_align() {
        assert!(matches!(
            match_and_ap(&[vec![]], &[], &EvalConfig::default(), Det3::Vehicle),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn buckets_half_open() {
        let g = vehicle(10.0, 0.0, 1.0);
        let b = range_bucketed_ap(&[vec![g]], &[vec![g]], &EvalConfig::default()).unwrap();
        let vehicles: Vec<Option<f64>> = b
            .iter()
            .filter(|b| b.class == Det3::Vehicle)
            .map(|b| b.ap)
            .collect();
        assert_eq!(vehicles, vec![None, Some(1.0), None]);
    }

    #[test]
    fn near_gts_leave_far_buckets_absent() {
        let g = vehicle(3.0, 4.0, 1.0);
        let b = range_bucketed_ap(&[vec![g]], &[vec![g]], &EvalConfig::default()).unwrap();
        assert_eq!(b[0].ap, Some(1.0));
        assert_eq!((b[1].ap, b[2].ap), (None, None));
    }

    #[test]
    fn rejects_overlapping_buckets() {
        let mut cfg = EvalConfig::default();
        cfg.range_buckets = vec![(0.0, 10.0), (5.0, 20.0)];
        assert!(cfg.validate().is_err());
    }
}
