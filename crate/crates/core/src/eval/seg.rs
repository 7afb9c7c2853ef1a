//! Per-class IoU for point-wise segmentation.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::labels::PointLabels;

/// `counts[gt * k + pred]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn add(&mut self, gt: usize, pred: usize) {
        self.counts[gt * self.k + pred] += 1;
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.get(c, c)
    }

    /// Points predicted as `c` whose truth is another class.
    pub fn false_positives(&self, c: usize) -> u64 {
        (0..self.k)
            .filter(|&g| g != c)
            .map(|g| self.get(g, c))
            .sum()
    }

    /// Points of class `c` predicted as another class.
    pub fn false_negatives(&self, c: usize) -> u64 {
        (0..self.k)
            .filter(|&p| p != c)
            .map(|p| self.get(c, p))
            .sum()
    }

    pub fn gt_count(&self, c: usize) -> u64 {
        (0..self.k).map(|p| self.get(c, p)).sum()
    }

    /// `TP / (TP + FP + FN)`, `None` if the class appears in neither labeling.
    pub fn iou(&self, c: usize) -> Option<f64> {
        let tp = self.true_positives(c);
        let denom = tp + self.false_positives(c) + self.false_negatives(c);
        (denom > 0).then(|| tp as f64 / denom as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentationScores {
    pub per_class: Vec<Option<f64>>,
    /// Mean IoU over the classes present in the ground truth; `None` if the
    /// ground truth is empty.
    pub miou: Option<f64>,
    pub confusion: ConfusionMatrix,
}

pub fn segmentation_iou(
    pred: &PointLabels,
    gt: &PointLabels,
    k: usize,
) -> Result<SegmentationScores> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            expected: gt.len(),
            actual: pred.len(),
        });
    }
    if pred.taxonomy() != gt.taxonomy() {
        return Err(Error::InvalidConfig(format!(
            "cannot compare {:?} predictions with {:?} ground truth",
            pred.taxonomy(),
            gt.taxonomy()
        )));
    }
    let mut cm = ConfusionMatrix::new(k);
    for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
        for id in [p, g] {
            if id as usize >= k {
                return Err(Error::InvalidLabel {
                    id,
                    taxonomy: gt.taxonomy(),
                });
            }
        }
        cm.add(g as usize, p as usize);
    }
    Ok(scores_from(cm))
}

/// Scores from an accumulated confusion matrix (e.g. summed over scans).
pub fn scores_from(confusion: ConfusionMatrix) -> SegmentationScores {
    let k = confusion.classes();
    let per_class: Vec<Option<f64>> = (0..k).map(|c| confusion.iou(c)).collect();
    let present: Vec<f64> = (0..k)
        .filter(|&c| confusion.gt_count(c) > 0)
        .map(|c| per_class[c].unwrap_or(0.0))
        .collect();
    let miou = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
    SegmentationScores {
        per_class,
        miou,
        confusion,
    }
}

impl std::ops::AddAssign<&ConfusionMatrix> for ConfusionMatrix {
    fn add_assign(&mut self, rhs: &ConfusionMatrix) {
        assert_eq!(self.k, rhs.k, "confusion matrices of different size");
        for (a, b) in self.counts.iter_mut().zip(&rhs.counts) {
            *a += b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::Seg7;

    fn seg(ids: &[Seg7]) -> PointLabels {
        PointLabels::from_seg7(ids.iter().copied())
    }

    #[test]
    fn identical_labelings() {
        let l = seg(&[Seg7::Car, Seg7::Road, Seg7::Road]);
        let s = segmentation_iou(&l, &l, Seg7::COUNT).unwrap();
        assert_eq!(s.miou, Some(1.0));
        assert_eq!(s.per_class[0], Some(1.0));
        assert_eq!(s.per_class[1], None);
    }

    #[test]
    fn disjoint_labelings() {
        let s = segmentation_iou(&seg(&[Seg7::Car; 4]), &seg(&[Seg7::Road; 4]), 7).unwrap();
        assert_eq!(s.per_class[Seg7::Car as usize], Some(0.0));
        assert_eq!(s.per_class[Seg7::Road as usize], Some(0.0));
        assert_eq!(s.miou, Some(0.0));
    }

    #[test]
    fn ten_point_confusion() {
        use Seg7::{Car, Road};
        let gt = seg(&[Car, Car, Car, Car, Car, Car, Car, Car, Road, Road]);
        let pred = seg(&[Car, Car, Car, Car, Car, Car, Road, Road, Car, Car]);
        let s = segmentation_iou(&pred, &gt, 7).unwrap();
        assert_eq!(s.per_class[Car as usize], Some(0.6));
        assert_eq!(s.per_class[Road as usize], Some(0.0));
        assert_eq!(s.miou, Some(0.3));
        assert_eq!(s.confusion.get(Car as usize, Road as usize), 2);
        assert_eq!(s.confusion.total(), 10);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            segmentation_iou(&seg(&[Seg7::Car]), &seg(&[]), 7),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
