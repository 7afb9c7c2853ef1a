use std::collections::BTreeSet;

use mvlidarnet::{Det3, OrientedBox};

/// Detections of `class` as `(frame, box)` by descending confidence, ties in
/// frame-then-position order.
fn ranked(dets: &[Vec<OrientedBox>], class: Det3) -> Vec<(usize, OrientedBox)> {
    let mut all: Vec<(usize, usize, OrientedBox)> = Vec::new();
    for (f, ds) in dets.iter().enumerate() {
        for (k, d) in ds.iter().enumerate().filter(|(_, d)| d.class == class) {
            all.push((f, k, *d));
        }
    }
    // Insertion sort: plain and stable.
    for i in 1..all.len() {
        let mut j = i;
        while j > 0 && all[j - 1].2.confidence < all[j].2.confidence {
            all.swap(j - 1, j);
            j -= 1;
        }
    }
    all.into_iter().map(|(f, _, d)| (f, d)).collect()
}

/// True positives among the first `k` ranked detections, matching from
/// scratch.
fn true_positives_in_prefix(
    prefix: &[(usize, OrientedBox)],
    gts: &[Vec<OrientedBox>],
    class: Det3,
    threshold: f64,
    iou: &dyn Fn(&OrientedBox, &OrientedBox) -> f64,
) -> usize {
    let mut used: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut tp = 0;
    for (f, d) in prefix {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts[*f].iter().enumerate() {
            if gt.class != class || used.contains(&(*f, g)) {
                continue;
            }
            let v = iou(d, gt);
            match best {
                Some((_, b)) if b >= v => {}
                _ => best = Some((g, v)),
            }
        }
        if let Some((g, v)) = best {
            if v >= threshold {
                used.insert((*f, g));
                tp += 1;
            }
        }
    }
    tp
}

/// Interpolated AP built by re-running the matching on every prefix of the
/// ranked detections and taking, for each recall level, the best precision
/// among all prefixes reaching it.
pub fn exhaustive_ap(
    dets: &[Vec<OrientedBox>],
    gts: &[Vec<OrientedBox>],
    class: Det3,
    threshold: f64,
    recall_levels: &[f64],
    iou: &dyn Fn(&OrientedBox, &OrientedBox) -> f64,
) -> Option<f64> {
    let n_gt: usize = gts
        .iter()
        .map(|f| f.iter().filter(|g| g.class == class).count())
        .sum();
    if n_gt == 0 {
        return None;
    }
    let order = ranked(dets, class);
    let points: Vec<(f64, f64)> = (1..=order.len())
        .map(|k| {
            let tp = true_positives_in_prefix(&order[..k], gts, class, threshold, iou);
            (tp as f64 / n_gt as f64, tp as f64 / k as f64)
        })
        .collect();
    let total: f64 = recall_levels
        .iter()
        .map(|&r| {
            points
                .iter()
                .filter(|(rec, _)| *rec >= r - 1e-12)
                .map(|(_, p)| *p)
                .fold(0.0, f64::max)
        })
        .sum();
    Some(total / recall_levels.len() as f64)
}

/// IoU of class `c` by set arithmetic on point indices.
pub fn set_iou(pred: &[u32], gt: &[u32], c: u32) -> Option<f64> {
    let p: BTreeSet<usize> = (0..pred.len()).filter(|&i| pred[i] == c).collect();
    let g: BTreeSet<usize> = (0..gt.len()).filter(|&i| gt[i] == c).collect();
    let union = p.union(&g).count();
    (union > 0).then(|| p.intersection(&g).count() as f64 / union as f64)
}
