//! Range-image neighborhood label smoothing for unprojected point labels.
//!
//! Unprojecting a segmented range image gives every point in a cell the same
//! label, which smears labels across depth discontinuities. Each point is
//! instead relabeled by a vote among its `k` nearest neighbors, where
//! candidates are the other points whose cells lie in a `window x window`
//! patch around the point's cell and "nearest" is by absolute range
//! difference, capped at `cutoff`.

use rayon::prelude::*;

use super::range_image::RangeImage;
use crate::error::{Error, Result};
use crate::labels::PointLabels;
use crate::pointcloud::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnConfig {
    pub k: usize,
    pub window: usize,
    /// Maximum range difference for a neighbor to vote, meters.
    pub cutoff: f64,
}

impl Default for KnnConfig {
    fn default() -> Self {
        Self {
            k: 5,
            window: 5,
            cutoff: 1.0,
        }
    }
}

impl KnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("knn k must be >= 1".into()));
        }
        if self.window.is_multiple_of(2) {
            return Err(Error::InvalidConfig("knn window must be odd".into()));
        }
        if !(self.cutoff >= 0.0) {
            return Err(Error::InvalidConfig(
                "knn cutoff must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Points grouped by range-image cell (CSR layout).
struct CellBuckets {
    offsets: Vec<u32>,
    points: Vec<u32>,
}

impl CellBuckets {
    fn build(img: &RangeImage) -> Self {
        let cells = img.config().cells();
        let mut offsets = vec![0u32; cells + 1];
        for c in img.point_cells().iter().flatten() {
            offsets[*c as usize + 1] += 1;
        }
        for i in 0..cells {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut points = vec![0u32; offsets[cells] as usize];
        for (i, c) in img.point_cells().iter().enumerate() {
            if let Some(c) = c {
                let slot = &mut cursor[*c as usize];
                points[*slot as usize] = i as u32;
                *slot += 1;
            }
        }
        Self { offsets, points }
    }

    fn cell(&self, c: usize) -> &[u32] {
        &self.points[self.offsets[c] as usize..self.offsets[c + 1] as usize]
    }
}

pub fn knn_smooth(
    labels: &PointLabels,
    cloud: &PointCloud,
    img: &RangeImage,
    cfg: &KnnConfig,
) -> Result<PointLabels> {
    cfg.validate()?;
    img.check_cloud(cloud)?;
    if labels.len() != cloud.len() {
        return Err(Error::LengthMismatch {
            expected: cloud.len(),
            actual: labels.len(),
        });
    }
    let buckets = CellBuckets::build(img);
    let ranges: Vec<f64> = cloud.points().iter().map(|p| p.range()).collect();
    let (rows, cols) = (img.config().rows as isize, img.config().cols as isize);
    let half = (cfg.window / 2) as isize;
    let current = labels.labels();
    let n_classes = current.iter().copied().max().map_or(0, |m| m as usize + 1);

    let smoothed: Vec<u32> = (0..cloud.len())
        .into_par_iter()
        .map_init(
            || (Vec::new(), vec![0usize; n_classes]),
            |(cands, votes): &mut (Vec<(f64, u32)>, Vec<usize>), i| {
                let Some(cell) = img.point_cells()[i] else {
                    return current[i];
                };
                let (r0, c0) = (cell as isize / cols, cell as isize % cols);
                cands.clear();
                for dr in -half..=half {
                    let r = r0 + dr;
                    if r < 0 || r >= rows {
                        continue;
                    }
                    for dc in -half..=half {
                        let c = (c0 + dc).rem_euclid(cols);
                        for &j in buckets.cell((r * cols + c) as usize) {
                            if j as usize == i {
                                continue;
                            }
                            let d = (ranges[j as usize] - ranges[i]).abs();
                            if d <= cfg.cutoff {
                                cands.push((d, j));
                            }
                        }
                    }
                }
                if cands.is_empty() {
                    return current[i];
                }
                // Columns wrap, so a narrow image can visit one cell twice.
                cands.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                cands.dedup_by_key(|c| c.1);
                votes.fill(0);
                for &(_, j) in cands.iter().take(cfg.k) {
                    votes[current[j as usize] as usize] += 1;
                }
                let top = *votes.iter().max().unwrap();
                if votes[current[i] as usize] == top {
                    current[i]
                } else {
                    votes.iter().position(|&v| v == top).unwrap() as u32
                }
            },
        )
        .collect();
    PointLabels::new(smoothed, labels.taxonomy())
}
