//! From second-stage output grids to object instances.
//!
//! Cells whose best object-class probability clears the confidence threshold
//! are decoded into boxes. Each cell regresses
//! `[δx, δy, w, ℓ, sin θ, cos θ]`, where `(δx, δy)` is the offset from the
//! cell center to the object centroid. The decoded centroids of each class
//! are clustered with DBSCAN and every cluster is averaged into one box.

mod dbscan;
pub mod format;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub use dbscan::dbscan;

use crate::error::{Error, Result};
use crate::labels::Det3;
use crate::network::BOX_PARAMS;
use crate::nn::{Shape, Tensor};
use crate::projection::BevConfig;

/// Per-cell box regression target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxParams {
    pub dx: f64,
    pub dy: f64,
    pub width: f64,
    pub length: f64,
    /// Need not be normalized together with `cos`.
    pub sin: f64,
    pub cos: f64,
}

impl BoxParams {
    pub fn to_array(&self) -> [f64; BOX_PARAMS] {
        [
            self.dx,
            self.dy,
            self.width,
            self.length,
            self.sin,
            self.cos,
        ]
    }

    pub fn from_grid(grid: &Tensor, i: usize, j: usize) -> Self {
        let g = |c| grid.get(c, i, j) as f64;
        Self {
            dx: g(0),
            dy: g(1),
            width: g(2),
            length: g(3),
            sin: g(4),
            cos: g(5),
        }
    }
}

/// A BEV detection in the ego frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub class: Det3,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub length: f64,
    /// Radians in `(−π, π]`.
    pub yaw: f64,
    pub confidence: f64,
}

impl OrientedBox {
    /// Corners in counter-clockwise order. `length` runs along the heading.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)]
            .map(|(u, v)| [self.cx + u * c - v * s, self.cy + u * s + v * c])
    }

    pub fn area(&self) -> f64 {
        self.width * self.length
    }

    /// Distance of the centroid from the ego origin.
    pub fn range(&self) -> f64 {
        self.cx.hypot(self.cy)
    }
}

/// Wraps an angle into `(−π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    /// DBSCAN radius, meters.
    pub eps: f64,
    pub min_pts: usize,
    /// Global confidence threshold; cells must exceed it strictly.
    pub confidence_threshold: f64,
    /// Per-class overrides of `confidence_threshold`.
    pub class_thresholds: BTreeMap<Det3, f64>,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            eps: 0.8,
            min_pts: 3,
            confidence_threshold: 0.5,
            class_thresholds: BTreeMap::new(),
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidConfig("dbscan eps must be positive".into()));
        }
        if self.min_pts == 0 {
            return Err(Error::InvalidConfig("dbscan min_pts must be >= 1".into()));
        }
        for t in std::iter::once(&self.confidence_threshold).chain(self.class_thresholds.values()) {
            if !(0.0..=1.0).contains(t) {
                return Err(Error::InvalidConfig(format!(
                    "threshold {t} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn threshold_for(&self, class: Det3) -> f64 {
        self.class_thresholds
            .get(&class)
            .copied()
            .unwrap_or(self.confidence_threshold)
    }
}

/// An output cell that passed the confidence threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellHit {
    /// Output-grid index along x.
    pub i: usize,
    /// Output-grid index along y.
    pub j: usize,
    pub class: Det3,
    pub confidence: f64,
}

/// Cells whose most probable object class (vehicle or pedestrian, ties to
/// vehicle) has probability strictly above its threshold. `unknown` never
/// produces hits.
pub fn threshold_cells(class_grid: &Tensor, cfg: &ClusterConfig) -> Result<Vec<CellHit>> {
    let s = class_grid.shape();
    if s.depth != Det3::COUNT {
        return Err(Error::shape(format!(
            "class grid must have 3 channels, got {s}"
        )));
    }
    let mut hits = Vec::new();
    for i in 0..s.height {
        for j in 0..s.width {
            let vehicle = class_grid.get(Det3::Vehicle as usize, i, j) as f64;
            let pedestrian = class_grid.get(Det3::Pedestrian as usize, i, j) as f64;
            let (class, confidence) = if pedestrian > vehicle {
                (Det3::Pedestrian, pedestrian)
            } else {
                (Det3::Vehicle, vehicle)
            };
            if confidence > cfg.threshold_for(class) {
                hits.push(CellHit {
                    i,
                    j,
                    class,
                    confidence,
                });
            }
        }
    }
    Ok(hits)
}

/// Decodes one cell's regression into a box: centroid = cell center + offset,
/// yaw = `atan2(sin, cos)`.
pub fn decode_cell(hit: &CellHit, params: &BoxParams, cfg: &BevConfig) -> Result<OrientedBox> {
    if !(params.width > 0.0 && params.length > 0.0) {
        return Err(Error::DegenerateBox {
            width: params.width,
            length: params.length,
        });
    }
    let (x0, y0) = cfg.out_cell_center(hit.i, hit.j);
    Ok(OrientedBox {
        class: hit.class,
        cx: x0 + params.dx,
        cy: y0 + params.dy,
        width: params.width,
        length: params.length,
        yaw: normalize_angle(params.sin.atan2(params.cos)),
        confidence: hit.confidence,
    })
}

/// Inverse of [`decode_cell`]: the regression target for output cell `(i, j)`.
pub fn encode_box(b: &OrientedBox, i: usize, j: usize, cfg: &BevConfig) -> BoxParams {
    let (x0, y0) = cfg.out_cell_center(i, j);
    let (sin, cos) = b.yaw.sin_cos();
    BoxParams {
        dx: b.cx - x0,
        dy: b.cy - y0,
        width: b.width,
        length: b.length,
        sin,
        cos,
    }
}

/// Averages a cluster: arithmetic means for centroid, size and confidence;
/// circular mean for yaw.
pub fn aggregate_cluster(members: &[OrientedBox]) -> Result<OrientedBox> {
    let first = members.first().ok_or(Error::EmptyCluster)?;
    let n = members.len() as f64;
    let mut acc = [0f64; 7];
    for m in members {
        let (s, c) = m.yaw.sin_cos();
        for (a, v) in acc
            .iter_mut()
            .zip([m.cx, m.cy, m.width, m.length, s, c, m.confidence])
        {
            *a += v;
        }
    }
    Ok(OrientedBox {
        class: first.class,
        cx: acc[0] / n,
        cy: acc[1] / n,
        width: acc[2] / n,
        length: acc[3] / n,
        yaw: normalize_angle((acc[4] / n).atan2(acc[5] / n)),
        confidence: acc[6] / n,
    })
}

/// Decodes `hits`, clusters the centroids of each class separately and
/// returns one averaged box per cluster (vehicles first, clusters in id
/// order). Cells with non-positive regressed size are discarded; noise cells
/// are dropped.
pub fn cluster_detections(
    hits: &[CellHit],
    box_grid: &Tensor,
    bev: &BevConfig,
    cfg: &ClusterConfig,
) -> Result<Vec<OrientedBox>> {
    cfg.validate()?;
    let s = box_grid.shape();
    if s.depth != BOX_PARAMS {
        return Err(Error::shape(format!(
            "box grid must have 6 channels, got {s}"
        )));
    }
    let mut detections = Vec::new();
    for class in Det3::OBJECTS {
        let boxes: Vec<OrientedBox> = hits
            .iter()
            .filter(|h| h.class == class)
            .filter_map(|h| decode_cell(h, &BoxParams::from_grid(box_grid, h.i, h.j), bev).ok())
            .collect();
        let centroids: Vec<[f64; 2]> = boxes.iter().map(|b| [b.cx, b.cy]).collect();
        let labels = dbscan(&centroids, cfg.eps, cfg.min_pts);
        let n_clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
        let mut members: Vec<Vec<OrientedBox>> = vec![Vec::new(); n_clusters];
        for (b, l) in boxes.iter().zip(&labels) {
            if let Some(l) = l {
                members[*l].push(*b);
            }
        }
        for m in &members {
            detections.push(aggregate_cluster(m)?);
        }
    }
    Ok(detections)
}

/// Thresholds the class grid and clusters the surviving cells into detections.
pub fn postprocess(
    class_grid: &Tensor,
    box_grid: &Tensor,
    bev: &BevConfig,
    cfg: &ClusterConfig,
) -> Result<Vec<OrientedBox>> {
    let cs = class_grid.shape();
    let expected = Shape::new(Det3::COUNT, bev.out_width(), bev.out_length());
    if cs != expected {
        return Err(Error::shape(format!(
            "class grid is {cs}, expected {expected}"
        )));
    }
    if box_grid.shape() != Shape::new(BOX_PARAMS, cs.height, cs.width) {
        return Err(Error::shape(format!(
            "box grid {} does not match class grid {cs}",
            box_grid.shape()
        )));
    }
    let hits = threshold_cells(class_grid, cfg)?;
    cluster_detections(&hits, box_grid, bev, cfg)
}
