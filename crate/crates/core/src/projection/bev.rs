//! Top-down (bird's-eye view) grids centered on the ego vehicle.
//!
//! Cell `(i, j)` covers `x ∈ [i·s − E/2, (i+1)·s − E/2)` and
//! `y ∈ [j·s − E/2, (j+1)·s − E/2)` with `E` the extent and `s` the cell
//! size. Grids are stored as tensors with `i` along the height axis and `j`
//! along the width axis.

use super::range_image::RangeImage;
use crate::error::{Error, Result};
use crate::labels::Seg7;
use crate::nn::{Shape, Tensor};
use crate::pointcloud::{Point, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BevConfig {
    /// Cells along x.
    pub width_cells: usize,
    /// Cells along y.
    pub length_cells: usize,
    /// Side of the square area covered, meters.
    pub extent: f64,
    /// Input cells per output cell along each axis.
    pub out_stride: usize,
}

impl Default for BevConfig {
    /// 1024 x 1024 cells over 80 m (7.8125 cm cells), 256 x 256 output (31.25 cm).
    fn default() -> Self {
        Self {
            width_cells: 1024,
            length_cells: 1024,
            extent: 80.0,
            out_stride: 4,
        }
    }
}

impl BevConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width_cells == 0 || self.length_cells == 0 {
            return Err(Error::InvalidConfig(
                "BEV grid needs at least one cell".into(),
            ));
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return Err(Error::InvalidConfig("BEV extent must be positive".into()));
        }
        if self.out_stride == 0
            || !self.width_cells.is_multiple_of(self.out_stride)
            || !self.length_cells.is_multiple_of(self.out_stride)
        {
            return Err(Error::InvalidConfig(
                "BEV cell counts must be divisible by out_stride".into(),
            ));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.width_cells * self.length_cells
    }

    /// Input cell size along x, meters.
    pub fn cell_size_x(&self) -> f64 {
        self.extent / self.width_cells as f64
    }

    pub fn cell_size_y(&self) -> f64 {
        self.extent / self.length_cells as f64
    }

    pub fn out_width(&self) -> usize {
        self.width_cells / self.out_stride
    }

    pub fn out_length(&self) -> usize {
        self.length_cells / self.out_stride
    }

    pub fn out_cell_size_x(&self) -> f64 {
        self.extent / self.out_width() as f64
    }

    pub fn out_cell_size_y(&self) -> f64 {
        self.extent / self.out_length() as f64
    }

    /// `(i, j)` of the input cell containing `(x, y)`, if inside the extent.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let half = self.extent / 2.0;
        if !(x >= -half && x < half && y >= -half && y < half) {
            return None;
        }
        let i = ((x + half) / self.cell_size_x()).floor() as usize;
        let j = ((y + half) / self.cell_size_y()).floor() as usize;
        (i < self.width_cells && j < self.length_cells).then_some((i, j))
    }

    fn flat_cell_of(&self, p: &Point) -> Option<usize> {
        self.cell_of(p.x as f64, p.y as f64)
            .map(|(i, j)| i * self.length_cells + j)
    }

    /// Ego-frame center of output cell `(i, j)`.
    pub fn out_cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        let half = self.extent / 2.0;
        (
            (i as f64 + 0.5) * self.out_cell_size_x() - half,
            (j as f64 + 0.5) * self.out_cell_size_y() - half,
        )
    }

    /// `(i, j)` of the output cell containing `(x, y)`, if inside the extent.
    pub fn out_cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        self.cell_of(x, y)
            .map(|(i, j)| (i / self.out_stride, j / self.out_stride))
    }
}

/// Height statistics of a rasterized scan plus the points in each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BevRaster {
    cfg: BevConfig,
    /// `(min z, max z, mean intensity)` per cell.
    height: Tensor,
    occupancy: Vec<bool>,
    /// `(flat cell, point index)` for binned points, sorted.
    members: Vec<(u32, u32)>,
    dropped: usize,
}

impl BevRaster {
    pub fn config(&self) -> &BevConfig {
        &self.cfg
    }

    pub fn height(&self) -> &Tensor {
        &self.height
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    /// Indices of the points that fell into flat cell `cell`, ascending.
    pub fn cell_points(&self, cell: usize) -> Vec<u32> {
        let cell = cell as u32;
        let lo = self.members.partition_point(|&(c, _)| c < cell);
        let hi = self.members.partition_point(|&(c, _)| c <= cell);
        self.members[lo..hi].iter().map(|&(_, i)| i).collect()
    }

    /// Points inside the extent.
    pub fn binned(&self) -> usize {
        self.members.len()
    }

    /// Points outside the extent.
    pub fn dropped(&self) -> usize {
        self.dropped
    }
}

/// Runs of equal first element in a sorted slice.
fn cell_runs(members: &[(u32, u32)]) -> impl Iterator<Item = &[(u32, u32)]> {
    members.chunk_by(|a, b| a.0 == b.0)
}

/// Bins points into the BEV grid and reduces each cell to min z, max z and
/// mean intensity. Points outside `[−E/2, E/2)` on either axis are dropped.
pub fn bev_rasterize(cloud: &PointCloud, cfg: &BevConfig) -> Result<BevRaster> {
    cfg.validate()?;
    let cells = cfg.cells();
    let mut members: Vec<(u32, u32)> = cloud
        .points()
        .iter()
        .enumerate()
        .filter_map(|(i, p)| cfg.flat_cell_of(p).map(|c| (c as u32, i as u32)))
        .collect();
    members.sort_unstable();

    let mut height = Tensor::zeros((3, cfg.width_cells, cfg.length_cells));
    let mut occupancy = vec![false; cells];
    let data = height.data_mut();
    for run in cell_runs(&members) {
        let cell = run[0].0 as usize;
        occupancy[cell] = true;
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        let mut intensity = 0f64;
        for &(_, m) in run {
            let p = &cloud.points()[m as usize];
            lo = lo.min(p.z);
            hi = hi.max(p.z);
            intensity += p.intensity as f64;
        }
        data[cell] = lo;
        data[cells + cell] = hi;
        data[2 * cells + cell] = (intensity / run.len() as f64) as f32;
    }
    Ok(BevRaster {
        cfg: *cfg,
        height,
        occupancy,
        dropped: cloud.len() - members.len(),
        members,
    })
}

/// Averages per-point class probabilities into BEV cells.
///
/// Each point takes the probability vector of the range-image cell it was
/// projected into. A BEV cell stores the mean over its points that have such
/// a vector; cells with none stay all-zero.
pub fn reproject_semantics(
    probs: &Tensor,
    img: &RangeImage,
    cloud: &PointCloud,
    cfg: &BevConfig,
) -> Result<Tensor> {
    cfg.validate()?;
    img.check_cloud(cloud)?;
    check_probs(probs, img)?;
    let mut pairs: Vec<(u32, u32)> = cloud
        .points()
        .iter()
        .enumerate()
        .filter_map(|(i, p)| cfg.flat_cell_of(p).map(|c| (c as u32, i as u32)))
        .collect();
    pairs.sort_unstable();
    Ok(accumulate_semantics(probs, img, &pairs, cfg))
}

fn check_probs(probs: &Tensor, img: &RangeImage) -> Result<()> {
    let rc = img.config();
    let expected = Shape::new(Seg7::COUNT, rc.rows, rc.cols);
    if probs.shape() != expected {
        return Err(Error::shape(format!(
            "semantic probabilities are {}, range image needs {expected}",
            probs.shape()
        )));
    }
    Ok(())
}

/// Per-cell means over `members`, sorted `(flat cell, point)` pairs.
fn accumulate_semantics(
    probs: &Tensor,
    img: &RangeImage,
    members: &[(u32, u32)],
    cfg: &BevConfig,
) -> Tensor {
    let cells = cfg.cells();
    let range_plane = img.config().cells();
    let point_cells = img.point_cells();
    let src = probs.data();
    let mut out = Tensor::zeros((Seg7::COUNT, cfg.width_cells, cfg.length_cells));
    let dst = out.data_mut();
    for run in cell_runs(members) {
        let cell = run[0].0 as usize;
        let mut sums = [0f64; Seg7::COUNT];
        let mut n = 0usize;
        for rcell in run.iter().filter_map(|&(_, i)| point_cells[i as usize]) {
            n += 1;
            for (c, s) in sums.iter_mut().enumerate() {
                *s += src[c * range_plane + rcell as usize] as f64;
            }
        }
        if n > 0 {
            for (c, s) in sums.iter().enumerate() {
                dst[c * cells + cell] = (s / n as f64) as f32;
            }
        }
    }
    out
}

/// Second-stage input: 7 semantic channels plus `(min z, max z, mean intensity)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub semantic: Tensor,
    pub height: Tensor,
    pub occupancy: Vec<bool>,
}

impl BevGrid {
    pub fn new(semantic: Tensor, raster: BevRaster) -> Result<Self> {
        let c = raster.config();
        let expected = Shape::new(Seg7::COUNT, c.width_cells, c.length_cells);
        if semantic.shape() != expected {
            return Err(Error::shape(format!(
                "semantic grid is {}, expected {expected}",
                semantic.shape()
            )));
        }
        let mut semantic = semantic;
        // Semantics without LiDAR support would violate the empty-cell encoding.
        let occupancy = raster.occupancy();
        for plane in semantic.data_mut().chunks_exact_mut(c.cells()) {
            for (v, &occ) in plane.iter_mut().zip(occupancy) {
                if !occ && *v != 0.0 {
                    *v = 0.0;
                }
            }
        }
        Ok(Self {
            semantic,
            height: raster.height,
            occupancy: raster.occupancy,
        })
    }

    /// Rasterizes nothing twice: semantics are averaged over the points the
    /// raster already binned, so empty cells stay zero without a masking pass.
    pub fn from_scan(
        probs: &Tensor,
        img: &RangeImage,
        cloud: &PointCloud,
        raster: BevRaster,
    ) -> Result<Self> {
        img.check_cloud(cloud)?;
        check_probs(probs, img)?;
        if raster
            .members
            .last()
            .is_some_and(|&(_, i)| i as usize >= cloud.len())
        {
            return Err(Error::shape(
                "raster was built from a different cloud".to_string(),
            ));
        }
        Ok(Self {
            semantic: accumulate_semantics(probs, img, &raster.members, &raster.cfg),
            height: raster.height,
            occupancy: raster.occupancy,
        })
    }

    pub fn empty(cfg: &BevConfig) -> Self {
        Self {
            semantic: Tensor::zeros((Seg7::COUNT, cfg.width_cells, cfg.length_cells)),
            height: Tensor::zeros((3, cfg.width_cells, cfg.length_cells)),
            occupancy: vec![false; cfg.cells()],
        }
    }
}
