//! Spherical projection of a scan onto a `rows x cols` range image.
//!
//! Row `r = floor(rows * (fov_up - elevation) / (fov_up - fov_down))`,
//! clamped to `[0, rows - 1]`; column `c = floor(cols * (1 - (azimuth/π + 1)/2))`
//! wrapped modulo `cols`, with `azimuth = atan2(y, x)`. Azimuth 0 is the
//! vehicle's forward axis and columns grow clockwise seen from above.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::labels::{PointLabels, Seg7, Taxonomy};
use crate::nn::Tensor;
use crate::pointcloud::{Point, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeImageConfig {
    pub rows: usize,
    pub cols: usize,
    /// Upper edge of the vertical field of view, radians.
    pub fov_up: f64,
    /// Lower edge of the vertical field of view, radians.
    pub fov_down: f64,
}

impl Default for RangeImageConfig {
    /// 64 x 2048 with the HDL-64E nominal +3° / −25° vertical field of view.
    fn default() -> Self {
        Self {
            rows: 64,
            cols: 2048,
            fov_up: 3f64.to_radians(),
            fov_down: (-25f64).to_radians(),
        }
    }
}

impl RangeImageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidConfig(
                "range image needs rows, cols >= 1".into(),
            ));
        }
        if !(self.fov_down < self.fov_up) {
            return Err(Error::InvalidConfig("fov_down must be below fov_up".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    /// Flat cell index `row * cols + col` for `p`, or why it was dropped.
    pub fn cell_of(&self, p: &Point) -> std::result::Result<usize, DropReason> {
        let range = p.range();
        if range == 0.0 {
            return Err(DropReason::Degenerate);
        }
        let elevation = (p.z as f64 / range).asin();
        if elevation > self.fov_up || elevation < self.fov_down {
            return Err(DropReason::OutOfFov);
        }
        let v = self.rows as f64 * (self.fov_up - elevation) / (self.fov_up - self.fov_down);
        let row = (v.floor().max(0.0) as usize).min(self.rows - 1);

        let azimuth = (p.y as f64).atan2(p.x as f64);
        let u = self.cols as f64 * (1.0 - (azimuth / PI + 1.0) / 2.0);
        let col = (u.floor() as i64).rem_euclid(self.cols as i64) as usize;
        Ok(row * self.cols + col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    /// The point sits at the sensor origin.
    Degenerate,
    OutOfFov,
}

/// Accounting for a projection: `winners + shadowed + out_of_fov + degenerate`
/// equals the cloud size.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProjectionStats {
    pub winners: usize,
    pub shadowed: usize,
    pub out_of_fov: usize,
    pub degenerate: usize,
}

impl ProjectionStats {
    pub fn total(&self) -> usize {
        self.winners + self.shadowed + self.out_of_fov + self.degenerate
    }
}

/// Channels are `(range m, intensity, z m)`; empty cells are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    cfg: RangeImageConfig,
    channels: Tensor,
    index_map: Vec<Option<u32>>,
    point_cells: Vec<Option<u32>>,
    stats: ProjectionStats,
}

impl RangeImage {
    pub fn config(&self) -> &RangeImageConfig {
        &self.cfg
    }

    pub fn channels(&self) -> &Tensor {
        &self.channels
    }

    /// For each cell, the index of the nearest point binned into it.
    pub fn index_map(&self) -> &[Option<u32>] {
        &self.index_map
    }

    /// For each source point, the cell it binned into (`None` if dropped).
    pub fn point_cells(&self) -> &[Option<u32>] {
        &self.point_cells
    }

    pub fn is_occupied(&self, cell: usize) -> bool {
        self.index_map[cell].is_some()
    }

    pub fn occupancy(&self) -> Vec<bool> {
        self.index_map.iter().map(Option::is_some).collect()
    }

    pub fn occupied_count(&self) -> usize {
        self.index_map.iter().filter(|c| c.is_some()).count()
    }

    pub fn range_at(&self, cell: usize) -> f32 {
        self.channels.data()[cell]
    }

    pub fn stats(&self) -> ProjectionStats {
        self.stats
    }

    pub fn source_len(&self) -> usize {
        self.point_cells.len()
    }

    pub(crate) fn check_cloud(&self, cloud: &PointCloud) -> Result<()> {
        if cloud.len() != self.point_cells.len() {
            return Err(Error::LengthMismatch {
                expected: self.point_cells.len(),
                actual: cloud.len(),
            });
        }
        Ok(())
    }
}

/// Projects `cloud` onto a range image. When several points share a cell the
/// one with the smallest range wins, ties going to the lower point index.
pub fn spherical_project(cloud: &PointCloud, cfg: &RangeImageConfig) -> Result<RangeImage> {
    cfg.validate()?;
    let cells = cfg.cells();
    let mut index_map: Vec<Option<u32>> = vec![None; cells];
    let mut best_range = vec![f64::INFINITY; cells];
    let mut point_cells = Vec::with_capacity(cloud.len());
    let mut stats = ProjectionStats::default();

    for (i, p) in cloud.points().iter().enumerate() {
        match cfg.cell_of(p) {
            Ok(cell) => {
                point_cells.push(Some(cell as u32));
                let r = p.range();
                // Strict comparison keeps the earlier index on equal range.
                if r < best_range[cell] {
                    if index_map[cell].is_some() {
                        stats.shadowed += 1;
                    } else {
                        stats.winners += 1;
                    }
                    best_range[cell] = r;
                    index_map[cell] = Some(i as u32);
                } else {
                    stats.shadowed += 1;
                }
            }
            Err(DropReason::Degenerate) => {
                point_cells.push(None);
                stats.degenerate += 1;
            }
            Err(DropReason::OutOfFov) => {
                point_cells.push(None);
                stats.out_of_fov += 1;
            }
        }
    }

    let mut channels = Tensor::zeros((3, cfg.rows, cfg.cols));
    let data = channels.data_mut();
    for (cell, idx) in index_map.iter().enumerate() {
        if let Some(i) = idx {
            let p = &cloud.points()[*i as usize];
            data[cell] = best_range[cell] as f32;
            data[cells + cell] = p.intensity;
            data[2 * cells + cell] = p.z;
        }
    }
    Ok(RangeImage {
        cfg: *cfg,
        channels,
        index_map,
        point_cells,
        stats,
    })
}

/// Per-cell labels taken from each cell's winning point; empty cells get `unknown`.
pub fn project_labels(labels: &PointLabels, img: &RangeImage) -> Result<Vec<u32>> {
    if labels.len() != img.source_len() {
        return Err(Error::LengthMismatch {
            expected: img.source_len(),
            actual: labels.len(),
        });
    }
    Ok(img
        .index_map
        .iter()
        .map(|idx| idx.map_or(Seg7::Unknown.id(), |i| labels.labels()[i as usize]))
        .collect())
}

/// Gives every point the seg7 label of the cell it falls into. Points that
/// were dropped during projection are labeled `unknown`.
pub fn unproject_labels(
    cell_labels: &[u32],
    img: &RangeImage,
    cloud: &PointCloud,
) -> Result<PointLabels> {
    img.check_cloud(cloud)?;
    if cell_labels.len() != img.cfg.cells() {
        return Err(Error::LengthMismatch {
            expected: img.cfg.cells(),
            actual: cell_labels.len(),
        });
    }
    let labels = img
        .point_cells
        .iter()
        .map(|c| c.map_or(Seg7::Unknown.id(), |c| cell_labels[c as usize]))
        .collect();
    PointLabels::new(labels, Taxonomy::Seg7)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(pts: &[(f32, f32, f32)]) -> PointCloud {
        PointCloud::new(
            pts.iter()
                .map(|&(x, y, z)| Point::new(x, y, z, 0.5))
                .collect(),
        )
        .unwrap()
    }

    fn symmetric() -> RangeImageConfig {
        RangeImageConfig {
            rows: 64,
            cols: 2048,
            fov_up: 0.2,
            fov_down: -0.2,
        }
    }

    #[test]
    fn empty_cloud_has_no_occupied_cells() {
        let img = spherical_project(&PointCloud::empty(), &RangeImageConfig::default()).unwrap();
        assert_eq!(img.occupied_count(), 0);
        assert_eq!(img.channels().shape().len(), 3 * 64 * 2048);
    }

    #[test]
    fn forward_point_lands_mid_row_and_center_column() {
        let img = spherical_project(&cloud(&[(10.0, 0.0, 0.0)]), &symmetric()).unwrap();
        // row = floor(64 * 0.2 / 0.4) = 32; col = floor(2048 * (1 - 1/2)) = 1024
        let cell = 32 * 2048 + 1024;
        assert_eq!(img.index_map()[cell], Some(0));
        assert_eq!(img.range_at(cell), 10.0);
        assert_eq!(img.occupied_count(), 1);
    }

    #[test]
    fn azimuth_columns_wrap_and_run_clockwise() {
        let cfg = symmetric();
        let left = cfg.cell_of(&Point::new(0.0, 5.0, 0.0, 0.0)).unwrap() % 2048;
        let right = cfg.cell_of(&Point::new(0.0, -5.0, 0.0, 0.0)).unwrap() % 2048;
        let back = cfg.cell_of(&Point::new(-5.0, 0.0, 0.0, 0.0)).unwrap() % 2048;
        assert_eq!(left, 512);
        assert_eq!(right, 1536);
        assert_eq!(back, 0);
    }

    #[test]
    fn nearer_point_wins_the_cell() {
        let img =
            spherical_project(&cloud(&[(9.0, 0.0, 0.0), (5.0, 0.0, 0.0)]), &symmetric()).unwrap();
        let cell = img.point_cells()[0].unwrap() as usize;
        assert_eq!(img.point_cells()[1], Some(cell as u32));
        assert_eq!(img.index_map()[cell], Some(1));
        assert_eq!(img.range_at(cell), 5.0);
        assert_eq!(
            img.stats(),
            ProjectionStats {
                winners: 1,
                shadowed: 1,
                ..Default::default()
            }
        );
    }

    #[test]
    fn equal_range_tie_goes_to_lower_index() {
        let img =
            spherical_project(&cloud(&[(5.0, 0.0, 0.0), (5.0, 0.0, 0.0)]), &symmetric()).unwrap();
        let cell = img.point_cells()[0].unwrap() as usize;
        assert_eq!(img.index_map()[cell], Some(0));
    }

    #[test]
    fn drops_are_counted() {
        let img = spherical_project(
            &cloud(&[(0.0, 0.0, 0.0), (1.0, 0.0, 5.0), (3.0, 1.0, 0.0)]),
            &symmetric(),
        )
        .unwrap();
        let s = img.stats();
        assert_eq!((s.degenerate, s.out_of_fov, s.winners), (1, 1, 1));
        assert_eq!(s.total(), 3);
    }

    #[test]
    fn unproject_gives_shared_cell_label_and_unknown_for_dropped() {
        let c = cloud(&[(9.0, 0.0, 0.0), (5.0, 0.0, 0.0), (1.0, 0.0, 5.0)]);
        let img = spherical_project(&c, &symmetric()).unwrap();
        let mut cells = vec![Seg7::Road.id(); img.config().cells()];
        cells[img.point_cells()[0].unwrap() as usize] = Seg7::Car.id();
        let labels = unproject_labels(&cells, &img, &c).unwrap();
        assert_eq!(labels.labels(), &[0, 0, Seg7::Unknown.id()]);
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = RangeImageConfig {
            fov_up: -0.1,
            fov_down: 0.1,
            ..RangeImageConfig::default()
        };
        assert!(spherical_project(&PointCloud::empty(), &cfg).is_err());
    }
}
