//! Two-stage LiDAR perception.
//!
//! A scan is spherically projected into a range image and segmented into
//! seven classes by the first network. The per-pixel class probabilities are
//! carried back to the points and averaged into a top-down grid, which the
//! second network turns into per-cell class scores and box regressions.
//! Thresholding, DBSCAN and per-cluster averaging yield the final boxes.
//!
//! ```
//! use mvlidarnet::{PointCloud, Point, RangeImageConfig, spherical_project};
//!
//! let cloud = PointCloud::new(vec![Point { x: 10.0, y: 0.0, z: -1.0, intensity: 0.3 }])?;
//! let img = spherical_project(&cloud, &RangeImageConfig::default())?;
//! assert_eq!(img.occupied_count(), 1);
//! # Ok::<(), mvlidarnet::Error>(())
//! ```

pub mod error;
pub mod eval;
pub mod labels;
pub mod network;
pub mod nn;
pub mod pointcloud;
pub mod postprocess;
pub mod projection;

pub use error::{Error, Result};
pub use labels::{Det3, LabelMap, PointLabels, Seg7, Taxonomy};
pub use network::{run_pipeline, Pipeline, PipelineConfig, PipelineOutput};
pub use pointcloud::{load_kitti_bin, save_kitti_bin, Point, PointCloud};
pub use postprocess::{ClusterConfig, OrientedBox};
pub use projection::{
    bev_rasterize, spherical_project, BevConfig, BevGrid, KnnConfig, RangeImage, RangeImageConfig,
};

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!(concat!("../../../book/src/", $path))]
            struct $name;
        };
    }
    chapter!(Projection, "projection.md");
    chapter!(Engine, "engine.md");
    chapter!(Networks, "networks.md");
    chapter!(Detection, "detection.md");
    chapter!(Evaluation, "evaluation.md");
    chapter!(Formats, "formats.md");
}
