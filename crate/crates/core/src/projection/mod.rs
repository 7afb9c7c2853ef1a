//! Conversions between point clouds and the two network input views: the
//! perspective range image and the top-down BEV grids.

mod bev;
mod knn;
mod range_image;

pub use bev::{bev_rasterize, reproject_semantics, BevConfig, BevGrid, BevRaster};
pub use knn::{knn_smooth, KnnConfig};
pub use range_image::{
    project_labels, spherical_project, unproject_labels, DropReason, ProjectionStats, RangeImage,
    RangeImageConfig,
};

use crate::nn::{Array, ParamStore, Tensor};

fn mask_tensor(mask: &[bool], height: usize, width: usize) -> Tensor {
    let data = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
    Tensor::from_vec((1, height, width), data).expect("mask matches grid")
}

impl RangeImage {
    /// Blob entries `range_image` (3 channels) and `range_occupancy` (0/1).
    pub fn to_store(&self) -> ParamStore {
        let c = self.config();
        let mut store = ParamStore::new();
        store.insert("range_image", Array::from(self.channels()));
        store.insert(
            "range_occupancy",
            Array::from(&mask_tensor(&self.occupancy(), c.rows, c.cols)),
        );
        store
    }
}

impl BevGrid {
    /// Blob entries `bev_semantic`, `bev_height` and `bev_occupancy` (0/1).
    pub fn to_store(&self) -> ParamStore {
        let s = self.height.shape();
        let mut store = ParamStore::new();
        store.insert("bev_semantic", Array::from(&self.semantic));
        store.insert("bev_height", Array::from(&self.height));
        store.insert(
            "bev_occupancy",
            Array::from(&mask_tensor(&self.occupancy, s.height, s.width)),
        );
        store
    }
}
