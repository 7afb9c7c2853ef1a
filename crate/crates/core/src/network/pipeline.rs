//! Scan in, detections out, keeping every intermediate product.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::PipelineConfig;
use super::stage1::{build_stage1, infer_stage1, stage1_params, Stage1Graph};
use super::stage2::{build_stage2, infer_stage2, stage2_params, Stage2Graph};
use crate::error::Result;
use crate::labels::{PointLabels, Seg7};
use crate::nn::blocks::random_store;
use crate::nn::{argmax_channels, load_weight_blob, ParamStore, Tensor};
use crate::pointcloud::PointCloud;
use crate::postprocess::{postprocess, OrientedBox};
use crate::projection::{
    bev_rasterize, knn_smooth, spherical_project, unproject_labels, BevGrid, KnnConfig, RangeImage,
    RangeImageConfig,
};

/// Both graphs plus the configuration. Immutable; share it across threads to
/// process several scans concurrently.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    stage1: Stage1Graph,
    stage2: Stage2Graph,
}

impl Pipeline {
    pub fn new(
        config: PipelineConfig,
        weights1: &ParamStore,
        weights2: &ParamStore,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            stage1: build_stage1(weights1)?,
            stage2: build_stage2(weights2)?,
            config,
        })
    }

    /// Loads the weight blobs named in `config`.
    pub fn from_config(config: PipelineConfig) -> Result<Self> {
        let missing = |which| {
            crate::error::Error::InvalidConfig(format!("no {which} weight blob configured"))
        };
        let w1 = load_weight_blob(config.weights1.as_ref().ok_or_else(|| missing("stage-1"))?)?;
        let w2 = load_weight_blob(config.weights2.as_ref().ok_or_else(|| missing("stage-2"))?)?;
        Self::new(config, &w1, &w2)
    }

    /// Randomly initialized graphs, reproducible from `seed`.
    pub fn random(config: PipelineConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w1 = random_store(&stage1_params(), &mut rng);
        let w2 = random_store(&stage2_params(), &mut rng);
        Self::new(config, &w1, &w2)
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn stage1(&self) -> &Stage1Graph {
        &self.stage1
    }

    pub fn stage2(&self) -> &Stage2Graph {
        &self.stage2
    }
}

/// Wall time per step of [`run_pipeline`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub projection: Duration,
    pub stage1: Duration,
    pub labels: Duration,
    pub rasterization: Duration,
    pub stage2: Duration,
    pub postprocess: Duration,
    pub total: Duration,
}

impl StageTimings {
    /// Everything except the two network forward passes.
    pub fn non_nn(&self) -> Duration {
        self.projection + self.labels + self.rasterization + self.postprocess
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub range_image: RangeImage,
    /// `(7, rows, cols)` softmax output of the first stage.
    pub seg_probs: Tensor,
    /// Per-point seg7 labels by unprojecting the per-pixel argmax.
    pub point_labels: PointLabels,
    /// kNN-smoothed `point_labels`, when enabled.
    pub smoothed_labels: Option<PointLabels>,
    pub bev: BevGrid,
    /// Row-major over BEV cells: mean road probability above the threshold.
    pub drivable_mask: Vec<bool>,
    /// `(3, H/4, W/4)` class probabilities.
    pub class_grid: Tensor,
    /// `(6, H/4, W/4)` box regression.
    pub box_grid: Tensor,
    pub detections: Vec<OrientedBox>,
    pub timings: StageTimings,
}

fn timed<T>(slot: &mut Duration, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f();
    *slot = t.elapsed();
    out
}

/// First-stage labels for one scan: per-point seg7 labels and, when `knn`
/// is given, their smoothed version.
pub fn segment_cloud(
    cloud: &PointCloud,
    stage1: &Stage1Graph,
    range: &RangeImageConfig,
    knn: Option<&KnnConfig>,
) -> Result<(PointLabels, Option<PointLabels>)> {
    let img = spherical_project(cloud, range)?;
    let probs = infer_stage1(stage1, &img)?;
    let labels = unproject_labels(&argmax_channels(&probs), &img, cloud)?;
    let smoothed = knn
        .map(|k| knn_smooth(&labels, cloud, &img, k))
        .transpose()?;
    Ok((labels, smoothed))
}

/// Cells whose mean probability of `road` exceeds `threshold`.
pub fn drivable_mask(bev: &BevGrid, threshold: f64) -> Vec<bool> {
    bev.semantic
        .channel(Seg7::Road as usize)
        .iter()
        .map(|&p| p as f64 > threshold)
        .collect()
}

/// Projection, first stage, label unprojection and BEV reprojection,
/// rasterization, second stage, postprocessing.
pub fn run_pipeline(cloud: &PointCloud, pipeline: &Pipeline) -> Result<PipelineOutput> {
    let cfg = &pipeline.config;
    let start = Instant::now();
    let mut tm = StageTimings::default();

    let range_image = timed(&mut tm.projection, || spherical_project(cloud, &cfg.range))?;
    let seg_probs = timed(&mut tm.stage1, || {
        infer_stage1(&pipeline.stage1, &range_image)
    })?;
    let (point_labels, smoothed_labels) = timed(&mut tm.labels, || {
        let labels = unproject_labels(&argmax_channels(&seg_probs), &range_image, cloud)?;
        let smoothed = cfg
            .knn_enabled
            .then(|| knn_smooth(&labels, cloud, &range_image, &cfg.knn))
            .transpose()?;
        Ok((labels, smoothed))
    })?;
    let bev = timed(&mut tm.rasterization, || {
        let raster = bev_rasterize(cloud, &cfg.bev)?;
        BevGrid::from_scan(&seg_probs, &range_image, cloud, raster)
    })?;
    let (class_grid, box_grid) = timed(&mut tm.stage2, || infer_stage2(&pipeline.stage2, &bev))?;
    let (drivable_mask, detections) = timed(&mut tm.postprocess, || {
        Ok((
            drivable_mask(&bev, cfg.drivable_threshold),
            postprocess(&class_grid, &box_grid, &cfg.bev, &cfg.cluster)?,
        ))
    })?;
    tm.total = start.elapsed();

    Ok(PipelineOutput {
        range_image,
        seg_probs,
        point_labels,
        smoothed_labels,
        bev,
        drivable_mask,
        class_grid,
        box_grid,
        detections,
        timings: tm,
    })
}
