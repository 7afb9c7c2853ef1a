//! The two network stages and the end-to-end scan-to-detections pipeline.

mod config;
mod pipeline;
mod stage1;
mod stage2;

pub use config::PipelineConfig;
pub use pipeline::{
    drivable_mask, run_pipeline, segment_cloud, Pipeline, PipelineOutput, StageTimings,
};
pub use stage1::{build_stage1, infer_stage1, stage1_params, Stage1Graph, STAGE1_INPUT_DEPTH};
pub use stage2::{
    build_stage2, infer_stage2, stage2_params, Stage2Graph, BOX_PARAMS, HEIGHT_CHANNELS,
};
