use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{error, info, warn};
use mvlidarnet::eval::{
    evaluate_detections, scores_from, segmentation_iou, ConfusionMatrix, DetectionReport,
    EvalConfig, Interpolation, SegmentationScores,
};
use mvlidarnet::labels::{load_seg7_labels, load_semantickitti_labels, remap_labels};
use mvlidarnet::network::{build_stage1, segment_cloud, stage1_params, Stage1Graph, StageTimings};
use mvlidarnet::nn::blocks::random_store;
use mvlidarnet::nn::load_weight_blob;
use mvlidarnet::postprocess::format::{detections_to_json, format_detections, parse_detections};
use mvlidarnet::projection::bev_rasterize;
use mvlidarnet::{
    load_kitti_bin, run_pipeline, LabelMap, OrientedBox, Pipeline, PipelineConfig, PointCloud, Seg7,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{
    BatchArgs, BenchArgs, EvalDetArgs, EvalSegArgs, GtFormat, PipelineArgs, RecallPoints, VizArgs,
};
use crate::error::{CliError, CliResult};
use crate::fsutil::{list_files, require_dir, require_file, stem, write_atomic};
use crate::image::{mask_to_pgm, render_bev};
use crate::scene::{synthetic_scan, SceneConfig};
use crate::stats::TimingStats;

/// Config file plus command-line overrides, validated.
pub fn resolve_config(args: &PipelineArgs) -> CliResult<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            require_file(path, "config")?;
            PipelineConfig::load(path).map_err(|e| CliError::config(e.to_string()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(w) = &args.weights1 {
        cfg.weights1 = Some(w.clone());
    }
    if let Some(w) = &args.weights2 {
        cfg.weights2 = Some(w.clone());
    }
    if args.knn {
        cfg.knn_enabled = true;
    }
    if let Some(t) = args.threshold {
        cfg.cluster.confidence_threshold = t;
        cfg.cluster.class_thresholds.clear();
    }
    cfg.validate()
        .map_err(|e| CliError::config(e.to_string()))?;
    Ok(cfg)
}

fn weight_path<'a>(path: &'a Option<PathBuf>, which: &str) -> CliResult<&'a Path> {
    let path = path.as_deref().ok_or_else(|| {
        CliError::config(format!(
            "no {which} weights; pass --{which} or --random-weights"
        ))
    })?;
    require_file(path, which)?;
    Ok(path)
}

/// Both graphs. Random weights draw the first stage before the second from
/// one seeded stream, so `segment` and `detect` agree on the first stage.
pub fn build_pipeline(args: &PipelineArgs, cfg: PipelineConfig) -> CliResult<Pipeline> {
    if args.random_weights {
        return Ok(Pipeline::random(cfg, args.seed)?);
    }
    weight_path(&cfg.weights1, "weights1")?;
    weight_path(&cfg.weights2, "weights2")?;
    Pipeline::from_config(cfg).map_err(|e| CliError::config(format!("loading weights: {e}")))
}

pub fn build_segmenter(args: &PipelineArgs, cfg: &PipelineConfig) -> CliResult<Stage1Graph> {
    let store = if args.random_weights {
        random_store(&stage1_params(), &mut ChaCha8Rng::seed_from_u64(args.seed))
    } else {
        let path = weight_path(&cfg.weights1, "weights1")?;
        load_weight_blob(path).map_err(|e| CliError::config(format!("loading weights: {e}")))?
    };
    build_stage1(&store).map_err(|e| CliError::config(format!("stage-1 weights: {e}")))
}

fn thread_pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileFailure {
    pub file: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub command: &'static str,
    pub processed: usize,
    pub failed: Vec<FileFailure>,
    /// Detections written, for `detect`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detections: Option<usize>,
}

/// Runs `work` on every scan in the pool; failures are logged and collected
/// without stopping the batch. The summary keeps file order.
fn run_batch<F>(
    command: &'static str,
    files: &[PathBuf],
    jobs: usize,
    work: F,
) -> CliResult<(BatchSummary, Vec<usize>)>
where
    F: Fn(&Path) -> CliResult<usize> + Sync,
{
    let results: Vec<CliResult<usize>> =
        thread_pool(jobs)?.install(|| files.par_iter().map(|f| work(f)).collect());
    let mut failed = Vec::new();
    let mut counts = Vec::new();
    for (file, r) in files.iter().zip(results) {
        match r {
            Ok(n) => counts.push(n),
            Err(e) => {
                error!("{}: {e}", file.display());
                failed.push(FileFailure {
                    file: file.display().to_string(),
                    error: e.to_string(),
                });
            }
        }
    }
    let summary = BatchSummary {
        command,
        processed: counts.len(),
        failed,
        detections: None,
    };
    Ok((summary, counts))
}

fn prepare_batch(args: &BatchArgs) -> CliResult<Vec<PathBuf>> {
    require_dir(&args.input, "input")?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::config(format!("output `{}`: {e}", args.out.display())))?;
    list_files(&args.input, "bin")
}

fn finish_batch(out: &Path, summary: BatchSummary) -> CliResult<BatchSummary> {
    let json = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    write_atomic(&out.join("summary.json"), &json)?;
    Ok(summary)
}

/// Writes `<stem>.label` per scan and, with `--knn`, `<stem>.knn.label`.
pub fn segment(args: &BatchArgs) -> CliResult<BatchSummary> {
    let cfg = resolve_config(&args.pipeline)?;
    let files = prepare_batch(args)?;
    let graph = build_segmenter(&args.pipeline, &cfg)?;
    let knn = cfg.knn_enabled.then_some(&cfg.knn);
    let (summary, _) = run_batch("segment", &files, args.pipeline.jobs, |path| {
        let cloud = load_kitti_bin(path)?;
        let (labels, smoothed) = segment_cloud(&cloud, &graph, &cfg.range, knn)?;
        let name = stem(path);
        write_atomic(
            &args.out.join(format!("{name}.label")),
            &labels.to_label_bytes(),
        )?;
        if let Some(s) = smoothed {
            write_atomic(
                &args.out.join(format!("{name}.knn.label")),
                &s.to_label_bytes(),
            )?;
        }
        info!("{name}: {} points labeled", cloud.len());
        Ok(cloud.len())
    })?;
    finish_batch(&args.out, summary)
}

/// Writes `<stem>.txt`, `<stem>.json`, `<stem>.drivable.pgm` and
/// `<stem>.bev.ppm` per scan.
pub fn detect(args: &BatchArgs) -> CliResult<BatchSummary> {
    let cfg = resolve_config(&args.pipeline)?;
    let files = prepare_batch(args)?;
    let pipeline = build_pipeline(&args.pipeline, cfg)?;
    let bev = pipeline.config().bev;
    let (mut summary, counts) = run_batch("detect", &files, args.pipeline.jobs, |path| {
        let cloud = load_kitti_bin(path)?;
        let out = run_pipeline(&cloud, &pipeline)?;
        let name = stem(path);
        let dir = &args.out;
        write_atomic(
            &dir.join(format!("{name}.txt")),
            format_detections(Some(&name), &out.detections).as_bytes(),
        )?;
        write_atomic(
            &dir.join(format!("{name}.json")),
            detections_to_json(&out.detections).as_bytes(),
        )?;
        write_atomic(
            &dir.join(format!("{name}.drivable.pgm")),
            &mask_to_pgm(&bev, &out.drivable_mask),
        )?;
        let image = render_bev(
            &bev,
            Some(&out.bev.occupancy),
            Some(&out.drivable_mask),
            &out.detections,
        );
        write_atomic(&dir.join(format!("{name}.bev.ppm")), &image.to_ppm())?;
        info!("{name}: {} detections", out.detections.len());
        Ok(out.detections.len())
    })?;
    summary.detections = Some(counts.iter().sum());
    finish_batch(&args.out, summary)
}

/// Prediction files with their ground-truth counterparts. Ground truth
/// without a prediction is reported and left to the caller.
fn pair_files(
    pred: &Path,
    gt: &Path,
    ext: &str,
) -> CliResult<(Vec<(PathBuf, PathBuf)>, Vec<PathBuf>)> {
    require_dir(pred, "prediction directory")?;
    require_dir(gt, "ground-truth directory")?;
    let preds = list_files(pred, ext)?;
    let gts = list_files(gt, ext)?;
    let mut pairs = Vec::new();
    for p in &preds {
        let name = p.file_name().expect("listed files have names");
        let g = gt.join(name);
        if !g.is_file() {
            return Err(CliError::MissingPair(name.to_string_lossy().into_owned()));
        }
        pairs.push((p.clone(), g));
    }
    if pairs.is_empty() {
        return Err(CliError::MissingPair(format!(
            "no `.{ext}` files in common between `{}` and `{}`",
            pred.display(),
            gt.display()
        )));
    }
    let unmatched: Vec<PathBuf> = gts
        .into_iter()
        .filter(|g| !pred.join(g.file_name().unwrap()).is_file())
        .collect();
    Ok((pairs, unmatched))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegReport {
    pub frames: usize,
    pub classes: Vec<&'static str>,
    #[serde(flatten)]
    pub scores: SegmentationScores,
}

impl SegReport {
    pub fn to_table(&self) -> String {
        format!("frames: {}\n{}", self.frames, self.scores.to_table())
    }
}

fn write_report<T: Serialize>(out: Option<&Path>, report: &T, table: &str) -> CliResult<()> {
    let Some(dir) = out else { return Ok(()) };
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_vec_pretty(report).expect("report serializes");
    write_atomic(&dir.join("metrics.json"), &json)?;
    write_atomic(&dir.join("metrics.txt"), table.as_bytes())
}

pub fn eval_seg(args: &EvalSegArgs) -> CliResult<SegReport> {
    let map = match &args.label_map {
        Some(p) => {
            require_file(p, "label map")?;
            LabelMap::load(p).map_err(|e| CliError::config(e.to_string()))?
        }
        None => LabelMap::default(),
    };
    let (pairs, unmatched) = pair_files(&args.pred, &args.gt, "label")?;
    for g in unmatched {
        warn!("{}: ground truth without prediction, skipped", g.display());
    }
    let mut total = ConfusionMatrix::new(Seg7::COUNT);
    for (p, g) in &pairs {
        let pred = load_seg7_labels(p)?;
        let gt = match args.gt_format {
            GtFormat::Seg7 => load_seg7_labels(g)?,
            GtFormat::Raw => remap_labels(&load_semantickitti_labels(g, pred.len())?, &map),
        };
        total += &segmentation_iou(&pred, &gt, Seg7::COUNT)?.confusion;
    }
    let report = SegReport {
        frames: pairs.len(),
        classes: Seg7::ALL.iter().map(|c| c.name()).collect(),
        scores: scores_from(total),
    };
    write_report(args.out.as_deref(), &report, &report.to_table())?;
    Ok(report)
}

fn load_detection_file(path: &Path) -> CliResult<Vec<OrientedBox>> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_detections(&text)?
        .into_iter()
        .map(|(_, b)| b)
        .collect())
}

pub fn eval_det(args: &EvalDetArgs) -> CliResult<DetectionReport> {
    let (pairs, unmatched) = pair_files(&args.pred, &args.gt, "txt")?;
    let mut dets = Vec::new();
    let mut gts = Vec::new();
    for (p, g) in &pairs {
        dets.push(load_detection_file(p)?);
        gts.push(load_detection_file(g)?);
    }
    // Unpredicted frames still count their ground truth as missed.
    for g in &unmatched {
        warn!(
            "{}: ground truth without prediction, counted as empty",
            g.display()
        );
        dets.push(Vec::new());
        gts.push(load_detection_file(g)?);
    }
    let cfg = EvalConfig {
        interpolation: match args.points {
            RecallPoints::P40 => Interpolation::Point40,
            RecallPoints::P11 => Interpolation::Point11,
        },
        ..EvalConfig::default()
    };
    let report = evaluate_detections(&dets, &gts, &cfg)?;
    write_report(args.out.as_deref(), &report, &report.to_table())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageStats {
    pub projection: TimingStats,
    pub stage1: TimingStats,
    pub labels: TimingStats,
    pub rasterization: TimingStats,
    pub stage2: TimingStats,
    pub postprocess: TimingStats,
    /// Projection, labels, rasterization and postprocess together.
    pub non_nn: TimingStats,
    pub total: TimingStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub frames: usize,
    pub points_per_frame: Vec<usize>,
    pub warmup: usize,
    pub repeats: usize,
    pub threads: usize,
    pub range_image: [usize; 2],
    pub bev_cells: [usize; 2],
    pub random_weights: bool,
    pub stages: StageStats,
}

fn stage_stats(timings: &[StageTimings]) -> StageStats {
    let of = |f: fn(&StageTimings) -> std::time::Duration| {
        let v: Vec<_> = timings.iter().map(f).collect();
        TimingStats::from_durations(&v).expect("at least one repeat")
    };
    StageStats {
        projection: of(|t| t.projection),
        stage1: of(|t| t.stage1),
        labels: of(|t| t.labels),
        rasterization: of(|t| t.rasterization),
        stage2: of(|t| t.stage2),
        postprocess: of(|t| t.postprocess),
        non_nn: of(StageTimings::non_nn),
        total: of(|t| t.total),
    }
}

/// Scans are loaded up front so file IO stays out of the measurements.
pub fn bench(args: &BenchArgs) -> CliResult<BenchReport> {
    if args.repeats == 0 {
        return Err(CliError::config("--repeats must be at least 1"));
    }
    let cfg = resolve_config(&args.pipeline)?;
    let scans: Vec<PointCloud> = match &args.scans {
        Some(dir) => {
            require_dir(dir, "scan directory")?;
            let files = list_files(dir, "bin")?;
            if files.is_empty() {
                return Err(CliError::config(format!(
                    "no .bin scans in `{}`",
                    dir.display()
                )));
            }
            files.iter().map(load_kitti_bin).collect::<Result<_, _>>()?
        }
        None => (0..args.frames.max(1) as u64)
            .map(|k| synthetic_scan(&SceneConfig::default(), args.pipeline.seed + k).0)
            .collect(),
    };
    let pipeline = build_pipeline(&args.pipeline, cfg)?;
    let pool = thread_pool(args.pipeline.jobs)?;
    let timings = pool.install(|| -> CliResult<Vec<StageTimings>> {
        for k in 0..args.warmup {
            run_pipeline(&scans[k % scans.len()], &pipeline)?;
        }
        (0..args.repeats)
            .map(|k| {
                let t = Instant::now();
                let out = run_pipeline(&scans[k % scans.len()], &pipeline)?;
                info!("run {k}: {:.1} ms", t.elapsed().as_secs_f64() * 1e3);
                Ok(out.timings)
            })
            .collect()
    })?;
    let c = pipeline.config();
    let report = BenchReport {
        frames: scans.len(),
        points_per_frame: scans.iter().map(PointCloud::len).collect(),
        warmup: args.warmup,
        repeats: args.repeats,
        threads: pool.current_num_threads(),
        range_image: [c.range.rows, c.range.cols],
        bev_cells: [c.bev.width_cells, c.bev.length_cells],
        random_weights: args.pipeline.random_weights,
        stages: stage_stats(&timings),
    };
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        let json = serde_json::to_vec_pretty(&report).expect("report serializes");
        write_atomic(&dir.join("bench.json"), &json)?;
    }
    Ok(report)
}

/// Writes `<stem>.bev.ppm`: occupied cells and, if given, detections.
pub fn viz(args: &VizArgs) -> CliResult<PathBuf> {
    require_file(&args.scan, "scan")?;
    if let Some(d) = &args.detections {
        require_file(d, "detections")?;
    }
    let cfg = resolve_config(&PipelineArgs {
        config: args.config.clone(),
        ..Default::default()
    })?;
    let cloud = load_kitti_bin(&args.scan)?;
    let raster = bev_rasterize(&cloud, &cfg.bev)?;
    let boxes = match &args.detections {
        Some(d) => load_detection_file(d)?,
        None => Vec::new(),
    };
    let image = render_bev(&cfg.bev, Some(raster.occupancy()), None, &boxes);
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join(format!("{}.bev.ppm", stem(&args.scan)));
    write_atomic(&path, &image.to_ppm())?;
    Ok(path)
}
