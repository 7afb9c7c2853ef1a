//! Pipeline configuration and its `key = value` text form.
//!
//! ```text
//! # angles in degrees, distances in meters
//! range.rows = 64
//! range.cols = 2048
//! range.fov_up = 3
//! range.fov_down = -25
//! bev.width_cells = 1024
//! bev.length_cells = 1024
//! bev.extent = 80
//! bev.out_stride = 4
//! drivable_threshold = 0.5
//! confidence_threshold = 0.5
//! threshold.pedestrian = 0.4
//! dbscan.eps = 0.8
//! dbscan.min_pts = 3
//! knn = false
//! knn.k = 5
//! knn.window = 5
//! knn.cutoff = 1.0
//! weights1 = stage1.mvln
//! weights2 = stage2.mvln
//! ```
//!
//! Every key is optional. Relative weight paths are resolved against the
//! directory of the config file by [`PipelineConfig::load`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::labels::Det3;
use crate::postprocess::ClusterConfig;
use crate::projection::{BevConfig, KnnConfig, RangeImageConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub range: RangeImageConfig,
    pub bev: BevConfig,
    pub cluster: ClusterConfig,
    pub knn: KnnConfig,
    /// Whether to also produce kNN-smoothed point labels.
    pub knn_enabled: bool,
    /// A BEV cell is drivable when its mean road probability exceeds this.
    pub drivable_threshold: f64,
    pub weights1: Option<PathBuf>,
    pub weights2: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            range: RangeImageConfig::default(),
            bev: BevConfig::default(),
            cluster: ClusterConfig::default(),
            knn: KnnConfig::default(),
            knn_enabled: false,
            drivable_threshold: 0.5,
            weights1: None,
            weights2: None,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {value:?}")))
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.range.validate()?;
        self.bev.validate()?;
        self.cluster.validate()?;
        self.knn.validate()?;
        if !(0.0..=1.0).contains(&self.drivable_threshold) {
            return Err(Error::InvalidConfig(
                "drivable_threshold outside [0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Applies the assignments in `text` on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected `key = value`", n + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "range.rows" => self.range.rows = parse_value(key, v)?,
            "range.cols" => self.range.cols = parse_value(key, v)?,
            "range.fov_up" => self.range.fov_up = parse_value::<f64>(key, v)?.to_radians(),
            "range.fov_down" => self.range.fov_down = parse_value::<f64>(key, v)?.to_radians(),
            "bev.width_cells" => self.bev.width_cells = parse_value(key, v)?,
            "bev.length_cells" => self.bev.length_cells = parse_value(key, v)?,
            "bev.extent" => self.bev.extent = parse_value(key, v)?,
            "bev.out_stride" => self.bev.out_stride = parse_value(key, v)?,
            "drivable_threshold" => self.drivable_threshold = parse_value(key, v)?,
            "confidence_threshold" => self.cluster.confidence_threshold = parse_value(key, v)?,
            "dbscan.eps" => self.cluster.eps = parse_value(key, v)?,
            "dbscan.min_pts" => self.cluster.min_pts = parse_value(key, v)?,
            "knn" => self.knn_enabled = parse_value(key, v)?,
            "knn.k" => self.knn.k = parse_value(key, v)?,
            "knn.window" => self.knn.window = parse_value(key, v)?,
            "knn.cutoff" => self.knn.cutoff = parse_value(key, v)?,
            "weights1" => self.weights1 = Some(PathBuf::from(v)),
            "weights2" => self.weights2 = Some(PathBuf::from(v)),
            _ => {
                let class = key
                    .strip_prefix("threshold.")
                    .and_then(|c| c.parse::<Det3>().ok())
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown key {key:?}")))?;
                self.cluster
                    .class_thresholds
                    .insert(class, parse_value(key, v)?);
            }
        }
        Ok(())
    }

    /// Reads a config file; relative weight paths become relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::parse(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for w in [&mut cfg.weights1, &mut cfg.weights2].into_iter().flatten() {
            if w.is_relative() {
                *w = base.join(&*w);
            }
        }
        Ok(cfg)
    }

    /// Text form accepted by [`PipelineConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            writeln!(s, "{k} = {v}").expect("writing to a String");
        };
        kv("range.rows", &self.range.rows);
        kv("range.cols", &self.range.cols);
        kv("range.fov_up", &self.range.fov_up.to_degrees());
        kv("range.fov_down", &self.range.fov_down.to_degrees());
        kv("bev.width_cells", &self.bev.width_cells);
        kv("bev.length_cells", &self.bev.length_cells);
        kv("bev.extent", &self.bev.extent);
        kv("bev.out_stride", &self.bev.out_stride);
        kv("drivable_threshold", &self.drivable_threshold);
        kv("confidence_threshold", &self.cluster.confidence_threshold);
        for (class, t) in &self.cluster.class_thresholds {
            kv(&format!("threshold.{class}"), t);
        }
        kv("dbscan.eps", &self.cluster.eps);
        kv("dbscan.min_pts", &self.cluster.min_pts);
        kv("knn", &self.knn_enabled);
        kv("knn.k", &self.knn.k);
        kv("knn.window", &self.knn.window);
        kv("knn.cutoff", &self.knn.cutoff);
        if let Some(w) = &self.weights1 {
            kv("weights1", &w.display());
        }
        if let Some(w) = &self.weights2 {
            kv("weights2", &w.display());
        }
        s
    }
}
