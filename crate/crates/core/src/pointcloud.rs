//! LiDAR scans in the KITTI Velodyne layout.
//!
//! A `.bin` scan is a packed sequence of little-endian `f32` quadruples
//! `(x, y, z, intensity)` in the ego frame, meters. No header, no padding.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const RECORD_BYTES: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub intensity: f32,
}

impl Point {
    pub const fn new(x: f32, y: f32, z: f32, intensity: f32) -> Self {
        Self { x, y, z, intensity }
    }

    /// Euclidean distance from the sensor origin, computed in `f64`.
    #[inline]
    pub fn range(&self) -> f64 {
        let (x, y, z) = (self.x as f64, self.y as f64, self.z as f64);
        (x * x + y * y + z * z).sqrt()
    }
}

/// An immutable point cloud with finite coordinates and intensities in `[0, 1]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    clamped: usize,
}

impl PointCloud {
    /// Validates and normalizes `points`.
    ///
    /// Non-finite values are rejected. Intensities outside `[0, 1]` are
    /// clamped and counted (see [`PointCloud::clamped_intensities`]).
    pub fn new(mut points: Vec<Point>) -> Result<Self> {
        let mut clamped = 0;
        for (i, p) in points.iter_mut().enumerate() {
            for (k, v) in [p.x, p.y, p.z, p.intensity].into_iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFiniteValue { index: i * 4 + k });
                }
            }
            if !(0.0..=1.0).contains(&p.intensity) {
                p.intensity = p.intensity.clamp(0.0, 1.0);
                clamped += 1;
            }
        }
        if clamped > 0 {
            log::warn!("clamped {clamped} intensities into [0, 1]");
        }
        Ok(Self { points, clamped })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of intensities that had to be clamped into `[0, 1]`.
    pub fn clamped_intensities(&self) -> usize {
        self.clamped
    }

    pub fn from_bin_bytes(bytes: &[u8]) -> Result<Self> {
        if !bytes.len().is_multiple_of(RECORD_BYTES) {
            return Err(Error::MalformedFile(format!(
                "velodyne scan length {} is not a multiple of {RECORD_BYTES}",
                bytes.len()
            )));
        }
        let points = bytes
            .chunks_exact(RECORD_BYTES)
            .map(|rec| {
                let f = |o: usize| f32::from_le_bytes(rec[o..o + 4].try_into().unwrap());
                Point::new(f(0), f(4), f(8), f(12))
            })
            .collect();
        Self::new(points)
    }

    pub fn to_bin_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.points.len() * RECORD_BYTES);
        for p in &self.points {
            for v in [p.x, p.y, p.z, p.intensity] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

/// Reads a KITTI Velodyne `.bin` scan.
pub fn load_kitti_bin(path: impl AsRef<Path>) -> Result<PointCloud> {
    let bytes = fs::read(path)?;
    PointCloud::from_bin_bytes(&bytes)
}

pub fn save_kitti_bin(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, cloud.to_bin_bytes())?;
    Ok(())
}
