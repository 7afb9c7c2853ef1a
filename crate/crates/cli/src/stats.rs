use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Summary of repeated wall-time measurements, milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub samples: usize,
    pub median_ms: f64,
    /// Nearest-rank 95th percentile; absent for a single sample.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p95_ms: Option<f64>,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

impl TimingStats {
    /// `None` for an empty slice.
    pub fn from_durations(samples: &[Duration]) -> Option<Self> {
        let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        if ms.is_empty() {
            return None;
        }
        ms.sort_by(f64::total_cmp);
        let n = ms.len();
        let median = if n % 2 == 1 {
            ms[n / 2]
        } else {
            (ms[n / 2 - 1] + ms[n / 2]) / 2.0
        };
        let p95 = (n > 1).then(|| ms[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1]);
        Some(Self {
            samples: n,
            median_ms: median,
            p95_ms: p95,
            mean_ms: ms.iter().sum::<f64>() / n as f64,
            min_ms: ms[0],
            max_ms: ms[n - 1],
        })
    }
}
