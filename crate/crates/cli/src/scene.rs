//! Ray-cast synthetic scans: flat ground, a surrounding wall and box-shaped
//! vehicles and pedestrians. Used by `bench` and by the tests.

use std::f64::consts::PI;

use mvlidarnet::{Det3, OrientedBox, Point, PointCloud};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SENSOR_HEIGHT: f64 = 1.73;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    /// Laser beams, evenly spaced from `+2°` to `-24.8°`.
    pub beams: usize,
    /// Azimuth steps per revolution; every ray returns, so a scan has
    /// `beams * azimuth_steps` points.
    pub azimuth_steps: usize,
    pub vehicles: usize,
    pub pedestrians: usize,
    /// Range noise amplitude, meters.
    pub noise: f64,
}

impl Default for SceneConfig {
    /// 64 x 1875 = 120 000 points.
    fn default() -> Self {
        Self {
            beams: 64,
            azimuth_steps: 1875,
            vehicles: 6,
            pedestrians: 4,
            noise: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Solid {
    footprint: OrientedBox,
    height: f64,
}

impl Solid {
    /// Entry distance of the ray along unit direction `d` from the origin.
    fn hit(&self, d: [f64; 3]) -> Option<f64> {
        let b = &self.footprint;
        let (s, c) = b.yaw.sin_cos();
        // Ray origin and direction in the box frame.
        let o = [-b.cx * c - b.cy * s, b.cx * s - b.cy * c];
        let v = [d[0] * c + d[1] * s, -d[0] * s + d[1] * c];
        let z_lo = -SENSOR_HEIGHT;
        let z_hi = self.height - SENSOR_HEIGHT;
        let slabs = [
            (o[0], v[0], -b.length / 2.0, b.length / 2.0),
            (o[1], v[1], -b.width / 2.0, b.width / 2.0),
            (0.0, d[2], z_lo, z_hi),
        ];
        let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
        for (p, dir, lo, hi) in slabs {
            if dir.abs() < 1e-12 {
                if p < lo || p > hi {
                    return None;
                }
                continue;
            }
            let (a, b) = ((lo - p) / dir, (hi - p) / dir);
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        (t0 <= t1 && t0 > 0.0).then_some(t0)
    }
}

/// A scan and the footprints of the objects in it (confidence 1).
pub fn synthetic_scan(cfg: &SceneConfig, seed: u64) -> (PointCloud, Vec<OrientedBox>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut solids: Vec<Solid> = Vec::new();
    let wanted = [
        (Det3::Vehicle, cfg.vehicles),
        (Det3::Pedestrian, cfg.pedestrians),
    ];
    for (class, count) in wanted {
        let mut placed = 0;
        let mut attempts = 0;
        while placed < count && attempts < 1000 {
            attempts += 1;
            let r = rng.gen_range(5.0..35.0);
            let az = rng.gen_range(-PI..PI);
            let (cx, cy) = (r * az.cos(), r * az.sin());
            if solids
                .iter()
                .any(|s| (s.footprint.cx - cx).hypot(s.footprint.cy - cy) < 7.0)
            {
                continue;
            }
            let (width, length, height) = match class {
                Det3::Pedestrian => (0.6, 0.6, 1.7),
                _ => (1.8, 4.5, 1.5),
            };
            solids.push(Solid {
                footprint: OrientedBox {
                    class,
                    cx,
                    cy,
                    width,
                    length,
                    yaw: rng.gen_range(-PI..PI),
                    confidence: 1.0,
                },
                height,
            });
            placed += 1;
        }
    }

    let wall_phase = rng.gen_range(0.0..2.0 * PI);
    let (up, down) = (2.0f64.to_radians(), (-24.8f64).to_radians());
    let mut points = Vec::with_capacity(cfg.beams * cfg.azimuth_steps);
    for b in 0..cfg.beams {
        let el = if cfg.beams == 1 {
            down
        } else {
            up + (down - up) * b as f64 / (cfg.beams - 1) as f64
        };
        for a in 0..cfg.azimuth_steps {
            let az = -PI + 2.0 * PI * (a as f64 + 0.5) / cfg.azimuth_steps as f64;
            let d = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
            let wall = (45.0 + 8.0 * (3.0 * az + wall_phase).sin()) / el.cos();
            let ground = if el < 0.0 {
                SENSOR_HEIGHT / -el.sin()
            } else {
                f64::INFINITY
            };
            let mut t = wall.min(ground);
            let mut intensity = if ground < wall { 0.2 } else { 0.4 };
            for s in &solids {
                if let Some(hit) = s.hit(d).filter(|&h| h < t) {
                    t = hit;
                    intensity = 0.7;
                }
            }
            t += rng.gen_range(-cfg.noise..=cfg.noise);
            points.push(Point::new(
                (t * d[0]) as f32,
                (t * d[1]) as f32,
                (t * d[2]) as f32,
                (intensity + rng.gen_range(-0.05..0.05)) as f32,
            ));
        }
    }
    let cloud = PointCloud::new(points).expect("ray-cast points are finite");
    (cloud, solids.into_iter().map(|s| s.footprint).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scene_has_120k_points() {
        let (cloud, objects) = synthetic_scan(&SceneConfig::default(), 1);
        assert_eq!(cloud.len(), 120_000);
        assert_eq!(objects.len(), 10);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SceneConfig {
            beams: 8,
            azimuth_steps: 100,
            ..Default::default()
        };
        assert_eq!(synthetic_scan(&cfg, 4).0, synthetic_scan(&cfg, 4).0);
        assert_ne!(synthetic_scan(&cfg, 4).0, synthetic_scan(&cfg, 5).0);
    }

    #[test]
    fn objects_cast_points_on_themselves() {
        let cfg = SceneConfig {
            beams: 32,
            azimuth_steps: 2000,
            noise: 0.0,
            ..Default::default()
        };
        let (cloud, objects) = synthetic_scan(&cfg, 9);
        for o in objects.iter().filter(|o| o.class == Det3::Vehicle) {
            let inside = cloud.points().iter().filter(|p| {
                let (s, c) = o.yaw.sin_cos();
                let (dx, dy) = (p.x as f64 - o.cx, p.y as f64 - o.cy);
                let u = dx * c + dy * s;
                let v = -dx * s + dy * c;
                u.abs() <= o.length / 2.0 + 1e-3
                    && v.abs() <= o.width / 2.0 + 1e-3
                    && p.z as f64 > -SENSOR_HEIGHT + 0.05
            });
            assert!(inside.count() > 0, "{o:?}");
        }
    }

    #[test]
    fn ground_points_lie_on_the_plane() {
        let cfg = SceneConfig {
            beams: 16,
            azimuth_steps: 64,
            vehicles: 0,
            pedestrians: 0,
            noise: 0.0,
        };
        let (cloud, _) = synthetic_scan(&cfg, 2);
        let low = cloud.points().iter().filter(|p| p.range() < 20.0);
        for p in low {
            assert!((p.z as f64 + SENSOR_HEIGHT).abs() < 1e-4, "{p:?}");
        }
    }
}
