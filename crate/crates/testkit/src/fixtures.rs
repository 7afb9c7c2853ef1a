use mvlidarnet::nn::Tensor;
use mvlidarnet::postprocess::encode_box;
use mvlidarnet::{BevConfig, Det3, OrientedBox, Point, PointCloud};
use rand::Rng;

pub fn random_tensor<R: Rng>(rng: &mut R, shape: (usize, usize, usize), scale: f32) -> Tensor {
    let n = shape.0 * shape.1 * shape.2;
    let data = (0..n).map(|_| rng.gen_range(-scale..=scale)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize, scale: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-scale..=scale)).collect()
}

/// A scan-like cloud: points on shells of random range around the sensor,
/// with a fraction duplicated at a nearby range so cells get contested.
pub fn random_cloud<R: Rng>(rng: &mut R, n: usize) -> PointCloud {
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let az = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let el = rng.gen_range(-0.5f64..0.1);
        let r = rng.gen_range(1.0f64..60.0);
        let p = |r: f64| {
            Point::new(
                (r * el.cos() * az.cos()) as f32,
                (r * el.cos() * az.sin()) as f32,
                (r * el.sin()) as f32,
                0.5,
            )
        };
        points.push(Point {
            intensity: rng.gen_range(0.0..=1.0),
            ..p(r)
        });
        if rng.gen_bool(0.2) && points.len() < n {
            // Same direction, different or identical range.
            let r2 = if rng.gen_bool(0.3) {
                r
            } else {
                r + rng.gen_range(-2.0..2.0)
            };
            points.push(p(r2.max(0.5)));
        }
    }
    PointCloud::new(points).unwrap()
}

/// A box with a random pose in a `±span` square.
pub fn random_box<R: Rng>(rng: &mut R, class: Det3, span: f64) -> OrientedBox {
    OrientedBox {
        class,
        cx: rng.gen_range(-span..span),
        cy: rng.gen_range(-span..span),
        width: rng.gen_range(0.5..3.0),
        length: rng.gen_range(0.5..6.0),
        yaw: rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
        confidence: rng.gen_range(0.0..1.0),
    }
}

/// A box perturbed by up to `jitter` meters in position and size.
pub fn jittered<R: Rng>(rng: &mut R, b: &OrientedBox, jitter: f64) -> OrientedBox {
    let mut j = || rng.gen_range(-jitter..=jitter);
    OrientedBox {
        cx: b.cx + j(),
        cy: b.cy + j(),
        width: (b.width + j()).max(0.1),
        length: (b.length + j()).max(0.1),
        yaw: b.yaw + j() * 0.2,
        ..*b
    }
}

/// Class and box grids with each object written into a 3x3 patch of cells
/// around its centroid, plus low-confidence background.
pub fn synthetic_grids(objects: &[OrientedBox], bev: &BevConfig) -> (Tensor, Tensor) {
    let (h, w) = (bev.out_width(), bev.out_length());
    let mut class_grid = Tensor::zeros((3, h, w));
    class_grid.channel_mut(Det3::Unknown as usize).fill(0.9);
    class_grid.channel_mut(Det3::Vehicle as usize).fill(0.05);
    class_grid.channel_mut(Det3::Pedestrian as usize).fill(0.05);
    let mut box_grid = Tensor::zeros((6, h, w));
    for o in objects {
        let (ci, cj) = bev.out_cell_of(o.cx, o.cy).unwrap();
        for i in ci - 1..=ci + 1 {
            for j in cj - 1..=cj + 1 {
                for c in 0..3 {
                    class_grid.set(c, i, j, 0.0);
                }
                class_grid.set(o.class as usize, i, j, o.confidence as f32);
                class_grid.set(Det3::Unknown as usize, i, j, 1.0 - o.confidence as f32);
                let p = encode_box(o, i, j, bev);
                for (c, v) in p.to_array().into_iter().enumerate() {
                    box_grid.set(c, i, j, v as f32);
                }
            }
        }
    }
    (class_grid, box_grid)
}

/// A box whose parameters survive the `f32` grid storage unchanged.
pub fn grid_exact_box(class: Det3, cx: f64, cy: f64, yaw: f64, bev: &BevConfig) -> OrientedBox {
    let q = |v: f64| v as f32 as f64;
    let (i, j) = bev.out_cell_of(cx, cy).unwrap();
    let (x0, y0) = bev.out_cell_center(i, j);
    OrientedBox {
        class,
        cx: x0 + q(cx - x0),
        cy: y0 + q(cy - y0),
        width: q(1.75),
        length: q(if class == Det3::Vehicle { 4.5 } else { 0.75 }),
        yaw: q(yaw.sin()).atan2(q(yaw.cos())),
        confidence: 0.875,
    }
}
