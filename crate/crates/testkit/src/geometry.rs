use mvlidarnet::OrientedBox;
use rand::Rng;

/// Whether `(x, y)` lies inside `b`, by rotating into the box frame.
pub fn contains(b: &OrientedBox, x: f64, y: f64) -> bool {
    let (s, c) = b.yaw.sin_cos();
    let (dx, dy) = (x - b.cx, y - b.cy);
    let u = dx * c + dy * s;
    let v = -dx * s + dy * c;
    u.abs() <= b.length / 2.0 && v.abs() <= b.width / 2.0
}

fn bounds(b: &OrientedBox) -> [f64; 4] {
    let r = b.width.hypot(b.length) / 2.0;
    [b.cx - r, b.cx + r, b.cy - r, b.cy + r]
}

/// Monte-Carlo IoU: uniform samples over a square enclosing both boxes.
/// Returns the estimate and its binomial standard error.
pub fn monte_carlo_iou<R: Rng>(
    a: &OrientedBox,
    b: &OrientedBox,
    samples: usize,
    rng: &mut R,
) -> (f64, f64) {
    let (ba, bb) = (bounds(a), bounds(b));
    let (x0, x1) = (ba[0].min(bb[0]), ba[1].max(bb[1]));
    let (y0, y1) = (ba[2].min(bb[2]), ba[3].max(bb[3]));
    let (mut inter, mut union) = (0usize, 0usize);
    for _ in 0..samples {
        let x = rng.gen_range(x0..x1);
        let y = rng.gen_range(y0..y1);
        let (ia, ib) = (contains(a, x, y), contains(b, x, y));
        inter += (ia && ib) as usize;
        union += (ia || ib) as usize;
    }
    if union == 0 {
        return (0.0, 0.0);
    }
    let p = inter as f64 / union as f64;
    // A floor keeps σ meaningful when the estimate sits at 0 or 1.
    let sigma = (p * (1.0 - p) / union as f64)
        .sqrt()
        .max(1.0 / union as f64);
    (p, sigma)
}

/// `b` rotated by `angle` about the origin and then shifted by `(tx, ty)`.
pub fn rigid_transform(b: &OrientedBox, angle: f64, tx: f64, ty: f64) -> OrientedBox {
    let (s, c) = angle.sin_cos();
    OrientedBox {
        cx: b.cx * c - b.cy * s + tx,
        cy: b.cx * s + b.cy * c + ty,
        yaw: b.yaw + angle,
        ..*b
    }
}
