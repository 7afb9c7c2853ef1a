use std::collections::BTreeMap;
use std::f64::consts::PI;

use mvlidarnet::nn::Tensor;
use mvlidarnet::{BevConfig, Point, RangeImageConfig};

fn range(p: &Point) -> f64 {
    let (x, y, z) = (p.x as f64, p.y as f64, p.z as f64);
    (x * x + y * y + z * z).sqrt()
}

/// `(row, col)` of a point, from elevation `atan2(z, √(x²+y²))` and azimuth
/// `atan2(y, x)`; `None` at the origin or outside the vertical field of view.
pub fn range_cell(p: &Point, cfg: &RangeImageConfig) -> Option<(usize, usize)> {
    let (x, y, z) = (p.x as f64, p.y as f64, p.z as f64);
    if x == 0.0 && y == 0.0 && z == 0.0 {
        return None;
    }
    let elevation = z.atan2(x.hypot(y));
    if elevation > cfg.fov_up || elevation < cfg.fov_down {
        return None;
    }
    let frac = (cfg.fov_up - elevation) / (cfg.fov_up - cfg.fov_down);
    let row = ((frac * cfg.rows as f64).floor() as usize).min(cfg.rows - 1);
    let azimuth = y.atan2(x);
    // Azimuth π maps to column 0, decreasing clockwise.
    let u = (PI - azimuth) / (2.0 * PI) * cfg.cols as f64;
    let col = (u.floor() as usize) % cfg.cols;
    Some((row, col))
}

/// For each cell, the index of the closest point in it (lowest index on a
/// tie), by scanning all points per cell.
pub fn range_winners(points: &[Point], cells: &[Option<u32>], n_cells: usize) -> Vec<Option<u32>> {
    let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, c) in cells.iter().enumerate() {
        if let Some(c) = c {
            members.entry(*c).or_default().push(i);
        }
    }
    let mut out = vec![None; n_cells];
    for (c, m) in members {
        let best = m
            .iter()
            .copied()
            .reduce(|a, b| {
                if range(&points[b]) < range(&points[a]) {
                    b
                } else {
                    a
                }
            })
            .unwrap();
        out[c as usize] = Some(best as u32);
    }
    out
}

/// `(i, j)` of the BEV cell containing `(x, y)` over the half-open extent.
pub fn bev_cell(cfg: &BevConfig, x: f64, y: f64) -> Option<(usize, usize)> {
    let half = cfg.extent / 2.0;
    let i = ((x + half) / (cfg.extent / cfg.width_cells as f64)).floor();
    let j = ((y + half) / (cfg.extent / cfg.length_cells as f64)).floor();
    let inside = x >= -half
        && x < half
        && y >= -half
        && y < half
        && (0.0..cfg.width_cells as f64).contains(&i)
        && (0.0..cfg.length_cells as f64).contains(&j);
    inside.then_some((i as usize, j as usize))
}

/// Mean range-pixel probability vector per BEV cell, from a map over
/// occupied cells only.
pub fn bev_semantic_means(
    points: &[Point],
    range_cells: &[Option<u32>],
    probs: &Tensor,
    cfg: &BevConfig,
) -> BTreeMap<(usize, usize), Vec<f64>> {
    let classes = probs.shape().depth;
    let width = probs.shape().width;
    let mut sums: BTreeMap<(usize, usize), (Vec<f64>, usize)> = BTreeMap::new();
    for (p, rc) in points.iter().zip(range_cells) {
        let (Some(rc), Some(cell)) = (rc, bev_cell(cfg, p.x as f64, p.y as f64)) else {
            continue;
        };
        let (r, c) = (*rc as usize / width, *rc as usize % width);
        let e = sums.entry(cell).or_insert_with(|| (vec![0.0; classes], 0));
        for (k, s) in e.0.iter_mut().enumerate() {
            *s += probs.get(k, r, c) as f64;
        }
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(k, (s, n))| (k, s.into_iter().map(|v| v / n as f64).collect()))
        .collect()
}

/// kNN vote by exhaustive search over all points: candidates are the other
/// points whose cells lie in the window (rows clipped, columns wrapped) within
/// `cutoff` in range; the `k` closest (ties by index) vote; ties keep the
/// current label, else the lowest label wins.
pub fn knn_vote(
    points: &[Point],
    cells: &[Option<u32>],
    labels: &[u32],
    cols: usize,
    k: usize,
    window: usize,
    cutoff: f64,
) -> Vec<u32> {
    let half = (window / 2) as i64;
    let cols_i = cols as i64;
    (0..points.len())
        .map(|i| {
            let Some(ci) = cells[i] else { return labels[i] };
            let (ri, coli) = (ci as i64 / cols_i, ci as i64 % cols_i);
            let mut cands: Vec<(f64, usize)> = (0..points.len())
                .filter(|&j| j != i)
                .filter_map(|j| {
                    let cj = cells[j]? as i64;
                    let (rj, colj) = (cj / cols_i, cj % cols_i);
                    let dc = (colj - coli).rem_euclid(cols_i);
                    let col_dist = dc.min(cols_i - dc);
                    let d = (range(&points[j]) - range(&points[i])).abs();
                    ((rj - ri).abs() <= half && col_dist <= half && d <= cutoff).then_some((d, j))
                })
                .collect();
            if cands.is_empty() {
                return labels[i];
            }
            cands.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let mut votes: BTreeMap<u32, usize> = BTreeMap::new();
            for &(_, j) in cands.iter().take(k) {
                *votes.entry(labels[j]).or_default() += 1;
            }
            let top = *votes.values().max().unwrap();
            if votes.get(&labels[i]) == Some(&top) {
                labels[i]
            } else {
                *votes.iter().find(|(_, &v)| v == top).unwrap().0
            }
        })
        .collect()
}
