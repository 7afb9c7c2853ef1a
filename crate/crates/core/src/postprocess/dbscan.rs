//! DBSCAN over 2-D points.
//!
//! Neighborhoods are closed balls (`distance <= eps`) that include the point
//! itself, so `min_pts = 1` makes every point a core point. Points are
//! visited in index order and clusters are expanded breadth-first, which
//! makes the labeling (including which cluster claims a border point
//! reachable from two clusters) a pure function of the input order.

use std::collections::{HashMap, VecDeque};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Unvisited,
    Noise,
    Cluster(usize),
}

/// Uniform grid with `eps`-sized cells for radius queries.
struct GridIndex<'a> {
    points: &'a [[f64; 2]],
    eps: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl<'a> GridIndex<'a> {
    fn new(points: &'a [[f64; 2]], eps: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, eps)).or_default().push(i);
        }
        Self { points, eps, cells }
    }

    fn key(p: &[f64; 2], eps: f64) -> (i64, i64) {
        ((p[0] / eps).floor() as i64, (p[1] / eps).floor() as i64)
    }

    /// All points within `eps` of point `i` (itself included), ascending.
    fn neighbors(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = self.points[i];
        let (cx, cy) = Self::key(&p, self.eps);
        let eps2 = self.eps * self.eps;
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = self.cells.get(&(cx + dx, cy + dy)) else {
                    continue;
                };
                for &j in bucket {
                    let q = self.points[j];
                    let (ex, ey) = (p[0] - q[0], p[1] - q[1]);
                    if ex * ex + ey * ey <= eps2 {
                        out.push(j);
                    }
                }
            }
        }
        out.sort_unstable();
    }
}

/// Cluster id per point, `None` for noise. Cluster ids are dense and numbered
/// in order of each cluster's lowest-index core point.
///
/// # Panics
///
/// If `eps` is not a positive finite number.
pub fn dbscan(points: &[[f64; 2]], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    assert!(eps > 0.0 && eps.is_finite(), "dbscan eps must be positive");
    let index = GridIndex::new(points, eps);
    let mut state = vec![State::Unvisited; points.len()];
    let mut next_cluster = 0;
    let mut nb = Vec::new();
    let mut queue = VecDeque::new();

    for i in 0..points.len() {
        if state[i] != State::Unvisited {
            continue;
        }
        index.neighbors(i, &mut nb);
        if nb.len() < min_pts {
            state[i] = State::Noise;
            continue;
        }
        let c = next_cluster;
        next_cluster += 1;
        state[i] = State::Cluster(c);
        queue.extend(nb.iter().copied().filter(|&j| j != i));
        while let Some(q) = queue.pop_front() {
            match state[q] {
                State::Cluster(_) => {}
                // Already known not to be core: becomes a border point.
                State::Noise => state[q] = State::Cluster(c),
                State::Unvisited => {
                    state[q] = State::Cluster(c);
                    index.neighbors(q, &mut nb);
                    if nb.len() >= min_pts {
                        queue.extend(nb.iter().copied());
                    }
                }
            }
        }
    }
    state
        .into_iter()
        .map(|s| match s {
            State::Cluster(c) => Some(c),
            _ => None,
        })
        .collect()
}
