/// DBSCAN by definition: an all-pairs neighborhood matrix, connected
/// components of core points by union-find, and each border point given to
/// the adjacent component with the smallest lowest core index. Components are
/// numbered by their lowest core index.
pub fn naive_dbscan(points: &[[f64; 2]], eps: f64, min_pts: usize) -> Vec<Option<usize>> {
    let n = points.len();
    let close = |i: usize, j: usize| {
        let (dx, dy) = (points[i][0] - points[j][0], points[i][1] - points[j][1]);
        dx * dx + dy * dy <= eps * eps
    };
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| close(i, j)).count() >= min_pts)
        .collect();

    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in 0..i {
            if core[i] && core[j] && close(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                // Keep the smaller index as root so roots are lowest core indices.
                let (lo, hi) = (a.min(b), a.max(b));
                parent[hi] = lo;
            }
        }
    }
    let root: Vec<Option<usize>> = (0..n)
        .map(|i| core[i].then(|| find(&mut parent, i)))
        .collect();

    let mut roots: Vec<usize> = root.iter().flatten().copied().collect();
    roots.sort_unstable();
    roots.dedup();
    let id_of = |r: usize| roots.binary_search(&r).unwrap();

    (0..n)
        .map(|i| {
            if let Some(r) = root[i] {
                return Some(id_of(r));
            }
            (0..n)
                .filter(|&j| core[j] && close(i, j))
                .map(|j| root[j].unwrap())
                .min()
                .map(id_of)
        })
        .collect()
}

/// The clusters as a sorted list of sorted member lists, plus the noise set.
pub fn partition(labels: &[Option<usize>]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let n_clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut clusters = vec![Vec::new(); n_clusters];
    let mut noise = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match l {
            Some(c) => clusters[*c].push(i),
            None => noise.push(i),
        }
    }
    clusters.sort();
    (clusters, noise)
}
