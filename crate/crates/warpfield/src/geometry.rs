//! Point-cloud sampling, symmetric-kNN adjacency graphs, and the graph
//! Laplacian `L = D − A`.
//!
//! The cloud is a random sample of recent events; its kNN graph is the
//! discrete stand-in for the geographic manifold that kernels are warped
//! toward. Nodes i and j are connected when either is among the other's
//! `n` nearest neighbors, with distance ties broken toward the lower index
//! so graphs are reproducible.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Event;
use crate::error::{Error, Result};
use crate::Point;

/// Sampled historical locations representing the geography.
#[derive(Debug, Clone)]
pub struct PointCloud {
    points: Vec<Point>,
    seed: u64,
}

impl PointCloud {
    pub fn from_points(points: Vec<Point>, seed: u64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("point cloud"));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Validation("point cloud coordinates must be finite".into()));
        }
        Ok(PointCloud { points, seed })
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

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Uniform sample without replacement of `min(size, |events|)` locations.
pub fn sample_point_cloud(events: &[Event], size: usize, seed: u64) -> Result<PointCloud> {
    if events.is_empty() {
        return Err(Error::EmptyInput("events for point cloud"));
    }
    if size == 0 {
        return Err(Error::Validation("point cloud size must be >= 1".into()));
    }
    let n = events.len();
    if n <= size {
        return PointCloud::from_points(events.iter().map(|e| e.location).collect(), seed);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..size {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let points = idx[..size].iter().map(|&i| events[i].location).collect();
    PointCloud::from_points(points, seed)
}

/// Edge weighting scheme for the adjacency graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    Binary,
    /// Heat weights exp(−d²/r); r fitted from the connected-edge distances.
    Heat,
}

/// The realized weight scheme, carrying the fitted scale for heat weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightKind {
    Binary,
    Heat { r: f64 },
}

/// Symmetric sparse adjacency graph over a point cloud.
#[derive(Debug, Clone)]
pub struct AdjacencyGraph {
    /// Per node, sorted `(neighbor, weight)` pairs. Symmetric by construction.
    neighbors: Vec<Vec<(usize, f64)>>,
    kind: WeightKind,
}

impl AdjacencyGraph {
    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.neighbors[i].iter().map(|&(_, w)| w).sum()
    }

    pub fn weight_kind(&self) -> WeightKind {
        self.kind
    }

    /// Undirected edges (i < j) with weights.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().filter_map(move |&(j, w)| (i < j).then_some((i, j, w))))
    }

    pub fn edge_count(&self) -> usize {
        self.edges().count()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.node_count();
        let mut a = Array2::zeros((n, n));
        for (i, j, w) in self.edges() {
            a[(i, j)] = w;
            a[(j, i)] = w;
        }
        a
    }

    /// Debug export: one `i j weight` line per undirected edge.
    pub fn to_edge_list_text(&self) -> String {
        let mut out = String::new();
        for (i, j, w) in self.edges() {
            let _ = writeln!(out, "{i} {j} {w}");
        }
        out
    }
}

const EXACT_SCAN_LIMIT: usize = 5000;

/// Build the symmetric kNN graph: edge (i,j) present iff i is among the `n`
/// nearest neighbors of j or vice versa. Exact O(Z²) scan up to 5000 points,
/// grid-bucket accelerated search above.
pub fn build_knn_graph(cloud: &PointCloud, n: usize, mode: WeightMode) -> Result<AdjacencyGraph> {
    let z = cloud.len();
    if z < 2 {
        return Err(Error::Validation(format!(
            "kNN graph needs at least 2 points, got {z}"
        )));
    }
    if n == 0 {
        return Err(Error::Validation("neighbor count must be >= 1".into()));
    }
    let pts = cloud.points();
    let knn = if z <= EXACT_SCAN_LIMIT {
        knn_exact(pts, n)
    } else {
        knn_bucketed(pts, n)
    };

    // Symmetric OR rule.
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); z];
    for (i, neigh) in knn.iter().enumerate() {
        for &j in neigh {
            if !adjacency[i].contains(&j) {
                adjacency[i].push(j);
            }
            if !adjacency[j].contains(&i) {
                adjacency[j].push(i);
            }
        }
    }
    for ns in &mut adjacency {
        ns.sort_unstable();
    }

    let kind = match mode {
        WeightMode::Binary => WeightKind::Binary,
        WeightMode::Heat => {
            let mut dists = Vec::new();
            for (i, ns) in adjacency.iter().enumerate() {
                for &j in ns {
                    if i < j {
                        dists.push(pts[i].dist(&pts[j]));
                    }
                }
            }
            WeightKind::Heat {
                r: fit_edge_scale(&dists)?,
            }
        }
    };

    let neighbors = adjacency
        .iter()
        .enumerate()
        .map(|(i, ns)| {
            ns.iter()
                .map(|&j| {
                    let w = match kind {
                        WeightKind::Binary => 1.0,
                        WeightKind::Heat { r } => (-pts[i].dist_sq(&pts[j]) / r).exp(),
                    };
                    (j, w)
                })
                .collect()
        })
        .collect();
    Ok(AdjacencyGraph { neighbors, kind })
}

/// n nearest neighbors of every point by exhaustive pairwise scan.
/// Ties broken by lower index.
fn knn_exact(pts: &[Point], n: usize) -> Vec<Vec<usize>> {
    let z = pts.len();
    let k = n.min(z - 1);
    let mut out = Vec::with_capacity(z);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(z - 1);
    for i in 0..z {
        cand.clear();
        for j in 0..z {
            if j != i {
                cand.push((pts[i].dist_sq(&pts[j]), j));
            }
        }
        cand.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.push(cand[..k].iter().map(|&(_, j)| j).collect());
    }
    out
}

/// Grid-bucket accelerated kNN for large clouds: points are hashed into a
/// uniform grid and rings of cells are expanded until the n-th best distance
/// is covered by the searched radius.
fn knn_bucketed(pts: &[Point], n: usize) -> Vec<Vec<usize>> {
    let z = pts.len();
    let k = n.min(z - 1);
    let (mut min, mut max) = (pts[0], pts[0]);
    for p in pts {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    let span_x = (max.x - min.x).max(1e-9);
    let span_y = (max.y - min.y).max(1e-9);
    // Aim for a few points per cell.
    let target_cells = (z as f64 / 2.0).max(1.0);
    let aspect = span_x / span_y;
    let ny = (target_cells / aspect).sqrt().ceil().max(1.0) as usize;
    let nx = (target_cells / ny as f64).ceil().max(1.0) as usize;
    let cell_w = span_x / nx as f64;
    let cell_h = span_y / ny as f64;

    let cell_of = |p: &Point| -> (usize, usize) {
        let cx = (((p.x - min.x) / cell_w) as usize).min(nx - 1);
        let cy = (((p.y - min.y) / cell_h) as usize).min(ny - 1);
        (cx, cy)
    };
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); nx * ny];
    for (i, p) in pts.iter().enumerate() {
        let (cx, cy) = cell_of(p);
        buckets[cy * nx + cx].push(i);
    }

    let mut out = Vec::with_capacity(z);
    for i in 0..z {
        let (cx, cy) = cell_of(&pts[i]);
        let mut best: Vec<(f64, usize)> = Vec::new();
        let mut ring = 0isize;
        loop {
            // Cells at Chebyshev distance exactly `ring` from the home cell.
            for dy in -ring..=ring {
                for dx in -ring..=ring {
                    if dx.abs().max(dy.abs()) != ring {
                        continue;
                    }
                    let gx = cx as isize + dx;
                    let gy = cy as isize + dy;
                    if gx < 0 || gy < 0 || gx >= nx as isize || gy >= ny as isize {
                        continue;
                    }
                    for &j in &buckets[gy as usize * nx + gx as usize] {
                        if j != i {
                            best.push((pts[i].dist_sq(&pts[j]), j));
                        }
                    }
                }
            }
            // Any point in an unsearched cell is at least `ring` cell sides away.
            let safe = (ring as f64 * cell_w.min(cell_h)).powi(2);
            best.sort_by(|a, b| a.partial_cmp(b).unwrap());
            best.truncate(4 * k.max(4));
            let covered_all = ring >= nx.max(ny) as isize;
            if (best.len() >= k && best[k - 1].0 <= safe) || covered_all {
                break;
            }
            ring += 1;
        }
        out.push(best[..k].iter().map(|&(_, j)| j).collect());
    }
    out
}

/// Maximum-likelihood exponential mean of the connected-edge distances,
/// used as the heat-weight scale r.
pub fn fit_edge_scale(distances: &[f64]) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::EmptyInput("edge distances"));
    }
    Ok(distances.iter().sum::<f64>() / distances.len() as f64)
}

/// Graph Laplacian L = D − A in sparse per-row form.
#[derive(Debug, Clone)]
pub struct Laplacian {
    degrees: Vec<f64>,
    /// Off-diagonal entries per row: `(j, a_ij)` for each neighbor j.
    rows: Vec<Vec<(usize, f64)>>,
}

impl Laplacian {
    /// An all-zero Laplacian (edgeless graph) of the given size.
    pub fn zeros(n: usize) -> Self {
        Laplacian {
            degrees: vec![0.0; n],
            rows: vec![Vec::new(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.degrees.len()
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degrees[i]
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.n();
        let mut l = Array2::zeros((n, n));
        for i in 0..n {
            l[(i, i)] = self.degrees[i];
            for &(j, a) in &self.rows[i] {
                l[(i, j)] = -a;
            }
        }
        l
    }

    /// y = L·x.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        debug_assert_eq!(x.len(), n);
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.degrees[i] * x[i];
            for &(j, a) in &self.rows[i] {
                s -= a * x[j];
            }
            y[i] = s;
        }
        y
    }

    /// Y = L·M for dense M, exploiting row sparsity.
    pub fn mul_dense(&self, m: &Array2<f64>) -> Array2<f64> {
        let n = self.n();
        debug_assert_eq!(m.nrows(), n);
        let cols = m.ncols();
        let src = m.as_slice().expect("standard layout");
        let mut out = Array2::<f64>::zeros((n, cols));
        let dst = out.as_slice_mut().expect("standard layout");
        for i in 0..n {
            let d = self.degrees[i];
            let row_out = &mut dst[i * cols..(i + 1) * cols];
            let row_i = &src[i * cols..(i + 1) * cols];
            for (o, v) in row_out.iter_mut().zip(row_i.iter()) {
                *o = d * v;
            }
            for &(j, a) in &self.rows[i] {
                let row_j = &src[j * cols..(j + 1) * cols];
                for (o, v) in row_out.iter_mut().zip(row_j.iter()) {
                    *o -= a * v;
                }
            }
        }
        out
    }
}

/// L = D − A with D the diagonal degree matrix.
pub fn build_laplacian(graph: &AdjacencyGraph) -> Laplacian {
    let n = graph.node_count();
    let mut degrees = vec![0.0; n];
    let mut rows = vec![Vec::new(); n];
    for i in 0..n {
        degrees[i] = graph.degree(i);
        rows[i] = graph.neighbors(i).to_vec();
    }
    Laplacian { degrees, rows }
}

/// Connected-component labels; nodes share a label iff connected by a path.
/// Labels are assigned in order of first occurrence.
pub fn connected_components(graph: &AdjacencyGraph) -> Vec<usize> {
    let n = graph.node_count();
    let mut labels = vec![usize::MAX; n];
    let mut next = 0usize;
    let mut stack = Vec::new();
    for start in 0..n {
        if labels[start] != usize::MAX {
            continue;
        }
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            for &(j, _) in graph.neighbors(i) {
                if labels[j] == usize::MAX {
                    labels[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigenvalues;
    use rand::Rng;

    fn events_from(pts: &[(f64, f64)]) -> Vec<Event> {
        pts.iter()
            .map(|&(x, y)| Event::new(1, x, y))
            .collect()
    }

    fn random_events(n: usize, seed: u64, span: f64) -> Vec<Event> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Event::new(1, rng.random_range(0.0..span), rng.random_range(0.0..span)))
            .collect()
    }

    fn cloud_of(pts: &[(f64, f64)]) -> PointCloud {
        PointCloud::from_points(pts.iter().map(|&(x, y)| Point::new(x, y)).collect(), 0).unwrap()
    }

    #[test]
    fn sampling_keeps_all_when_fewer_than_requested() {
        let events = random_events(500, 1, 10.0);
        let cloud = sample_point_cloud(&events, 1000, 3).unwrap();
        assert_eq!(cloud.len(), 500);
    }

    #[test]
    fn sampling_takes_exactly_requested_from_large_pool() {
        let events = random_events(50_000, 2, 40.0);
        let cloud = sample_point_cloud(&events, 1000, 3).unwrap();
        assert_eq!(cloud.len(), 1000);
    }

    #[test]
    fn sampling_deterministic_per_seed() {
        let events = random_events(2000, 3, 10.0);
        let a = sample_point_cloud(&events, 100, 7).unwrap();
        let b = sample_point_cloud(&events, 100, 7).unwrap();
        assert_eq!(a.points(), b.points());
        let c = sample_point_cloud(&events, 100, 8).unwrap();
        assert_ne!(a.points(), c.points());
    }

    #[test]
    fn knn_collinear_points_form_path() {
        let cloud = cloud_of(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        let g = build_knn_graph(&cloud, 1, WeightMode::Binary).unwrap();
        let edges: Vec<(usize, usize)> = g.edges().map(|(i, j, _)| (i, j)).collect();
        assert_eq!(edges, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn knn_saturated_neighbor_count_gives_complete_graph() {
        let cloud = cloud_of(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (2.0, 2.0)]);
        let g = build_knn_graph(&cloud, 3, WeightMode::Binary).unwrap();
        assert_eq!(g.edge_count(), 6);
    }

    #[test]
    fn knn_matches_brute_force_oracle() {
        let events = random_events(100, 4, 5.0);
        let cloud = sample_point_cloud(&events, 100, 0).unwrap();
        let g = build_knn_graph(&cloud, 5, WeightMode::Binary).unwrap();
        // Oracle: O(Z²) neighbor computation and OR-symmetrization.
        let pts = cloud.points();
        let z = pts.len();
        let mut expect = std::collections::BTreeSet::new();
        for i in 0..z {
            let mut d: Vec<(f64, usize)> = (0..z)
                .filter(|&j| j != i)
                .map(|j| (pts[i].dist_sq(&pts[j]), j))
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for &(_, j) in &d[..5] {
                expect.insert((i.min(j), i.max(j)));
            }
        }
        let got: std::collections::BTreeSet<(usize, usize)> =
            g.edges().map(|(i, j, _)| (i, j)).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn knn_min_degree_at_least_one() {
        let events = random_events(60, 5, 3.0);
        let cloud = sample_point_cloud(&events, 60, 0).unwrap();
        let g = build_knn_graph(&cloud, 5, WeightMode::Binary).unwrap();
        for i in 0..g.node_count() {
            assert!(g.neighbors(i).len() >= 1);
        }
    }

    #[test]
    fn knn_rejects_tiny_clouds() {
        let cloud = cloud_of(&[(0.0, 0.0)]);
        assert!(build_knn_graph(&cloud, 1, WeightMode::Binary).is_err());
    }

    #[test]
    fn bucketed_knn_matches_exact_scan() {
        let events = random_events(6000, 6, 30.0);
        let cloud = sample_point_cloud(&events, 6000, 0).unwrap();
        let pts = cloud.points();
        let exact = knn_exact(pts, 5);
        let bucketed = knn_bucketed(pts, 5);
        for i in 0..pts.len() {
            assert_eq!(exact[i], bucketed[i], "neighbor mismatch at {i}");
        }
    }

    #[test]
    fn heat_weights_use_fitted_scale() {
        let cloud = cloud_of(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        let g = build_knn_graph(&cloud, 1, WeightMode::Heat).unwrap();
        match g.weight_kind() {
            WeightKind::Heat { r } => {
                assert!((r - 1.0).abs() < 1e-12);
                for (_, _, w) in g.edges() {
                    assert!((w - (-1.0f64).exp()).abs() < 1e-12);
                }
            }
            _ => panic!("expected heat weights"),
        }
    }

    #[test]
    fn edge_scale_is_mean_of_distances() {
        assert_eq!(fit_edge_scale(&[1.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(fit_edge_scale(&[0.5, 1.5]).unwrap(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d: Vec<f64> = (0..37).map(|_| rng.random_range(0.1..4.0)).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        assert!((fit_edge_scale(&d).unwrap() - mean).abs() < 1e-15);
        assert!(fit_edge_scale(&[]).is_err());
    }

    #[test]
    fn laplacian_of_path_graph() {
        let cloud = cloud_of(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        let g = build_knn_graph(&cloud, 1, WeightMode::Binary).unwrap();
        let l = build_laplacian(&g).to_dense();
        let expect = ndarray::array![[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]];
        assert_eq!(l, expect);
    }

    #[test]
    fn laplacian_of_edgeless_graph_is_zero() {
        let l = Laplacian::zeros(4).to_dense();
        assert!(l.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn laplacian_spectrum_and_row_sums() {
        let events = random_events(40, 9, 4.0);
        let cloud = sample_point_cloud(&events, 40, 0).unwrap();
        let g = build_knn_graph(&cloud, 3, WeightMode::Binary).unwrap();
        let lap = build_laplacian(&g);
        let dense = lap.to_dense();
        // Symmetric, rows sum to zero, PSD.
        let max_abs = dense.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..40 {
            for j in 0..40 {
                assert_eq!(dense[(i, j)], dense[(j, i)]);
            }
            let row_sum: f64 = dense.row(i).sum();
            assert!(row_sum.abs() <= 1e-12 * max_abs.max(1.0));
        }
        let eigs = sym_eigenvalues(&dense);
        assert!(eigs[0] >= -1e-10, "smallest eigenvalue {}", eigs[0]);
    }

    #[test]
    fn laplacian_quadratic_form_nonnegative() {
        let events = random_events(30, 10, 4.0);
        let cloud = sample_point_cloud(&events, 30, 0).unwrap();
        let g = build_knn_graph(&cloud, 2, WeightMode::Binary).unwrap();
        let lap = build_laplacian(&g);
        let norm = crate::linalg::norm_1(&lap.to_dense());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lx = lap.mul_vec(&x);
            let q: f64 = x.iter().zip(lx.iter()).map(|(a, b)| a * b).sum();
            let x2: f64 = x.iter().map(|v| v * v).sum();
            assert!(q >= -1e-10 * x2 * norm);
        }
    }

    #[test]
    fn zero_eigenvalue_multiplicity_equals_component_count() {
        for seed in [12u64, 13, 14] {
            // Two well-separated blobs force at least two components at n=2.
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pts: Vec<(f64, f64)> = (0..20)
                .map(|_| (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
                .collect();
            pts.extend((0..20).map(|_| {
                (
                    rng.random_range(100.0..101.0),
                    rng.random_range(100.0..101.0),
                )
            }));
            let cloud = cloud_of(&pts);
            let g = build_knn_graph(&cloud, 2, WeightMode::Binary).unwrap();
            let n_comp = connected_components(&g).iter().max().unwrap() + 1;
            let eigs = sym_eigenvalues(&build_laplacian(&g).to_dense());
            let zeros = eigs.iter().filter(|&&e| e.abs() < 1e-8).count();
            assert_eq!(zeros, n_comp);
        }
    }

    #[test]
    fn components_of_disjoint_edges() {
        let cloud = cloud_of(&[(0.0, 0.0), (0.1, 0.0), (50.0, 50.0), (50.1, 50.0)]);
        let g = build_knn_graph(&cloud, 1, WeightMode::Binary).unwrap();
        let labels = connected_components(&g);
        assert_eq!(labels, vec![0, 0, 1, 1]);
    }

    #[test]
    fn components_of_complete_graph() {
        let cloud = cloud_of(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        let g = build_knn_graph(&cloud, 2, WeightMode::Binary).unwrap();
        let labels = connected_components(&g);
        assert!(labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn components_match_union_find_oracle() {
        let events = random_events(80, 15, 12.0);
        let cloud = sample_point_cloud(&events, 80, 0).unwrap();
        let g = build_knn_graph(&cloud, 2, WeightMode::Binary).unwrap();
        let labels = connected_components(&g);
        // Union-find oracle over the edge list.
        let n = g.node_count();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            let mut r = i;
            while parent[r] != r {
                r = parent[r];
            }
            let mut c = i;
            while parent[c] != r {
                let next = parent[c];
                parent[c] = r;
                c = next;
            }
            r
        }
        for (i, j, _) in g.edges() {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
        for i in 0..n {
            for j in 0..n {
                let same_oracle = find(&mut parent, i) == find(&mut parent, j);
                assert_eq!(labels[i] == labels[j], same_oracle);
            }
        }
    }
}
