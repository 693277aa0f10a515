//! Spatial discretization of an hour slot: k-means on the labeled data,
//! component assignment, and the cluster-count search.
//!
//! Clusters below 15 points starve cross-validation, so a clustering is only
//! accepted when every cluster clears that floor; otherwise the cluster
//! count is lowered and k-means re-run. The count itself is chosen by a
//! neighbor hill-climb over k from a warm start proportional to the labeled
//! size, driven by a fit-and-validate callback.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::Point;

/// Minimum points per accepted cluster.
pub const MIN_CLUSTER_SIZE: usize = 15;

/// Upper bound on the number of clusters.
pub const MAX_CLUSTERS: usize = 8;

/// Labeled size below which the search is skipped and k = 1 forced.
pub const SINGLE_CLUSTER_BELOW: usize = 2 * MIN_CLUSTER_SIZE;

/// A k-means clustering: centroids plus a label per input point.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub k: usize,
    pub centroids: Vec<Point>,
    pub labels: Vec<usize>,
}

impl Clustering {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn min_cluster_size(&self) -> usize {
        self.cluster_sizes().into_iter().min().unwrap_or(0)
    }
}

/// Lloyd's k-means with farthest-point seeding, run to an assignment
/// fixpoint (or 100 iterations). Empty clusters are reseeded with the point
/// farthest from its assigned centroid. Deterministic given the seed; all
/// ties break toward the lower index.
pub fn kmeans(points: &[Point], k: usize, seed: u64) -> Result<Clustering> {
    if k == 0 {
        return Err(Error::Validation("cluster count must be >= 1".into()));
    }
    if points.len() < k {
        return Err(Error::Validation(format!(
            "{} points cannot form {k} clusters",
            points.len()
        )));
    }
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Farthest-point seeding from a random first centroid.
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)]);
    let mut min_dist: Vec<f64> = points.iter().map(|p| p.dist_sq(&centroids[0])).collect();
    while centroids.len() < k {
        let mut best = 0usize;
        for i in 1..n {
            if min_dist[i] > min_dist[best] {
                best = i;
            }
        }
        centroids.push(points[best]);
        for i in 0..n {
            let d = points[i].dist_sq(centroids.last().unwrap());
            if d < min_dist[i] {
                min_dist[i] = d;
            }
        }
    }

    let mut labels = vec![usize::MAX; n];
    for _ in 0..100 {
        let mut new_labels = assign_nearest(&centroids, points);

        // Reseed empty clusters with the point farthest from its centroid.
        loop {
            let mut sizes = vec![0usize; k];
            for &l in &new_labels {
                sizes[l] += 1;
            }
            let Some(empty) = sizes.iter().position(|&s| s == 0) else {
                break;
            };
            let mut far = 0usize;
            let mut far_d = -1.0;
            for (i, &l) in new_labels.iter().enumerate() {
                if sizes[l] <= 1 {
                    continue; // do not empty another cluster
                }
                let d = points[i].dist_sq(&centroids[l]);
                if d > far_d {
                    far_d = d;
                    far = i;
                }
            }
            new_labels[far] = empty;
        }

        // Centroids become the member means.
        let mut sums = vec![(0.0f64, 0.0f64, 0usize); k];
        for (i, &l) in new_labels.iter().enumerate() {
            sums[l].0 += points[i].x;
            sums[l].1 += points[i].y;
            sums[l].2 += 1;
        }
        for (c, &(sx, sy, cnt)) in centroids.iter_mut().zip(sums.iter()) {
            *c = Point::new(sx / cnt as f64, sy / cnt as f64);
        }

        let converged = new_labels == labels;
        labels = new_labels;
        if converged {
            break;
        }
    }

    Ok(Clustering {
        k,
        centroids,
        labels,
    })
}

fn assign_nearest(centroids: &[Point], points: &[Point]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = 0usize;
            let mut best_d = p.dist_sq(&centroids[0]);
            for (j, c) in centroids.iter().enumerate().skip(1) {
                let d = p.dist_sq(c);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Label each point by its nearest centroid (ties to the lower index).
pub fn assign_to_components(clustering: &Clustering, points: &[Point]) -> Vec<usize> {
    assign_nearest(&clustering.centroids, points)
}

/// k-means honoring the cluster-size floor: the requested k is lowered until
/// every cluster has at least [`MIN_CLUSTER_SIZE`] points (k = 1 accepts any
/// size).
pub fn cluster_with_floor(points: &[Point], k: usize, seed: u64) -> Result<Clustering> {
    let mut k = k.max(1);
    loop {
        let clustering = kmeans(points, k, seed)?;
        if k == 1 || clustering.min_cluster_size() >= MIN_CLUSTER_SIZE {
            return Ok(clustering);
        }
        k -= 1;
    }
}

/// Warm-start cluster count: clamp(round(n/100), 1, 8).
pub fn warm_start_k(n_labeled: usize) -> usize {
    (((n_labeled as f64) / 100.0).round() as usize).clamp(1, MAX_CLUSTERS)
}

/// Outcome of the cluster-count search. `payload` is whatever the callback
/// produced for the winning clustering; it is `None` when the labeled set
/// was too small to warrant any callback evaluation.
#[derive(Debug)]
pub struct SearchOutcome<T> {
    pub clustering: Clustering,
    pub score: Option<f64>,
    pub payload: Option<T>,
}

/// Choose the number of clusters by hill-climbing the fit-and-validate
/// callback from the warm start `k0`: evaluate k0, then its neighbors,
/// moving toward improvement until a local maximum or the bounds
/// [1, min(8, n/15)]. With fewer than 30 labeled points k = 1 is forced
/// without consulting the callback.
pub fn search_cluster_count<T>(
    points: &[Point],
    k0: usize,
    seed: u64,
    eval: &mut dyn FnMut(&Clustering) -> Result<(f64, T)>,
) -> Result<SearchOutcome<T>> {
    if points.is_empty() {
        return Err(Error::EmptyInput("labeled points for cluster search"));
    }
    if points.len() < SINGLE_CLUSTER_BELOW {
        return Ok(SearchOutcome {
            clustering: kmeans(points, 1, seed)?,
            score: None,
            payload: None,
        });
    }
    let k_max = (points.len() / MIN_CLUSTER_SIZE).min(MAX_CLUSTERS).max(1);
    let clamp = |k: usize| k.clamp(1, k_max);

    // Cache by effective k: the floor may lower a requested k.
    let mut cache: HashMap<usize, (f64, Clustering, T)> = HashMap::new();
    let mut evaluate = |k_req: usize,
                        cache: &mut HashMap<usize, (f64, Clustering, T)>|
     -> Result<(usize, f64)> {
        let clustering = cluster_with_floor(points, k_req, seed)?;
        let k_eff = clustering.k;
        if let Some((score, _, _)) = cache.get(&k_eff) {
            return Ok((k_eff, *score));
        }
        let (score, payload) = eval(&clustering)?;
        cache.insert(k_eff, (score, clustering, payload));
        Ok((k_eff, score))
    };

    let start = clamp(k0);
    let (mut best_k, mut best_score) = evaluate(start, &mut cache)?;

    // Try upward first; if that does not improve, try downward.
    let mut improved_up = false;
    let mut k = best_k;
    while k < k_max {
        let (k_eff, score) = evaluate(k + 1, &mut cache)?;
        if score > best_score {
            best_k = k_eff;
            best_score = score;
            improved_up = true;
            k = k_eff.max(k + 1);
        } else {
            break;
        }
    }
    if !improved_up {
        let mut k = best_k;
        while k > 1 {
            let (k_eff, score) = evaluate(k - 1, &mut cache)?;
            if score > best_score {
                best_k = k_eff;
                best_score = score;
                k = k_eff.min(k - 1);
            } else {
                break;
            }
        }
    }

    let (score, clustering, payload) = cache.remove(&best_k).expect("best k cached");
    Ok(SearchOutcome {
        clustering,
        score: Some(score),
        payload: Some(payload),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_points(n: usize, seed: u64, span: f64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Point::new(rng.random_range(0.0..span), rng.random_range(0.0..span)))
            .collect()
    }

    fn two_blobs(per_blob: usize, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts: Vec<Point> = (0..per_blob)
            .map(|_| Point::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        pts.extend((0..per_blob).map(|_| {
            Point::new(
                100.0 + rng.random_range(-1.0..1.0),
                100.0 + rng.random_range(-1.0..1.0),
            )
        }));
        pts
    }

    #[test]
    fn k1_centroid_is_mean() {
        let pts = random_points(37, 1, 5.0);
        let c = kmeans(&pts, 1, 0).unwrap();
        let mx = pts.iter().map(|p| p.x).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p.y).sum::<f64>() / pts.len() as f64;
        assert!((c.centroids[0].x - mx).abs() < 1e-12);
        assert!((c.centroids[0].y - my).abs() < 1e-12);
        assert!(c.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn two_blobs_separate_exactly() {
        let pts = two_blobs(20, 2);
        let c = kmeans(&pts, 2, 7).unwrap();
        // All points of one blob share a label, and the two blobs differ.
        let first = c.labels[0];
        assert!(c.labels[..20].iter().all(|&l| l == first));
        assert!(c.labels[20..].iter().all(|&l| l == 1 - first));
        // Within-cluster distance far below cross-cluster distance.
        for (i, &l) in c.labels.iter().enumerate() {
            let own = pts[i].dist(&c.centroids[l]);
            let other = pts[i].dist(&c.centroids[1 - l]);
            assert!(own < other);
        }
    }

    #[test]
    fn centroids_equal_member_means_at_fixpoint() {
        let pts = random_points(90, 3, 10.0);
        let c = kmeans(&pts, 4, 5).unwrap();
        for j in 0..c.k {
            let members: Vec<&Point> = pts
                .iter()
                .zip(c.labels.iter())
                .filter(|(_, &l)| l == j)
                .map(|(p, _)| p)
                .collect();
            assert!(!members.is_empty());
            let mx = members.iter().map(|p| p.x).sum::<f64>() / members.len() as f64;
            let my = members.iter().map(|p| p.y).sum::<f64>() / members.len() as f64;
            assert!((c.centroids[j].x - mx).abs() < 1e-12);
            assert!((c.centroids[j].y - my).abs() < 1e-12);
        }
    }

    #[test]
    fn kmeans_deterministic_and_validates() {
        let pts = random_points(50, 4, 5.0);
        let a = kmeans(&pts, 3, 9).unwrap();
        let b = kmeans(&pts, 3, 9).unwrap();
        assert_eq!(a, b);
        assert!(kmeans(&pts, 0, 0).is_err());
        assert!(kmeans(&pts[..2], 3, 0).is_err());
    }

    #[test]
    fn assignment_returns_centroid_label() {
        let pts = two_blobs(20, 5);
        let c = kmeans(&pts, 2, 1).unwrap();
        let labels = assign_to_components(&c, &c.centroids);
        assert_eq!(labels, vec![0, 1]);
    }

    #[test]
    fn assignment_tie_breaks_to_lower_index() {
        let clustering = Clustering {
            k: 2,
            centroids: vec![Point::new(0.0, 0.0), Point::new(2.0, 0.0)],
            labels: vec![],
        };
        // Equidistant between both centroids.
        let labels = assign_to_components(&clustering, &[Point::new(1.0, 0.0)]);
        assert_eq!(labels, vec![0]);
    }

    #[test]
    fn assignment_matches_linear_scan_oracle() {
        let pts = random_points(200, 6, 8.0);
        let c = kmeans(&pts[..60], 5, 3).unwrap();
        let labels = assign_to_components(&c, &pts);
        for (i, &l) in labels.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, cen) in c.centroids.iter().enumerate() {
                let d = pts[i].dist_sq(cen);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            assert_eq!(l, best);
        }
        // Total function: every point got exactly one label.
        assert_eq!(labels.len(), pts.len());
    }

    #[test]
    fn floor_lowers_cluster_count() {
        // 40 points: k=3 cannot give three clusters of >= 15.
        let pts = random_points(40, 7, 5.0);
        let c = cluster_with_floor(&pts, 3, 11).unwrap();
        assert!(c.k < 3 || c.min_cluster_size() >= MIN_CLUSTER_SIZE);
        assert!(c.k >= 1);
        if c.k > 1 {
            assert!(c.min_cluster_size() >= MIN_CLUSTER_SIZE);
        }
    }

    #[test]
    fn accepted_clusterings_respect_floor_across_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..200 {
            let n = rng.random_range(15..400);
            let pts = random_points(n, 1000 + trial, 10.0);
            let k_req = rng.random_range(1..=MAX_CLUSTERS);
            let c = cluster_with_floor(&pts, k_req, trial).unwrap();
            assert!(c.k <= MAX_CLUSTERS);
            if c.k > 1 {
                assert!(
                    c.min_cluster_size() >= MIN_CLUSTER_SIZE,
                    "trial {trial}: k={} min size {}",
                    c.k,
                    c.min_cluster_size()
                );
            }
        }
    }

    #[test]
    fn warm_start_formula() {
        assert_eq!(warm_start_k(20), 1);
        assert_eq!(warm_start_k(100), 1);
        assert_eq!(warm_start_k(160), 2);
        assert_eq!(warm_start_k(300), 3);
        assert_eq!(warm_start_k(480), 5);
        assert_eq!(warm_start_k(2000), 8);
        // Monotone in the labeled size.
        let mut prev = 0;
        for n in (0..2000).step_by(50) {
            let k = warm_start_k(n);
            assert!(k >= prev);
            prev = k;
        }
    }

    #[test]
    fn small_labeled_set_forces_k1_without_callback() {
        let pts = random_points(20, 9, 3.0);
        let mut calls = 0usize;
        let out = search_cluster_count(&pts, 2, 0, &mut |_c| -> Result<(f64, ())> {
            calls += 1;
            Ok((0.0, ()))
        })
        .unwrap();
        assert_eq!(calls, 0);
        assert_eq!(out.clustering.k, 1);
        assert!(out.score.is_none());
        assert!(out.payload.is_none());
    }

    #[test]
    fn increasing_score_climbs_to_bound() {
        let pts = random_points(200, 10, 10.0);
        let k_max = (200 / MIN_CLUSTER_SIZE).min(MAX_CLUSTERS); // 8
        let out = search_cluster_count(&pts, 2, 0, &mut |c: &Clustering| -> Result<(f64, usize)> {
            Ok((c.k as f64, c.k))
        })
        .unwrap();
        assert_eq!(out.clustering.k, k_max);
        assert_eq!(out.payload, Some(k_max));
    }

    #[test]
    fn unimodal_score_found_within_three_extra_evaluations() {
        let pts = random_points(200, 11, 10.0);
        let mut evaluated = Vec::new();
        let out = search_cluster_count(&pts, 2, 0, &mut |c: &Clustering| -> Result<(f64, ())> {
            evaluated.push(c.k);
            Ok((-((c.k as f64) - 3.0).powi(2), ()))
        })
        .unwrap();
        assert_eq!(out.clustering.k, 3);
        // k0 itself plus at most 3 further evaluations.
        assert!(evaluated.len() <= 4, "evaluated {evaluated:?}");
        assert_eq!(evaluated[0], 2);
    }

    #[test]
    fn decreasing_score_climbs_down() {
        let pts = random_points(200, 12, 10.0);
        let out = search_cluster_count(&pts, 4, 0, &mut |c: &Clustering| -> Result<(f64, ())> {
            Ok((-(c.k as f64), ()))
        })
        .unwrap();
        assert_eq!(out.clustering.k, 1);
    }
}
