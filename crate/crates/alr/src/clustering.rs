//! k-means clustering for the representativeness–diversity selection steps.
//!
//! Lloyd's algorithm with greedy k-means++ seeding, a fixed number of
//! independent restarts (best inertia wins, lowest restart ordinal on ties),
//! convergence on unchanged assignments or 300 iterations, and deterministic
//! empty-cluster repair. All unspecified choices are pinned so runs replay
//! bit-for-bit from their seed.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::seeding::mix;

#[derive(Debug, Error)]
pub enum ClusteringError {
    #[error("k = {k} exceeds the number of samples {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("no cluster is free of labeled samples")]
    NoEligibleCluster,
}

/// Default number of independent restarts.
pub const DEFAULT_RESTARTS: usize = 10;
const MAX_ITERATIONS: usize = 300;

/// A completed clustering: per-point assignment, centroids, and total inertia.
#[derive(Debug, Clone)]
pub struct ClusterAssignment {
    pub k: usize,
    /// Cluster id in `0..k` for every point.
    pub assignment: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Sum of squared distances from each point to its assigned centroid.
    pub inertia: f64,
}

impl ClusterAssignment {
    /// Point indices belonging to `cluster_id`, in ascending order.
    pub fn members(&self, cluster_id: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == cluster_id)
            .map(|(i, _)| i)
            .collect()
    }
}

fn sq_dist(a: &ArrayView1<'_, f64>, b: &ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy k-means++ seeding: each new centroid is drawn by squared-distance
/// weighting from several candidates, keeping the one that lowers total
/// inertia the most.
fn seed_centroids(x: &ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha20Rng) -> Vec<usize> {
    let n = x.nrows();
    let n_candidates = 2 + (k as f64).ln().floor().max(0.0) as usize;
    let first = rng.gen_range(0..n);
    let mut chosen = vec![first];
    let mut dist_sq: Vec<f64> = (0..n).map(|i| sq_dist(&x.row(i), &x.row(first))).collect();

    while chosen.len() < k {
        let total: f64 = dist_sq.iter().sum();
        let candidates: Vec<usize> = if total > 0.0 {
            (0..n_candidates)
                .map(|_| {
                    let mut u = rng.gen::<f64>() * total;
                    let mut pick = n - 1;
                    for (i, &w) in dist_sq.iter().enumerate() {
                        if u < w {
                            pick = i;
                            break;
                        }
                        u -= w;
                    }
                    pick
                })
                .collect()
        } else {
            // All remaining mass is on already-chosen points (duplicates or
            // k close to n); fall back to the first unchosen index.
            match (0..n).find(|i| !chosen.contains(i)) {
                Some(i) => vec![i],
                None => vec![rng.gen_range(0..n)],
            }
        };

        let mut best: Option<(f64, usize)> = None;
        for &cand in &candidates {
            let inertia: f64 = (0..n)
                .map(|i| dist_sq[i].min(sq_dist(&x.row(i), &x.row(cand))))
                .sum();
            if best.map_or(true, |(b, _)| inertia < b) {
                best = Some((inertia, cand));
            }
        }
        let (_, pick) = best.expect("at least one candidate");
        for i in 0..n {
            dist_sq[i] = dist_sq[i].min(sq_dist(&x.row(i), &x.row(pick)));
        }
        chosen.push(pick);
    }
    chosen
}

fn lloyd(x: &ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha20Rng) -> ClusterAssignment {
    let (n, d) = x.dim();
    let seeds = seed_centroids(x, k, rng);
    let mut centroids = Array2::zeros((k, d));
    for (c, &i) in seeds.iter().enumerate() {
        centroids.row_mut(c).assign(&x.row(i));
    }

    let mut assignment = vec![usize::MAX; n];
    let mut prev_inertia = f64::INFINITY;
    for _iter in 0..MAX_ITERATIONS {
        // Assignment step; ties go to the lowest cluster id.
        let mut changed = false;
        let mut point_dist = vec![0.0; n];
        for i in 0..n {
            let mut best_c = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let dist = sq_dist(&x.row(i), &centroids.row(c));
                if dist < best_d {
                    best_d = dist;
                    best_c = c;
                }
            }
            point_dist[i] = best_d;
            if assignment[i] != best_c {
                assignment[i] = best_c;
                changed = true;
            }
        }

        // Deterministic empty-cluster repair: hand the points farthest from
        // their assigned centroids to the empty clusters, one each.
        let mut counts = vec![0usize; k];
        for &c in &assignment {
            counts[c] += 1;
        }
        let empties: Vec<usize> = (0..k).filter(|&c| counts[c] == 0).collect();
        if !empties.is_empty() {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                point_dist[b].partial_cmp(&point_dist[a]).unwrap().then(a.cmp(&b))
            });
            let mut pos = 0;
            for &c in &empties {
                while pos < order.len() {
                    let i = order[pos];
                    pos += 1;
                    if counts[assignment[i]] > 1 {
                        counts[assignment[i]] -= 1;
                        assignment[i] = c;
                        counts[c] = 1;
                        changed = true;
                        break;
                    }
                }
            }
        }

        // Update step.
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut sizes = vec![0.0f64; k];
        for i in 0..n {
            let c = assignment[i];
            sizes[c] += 1.0;
            for j in 0..d {
                sums[(c, j)] += x[(i, j)];
            }
        }
        for c in 0..k {
            if sizes[c] > 0.0 {
                for j in 0..d {
                    centroids[(c, j)] = sums[(c, j)] / sizes[c];
                }
            }
        }

        let inertia: f64 = (0..n)
            .map(|i| sq_dist(&x.row(i), &centroids.row(assignment[i])))
            .sum();
        debug_assert!(
            inertia <= prev_inertia * (1.0 + 1e-9) + 1e-12,
            "inertia increased: {prev_inertia} -> {inertia}"
        );
        prev_inertia = inertia;
        if !changed {
            break;
        }
    }

    ClusterAssignment {
        k,
        assignment,
        centroids,
        inertia: prev_inertia,
    }
}

/// Runs `restarts` independent seeded k-means fits and keeps the lowest
/// inertia (lowest restart ordinal on ties).
pub fn kmeans_restarts(
    x: &ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<ClusterAssignment, ClusteringError> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(ClusteringError::KTooLarge { k, n });
    }
    let mut best: Option<ClusterAssignment> = None;
    for restart in 0..restarts.max(1) {
        let mut rng = ChaCha20Rng::seed_from_u64(mix(seed, restart as u64));
        let result = lloyd(x, k, &mut rng);
        if best.as_ref().map_or(true, |b| result.inertia < b.inertia) {
            best = Some(result);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// k-means with the default restart count.
pub fn kmeans(
    x: &ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
) -> Result<ClusterAssignment, ClusteringError> {
    kmeans_restarts(x, k, seed, DEFAULT_RESTARTS)
}

/// The member of `cluster_id` closest to its centroid (smallest index wins
/// ties).
pub fn closest_to_centroid(
    x: &ArrayView2<'_, f64>,
    clusters: &ClusterAssignment,
    cluster_id: usize,
) -> Result<usize, ClusteringError> {
    let centroid = clusters.centroids.row(cluster_id);
    let mut best: Option<(f64, usize)> = None;
    for (i, &c) in clusters.assignment.iter().enumerate() {
        if c != cluster_id {
            continue;
        }
        let dist = sq_dist(&x.row(i), &centroid);
        if best.map_or(true, |(d, _)| dist < d) {
            best = Some((dist, i));
        }
    }
    best.map(|(_, i)| i).ok_or(ClusteringError::EmptyCluster(cluster_id))
}

/// Among clusters containing no labeled point, the one with the most members
/// (smallest cluster id wins ties).
pub fn largest_unlabeled_cluster(
    clusters: &ClusterAssignment,
    labeled: &[usize],
) -> Result<usize, ClusteringError> {
    let mut counts = vec![0usize; clusters.k];
    for &c in &clusters.assignment {
        counts[c] += 1;
    }
    let mut has_labeled = vec![false; clusters.k];
    for &i in labeled {
        has_labeled[clusters.assignment[i]] = true;
    }
    let mut best: Option<(usize, usize)> = None; // (count, id)
    for c in 0..clusters.k {
        if has_labeled[c] || counts[c] == 0 {
            continue;
        }
        if best.map_or(true, |(count, _)| counts[c] > count) {
            best = Some((counts[c], c));
        }
    }
    best.map(|(_, c)| c).ok_or(ClusteringError::NoEligibleCluster)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    // Exhaustive oracle: global optimum over all k^n assignment vectors.
    fn brute_force_optimum(x: &Array2<f64>, k: usize) -> f64 {
        let n = x.nrows();
        let d = x.ncols();
        let mut best = f64::INFINITY;
        let total = k.pow(n as u32);
        for code in 0..total {
            let mut assign = vec![0usize; n];
            let mut c = code;
            for a in assign.iter_mut() {
                *a = c % k;
                c /= k;
            }
            let mut sums = vec![vec![0.0; d]; k];
            let mut counts = vec![0usize; k];
            for i in 0..n {
                counts[assign[i]] += 1;
                for j in 0..d {
                    sums[assign[i]][j] += x[(i, j)];
                }
            }
            let mut inertia = 0.0;
            for i in 0..n {
                let c = assign[i];
                for j in 0..d {
                    let mean = sums[c][j] / counts[c] as f64;
                    inertia += (x[(i, j)] - mean).powi(2);
                }
            }
            if inertia < best {
                best = inertia;
            }
        }
        best
    }

    #[test]
    fn k_equals_n_is_zero_inertia() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 3.0]];
        let result = kmeans(&x.view(), 4, 1).unwrap();
        assert_abs_diff_eq!(result.inertia, 0.0, epsilon = 1e-12);
        let mut assigned: Vec<usize> = result.assignment.clone();
        assigned.sort_unstable();
        assert_eq!(assigned, vec![0, 1, 2, 3]);
    }

    #[test]
    fn k_one_centroid_is_mean() {
        let x = array![[1.0, 1.0], [3.0, 5.0], [5.0, 0.0]];
        let result = kmeans(&x.view(), 1, 2).unwrap();
        assert_abs_diff_eq!(result.centroids[(0, 0)], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(result.centroids[(0, 1)], 2.0, epsilon = 1e-12);
        // Inertia equals n times the total (population) variance.
        let mut expect = 0.0;
        for i in 0..3 {
            expect += (x[(i, 0)] - 3.0).powi(2) + (x[(i, 1)] - 2.0).powi(2);
        }
        assert_abs_diff_eq!(result.inertia, expect, epsilon = 1e-8);
    }

    #[test]
    fn recovers_two_separated_blobs() {
        let x = array![
            [0.0, 0.0],
            [0.1, 0.0],
            [0.0, 0.1],
            [0.1, 0.1],
            [10.0, 10.0],
            [10.1, 10.0],
            [10.0, 10.1],
            [10.1, 10.1]
        ];
        let result = kmeans(&x.view(), 2, 3).unwrap();
        let first = result.assignment[0];
        assert!(result.assignment[..4].iter().all(|&c| c == first));
        assert!(result.assignment[4..].iter().all(|&c| c != first));
        assert_abs_diff_eq!(result.inertia, brute_force_optimum(&x, 2), epsilon = 1e-6);
    }

    #[test]
    fn restarts_reach_global_optimum_on_small_instances() {
        let mut rng = ChaCha20Rng::seed_from_u64(50);
        for case in 0..10 {
            let n = 5 + (case % 4);
            let k = 2 + (case % 2);
            let x = Array2::from_shape_fn((n, 2), |_| rng.gen::<f64>() * 6.0);
            let result = kmeans(&x.view(), k, case as u64).unwrap();
            let optimum = brute_force_optimum(&x, k);
            assert!(
                result.inertia <= optimum + 1e-6,
                "inertia {} vs optimum {optimum}",
                result.inertia
            );
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mut rng = ChaCha20Rng::seed_from_u64(51);
        let x = Array2::from_shape_fn((30, 3), |_| rng.gen::<f64>());
        let a = kmeans(&x.view(), 5, 9).unwrap();
        let b = kmeans(&x.view(), 5, 9).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.inertia, b.inertia);
    }

    #[test]
    fn all_clusters_non_empty() {
        let mut rng = ChaCha20Rng::seed_from_u64(52);
        for trial in 0..20 {
            let n = 12;
            // Heavy duplication stresses the empty-cluster repair.
            let base = Array2::from_shape_fn((3, 2), |_| rng.gen::<f64>());
            let x = Array2::from_shape_fn((n, 2), |(i, j)| base[(i % 3, j)] + 1e-3 * (i / 3) as f64);
            let k = 2 + trial % 7;
            let result = kmeans(&x.view(), k, trial as u64).unwrap();
            let mut counts = vec![0usize; k];
            for &c in &result.assignment {
                counts[c] += 1;
            }
            assert!(counts.iter().all(|&c| c > 0), "empty cluster with k={k}");
        }
    }

    #[test]
    fn inertia_is_recomputable() {
        let mut rng = ChaCha20Rng::seed_from_u64(53);
        let x = Array2::from_shape_fn((25, 4), |_| rng.gen::<f64>());
        let result = kmeans(&x.view(), 4, 7).unwrap();
        let recomputed: f64 = (0..25)
            .map(|i| sq_dist(&x.row(i), &result.centroids.row(result.assignment[i])))
            .sum();
        assert!((result.inertia - recomputed).abs() <= 1e-8 * recomputed.max(1.0));
    }

    #[test]
    fn k_too_large_is_an_error() {
        let x = array![[1.0], [2.0]];
        assert!(matches!(
            kmeans(&x.view(), 3, 0),
            Err(ClusteringError::KTooLarge { .. })
        ));
    }

    #[test]
    fn closest_to_centroid_cases() {
        // Singleton cluster returns its only member.
        let x = array![[0.0], [5.0], [6.0]];
        let clusters = kmeans(&x.view(), 2, 1).unwrap();
        let lone = clusters.assignment[0];
        assert_eq!(closest_to_centroid(&x.view(), &clusters, lone).unwrap(), 0);

        // Symmetric pair straddling the centroid: smaller index wins.
        let x = array![[-1.0], [1.0]];
        let clusters = ClusterAssignment {
            k: 1,
            assignment: vec![0, 0],
            centroids: array![[0.0]],
            inertia: 2.0,
        };
        assert_eq!(closest_to_centroid(&x.view(), &clusters, 0).unwrap(), 0);

        // Random cluster equals an argmin scan.
        let mut rng = ChaCha20Rng::seed_from_u64(54);
        let x = Array2::from_shape_fn((20, 3), |_| rng.gen::<f64>());
        let clusters = kmeans(&x.view(), 1, 4).unwrap();
        let expect = (0..20)
            .min_by(|&a, &b| {
                sq_dist(&x.row(a), &clusters.centroids.row(0))
                    .partial_cmp(&sq_dist(&x.row(b), &clusters.centroids.row(0)))
                    .unwrap()
            })
            .unwrap();
        assert_eq!(closest_to_centroid(&x.view(), &clusters, 0).unwrap(), expect);
    }

    #[test]
    fn largest_unlabeled_cluster_rules() {
        let clusters = ClusterAssignment {
            k: 3,
            assignment: vec![0, 0, 0, 0, 0, 1, 1, 1, 2, 2],
            centroids: Array2::zeros((3, 1)),
            inertia: 0.0,
        };
        // Cluster 0 labeled; clusters 1 (size 3) and 2 (size 2) free.
        assert_eq!(largest_unlabeled_cluster(&clusters, &[0]).unwrap(), 1);
        // All clusters labeled: no eligible cluster.
        assert!(matches!(
            largest_unlabeled_cluster(&clusters, &[0, 5, 8]),
            Err(ClusteringError::NoEligibleCluster)
        ));

        // Size tie between ids 0 and 2: smaller id wins.
        let tie = ClusterAssignment {
            k: 3,
            assignment: vec![0, 0, 1, 2, 2],
            centroids: Array2::zeros((3, 1)),
            inertia: 0.0,
        };
        assert_eq!(largest_unlabeled_cluster(&tie, &[2]).unwrap(), 0);
    }

    #[test]
    fn pigeonhole_with_k_above_labeled_count() {
        let mut rng = ChaCha20Rng::seed_from_u64(55);
        for trial in 0..25 {
            let n = 20;
            let x = Array2::from_shape_fn((n, 2), |_| rng.gen::<f64>());
            let m = 1 + trial % 6;
            let labeled: Vec<usize> = (0..m).map(|i| i * 3).collect();
            let clusters = kmeans(&x.view(), m + 1, trial as u64).unwrap();
            assert!(largest_unlabeled_cluster(&clusters, &labeled).is_ok());
        }
    }
}
