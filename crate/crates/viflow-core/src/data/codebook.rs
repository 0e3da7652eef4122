//! Motion codebook: k-means over 6-DoF pose deltas and one-hot encoding.
//!
//! A pose delta packs the relative translation (meters) and the axis-angle
//! rotation (radians) between two camera poses into one 6-vector. Clustering
//! those deltas gives a small vocabulary of motions, and a delta is encoded
//! as the one-hot indicator of its nearest centroid plus the residual
//! distance.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{relative_pose, so3_log, PoseSE3};

/// 6-DoF motion delta: translation then axis-angle rotation of `a⁻¹ · b`.
pub fn pose_delta(a: &PoseSE3, b: &PoseSE3) -> [f64; 6] {
    let rel = relative_pose(a, b);
    let t = rel.translation();
    let w = so3_log(&rel.rotation());
    [t[0], t[1], t[2], w[0], w[1], w[2]]
}

/// Fitted motion vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SffmsCodebook {
    centroids: Vec<[f64; 6]>,
}

impl SffmsCodebook {
    /// Wraps explicit centroids. Fails when empty or non-finite.
    pub fn new(centroids: Vec<[f64; 6]>) -> Result<Self> {
        if centroids.is_empty() {
            return Err(Error::Contract(
                "a codebook needs at least one centroid".to_string(),
            ));
        }
        for c in &centroids {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Contract(
                    "centroids must be finite".to_string(),
                ));
            }
        }
        Ok(Self { centroids })
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn centroids(&self) -> &[[f64; 6]] {
        &self.centroids
    }

    /// Index of the nearest centroid by Euclidean distance, lowest index on
    /// ties, and the distance itself.
    pub fn nearest(&self, delta: &[f64; 6]) -> (usize, f64) {
        let mut best = 0;
        let mut best_sq = f64::INFINITY;
        for (i, c) in self.centroids.iter().enumerate() {
            let sq = squared_distance(delta, c);
            if sq < best_sq {
                best_sq = sq;
                best = i;
            }
        }
        (best, best_sq.sqrt())
    }
}

/// Fits `k` centroids to the deltas with k-means++ seeding and Lloyd
/// iterations, stopping at an assignment fixpoint or after 100 rounds.
///
/// A cluster that loses all its points is re-seeded to the point farthest
/// from its assigned centroid. The within-cluster inertia never increases
/// from one Lloyd round to the next.
pub fn kmeans_fit(deltas: &[[f64; 6]], k: usize, seed: u64) -> Result<SffmsCodebook> {
    const MAX_ROUNDS: usize = 100;
    if k == 0 {
        return Err(Error::Contract("k must be at least 1".to_string()));
    }
    if deltas.len() < k {
        return Err(Error::Contract(format!(
            "{} points cannot fill {k} clusters",
            deltas.len()
        )));
    }
    for d in deltas {
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("deltas must be finite".to_string()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(deltas, k, &mut rng);
    let mut assignment = vec![usize::MAX; deltas.len()];
    let mut previous_inertia = f64::INFINITY;
    for _ in 0..MAX_ROUNDS {
        let mut changed = false;
        let mut inertia = 0.0;
        for (point, slot) in deltas.iter().zip(assignment.iter_mut()) {
            let (nearest, _) = nearest_of(centroids.as_slice(), point);
            inertia += squared_distance(point, &centroids[nearest]);
            if *slot != nearest {
                *slot = nearest;
                changed = true;
            }
        }
        debug_assert!(
            inertia <= previous_inertia * (1.0 + 1e-12) + 1e-12,
            "inertia rose from {previous_inertia} to {inertia}"
        );
        previous_inertia = inertia;
        if !changed {
            break;
        }
        update_centroids(deltas, &assignment, &mut centroids);
    }
    SffmsCodebook::new(centroids)
}

/// One-hot code of the nearest centroid and the distance to it.
pub fn sffms_encode(delta: &[f64; 6], codebook: &SffmsCodebook) -> (Vec<f64>, f64) {
    let (index, distance) = codebook.nearest(delta);
    let mut one_hot = vec![0.0; codebook.len()];
    one_hot[index] = 1.0;
    (one_hot, distance)
}

fn seed_plus_plus(points: &[[f64; 6]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 6]> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut best_sq: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = best_sq.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = points.len() - 1;
            for (i, &d) in best_sq.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            // Every point already coincides with a centroid; any choice is
            // as good as any other.
            rng.random_range(0..points.len())
        };
        centroids.push(points[next]);
        for (p, d) in points.iter().zip(best_sq.iter_mut()) {
            *d = d.min(squared_distance(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn update_centroids(points: &[[f64; 6]], assignment: &[usize], centroids: &mut [[f64; 6]]) {
    let k = centroids.len();
    let mut sums = vec![[0.0f64; 6]; k];
    let mut counts = vec![0usize; k];
    for (point, &cluster) in points.iter().zip(assignment) {
        counts[cluster] += 1;
        for i in 0..6 {
            sums[cluster][i] += point[i];
        }
    }
    for cluster in 0..k {
        if counts[cluster] == 0 {
            let farthest = points
                .iter()
                .enumerate()
                .max_by(|(i, p), (j, q)| {
                    let dp = squared_distance(p, &centroids[assignment[*i]]);
                    let dq = squared_distance(q, &centroids[assignment[*j]]);
                    dp.total_cmp(&dq)
                })
                .map(|(i, _)| i)
                .expect("points is non-empty");
            centroids[cluster] = points[farthest];
        } else {
            for i in 0..6 {
                centroids[cluster][i] = sums[cluster][i] / counts[cluster] as f64;
            }
        }
    }
}

fn nearest_of(centroids: &[[f64; 6]], point: &[f64; 6]) -> (usize, f64) {
    let mut best = 0;
    let mut best_sq = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let sq = squared_distance(point, c);
        if sq < best_sq {
            best_sq = sq;
            best = i;
        }
    }
    (best, best_sq)
}

fn squared_distance(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    let mut sq = 0.0;
    for i in 0..6 {
        let d = a[i] - b[i];
        sq += d * d;
    }
    sq
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::trajectory::{generate_trajectory, MotionRegime, TrajectoryConfig};
    use rand_distr::{Distribution, Normal};

    #[test]
    fn pose_delta_of_a_pure_translation_is_the_translation() {
        let a = PoseSE3::from_translation([1.0, 2.0, 3.0]);
        let b = PoseSE3::from_translation([1.5, 1.0, 3.25]);
        let delta = pose_delta(&a, &b);
        assert_eq!(&delta[..3], &[0.5, -1.0, 0.25]);
        assert_eq!(&delta[3..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn k_equal_to_point_count_reaches_zero_inertia() {
        let points = [
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 2.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 3.0, 0.0, 0.0, 0.0],
        ];
        let codebook = kmeans_fit(&points, 4, 0).unwrap();
        let mut matched: Vec<_> = codebook.centroids().to_vec();
        matched.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want = points.to_vec();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(matched, want);
        for p in &points {
            let (_, distance) = codebook.nearest(p);
            assert_eq!(distance, 0.0);
        }
    }

    fn two_blobs(per_blob: usize, std: f64, seed: u64) -> (Vec<[f64; 6]>, [f64; 6], [f64; 6]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, std).unwrap();
        let mean_a = [1.0, 0.5, -0.5, 0.1, 0.0, -0.1];
        let mean_b = [-1.0, -0.5, 0.5, -0.1, 0.2, 0.1];
        let mut points = Vec::new();
        for mean in [mean_a, mean_b] {
            for _ in 0..per_blob {
                let mut p = mean;
                for v in &mut p {
                    *v += noise.sample(&mut rng);
                }
                points.push(p);
            }
        }
        (points, mean_a, mean_b)
    }

    #[test]
    fn two_separated_blobs_yield_centroids_near_the_blob_means() {
        let std = 0.05;
        let (points, mean_a, mean_b) = two_blobs(150, std, 3);
        let codebook = kmeans_fit(&points, 2, 0).unwrap();
        let (to_a, _) = codebook.nearest(&mean_a);
        let (to_b, _) = codebook.nearest(&mean_b);
        assert_ne!(to_a, to_b, "both means mapped to one centroid");
        for (mean, index) in [(mean_a, to_a), (mean_b, to_b)] {
            let d = squared_distance(&mean, &codebook.centroids()[index]).sqrt();
            assert!(d < 3.0 * std, "centroid sits {d} from the blob mean");
        }
    }

    #[test]
    fn every_point_lands_on_its_nearest_centroid_at_convergence() {
        let (points, _, _) = two_blobs(60, 0.3, 9);
        let codebook = kmeans_fit(&points, 5, 1).unwrap();
        for p in &points {
            let (via_codebook, _) = codebook.nearest(p);
            let mut best = 0;
            let mut best_sq = f64::INFINITY;
            for (i, c) in codebook.centroids().iter().enumerate() {
                let sq = squared_distance(p, c);
                if sq < best_sq {
                    best_sq = sq;
                    best = i;
                }
            }
            assert_eq!(via_codebook, best);
        }
    }

    #[test]
    fn fewer_points_than_clusters_is_a_contract_error() {
        let points = [[0.0; 6]; 3];
        let err = kmeans_fit(&points, 4, 0).unwrap_err();
        assert!(matches!(err, Error::Contract(_)), "got {err:?}");
    }

    #[test]
    fn fit_is_deterministic_in_the_seed() {
        let (points, _, _) = two_blobs(40, 0.2, 5);
        let a = kmeans_fit(&points, 6, 11).unwrap();
        let b = kmeans_fit(&points, 6, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn encoding_a_centroid_gives_zero_error() {
        let (points, _, _) = two_blobs(30, 0.1, 2);
        let codebook = kmeans_fit(&points, 3, 0).unwrap();
        let centroid = codebook.centroids()[1];
        let (one_hot, error) = sffms_encode(&centroid, &codebook);
        assert_eq!(error, 0.0);
        assert_eq!(one_hot[1], 1.0);
    }

    #[test]
    fn one_hot_has_exactly_one_nonzero_summing_to_one() {
        let (points, _, _) = two_blobs(30, 0.1, 8);
        let codebook = kmeans_fit(&points, 7, 0).unwrap();
        let delta = [0.3, -0.2, 0.6, 0.05, -0.01, 0.02];
        let (one_hot, _) = sffms_encode(&delta, &codebook);
        assert_eq!(one_hot.len(), 7);
        assert_eq!(one_hot.iter().sum::<f64>(), 1.0);
        assert_eq!(one_hot.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn encode_argmin_matches_a_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let points: Vec<[f64; 6]> = (0..80)
            .map(|_| [0; 6].map(|_| noise.sample(&mut rng)))
            .collect();
        let codebook = kmeans_fit(&points, 10, 3).unwrap();
        for _ in 0..50 {
            let delta: [f64; 6] = [0; 6].map(|_| noise.sample(&mut rng));
            let (one_hot, error) = sffms_encode(&delta, &codebook);
            let got = one_hot.iter().position(|v| *v == 1.0).unwrap();
            let mut scan_best = 0;
            let mut scan_sq = f64::INFINITY;
            for (i, c) in codebook.centroids().iter().enumerate() {
                let mut sq = 0.0;
                for axis in 0..6 {
                    sq += (delta[axis] - c[axis]) * (delta[axis] - c[axis]);
                }
                if sq < scan_sq {
                    scan_sq = sq;
                    scan_best = i;
                }
            }
            assert_eq!(got, scan_best);
            assert!((error - scan_sq.sqrt()).abs() < 1e-12);
        }
    }

    /// Image-rate pose deltas of a bimodal trajectory, with the regime label
    /// taken at the delta midpoint.
    fn bimodal_deltas(seed: u64) -> (Vec<[f64; 6]>, Vec<usize>) {
        let config = TrajectoryConfig {
            duration_s: 30.0,
            regime: MotionRegime::Bimodal {
                first_mps: [0.6, 0.15, 0.0],
                second_mps: [-0.5, -0.2, 0.05],
                dwell_s: 2.0,
                jitter_mps: 0.03,
            },
            ..TrajectoryConfig::default()
        };
        let trajectory = generate_trajectory(seed, &config).unwrap();
        let stride = trajectory.image_stride();
        let labels = trajectory.regime_labels();
        let mut deltas = Vec::new();
        let mut truth = Vec::new();
        for frame in 0..trajectory.frame_count() - 1 {
            let i0 = frame * stride;
            let i1 = i0 + stride;
            deltas.push(pose_delta(trajectory.pose(i0), trajectory.pose(i1)));
            truth.push(labels[i0 + stride / 2]);
        }
        (deltas, truth)
    }

    #[test]
    fn bimodal_regimes_separate_under_two_means_with_high_purity() {
        let (deltas, truth) = bimodal_deltas(6);
        let codebook = kmeans_fit(&deltas, 2, 0).unwrap();
        let mut agree = 0usize;
        for (delta, want) in deltas.iter().zip(&truth) {
            let (got, _) = codebook.nearest(delta);
            if got == *want {
                agree += 1;
            }
        }
        let purity = (agree.max(deltas.len() - agree)) as f64 / deltas.len() as f64;
        assert!(purity >= 0.95, "purity {purity}");
    }

    #[test]
    fn sffms_errors_spread_wider_on_a_high_variance_trajectory() {
        let spread_of = |linear_std: f64| {
            let config = TrajectoryConfig {
                duration_s: 30.0,
                regime: MotionRegime::Smooth {
                    linear_std_mps: linear_std,
                    angular_std_rps: 0.02,
                    bandwidth_hz: 0.5,
                },
                ..TrajectoryConfig::default()
            };
            let trajectory = generate_trajectory(13, &config).unwrap();
            let stride = trajectory.image_stride();
            let deltas: Vec<[f64; 6]> = (0..trajectory.frame_count() - 1)
                .map(|f| pose_delta(trajectory.pose(f * stride), trajectory.pose((f + 1) * stride)))
                .collect();
            let codebook = kmeans_fit(&deltas, 20, 0).unwrap();
            let errors: Vec<f64> = deltas
                .iter()
                .map(|d| sffms_encode(d, &codebook).1)
                .collect();
            let mean = errors.iter().sum::<f64>() / errors.len() as f64;
            (errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>()
                / errors.len() as f64)
                .sqrt()
        };
        let low = spread_of(0.05);
        let high = spread_of(0.6);
        assert!(
            low < high,
            "error spread should grow with motion variance, got {low} vs {high}"
        );
    }
}
