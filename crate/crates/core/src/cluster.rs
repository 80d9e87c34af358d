//! K-means clustering of patch descriptors.
//!
//! Descriptors are grouped into `K` clusters; a patch's cluster id becomes
//! the one-hot condition label for the network. Fitting uses k-means++
//! seeding followed by Lloyd iterations and is bitwise deterministic for a
//! fixed seed: assignment scans centroids in ascending index order (ties go
//! to the lowest index), accumulation is sequential, and clusters that lose
//! all members are reseeded to the point currently worst represented by its
//! assigned centroid.

use crate::rng::SeededRng;
use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use thiserror::Error;

/// Errors from fitting or querying a cluster model.
#[derive(Debug, Error)]
pub enum ClusterError {
    /// No descriptors were supplied.
    #[error("cannot fit clusters on an empty descriptor set")]
    EmptyInput,
    /// `k` must be at least 1.
    #[error("cluster count must be at least 1")]
    ZeroK,
    /// Fewer samples than clusters.
    #[error("{samples} samples cannot support {k} clusters")]
    TooFewSamples { samples: usize, k: usize },
    /// A descriptor's length does not match the model dimension.
    #[error("descriptor length {got} does not match model dimension {expected}")]
    LengthMismatch { expected: usize, got: usize },
    /// A label is outside `0..k`.
    #[error("label {label} out of range for {k} clusters")]
    LabelOutOfRange { label: usize, k: usize },
}

/// Fitted cluster centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    /// One centroid per row, `k x dim`.
    pub centroids: Array2<f64>,
    /// Seed the model was fitted with, kept for provenance.
    pub seed: u64,
}

impl ClusterModel {
    /// Number of clusters.
    #[must_use]
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    /// Descriptor dimension.
    #[must_use]
    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }
}

/// Per-fit diagnostics.
#[derive(Debug, Clone)]
pub struct KmeansStats {
    /// Lloyd iterations executed.
    pub iterations: usize,
    /// Within-cluster sum of squares after each assignment pass.
    /// Non-increasing from one iteration to the next.
    pub wcss_history: Vec<f64>,
    /// Whether assignments stabilized before the iteration cap.
    pub converged: bool,
}

/// Options for [`kmeans_fit`].
#[derive(Debug, Clone, Copy)]
pub struct KmeansOptions {
    pub k: usize,
    pub seed: u64,
    /// Upper bound on Lloyd iterations; fitting usually converges earlier.
    pub max_iterations: usize,
}

impl KmeansOptions {
    #[must_use]
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iterations: 100,
        }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid, lowest index winning ties.
fn nearest_centroid(centroids: &Array2<f64>, x: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.outer_iter().enumerate() {
        let d = squared_distance(c.as_slice().expect("row contiguous"), x);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    (best, best_d)
}

/// k-means++ seeding: the first centroid is uniform, each further centroid
/// is drawn proportionally to the squared distance from the nearest chosen
/// one. Falls back to a uniform draw when all remaining distances are zero.
fn seed_centroids(data: ArrayView2<'_, f64>, k: usize, rng: &mut SeededRng) -> Array2<f64> {
    let (n, dim) = data.dim();
    let mut centroids = Array2::zeros((k, dim));
    let first = rng.index(n);
    centroids.row_mut(0).assign(&data.row(first));

    let mut dist2: Vec<f64> = (0..n)
        .map(|i| squared_distance(data.row(i).as_slice().unwrap(), data.row(first).as_slice().unwrap()))
        .collect();

    for c in 1..k {
        let total: f64 = dist2.iter().sum();
        let chosen = if total > 0.0 {
            let r = rng.uniform() * total;
            let mut cumulative = 0.0;
            let mut pick = n - 1;
            for (i, &d) in dist2.iter().enumerate() {
                cumulative += d;
                if cumulative > r {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.index(n)
        };
        centroids.row_mut(c).assign(&data.row(chosen));
        let chosen_row = data.row(chosen);
        for (i, d) in dist2.iter_mut().enumerate() {
            let dc = squared_distance(data.row(i).as_slice().unwrap(), chosen_row.as_slice().unwrap());
            if dc < *d {
                *d = dc;
            }
        }
    }
    centroids
}

/// Fits `k` clusters to the rows of `data`.
pub fn kmeans_fit(data: ArrayView2<'_, f64>, options: KmeansOptions) -> Result<ClusterModel, ClusterError> {
    kmeans_fit_with_stats(data, options).map(|(model, _)| model)
}

/// Fits clusters and returns iteration diagnostics alongside the model.
pub fn kmeans_fit_with_stats(
    data: ArrayView2<'_, f64>,
    options: KmeansOptions,
) -> Result<(ClusterModel, KmeansStats), ClusterError> {
    let (n, _dim) = data.dim();
    if n == 0 {
        return Err(ClusterError::EmptyInput);
    }
    if options.k == 0 {
        return Err(ClusterError::ZeroK);
    }
    if n < options.k {
        return Err(ClusterError::TooFewSamples { samples: n, k: options.k });
    }

    let mut rng = SeededRng::new(options.seed);
    let mut centroids = seed_centroids(data, options.k, &mut rng);
    let mut assignments: Vec<usize> = vec![usize::MAX; n];
    let mut stats = KmeansStats {
        iterations: 0,
        wcss_history: Vec::new(),
        converged: false,
    };

    for _ in 0..options.max_iterations {
        stats.iterations += 1;

        // Assignment pass: index-preserving parallel map, so the result is
        // identical for any thread count.
        let assigned: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .map(|i| nearest_centroid(&centroids, data.row(i).as_slice().unwrap()))
            .collect();
        let wcss: f64 = assigned.iter().map(|&(_, d)| d).sum();
        stats.wcss_history.push(wcss);
        let new_assignments: Vec<usize> = assigned.iter().map(|&(a, _)| a).collect();

        if new_assignments == assignments {
            stats.converged = true;
            break;
        }
        assignments = new_assignments;

        // Update pass: sequential accumulation in sample order.
        let mut sums = Array2::<f64>::zeros(centroids.dim());
        let mut counts = vec![0usize; options.k];
        for (i, &a) in assignments.iter().enumerate() {
            let mut row = sums.row_mut(a);
            row += &data.row(i);
            counts[a] += 1;
        }

        // Reseed empty clusters to the points farthest from their own
        // assigned centroids (ascending cluster index, each point used once).
        let mut taken = vec![false; n];
        for c in 0..options.k {
            if counts[c] > 0 {
                let count = counts[c] as f64;
                let mut row = centroids.row_mut(c);
                row.assign(&sums.row(c));
                row.mapv_inplace(|v| v / count);
            } else {
                let mut worst = 0;
                let mut worst_d = -1.0;
                for (i, &(_, d)) in assigned.iter().enumerate() {
                    if !taken[i] && d > worst_d {
                        worst_d = d;
                        worst = i;
                    }
                }
                taken[worst] = true;
                centroids.row_mut(c).assign(&data.row(worst));
            }
        }
    }

    Ok((
        ClusterModel {
            centroids,
            seed: options.seed,
        },
        stats,
    ))
}

/// Nearest-centroid label for a descriptor; ties go to the lowest index.
pub fn assign_label(model: &ClusterModel, descriptor: &[f64]) -> Result<usize, ClusterError> {
    if descriptor.len() != model.dim() {
        return Err(ClusterError::LengthMismatch {
            expected: model.dim(),
            got: descriptor.len(),
        });
    }
    Ok(nearest_centroid(&model.centroids, descriptor).0)
}

/// One-hot encoding of a label over `k` classes.
pub fn one_hot(label: usize, k: usize) -> Result<Vec<f64>, ClusterError> {
    if label >= k {
        return Err(ClusterError::LabelOutOfRange { label, k });
    }
    let mut v = vec![0.0; k];
    v[label] = 1.0;
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    /// Three tight, well-separated 2-D blobs of 30 points each.
    fn blob_data() -> Array2<f64> {
        let mut rng = crate::rng::SeededRng::new(500);
        let centers = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)];
        let mut rows = Vec::new();
        for &(cx, cy) in &centers {
            for _ in 0..30 {
                rows.push([cx + 0.3 * rng.uniform_symmetric(), cy + 0.3 * rng.uniform_symmetric()]);
            }
        }
        Array2::from_shape_vec((90, 2), rows.into_iter().flatten().collect()).unwrap()
    }

    #[test]
    fn recovers_separated_blobs() {
        let data = blob_data();
        let (model, stats) = kmeans_fit_with_stats(data.view(), KmeansOptions::new(3, 9)).unwrap();
        assert!(stats.converged);
        let mut found = [false; 3];
        for c in model.centroids.outer_iter() {
            for (i, &(cx, cy)) in [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)].iter().enumerate() {
                if (c[0] - cx).abs() < 0.5 && (c[1] - cy).abs() < 0.5 {
                    found[i] = true;
                }
            }
        }
        assert_eq!(found, [true, true, true], "centroids {:?}", model.centroids);
    }

    #[test]
    fn wcss_never_increases() {
        let data = blob_data();
        let (_, stats) = kmeans_fit_with_stats(data.view(), KmeansOptions::new(5, 123)).unwrap();
        for pair in stats.wcss_history.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-9,
                "WCSS increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn fit_is_deterministic_per_seed() {
        let data = blob_data();
        let a = kmeans_fit(data.view(), KmeansOptions::new(4, 77)).unwrap();
        let b = kmeans_fit(data.view(), KmeansOptions::new(4, 77)).unwrap();
        assert_eq!(a.centroids, b.centroids);
        let c = kmeans_fit(data.view(), KmeansOptions::new(4, 78)).unwrap();
        assert_ne!(a.centroids, c.centroids);
    }

    #[test]
    fn duplicate_points_still_terminate() {
        // Two distinct positions but three clusters: one cluster can never
        // win any points, and fitting must still terminate cleanly.
        let mut rows = Vec::new();
        for i in 0..12 {
            let x = if i % 2 == 0 { 0.0 } else { 5.0 };
            rows.push([x, 0.0]);
        }
        let data = Array2::from_shape_vec((12, 2), rows.into_iter().flatten().collect()).unwrap();
        let (model, stats) = kmeans_fit_with_stats(data.view(), KmeansOptions::new(3, 1)).unwrap();
        assert_eq!(model.k(), 3);
        assert!(stats.iterations <= 100);
    }

    #[test]
    fn input_validation() {
        let empty = Array2::<f64>::zeros((0, 4));
        assert!(matches!(
            kmeans_fit(empty.view(), KmeansOptions::new(2, 0)),
            Err(ClusterError::EmptyInput)
        ));
        let data = Array2::<f64>::zeros((3, 4));
        assert!(matches!(
            kmeans_fit(data.view(), KmeansOptions::new(0, 0)),
            Err(ClusterError::ZeroK)
        ));
        assert!(matches!(
            kmeans_fit(data.view(), KmeansOptions::new(5, 0)),
            Err(ClusterError::TooFewSamples { samples: 3, k: 5 })
        ));
    }

    #[test]
    fn assignment_prefers_lowest_index_on_ties() {
        let model = ClusterModel {
            centroids: Array2::from_shape_vec((2, 1), vec![1.0, 3.0]).unwrap(),
            seed: 0,
        };
        // 2.0 is equidistant from both centroids.
        assert_eq!(assign_label(&model, &[2.0]).unwrap(), 0);
        assert_eq!(assign_label(&model, &[2.5]).unwrap(), 1);
        assert!(matches!(
            assign_label(&model, &[1.0, 2.0]),
            Err(ClusterError::LengthMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn one_hot_layout() {
        assert_eq!(one_hot(2, 4).unwrap(), vec![0.0, 0.0, 1.0, 0.0]);
        assert!(matches!(
            one_hot(4, 4),
            Err(ClusterError::LabelOutOfRange { label: 4, k: 4 })
        ));
    }
}
