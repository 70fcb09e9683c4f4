use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_LLOYD_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub assignments: Vec<usize>,
    /// Inertia after each assignment pass; non-increasing.
    pub inertia_history: Vec<f64>,
}

impl ClusterModel {
    /// Index of the nearest centroid; ties go to the lower index.
    pub fn assign(&self, point: &[f64]) -> usize {
        nearest(&self.centroids, point).0
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, m) in centroids.iter().enumerate() {
        let d = sq_dist(m, p);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations. A cluster that loses all
/// its points keeps its previous centroid.
pub fn kmeans_cluster(points: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterModel> {
    if points.is_empty() {
        return Err(Error::EmptyData);
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: points.iter().map(Vec::len).find(|&l| l != dim).unwrap_or(dim),
        });
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut distinct: Vec<&Vec<f64>> = points.iter().collect();
    distinct.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    distinct.dedup();
    if k == 0 || k > distinct.len() {
        return Err(Error::KTooLarge {
            k,
            distinct: distinct.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut r = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 {
                pick = Some(i);
                if r < w {
                    break;
                }
                r -= w;
            }
        }
        // total > 0 since fewer than `distinct.len()` centroids are placed
        let c = points[pick.expect("a point away from all centroids")].clone();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &c));
        }
        centroids.push(c);
    }

    let mut assignments = vec![usize::MAX; points.len()];
    let mut inertia_history = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(&centroids, p);
            inertia += d;
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
        }
        inertia_history.push(inertia);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignments) {
            counts[c] += 1;
            sums[c].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let inertia = points
        .iter()
        .zip(&assignments)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum();
    Ok(ClusterModel {
        k,
        centroids,
        inertia,
        assignments,
        inertia_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> Vec<Vec<f64>> {
        let mut pts = Vec::new();
        for i in 0..10 {
            let e = f64::from(i) * 0.01;
            pts.push(vec![e, e]);
            pts.push(vec![10.0 + e, 10.0 - e]);
        }
        pts
    }

    #[test]
    fn separates_two_blobs() {
        let m = kmeans_cluster(&blobs(), 2, 3).unwrap();
        for pair in m.assignments.chunks(2) {
            assert_ne!(pair[0], pair[1]);
        }
        assert!(m.inertia_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(kmeans_cluster(&blobs(), 3, 9).unwrap(), kmeans_cluster(&blobs(), 3, 9).unwrap());
    }

    #[test]
    fn too_many_clusters() {
        let pts = vec![vec![1.0], vec![1.0], vec![2.0]];
        assert!(matches!(
            kmeans_cluster(&pts, 3, 0),
            Err(Error::KTooLarge { k: 3, distinct: 2 })
        ));
    }
}
