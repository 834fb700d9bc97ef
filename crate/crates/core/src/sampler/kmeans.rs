//! Lloyd's k-means with k-means++ seeding and snap-to-member representatives.

use nalgebra::{Point3, Vector3};
use rand::Rng;

use super::SamplerError;

pub const MAX_ITERATIONS: usize = 100;
pub const CONVERGENCE_TOL: f64 = 1e-6;
/// Independent seedings tried per call; the lowest SSE wins.
pub const RESTARTS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<Point3<f64>>,
    /// Cluster index of every input point.
    pub labels: Vec<usize>,
    /// Index of the member nearest each centroid.
    pub representatives: Vec<usize>,
    /// Within-cluster sum of squared distances to the centroids.
    pub sse: f64,
}

fn nearest(p: &Point3<f64>, centroids: &[Point3<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, q) in centroids.iter().enumerate() {
        let d = (p - q).norm_squared();
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_plus_plus<R: Rng + ?Sized>(points: &[Point3<f64>], k: usize, rng: &mut R) -> Vec<Point3<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| (p - centroids[0]).norm_squared()).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = d2.iter().rposition(|&d| d > 0.0).unwrap();
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && r < d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick]);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min((p - points[pick]).norm_squared());
        }
    }
    centroids
}

/// Assign points and repair empty clusters by moving in the point farthest
/// from its own centroid (taken from a cluster with more than one member).
fn assign(points: &[Point3<f64>], centroids: &mut [Point3<f64>], labels: &mut [usize]) {
    let k = centroids.len();
    for (l, p) in labels.iter_mut().zip(points) {
        *l = nearest(p, centroids).0;
    }
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else { return };
        let far = (0..points.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .max_by(|&a, &b| {
                let da = (points[a] - centroids[labels[a]]).norm_squared();
                let db = (points[b] - centroids[labels[b]]).norm_squared();
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("k <= number of distinct points");
        labels[far] = empty;
        centroids[empty] = points[far];
    }
}

fn lloyd(points: &[Point3<f64>], mut centroids: Vec<Point3<f64>>) -> (Vec<Point3<f64>>, Vec<usize>, f64) {
    let k = centroids.len();
    let mut labels = vec![0; points.len()];
    for _ in 0..MAX_ITERATIONS {
        assign(points, &mut centroids, &mut labels);
        let mut sums = vec![Vector3::zeros(); k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            sums[l] += p.coords;
            counts[l] += 1;
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            let next = Point3::from(sums[c] / counts[c] as f64);
            shift = shift.max((next - centroids[c]).norm());
            centroids[c] = next;
        }
        if shift < CONVERGENCE_TOL {
            break;
        }
    }
    assign(points, &mut centroids, &mut labels);
    let sse = points.iter().zip(&labels).map(|(p, &l)| (p - centroids[l]).norm_squared()).sum();
    (centroids, labels, sse)
}

/// Cluster `points` into `k` groups. Points should be distinct.
pub fn kmeans_points<R: Rng + ?Sized>(
    points: &[Point3<f64>],
    k: usize,
    rng: &mut R,
) -> Result<KMeansResult, SamplerError> {
    if k == 0 || k > points.len() {
        return Err(SamplerError::TooFewCells { k, available: points.len() });
    }
    let mut best: Option<(Vec<Point3<f64>>, Vec<usize>, f64)> = None;
    for _ in 0..RESTARTS {
        let run = lloyd(points, seed_plus_plus(points, k, rng));
        if best.as_ref().is_none_or(|b| run.2 < b.2) {
            best = Some(run);
        }
    }
    let (centroids, labels, sse) = best.unwrap();
    let representatives = (0..k)
        .map(|c| {
            (0..points.len())
                .filter(|&i| labels[i] == c)
                .min_by(|&a, &b| {
                    (points[a] - centroids[c]).norm_squared().total_cmp(&(points[b] - centroids[c]).norm_squared())
                })
                .unwrap()
        })
        .collect();
    Ok(KMeansResult { centroids, labels, representatives, sse })
}
