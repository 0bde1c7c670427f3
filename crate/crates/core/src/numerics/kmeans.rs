//! Lloyd k-means with k-means++ seeding and the elbow rule for choosing k.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Spherical k-means: points and centroids are unit-normalized and
    /// compared by squared chord length `2 - 2 cos`.
    Cosine,
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub centroids: Vec<Vec<f64>>,
    pub metric: Metric,
    /// Within-cluster sum of squares on the training points.
    pub inertia: f64,
    /// Inertia after each assignment pass.
    #[serde(skip)]
    pub history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit-normalizes `v`; the zero vector is returned unchanged.
pub fn normalize(v: &[f64]) -> Vec<f64> {
    let n = dot(v, v).sqrt();
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, p);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

impl KMeansModel {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }

    /// Index of the nearest centroid, lowest index on ties. Under the cosine
    /// metric a zero vector has no direction; it goes to the centroid with the
    /// largest raw dot product, which is centroid 0 for an all-zero input.
    pub fn assign(&self, p: &[f64]) -> Result<usize> {
        if p.len() != self.dim() {
            return Err(invalid(format!("point has dim {} but model has {}", p.len(), self.dim())));
        }
        Ok(match self.metric {
            Metric::Euclidean => nearest(&self.centroids, p).0,
            Metric::Cosine => {
                let u = normalize(p);
                if dot(&u, &u) == 0.0 {
                    let mut best = (0, f64::NEG_INFINITY);
                    for (j, c) in self.centroids.iter().enumerate() {
                        let s = dot(c, p);
                        if s > best.1 {
                            best = (j, s);
                        }
                    }
                    best.0
                } else {
                    nearest(&self.centroids, &u).0
                }
            }
        })
    }
}

fn prepare(points: &[Vec<f64>], metric: Metric) -> Vec<Vec<f64>> {
    match metric {
        Metric::Cosine => points.iter().map(|p| normalize(p)).collect(),
        Metric::Euclidean => points.to_vec(),
    }
}

fn seed_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = d2.iter().rposition(|d| *d > 0.0).unwrap_or(0);
            for (i, d) in d2.iter().enumerate() {
                if r < *d {
                    idx = i;
                    break;
                }
                r -= d;
            }
            idx
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Fits k-means with seeded k-means++ initialization and Lloyd iterations.
/// Clusters that empty out are re-seeded at the point farthest from its
/// current centroid.
pub fn kmeans_fit(points: &[Vec<f64>], k: usize, metric: Metric, seed: u64, max_iters: usize) -> Result<KMeansModel> {
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if points.len() < k {
        return Err(invalid(format!("{} points cannot form {k} clusters", points.len())));
    }
    let dim = points[0].len();
    if dim == 0 || points.iter().any(|p| p.len() != dim) {
        return Err(invalid("points must share a non-zero dimension"));
    }
    let pts = prepare(points, metric);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(&pts, k, &mut rng);
    let mut labels = vec![usize::MAX; pts.len()];
    let mut history = Vec::new();

    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        let mut inertia = 0.0;
        let mut dists = vec![0.0; pts.len()];
        for (i, p) in pts.iter().enumerate() {
            let (j, d) = nearest(&centroids, p);
            if labels[i] != j {
                labels[i] = j;
                changed = true;
            }
            dists[i] = d;
            inertia += d;
        }

        // re-seed empty clusters with the currently worst-served point
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|l| counts[*l] += 1);
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..pts.len())
                    .filter(|i| counts[labels[*i]] > 1)
                    .max_by(|a, b| dists[*a].total_cmp(&dists[*b]).then(b.cmp(a)));
                if let Some(i) = far {
                    counts[labels[i]] -= 1;
                    inertia -= dists[i];
                    dists[i] = 0.0;
                    labels[i] = j;
                    counts[j] = 1;
                    centroids[j] = pts[i].clone();
                    changed = true;
                }
            }
        }
        history.push(inertia);
        if !changed && history.len() > 1 {
            break;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        for (p, l) in pts.iter().zip(&labels) {
            sums[*l].iter_mut().zip(p).for_each(|(s, x)| *s += x);
        }
        for (j, s) in sums.into_iter().enumerate() {
            if counts[j] == 0 {
                continue;
            }
            let m: Vec<f64> = s.iter().map(|x| x / counts[j] as f64).collect();
            centroids[j] = match metric {
                Metric::Euclidean => m,
                // an antipodal cluster has no mean direction; keep the old one
                Metric::Cosine if dot(&m, &m) == 0.0 => continue,
                Metric::Cosine => normalize(&m),
            };
        }
    }

    let inertia = pts.iter().map(|p| nearest(&centroids, p).1).sum();
    Ok(KMeansModel { centroids, metric, inertia, history })
}

/// Index of the point with the largest perpendicular distance to the chord
/// through the first and last points of `curve`. Since the chord is fixed,
/// this is the largest absolute vertical residual; ties go to the earliest.
pub fn elbow_from_curve(curve: &[f64]) -> usize {
    let n = curve.len();
    if n <= 2 {
        return 0;
    }
    let (a, b) = (curve[0], curve[n - 1]);
    let scale = a.abs().max(b.abs()).max(1e-300);
    let mut best = (0, 0.0);
    for (i, w) in curve.iter().enumerate() {
        let chord = a + (b - a) * i as f64 / (n - 1) as f64;
        let d = (w - chord).abs();
        if d > best.1 + 1e-12 * scale {
            best = (i, d);
        }
    }
    best.0
}

/// Elbow-rule choice of k over `[kmin, kmax]`.
pub fn elbow_select_k(points: &[Vec<f64>], kmin: usize, kmax: usize, metric: Metric, seed: u64) -> Result<usize> {
    if kmin == 0 || kmax < kmin {
        return Err(invalid(format!("bad k range [{kmin}, {kmax}]")));
    }
    if points.len() < kmax {
        return Err(invalid(format!("{} points are too few for kmax = {kmax}", points.len())));
    }
    if kmin == kmax {
        return Ok(kmin);
    }
    let curve = wcss_curve(points, kmin, kmax, metric, seed)?;
    Ok(kmin + elbow_from_curve(&curve))
}

/// Within-cluster sum of squares for every k in `[kmin, kmax]`.
pub fn wcss_curve(points: &[Vec<f64>], kmin: usize, kmax: usize, metric: Metric, seed: u64) -> Result<Vec<f64>> {
    (kmin..=kmax).map(|k| kmeans_fit(points, k, metric, seed, 100).map(|m| m.inertia)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn blobs(centers: &[Vec<f64>], per: usize, sd: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sd).unwrap();
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for (j, c) in centers.iter().enumerate() {
            for _ in 0..per {
                pts.push(c.iter().map(|x| x + noise.sample(&mut rng)).collect());
                labels.push(j);
            }
        }
        (pts, labels)
    }

    fn axes() -> Vec<Vec<f64>> {
        vec![vec![10.0, 0.0, 0.0], vec![0.0, 10.0, 0.0], vec![0.0, 0.0, 10.0]]
    }

    #[test]
    fn k1_is_the_mean() {
        let pts = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![1.0, 3.0]];
        let m = kmeans_fit(&pts, 1, Metric::Euclidean, 0, 10).unwrap();
        assert!(sq_dist(&m.centroids[0], &[1.0, 1.0]) < 1e-24);

        let m = kmeans_fit(&[vec![3.0, 4.0], vec![3.0, 4.0]], 1, Metric::Cosine, 0, 10).unwrap();
        assert!(sq_dist(&m.centroids[0], &[0.6, 0.8]) < 1e-24);
    }

    #[test]
    fn duplicates_have_zero_inertia() {
        let pts = vec![vec![1.0, 2.0]; 5];
        assert_eq!(kmeans_fit(&pts, 1, Metric::Euclidean, 0, 10).unwrap().inertia, 0.0);
        assert!(kmeans_fit(&pts[..2], 3, Metric::Euclidean, 0, 10).is_err());
    }

    #[test]
    fn separates_blobs() {
        for metric in [Metric::Euclidean, Metric::Cosine] {
            let (pts, truth) = blobs(&axes(), 20, 0.5, 11);
            let m = kmeans_fit(&pts, 3, metric, 4, 100).unwrap();
            let mut seen = std::collections::BTreeMap::new();
            for (p, t) in pts.iter().zip(&truth) {
                let c = m.assign(p).unwrap();
                assert_eq!(*seen.entry(*t).or_insert(c), c);
            }
            let distinct: std::collections::BTreeSet<_> = seen.values().collect();
            assert_eq!(distinct.len(), 3);
        }
    }

    #[test]
    fn inertia_never_increases() {
        let (pts, _) = blobs(&axes(), 30, 4.0, 2);
        for metric in [Metric::Euclidean, Metric::Cosine] {
            for seed in 0..5 {
                let m = kmeans_fit(&pts, 5, metric, seed, 50).unwrap();
                for w in m.history.windows(2) {
                    assert!(w[1] <= w[0] + 1e-9, "{:?}", m.history);
                }
            }
        }
    }

    #[test]
    fn assign_rules() {
        let m = KMeansModel {
            centroids: vec![vec![0.0, 0.0], vec![5.0, 5.0], vec![2.0, 0.0]],
            metric: Metric::Euclidean,
            inertia: 0.0,
            history: vec![],
        };
        assert_eq!(m.assign(&[5.0, 5.0]).unwrap(), 1);
        assert_eq!(m.assign(&[1.0, 0.0]).unwrap(), 0);
        assert!(m.assign(&[1.0]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let p = [rng.random_range(-1.0..6.0), rng.random_range(-1.0..6.0)];
            let oracle = (0..3)
                .min_by(|a, b| sq_dist(&m.centroids[*a], &p).total_cmp(&sq_dist(&m.centroids[*b], &p)))
                .unwrap();
            assert_eq!(m.assign(&p).unwrap(), oracle);
        }

        let cos = KMeansModel { metric: Metric::Cosine, centroids: vec![vec![1.0, 0.0], vec![0.0, 1.0]], ..m };
        assert_eq!(cos.assign(&[0.0, 0.0]).unwrap(), 0);
        assert_eq!(cos.assign(&[0.1, 3.0]).unwrap(), 1);
    }

    #[test]
    fn elbow_cases() {
        let (pts, _) = blobs(&axes(), 20, 0.5, 1);
        assert_eq!(elbow_select_k(&pts, 4, 4, Metric::Euclidean, 0).unwrap(), 4);
        assert_eq!(elbow_select_k(&pts, 2, 8, Metric::Euclidean, 0).unwrap(), 3);
        assert_eq!(elbow_select_k(&pts, 2, 8, Metric::Cosine, 0).unwrap(), 3);
        assert_eq!(elbow_from_curve(&[10.0, 8.0, 6.0, 4.0, 2.0]), 0);
        assert_eq!(elbow_from_curve(&[10.0, 2.0, 1.5, 1.0, 0.5]), 1);
        assert!(elbow_select_k(&pts[..5], 2, 8, Metric::Euclidean, 0).is_err());
    }
}
