//! Pixel grouping for the cluster-wise Dirichlet prior: a coarse weight
//! estimate, one patch per pixel, and k-means on the patches.

use rand::Rng;
use rayon::prelude::*;

use crate::config::HyperParams;
use crate::error::{LidarError, Result};
use crate::fields::WeightField;
use crate::irf::IrfBank;
use crate::priors::PriorModel;
use crate::real::Real;
use crate::rng::{stream, Stream};
use crate::scene::SceneCube;
use crate::sem::{run_sem_with, SemOptions};

/// `n_coarse` iterations of the weak-Dirichlet model from the default
/// interior start, returning the last iterate.
pub fn coarse_weight_estimate<F: Real>(
    scene: &SceneCube,
    bank: &IrfBank<F>,
    hyper: &HyperParams,
    n_coarse: usize,
    seed: u64,
) -> Result<WeightField<F>> {
    let w0 = WeightField::interior_start(scene.dims(), bank.bands());
    if n_coarse == 0 {
        return Ok(w0);
    }
    let prior = PriorModel::w_dirichlet(F::lit(hyper.kappa), bank.bands());
    let options = SemOptions { truncate: Some(n_coarse), ..SemOptions::default() };
    Ok(run_sem_with(scene, bank, prior, hyper, w0, seed, &options)?.weights)
}

/// One vector per pixel: the weights of its `patch x patch` neighbourhood in
/// row-major order, edges replicated.
pub fn extract_patches<F: Real>(weights: &WeightField<F>, patch: usize) -> Result<Vec<Vec<F>>> {
    if patch == 0 || patch.is_multiple_of(2) {
        return Err(LidarError::InvalidParameter(format!("patch side must be odd, got {patch}")));
    }
    let dims = weights.dims();
    let half = (patch / 2) as isize;
    let clamp = |v: isize, len: usize| v.clamp(0, len as isize - 1) as usize;
    Ok((0..dims.len())
        .map(|n| {
            let (r, c) = dims.coords(n);
            let mut v = Vec::with_capacity(patch * patch * weights.bands());
            for dr in -half..=half {
                for dc in -half..=half {
                    let m = dims.index(clamp(r as isize + dr, dims.rows), clamp(c as isize + dc, dims.cols));
                    v.extend_from_slice(weights.pixel(m));
                }
            }
            v
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster of each point, numbered `0..n_clusters` by first appearance.
    pub labels: Vec<usize>,
    pub n_clusters: usize,
    /// Fewer distinct points than requested clusters.
    pub degenerate: bool,
    /// Within-cluster sum of squares after each Lloyd iteration.
    pub wcss: Vec<f64>,
}

fn sq_dist<F: Real>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn nearest<F: Real>(p: &[F], centers: &[Vec<F>]) -> (usize, F) {
    let mut best = (0, F::infinity());
    for (j, c) in centers.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Lloyd's algorithm with k-means++ seeding (at most 100 iterations).
pub fn kmeans_cluster<F: Real>(points: &[Vec<F>], clusters: usize, seed: u64) -> Result<Clustering> {
    let n = points.len();
    if clusters == 0 || clusters > n {
        return Err(LidarError::InvalidParameter(format!("cannot form {clusters} clusters from {n} points")));
    }
    let mut distinct: Vec<&Vec<F>> = Vec::new();
    for p in points {
        if !distinct.contains(&p) {
            distinct.push(p);
            if distinct.len() >= clusters {
                break;
            }
        }
    }
    let degenerate = distinct.len() < clusters;
    let k = distinct.len();

    // k-means++ seeding
    let mut rng = stream(seed, Stream::KMeans, 0, 0);
    let mut centers: Vec<Vec<F>> = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<F> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: F = d2.iter().copied().sum();
        let pick = if total > F::zero() {
            let u = F::lit(rng.random::<f64>()) * total;
            let mut acc = F::zero();
            let mut idx = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if u < acc && d > F::zero() {
                    idx = i;
                    break;
                }
            }
            if d2[idx] == F::zero() {
                // rounding at the top end: take the last point with mass
                idx = d2.iter().rposition(|d| *d > F::zero()).unwrap_or(idx);
            }
            idx
        } else {
            break;
        };
        centers.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, centers.last().expect("just pushed")));
        }
    }

    let dim = points[0].len();
    let mut labels = vec![usize::MAX; n];
    let mut wcss = Vec::new();
    for _ in 0..100 {
        let assigned: Vec<(usize, F)> = points.par_iter().map(|p| nearest(p, &centers)).collect();
        let changed = assigned.iter().zip(&labels).any(|(a, l)| a.0 != *l);
        labels = assigned.iter().map(|a| a.0).collect();
        // update step
        let mut sums = vec![vec![F::zero(); dim]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, &v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..centers.len() {
            if counts[j] > 0 {
                let c = F::from_count(counts[j] as u64);
                centers[j] = sums[j].iter().map(|&s| s / c).collect();
            }
        }
        // empty clusters restart at the point farthest from its centre
        for j in 0..centers.len() {
            if counts[j] == 0 {
                let far = (0..n)
                    .map(|i| (i, sq_dist(&points[i], &centers[labels[i]])))
                    .fold((0, F::neg_infinity()), |a, b| if b.1 > a.1 { b } else { a })
                    .0;
                counts[labels[far]] -= 1;
                labels[far] = j;
                counts[j] = 1;
                centers[j] = points[far].clone();
            }
        }
        let total: F = points.iter().zip(&labels).map(|(p, &l)| sq_dist(p, &centers[l])).sum();
        wcss.push(total.as_f64());
        if !changed {
            break;
        }
    }

    // relabel by first appearance, dropping unused labels
    let mut map = vec![usize::MAX; centers.len()];
    let mut next = 0;
    for l in labels.iter_mut() {
        if map[*l] == usize::MAX {
            map[*l] = next;
            next += 1;
        }
        *l = map[*l];
    }
    Ok(Clustering { labels, n_clusters: next, degenerate, wcss })
}

/// Coarse estimate, patches and k-means in one call.
pub fn cluster_pixels<F: Real>(scene: &SceneCube, bank: &IrfBank<F>, hyper: &HyperParams, seed: u64) -> Result<Clustering> {
    let coarse = coarse_weight_estimate(scene, bank, hyper, hyper.n_coarse, seed)?;
    let patches = extract_patches(&coarse, hyper.patch)?;
    kmeans_cluster(&patches, hyper.clusters.min(scene.n_pixels()), seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ImageDims;

    #[test]
    fn patch_extraction() {
        let dims = ImageDims::new(3, 3);
        let data: Vec<f64> = (0..18).map(|i| i as f64 * 0.01).collect();
        let w = WeightField::from_vec(dims, 2, data).unwrap();
        let p1 = extract_patches(&w, 1).unwrap();
        for n in 0..9 {
            assert_eq!(p1[n], w.pixel(n));
        }
        let p3 = extract_patches(&w, 3).unwrap();
        let expected: Vec<f64> = (0..9).flat_map(|m| w.pixel(m).to_vec()).collect();
        assert_eq!(p3[4], expected);
        // corner replicates its edge
        assert_eq!(&p3[0][..2], w.pixel(0));
        assert_eq!(&p3[0][2..4], w.pixel(0));
        let c = WeightField::constant(dims, 2, 0.3);
        let pc = extract_patches(&c, 3).unwrap();
        assert!(pc.iter().all(|v| v == &pc[0]));
        assert!(extract_patches(&w, 2).is_err());
    }

    #[test]
    fn separated_blobs_and_monotone_wcss() {
        let mut pts = Vec::new();
        for i in 0..20 {
            let j = (i as f64 * 0.37).sin() * 0.1;
            pts.push(vec![j, -j]);
            pts.push(vec![10.0 + j, 10.0 + j * 0.5]);
        }
        let out = kmeans_cluster(&pts, 2, 11).unwrap();
        assert_eq!(out.n_clusters, 2);
        for i in 0..20 {
            assert_eq!(out.labels[2 * i], out.labels[0]);
            assert_eq!(out.labels[2 * i + 1], out.labels[1]);
        }
        assert_ne!(out.labels[0], out.labels[1]);
        for w in out.wcss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        let one = kmeans_cluster(&pts, 1, 3).unwrap();
        assert!(one.labels.iter().all(|l| *l == 0));
    }

    #[test]
    fn degenerate_input_is_flagged() {
        let pts = vec![vec![1.0], vec![1.0], vec![2.0], vec![2.0]];
        let out = kmeans_cluster(&pts, 3, 0).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.n_clusters, 2);
    }
}
