//! Final depth estimation by Gibbs sampling with the weights held fixed.

use crate::error::{LidarError, Result};
use crate::fields::{DepthField, WeightField};
use crate::gibbs::{checkerboard_sweep, Profiles, StreamKeys};
use crate::irf::IrfBank;
use crate::real::Real;
use crate::rng::Stream;
use crate::scene::SceneCube;
use crate::xcorr::xcorr_depth;

/// Depth map with the retained-sample marginals behind it.
#[derive(Debug, Clone)]
pub struct DepthEstimate {
    /// Per-pixel mode of the retained samples (ties to the smaller bin).
    pub depth: DepthField,
    /// Row-major `N x K` sample counts over `[t_min, t_max]`.
    pub counts: Vec<u32>,
    pub k_len: usize,
    pub t_min: usize,
    pub retained: usize,
}

impl DepthEstimate {
    pub fn marginal_counts(&self, n: usize) -> &[u32] {
        &self.counts[n * self.k_len..(n + 1) * self.k_len]
    }

    /// Empirical marginal of pixel `n`.
    pub fn marginal(&self, n: usize) -> Vec<f64> {
        let total = self.retained as f64;
        self.marginal_counts(n).iter().map(|&c| c as f64 / total).collect()
    }

    /// Shannon entropy (nats) of each pixel's empirical marginal.
    pub fn entropy_map(&self) -> Vec<f64> {
        (0..self.depth.dims().len())
            .map(|n| {
                self.marginal(n)
                    .into_iter()
                    .filter(|p| *p > 0.0)
                    .map(|p| -p * p.ln())
                    .sum()
            })
            .collect()
    }
}

/// Runs `iters` checkerboard sweeps from the matched-filter depths, discards
/// the first `burnin` and returns per-pixel modes and marginals.
pub fn estimate_depth<F: Real>(
    scene: &SceneCube,
    bank: &IrfBank<F>,
    weights: &WeightField<F>,
    epsilon: F,
    iters: usize,
    burnin: usize,
    seed: u64,
) -> Result<DepthEstimate> {
    if iters <= burnin {
        return Err(LidarError::InvalidParameter("depth sampler needs more iterations than burn-in".into()));
    }
    if weights.n_pixels() != scene.n_pixels() {
        return Err(LidarError::SizeMismatch("weights and scene differ in pixel count".into()));
    }
    weights.check_simplex()?;
    let profiles = Profiles::compute(scene, weights, bank);
    let k_len = profiles.k_len();
    let t_min = bank.t_min();
    let mut depth = xcorr_depth(scene, bank);
    let dims = depth.dims();
    let keys = StreamKeys { seed, purpose: Stream::FinalDepth, pixel_keys: None };
    let mut counts = vec![0u32; dims.len() * k_len];
    for it in 0..iters {
        checkerboard_sweep(&profiles, depth.as_mut_slice(), dims, epsilon, keys, it as u64);
        if it >= burnin {
            for (n, &t) in depth.as_slice().iter().enumerate() {
                counts[n * k_len + (t - t_min)] += 1;
            }
        }
    }
    let modes = (0..dims.len())
        .map(|n| {
            let row = &counts[n * k_len..(n + 1) * k_len];
            let mut best = 0;
            for (i, &c) in row.iter().enumerate() {
                if c > row[best] {
                    best = i;
                }
            }
            t_min + best
        })
        .collect();
    Ok(DepthEstimate { depth: DepthField::new(dims, modes)?, counts, k_len, t_min, retained: iters - burnin })
}

/// Empirical CDF of absolute depth errors: `(threshold, fraction)` for every
/// threshold from 0 to the largest error.
pub fn depth_error_cdf(t_hat: &DepthField, t_truth: &DepthField) -> Result<Vec<(usize, f64)>> {
    if t_hat.dims() != t_truth.dims() {
        return Err(LidarError::SizeMismatch("depth maps differ in shape".into()));
    }
    let errors: Vec<usize> = t_hat.as_slice().iter().zip(t_truth.as_slice()).map(|(a, b)| a.abs_diff(*b)).collect();
    let n = errors.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let max = errors.iter().copied().max().unwrap_or(0);
    let mut hist = vec![0usize; max + 1];
    errors.iter().for_each(|&e| hist[e] += 1);
    let mut acc = 0;
    Ok(hist
        .into_iter()
        .enumerate()
        .map(|(h, c)| {
            acc += c;
            (h, acc as f64 / n as f64)
        })
        .collect())
}

/// CDF value at `threshold` (1 beyond the table).
pub fn cdf_at(cdf: &[(usize, f64)], threshold: usize) -> f64 {
    cdf.get(threshold).map_or(1.0, |p| p.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ImageDims;

    #[test]
    fn noiseless_delta_is_exact_with_zero_width_marginals() {
        let bank = IrfBank::new(vec![vec![1.0]], 30, 3, 25).unwrap();
        let dims = ImageDims::new(2, 2);
        let lists = vec![vec![5u32; 3], vec![9; 2], vec![20; 4], vec![12]];
        let scene = SceneCube::from_toa_lists(dims, 30, &lists).unwrap();
        let w = WeightField::constant(dims, 1, 1.0);
        let est = estimate_depth(&scene, &bank, &w, 0.05, 60, 10, 1).unwrap();
        assert_eq!(est.depth.as_slice(), &[5, 9, 20, 12]);
        assert!(est.entropy_map().iter().all(|h| *h == 0.0));
    }

    #[test]
    fn empty_pixel_follows_clamped_neighbours() {
        let bank = IrfBank::new(vec![vec![1.0]], 30, 3, 25).unwrap();
        let dims = ImageDims::new(3, 3);
        let mut lists = vec![vec![14u32; 30]; 9];
        lists[4].clear();
        let scene = SceneCube::from_toa_lists(dims, 30, &lists).unwrap();
        let w = WeightField::constant(dims, 1, 0.9);
        let est = estimate_depth(&scene, &bank, &w, 2.0, 300, 50, 5).unwrap();
        assert_eq!(est.depth.get(4), 14);
    }

    #[test]
    fn cdf_examples() {
        let dims = ImageDims::new(1, 4);
        let truth = DepthField::new(dims, vec![10, 10, 10, 10]).unwrap();
        let cdf = depth_error_cdf(&truth, &truth).unwrap();
        assert_eq!(cdf, vec![(0, 1.0)]);
        let off = DepthField::new(dims, vec![11, 10, 9, 10]).unwrap();
        let cdf = depth_error_cdf(&off, &truth).unwrap();
        assert_eq!(cdf, vec![(0, 0.5), (1, 1.0)]);
        assert!(depth_error_cdf(&off, &DepthField::constant(ImageDims::new(2, 2), 3)).is_err());
    }
}
