//! Shared machinery of the depth samplers: likelihood profiles, the
//! conditional of one pixel's depth and checkerboard Gibbs sweeps.

use rand::Rng;
use rayon::prelude::*;

use crate::fields::WeightField;
use crate::forward::log_likelihood_profile;
use crate::grid::ImageDims;
use crate::irf::IrfBank;
use crate::priors::add_depth_prior;
use crate::real::Real;
use crate::rng::{stream, Stream};
use crate::scene::SceneCube;

/// Row-major `N x K` table of per-pixel log-likelihood profiles.
#[derive(Debug, Clone)]
pub struct Profiles<F> {
    k_len: usize,
    t_min: usize,
    data: Vec<F>,
}

impl<F: Real> Profiles<F> {
    pub fn compute(scene: &SceneCube, weights: &WeightField<F>, bank: &IrfBank<F>) -> Self {
        let k_len = bank.n_depths();
        let mut data = vec![F::zero(); scene.n_pixels() * k_len];
        data.par_chunks_mut(k_len)
            .enumerate()
            .for_each(|(n, row)| log_likelihood_profile(scene.photons(n), weights.pixel(n), bank, row));
        Self { k_len, t_min: bank.t_min(), data }
    }

    pub fn k_len(&self) -> usize {
        self.k_len
    }

    pub fn t_min(&self) -> usize {
        self.t_min
    }

    pub fn row(&self, n: usize) -> &[F] {
        &self.data[n * self.k_len..(n + 1) * self.k_len]
    }

    /// Conditional logits of pixel `n` given its neighbours' depths.
    pub fn logits(&self, n: usize, depth: &[usize], dims: ImageDims, epsilon: F) -> Vec<F> {
        let mut logits = self.row(n).to_vec();
        add_depth_prior(&mut logits, n, depth, dims, epsilon, self.t_min);
        logits
    }
}

/// Normalised probabilities from logits. A row without any finite logit
/// (no depth can explain the photons) becomes uniform.
pub fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    if !max.is_finite() {
        let u = F::from_count(logits.len() as u64).recip();
        return vec![u; logits.len()];
    }
    let mut p: Vec<F> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: F = p.iter().copied().sum();
    p.iter_mut().for_each(|v| *v /= z);
    p
}

/// Draws an index from unnormalised logits.
pub fn sample_index<F: Real, R: Rng>(logits: &[F], rng: &mut R) -> usize {
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    if !max.is_finite() {
        return rng.random_range(0..logits.len());
    }
    let weights: Vec<F> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: F = weights.iter().copied().sum();
    let u = F::lit(rng.random::<f64>()) * total;
    let mut acc = F::zero();
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // rounding left u at the very top: take the last index with mass
    weights.iter().rposition(|w| *w > F::zero()).unwrap_or(0)
}

/// Identifies the random stream of each pixel. By default a pixel's key is
/// its index; custom keys let a sub-scene reuse the streams of the pixels
/// it was cut from.
#[derive(Debug, Clone, Copy)]
pub struct StreamKeys<'a> {
    pub seed: u64,
    pub purpose: Stream,
    pub pixel_keys: Option<&'a [u64]>,
}

impl StreamKeys<'_> {
    fn key(&self, n: usize) -> u64 {
        self.pixel_keys.map_or(n as u64, |k| k[n])
    }
}

/// One systematic sweep: all pixels of colour 0 are redrawn in parallel
/// given the current map, then all pixels of colour 1.
pub fn checkerboard_sweep<F: Real>(
    profiles: &Profiles<F>,
    depth: &mut [usize],
    dims: ImageDims,
    epsilon: F,
    keys: StreamKeys<'_>,
    round: u64,
) {
    let t_min = profiles.t_min();
    for color in 0..2 {
        let pixels = dims.pixels_of_color(color);
        let snapshot: &[usize] = depth;
        let draws: Vec<usize> = pixels
            .par_iter()
            .map(|&n| {
                let logits = profiles.logits(n, snapshot, dims, epsilon);
                let mut rng = stream(keys.seed, keys.purpose, round, keys.key(n));
                t_min + sample_index(&logits, &mut rng)
            })
            .collect();
        for (&n, t) in pixels.iter().zip(draws) {
            depth[n] = t;
        }
    }
}
