//! Reflectivity recovery from the weights and a denoised photon-count image.

use serde::{Deserialize, Serialize};

use crate::error::{LidarError, Result};
use crate::fields::{ReflectivityCube, WeightField};
use crate::grid::ImageDims;
use crate::irf::IrfBank;
use crate::optim::tv::{tv_prox, TvDual};
use crate::real::Real;

/// Settings of the count denoiser: TV smoothing of the Anscombe-transformed
/// image, whose noise has unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenoiseConfig {
    /// TV weight in units of the (unit) noise standard deviation.
    pub strength: f64,
    pub iters: usize,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self { strength: 1.0, iters: 200 }
    }
}

/// Single-image Poisson denoiser interface.
pub trait CountDenoiser<F> {
    fn denoise(&self, dims: ImageDims, counts: &[u64]) -> Vec<F>;
}

/// Anscombe transform, TV smoothing, algebraic inverse clamped at zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnscombeTv(pub DenoiseConfig);

impl<F: Real> CountDenoiser<F> for AnscombeTv {
    fn denoise(&self, dims: ImageDims, counts: &[u64]) -> Vec<F> {
        if counts.iter().all(|&c| c == 0) {
            return vec![F::zero(); counts.len()];
        }
        let shift = F::lit(0.375);
        let two = F::lit(2.0);
        let z: Vec<F> = counts.iter().map(|&c| two * (F::from_count(c) + shift).sqrt()).collect();
        let mut dual = TvDual::zeros(z.len());
        let smooth = tv_prox(dims, &z, F::lit(self.0.strength), self.0.iters, &mut dual);
        smooth.into_iter().map(|y| ((y / two) * (y / two) - shift).max(F::zero())).collect()
    }
}

/// Denoises the per-pixel total counts with the default denoiser.
pub fn denoise_counts<F: Real>(dims: ImageDims, ybar: &[u64]) -> Vec<F> {
    AnscombeTv::default().denoise(dims, ybar)
}

/// `r_{n,l} = w_{n,l} y_n / G_l` and `b_n = (1 - sum_l w_{n,l}) y_n / T`.
pub fn estimate_reflectivity<F: Real>(weights: &WeightField<F>, y_hat: &[F], bank: &IrfBank<F>) -> Result<ReflectivityCube<F>> {
    if y_hat.len() != weights.n_pixels() {
        return Err(LidarError::SizeMismatch(format!("{} counts for {} pixels", y_hat.len(), weights.n_pixels())));
    }
    if weights.bands() != bank.bands() {
        return Err(LidarError::SizeMismatch("weight bands and responses differ".into()));
    }
    let bands = weights.bands();
    let t = F::from_count(bank.t_len() as u64);
    let mut r = Vec::with_capacity(weights.n_pixels() * bands);
    let mut b = Vec::with_capacity(weights.n_pixels());
    for (n, &y) in y_hat.iter().enumerate() {
        let y = y.max(F::zero());
        let w = weights.pixel(n);
        r.extend(w.iter().enumerate().map(|(l, &wl)| (wl * y / bank.integral(l)).max(F::zero())));
        b.push((weights.background(n) * y / t).max(F::zero()));
    }
    ReflectivityCube::new(weights.dims(), bands, r, b)
}

/// `(1/N) sum_n ||r_n - r_hat_n||^2`.
pub fn reflectivity_mse<F: Real>(r_hat: &ReflectivityCube<F>, r_truth: &ReflectivityCube<F>) -> Result<F> {
    if r_hat.dims() != r_truth.dims() || r_hat.bands() != r_truth.bands() {
        return Err(LidarError::SizeMismatch("reflectivity cubes differ in shape".into()));
    }
    let sq: F = r_hat.r_slice().iter().zip(r_truth.r_slice()).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok(sq / F::from_count(r_hat.n_pixels() as u64))
}
