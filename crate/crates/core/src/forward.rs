//! Observation model: Poisson histograms, the per-photon mixture density and
//! the weight/reflectivity correspondence. Also generates synthetic scenes.

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LidarError, Result};
use crate::fields::{DepthField, ReflectivityCube, WeightField};
use crate::irf::IrfBank;
use crate::real::Real;
use crate::rng::{self, Stream};
use crate::scene::{Photon, SceneCube};

/// Density of one photon arriving in bin `s` given weights `w` and depth `t`:
/// `(1 - sum w)/T + sum_l w_l g_l(s - t) / G_l`.
pub fn photon_pdf<F: Real>(s: usize, w: &[F], t: usize, bank: &IrfBank<F>) -> Result<F> {
    if s == 0 || s > bank.t_len() {
        return Err(LidarError::BinOutOfRange { bin: s, t_len: bank.t_len() });
    }
    if t < bank.t_min() || t > bank.t_max() {
        return Err(LidarError::DepthOutOfRange { pixel: 0, depth: t, t_min: bank.t_min(), t_max: bank.t_max() });
    }
    if w.len() != bank.bands() {
        return Err(LidarError::SizeMismatch(format!("{} weights for {} bands", w.len(), bank.bands())));
    }
    Ok(pdf_unchecked(s, w, t, bank))
}

#[inline]
pub(crate) fn pdf_unchecked<F: Real>(s: usize, w: &[F], t: usize, bank: &IrfBank<F>) -> F {
    let delay = s as isize - t as isize;
    let wsum: F = w.iter().copied().sum();
    let bg = ((F::one() - wsum) / F::from_count(bank.t_len() as u64)).max(F::zero());
    w.iter()
        .enumerate()
        .fold(bg, |acc, (l, &wl)| acc + wl * bank.normalized(l, delay))
}

/// Mixture weights implied by a spectral response and background rate:
/// `w_l = r_l G_l / (sum_l r_l G_l + T b)`.
pub fn weights_from_reflectivity<F: Real>(r: &[F], b: F, bank: &IrfBank<F>) -> Result<Vec<F>> {
    if r.len() != bank.bands() {
        return Err(LidarError::SizeMismatch(format!("{} responses for {} bands", r.len(), bank.bands())));
    }
    if r.iter().any(|v| *v < F::zero()) || b < F::zero() {
        return Err(LidarError::InvalidParameter("reflectivity and background must be >= 0".into()));
    }
    let signal: Vec<F> = r.iter().zip(bank.integrals()).map(|(&rl, &gl)| rl * gl).collect();
    let total = signal.iter().copied().sum::<F>() + F::from_count(bank.t_len() as u64) * b;
    if total <= F::zero() {
        return Err(LidarError::AllZeroSignal);
    }
    Ok(signal.into_iter().map(|s| s / total).collect())
}

/// Expected total count of a pixel, `sum_l r_l G_l + T b`.
pub fn expected_total<F: Real>(r: &[F], b: F, bank: &IrfBank<F>) -> F {
    r.iter().zip(bank.integrals()).map(|(&rl, &gl)| rl * gl).sum::<F>() + F::from_count(bank.t_len() as u64) * b
}

/// Log-likelihood of one pixel's photons for every admissible depth
/// `k in [t_min, t_max]`, written to `out` (length `K`).
///
/// Runs in `O(distinct bins x support x L)`: photons outside the shifted
/// response all share the background density and are accounted for in bulk.
pub fn log_likelihood_profile<F: Real>(photons: &[Photon], w: &[F], bank: &IrfBank<F>, out: &mut [F]) {
    let k_len = bank.n_depths();
    debug_assert_eq!(out.len(), k_len);
    let support = bank.support();
    let wsum: F = w.iter().copied().sum();
    let inv_t = F::from_count(bank.t_len() as u64).recip();
    let bg = ((F::one() - wsum) * inv_t).max(F::zero());
    let h_out = bg.ln();
    let h: Vec<F> = (0..support)
        .map(|d| {
            let p = w
                .iter()
                .enumerate()
                .fold(bg, |acc, (l, &wl)| acc + wl * bank.normalized(l, d as isize));
            p.ln()
        })
        .collect();

    let mut inside = vec![0u64; k_len];
    out.iter_mut().for_each(|v| *v = F::zero());
    let t_min = bank.t_min();
    let mut total = 0u64;
    for p in photons {
        let s = p.bin as usize;
        total += p.count as u64;
        let m = F::from_count(p.count as u64);
        // depths k with 0 <= s - k < support
        let k_hi = s.min(bank.t_max());
        let k_lo = (s + 1).saturating_sub(support).max(t_min);
        if k_lo > k_hi {
            continue;
        }
        for k in k_lo..=k_hi {
            let idx = k - t_min;
            out[idx] += m * h[s - k];
            inside[idx] += p.count as u64;
        }
    }
    for (o, &inc) in out.iter_mut().zip(&inside) {
        let rest = total - inc;
        if rest > 0 {
            *o += F::from_count(rest) * h_out;
        }
    }
}

/// `sum_n sum_p log p(s_n^p | w_n, t_n)`. Returns `-inf` when some photon has
/// zero density.
pub fn joint_log_likelihood<F: Real>(
    scene: &SceneCube,
    weights: &WeightField<F>,
    depth: &DepthField,
    bank: &IrfBank<F>,
) -> Result<F> {
    if weights.n_pixels() != scene.n_pixels() || depth.as_slice().len() != scene.n_pixels() {
        return Err(LidarError::SizeMismatch("scene, weights and depth differ in pixel count".into()));
    }
    depth.validate(bank.t_min(), bank.t_max())?;
    let per_pixel: Vec<F> = (0..scene.n_pixels())
        .into_par_iter()
        .map(|n| {
            let w = weights.pixel(n);
            let t = depth.get(n);
            scene
                .photons(n)
                .iter()
                .map(|p| {
                    let lp = pdf_unchecked(p.bin as usize, w, t, bank).ln();
                    if p.count == 0 { F::zero() } else { F::from_count(p.count as u64) * lp }
                })
                .sum::<F>()
        })
        .collect();
    Ok(per_pixel.into_iter().sum())
}

/// Illumination and background levels of one synthetic acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Signal scale `alpha`.
    pub alpha: f64,
    /// Background scale expressed as `gamma * T`, so the expected number of
    /// background photons per pixel is `alpha * gamma_t`.
    pub gamma_t: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.gamma_t >= 0.0) {
            return Err(LidarError::InvalidParameter("need alpha > 0 and gamma >= 0".into()));
        }
        Ok(())
    }

    /// Per-bin background rate `alpha * gamma`.
    pub fn background_rate(&self, t_len: usize) -> f64 {
        self.alpha * self.gamma_t / t_len as f64
    }

    /// Scaled truth for this acquisition: responses `alpha r`, background
    /// `alpha gamma` per bin.
    pub fn effective_cube<F: Real>(&self, truth: &ReflectivityCube<F>, t_len: usize) -> ReflectivityCube<F> {
        truth.scaled(F::lit(self.alpha), F::lit(self.background_rate(t_len)))
    }
}

/// Draws per-bin Poisson counts with rate `b + sum_l alpha r_{n,l} g_l(t - t_n)`.
/// Pixel `n` uses its own random stream, so the result is independent of
/// the thread schedule.
pub fn simulate<F: Real>(
    cfg: &SimConfig,
    depth: &DepthField,
    truth: &ReflectivityCube<F>,
    bank: &IrfBank<F>,
) -> Result<SceneCube> {
    cfg.validate()?;
    let dims = depth.dims();
    if truth.dims() != dims || truth.bands() != bank.bands() {
        return Err(LidarError::SizeMismatch("truth profiles do not match the IRF bank or image".into()));
    }
    depth.validate(bank.t_min(), bank.t_max())?;
    let t_len = bank.t_len();
    let bg = cfg.background_rate(t_len);
    let photons: Vec<Vec<Photon>> = (0..dims.len())
        .into_par_iter()
        .map(|n| {
            let mut rng = rng::stream(cfg.seed, Stream::Simulate, 0, n as u64);
            let tn = depth.get(n);
            let r = truth.r(n);
            let mut list = Vec::new();
            for s in 1..=t_len {
                let delay = s as isize - tn as isize;
                let signal: f64 = r
                    .iter()
                    .enumerate()
                    .map(|(l, &rl)| cfg.alpha * rl.as_f64() * bank.g(l, delay).as_f64())
                    .sum();
                let rate = bg + signal;
                if rate <= 0.0 {
                    continue;
                }
                let c = Poisson::new(rate).map(|d| d.sample(&mut rng)).unwrap_or(0.0);
                if c > 0.0 {
                    list.push(Photon { bin: s as u32, count: c as u32 });
                }
            }
            list
        })
        .collect();
    SceneCube::from_photons(dims, t_len, photons)
}

/// Average signal-to-background ratio
/// `(1/N) sum_n (sum_l r_{n,l} G_l) / (T b_n)`.
pub fn sbr<F: Real>(cube: &ReflectivityCube<F>, bank: &IrfBank<F>) -> Result<F> {
    let t = F::from_count(bank.t_len() as u64);
    let mut acc = F::zero();
    for n in 0..cube.n_pixels() {
        let b = cube.b(n);
        if b <= F::zero() {
            return Err(LidarError::ZeroBackground { pixel: n });
        }
        let signal: F = cube.r(n).iter().zip(bank.integrals()).map(|(&r, &g)| r * g).sum();
        acc += signal / (t * b);
    }
    Ok(acc / F::from_count(cube.n_pixels() as u64))
}
