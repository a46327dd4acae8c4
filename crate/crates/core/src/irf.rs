//! Per-wavelength impulse responses and the admissible depth window.

use crate::error::{LidarError, Result};
use crate::real::Real;

/// Bank of `L` impulse responses sharing a common support length.
///
/// `g[l][d]` is the expected photon count in bin `t_n + d` for a unit
/// reflectivity at depth `t_n` (delay `d >= 0`); bins are 1-based, so a
/// photon from depth `k` with delay `d` lands in bin `k + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct IrfBank<F> {
    g: Vec<Vec<F>>,
    normalized: Vec<Vec<F>>,
    integral: Vec<F>,
    t_len: usize,
    t_min: usize,
    t_max: usize,
}

impl<F: Real> IrfBank<F> {
    /// Validates the raw responses and computes the integrals `G_l`.
    ///
    /// Every response must be nonnegative with a positive integral, and for
    /// every admissible depth `k` the shifted response must lie entirely
    /// inside `[1, T]` so that `sum_t g_l(t - k) = G_l`.
    pub fn new(g: Vec<Vec<F>>, t_len: usize, t_min: usize, t_max: usize) -> Result<Self> {
        if !(1 < t_min && t_min < t_max && t_max < t_len) {
            return Err(LidarError::InvalidDepthRange { t_min, t_max, t_len });
        }
        if g.is_empty() {
            return Err(LidarError::InvalidParameter("IRF bank needs at least one band".into()));
        }
        let support = g[0].len();
        if support == 0 || g.iter().any(|band| band.len() != support) {
            return Err(LidarError::InvalidParameter(
                "IRF bands must share a nonzero support length".into(),
            ));
        }
        let mut integral = Vec::with_capacity(g.len());
        for (band, resp) in g.iter().enumerate() {
            if let Some(bin) = resp.iter().position(|v| !(v.is_finite() && *v >= F::zero())) {
                return Err(LidarError::NegativeIrfValue { band, bin });
            }
            let total: F = resp.iter().copied().sum();
            if total <= F::zero() {
                return Err(LidarError::ZeroIrfIntegral { band });
            }
            let last = resp.iter().rposition(|v| *v > F::zero()).unwrap_or(0);
            if t_max + last > t_len {
                // smallest shift at which the response gets cropped
                return Err(LidarError::NonconstantIntegral {
                    band,
                    shift: (t_len + 1 - last).max(t_min),
                    t_len,
                });
            }
            integral.push(total);
        }
        let normalized = g
            .iter()
            .zip(&integral)
            .map(|(resp, &total)| resp.iter().map(|&v| v / total).collect())
            .collect();
        Ok(Self { g, normalized, integral, t_len, t_min, t_max })
    }

    pub fn bands(&self) -> usize {
        self.g.len()
    }

    pub fn support(&self) -> usize {
        self.g[0].len()
    }

    /// Histogram length `T`.
    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn t_min(&self) -> usize {
        self.t_min
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    /// Number of admissible depth bins, `K = t_max - t_min + 1`.
    pub fn n_depths(&self) -> usize {
        self.t_max - self.t_min + 1
    }

    pub fn integral(&self, band: usize) -> F {
        self.integral[band]
    }

    pub fn integrals(&self) -> &[F] {
        &self.integral
    }

    pub fn response(&self, band: usize) -> &[F] {
        &self.g[band]
    }

    /// `g_l(delay)`, zero outside the support.
    #[inline]
    pub fn g(&self, band: usize, delay: isize) -> F {
        if delay < 0 {
            return F::zero();
        }
        self.g[band].get(delay as usize).copied().unwrap_or_else(F::zero)
    }

    /// `g_l(delay) / G_l`, zero outside the support.
    #[inline]
    pub fn normalized(&self, band: usize, delay: isize) -> F {
        if delay < 0 {
            return F::zero();
        }
        self.normalized[band].get(delay as usize).copied().unwrap_or_else(F::zero)
    }

    /// Sum of the responses over bands: the matched-filter template for a
    /// single-waveform histogram.
    pub fn summed_template(&self) -> Vec<F> {
        (0..self.support())
            .map(|d| self.g.iter().map(|band| band[d]).sum())
            .collect()
    }

    /// Keeps only the listed bands, in the given order.
    pub fn select_bands(&self, bands: &[usize]) -> Result<Self> {
        let g = bands
            .iter()
            .map(|&l| {
                self.g.get(l).cloned().ok_or_else(|| {
                    LidarError::InvalidParameter(format!("band {l} not in IRF bank"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(g, self.t_len, self.t_min, self.t_max)
    }
}
