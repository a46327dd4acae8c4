//! Per-pixel unknowns: mixture weights, depths and spectral responses.

use crate::error::{LidarError, Result};
use crate::grid::ImageDims;
use crate::real::Real;

/// `N x L` matrix of signal-photon probabilities, one simplex vector per
/// pixel. The background weight `1 - sum_l w_{l,n}` is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField<F> {
    dims: ImageDims,
    bands: usize,
    data: Vec<F>,
}

impl<F: Real> WeightField<F> {
    pub fn from_vec(dims: ImageDims, bands: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != dims.len() * bands {
            return Err(LidarError::SizeMismatch(format!(
                "weight data has {} entries, expected {} x {}",
                data.len(),
                dims.len(),
                bands
            )));
        }
        Ok(Self { dims, bands, data })
    }

    /// Every entry set to `value`.
    pub fn constant(dims: ImageDims, bands: usize, value: F) -> Self {
        Self { dims, bands, data: vec![value; dims.len() * bands] }
    }

    /// Safe interior starting point: `w_{l,n} = 0.5 / (L + 1)`.
    pub fn interior_start(dims: ImageDims, bands: usize) -> Self {
        Self::constant(dims, bands, F::lit(0.5) / F::from_count(bands as u64 + 1))
    }

    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn n_pixels(&self) -> usize {
        self.dims.len()
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.data
    }

    #[inline]
    pub fn pixel(&self, n: usize) -> &[F] {
        &self.data[n * self.bands..(n + 1) * self.bands]
    }

    #[inline]
    pub fn pixel_mut(&mut self, n: usize) -> &mut [F] {
        &mut self.data[n * self.bands..(n + 1) * self.bands]
    }

    pub fn get(&self, n: usize, band: usize) -> F {
        self.data[n * self.bands + band]
    }

    /// Background probability `1 - sum_l w_{l,n}`.
    pub fn background(&self, n: usize) -> F {
        F::one() - self.pixel(n).iter().copied().sum::<F>()
    }

    /// One band as an image (row `w_{l,:}`).
    pub fn band(&self, band: usize) -> Vec<F> {
        (0..self.n_pixels()).map(|n| self.get(n, band)).collect()
    }

    pub fn set_band(&mut self, band: usize, values: &[F]) {
        for (n, &v) in values.iter().enumerate() {
            self.data[n * self.bands + band] = v;
        }
    }

    pub fn is_in_simplex(&self) -> bool {
        self.check_simplex().is_ok()
    }

    /// Membership of every pixel in `S_L = {w >= 0, sum w <= 1}`.
    pub fn check_simplex(&self) -> Result<()> {
        for n in 0..self.n_pixels() {
            let w = self.pixel(n);
            if w.iter().any(|v| !(v.is_finite() && *v >= F::zero())) || self.background(n) < F::zero() {
                return Err(LidarError::OutsideSimplex { pixel: n });
            }
        }
        Ok(())
    }

    /// Strict interior: all weights and the background complement positive.
    pub fn check_interior(&self) -> Result<()> {
        self.check_simplex()?;
        for n in 0..self.n_pixels() {
            if self.pixel(n).iter().any(|v| *v <= F::zero()) || self.background(n) <= F::zero() {
                return Err(LidarError::BoundaryPoint { pixel: n });
            }
        }
        Ok(())
    }

    pub fn frobenius(&self) -> F {
        crate::real::norm2(&self.data)
    }

    /// `||self - other||_F`.
    pub fn distance(&self, other: &Self) -> F {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b) * (*a - *b))
            .sum::<F>()
            .sqrt()
    }

    /// Entry-wise mean of several fields of identical shape.
    pub fn mean_of(fields: &[Self]) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| LidarError::InvalidParameter("mean of zero weight fields".into()))?;
        let mut acc = vec![F::zero(); first.data.len()];
        for f in fields {
            if f.data.len() != acc.len() {
                return Err(LidarError::SizeMismatch("weight fields differ in shape".into()));
            }
            for (a, v) in acc.iter_mut().zip(&f.data) {
                *a += *v;
            }
        }
        let k = F::from_count(fields.len() as u64);
        acc.iter_mut().for_each(|a| *a /= k);
        Ok(Self { dims: first.dims, bands: first.bands, data: acc })
    }
}

/// Integer time-of-flight bin per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthField {
    dims: ImageDims,
    t: Vec<usize>,
}

impl DepthField {
    pub fn new(dims: ImageDims, t: Vec<usize>) -> Result<Self> {
        if t.len() != dims.len() {
            return Err(LidarError::SizeMismatch(format!(
                "depth map has {} entries for {} pixels",
                t.len(),
                dims.len()
            )));
        }
        Ok(Self { dims, t })
    }

    pub fn constant(dims: ImageDims, value: usize) -> Self {
        Self { dims, t: vec![value; dims.len()] }
    }

    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.t
    }

    pub fn as_mut_slice(&mut self) -> &mut [usize] {
        &mut self.t
    }

    pub fn get(&self, n: usize) -> usize {
        self.t[n]
    }

    pub fn validate(&self, t_min: usize, t_max: usize) -> Result<()> {
        match self.t.iter().position(|&d| d < t_min || d > t_max) {
            Some(pixel) => Err(LidarError::DepthOutOfRange { pixel, depth: self.t[pixel], t_min, t_max }),
            None => Ok(()),
        }
    }
}

/// Spectral responses `r_{n,l}` and background rates `b_n` (per bin).
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectivityCube<F> {
    dims: ImageDims,
    bands: usize,
    r: Vec<F>,
    b: Vec<F>,
}

impl<F: Real> ReflectivityCube<F> {
    pub fn new(dims: ImageDims, bands: usize, r: Vec<F>, b: Vec<F>) -> Result<Self> {
        if r.len() != dims.len() * bands || b.len() != dims.len() {
            return Err(LidarError::SizeMismatch(format!(
                "reflectivity cube sized {}/{} for {} pixels x {} bands",
                r.len(),
                b.len(),
                dims.len(),
                bands
            )));
        }
        if r.iter().chain(&b).any(|v| !(v.is_finite() && *v >= F::zero())) {
            return Err(LidarError::InvalidParameter("reflectivity and background must be >= 0".into()));
        }
        Ok(Self { dims, bands, r, b })
    }

    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn n_pixels(&self) -> usize {
        self.dims.len()
    }

    pub fn r(&self, n: usize) -> &[F] {
        &self.r[n * self.bands..(n + 1) * self.bands]
    }

    pub fn b(&self, n: usize) -> F {
        self.b[n]
    }

    pub fn r_slice(&self) -> &[F] {
        &self.r
    }

    pub fn b_slice(&self) -> &[F] {
        &self.b
    }

    pub fn band(&self, band: usize) -> Vec<F> {
        (0..self.n_pixels()).map(|n| self.r[n * self.bands + band]).collect()
    }

    /// Copy with every response multiplied by `alpha` and a spatially
    /// constant background rate per bin.
    pub fn scaled(&self, alpha: F, background: F) -> Self {
        Self {
            dims: self.dims,
            bands: self.bands,
            r: self.r.iter().map(|&v| v * alpha).collect(),
            b: vec![background; self.dims.len()],
        }
    }
}
