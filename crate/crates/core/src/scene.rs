//! Photon observations: per-pixel time-of-flight histograms and the
//! equivalent (bin, multiplicity) lists of photon arrival times.

use crate::error::{LidarError, Result};
use crate::grid::ImageDims;

/// A run of `count` photons that arrived in the (1-based) histogram `bin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Photon {
    pub bin: u32,
    pub count: u32,
}

/// Observations for a whole image.
///
/// The sparse list is the canonical representation: per pixel, photons
/// sorted by strictly increasing bin with nonzero multiplicity. A dense
/// histogram cube can be attached with [`SceneCube::densify`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneCube {
    dims: ImageDims,
    t_len: usize,
    photons: Vec<Vec<Photon>>,
    ybar: Vec<u64>,
    dense: Option<Vec<u32>>,
}

impl SceneCube {
    /// Builds a scene from (bin, count) runs, merging repeated bins.
    pub fn from_photons(dims: ImageDims, t_len: usize, mut photons: Vec<Vec<Photon>>) -> Result<Self> {
        if photons.len() != dims.len() {
            return Err(LidarError::SizeMismatch(format!(
                "{} photon lists for {} pixels",
                photons.len(),
                dims.len()
            )));
        }
        for (pixel, list) in photons.iter_mut().enumerate() {
            list.retain(|p| p.count > 0);
            list.sort_unstable_by_key(|p| p.bin);
            let mut merged: Vec<Photon> = Vec::with_capacity(list.len());
            for p in list.iter() {
                if p.bin == 0 || p.bin as usize > t_len {
                    return Err(LidarError::BinOutOfRange { bin: p.bin as usize, t_len });
                }
                match merged.last_mut() {
                    Some(last) if last.bin == p.bin => {
                        last.count = last.count.checked_add(p.count).ok_or(LidarError::CountOverflow {
                            pixel,
                            bin: p.bin as usize,
                        })?;
                    }
                    _ => merged.push(*p),
                }
            }
            *list = merged;
        }
        let ybar = photons.iter().map(|l| l.iter().map(|p| p.count as u64).sum()).collect();
        Ok(Self { dims, t_len, photons, ybar, dense: None })
    }

    /// Builds a scene from raw arrival-time lists (one bin index per photon).
    pub fn from_toa_lists(dims: ImageDims, t_len: usize, lists: &[Vec<u32>]) -> Result<Self> {
        let photons = lists
            .iter()
            .map(|l| l.iter().map(|&bin| Photon { bin, count: 1 }).collect())
            .collect();
        Self::from_photons(dims, t_len, photons)
    }

    /// Builds a scene from a dense row-major `N x T` histogram cube. The cube
    /// is kept as the dense representation.
    pub fn from_histograms(dims: ImageDims, t_len: usize, dense: Vec<u32>) -> Result<Self> {
        if dense.len() != dims.len() * t_len {
            return Err(LidarError::SizeMismatch(format!(
                "dense cube has {} entries, expected {} x {}",
                dense.len(),
                dims.len(),
                t_len
            )));
        }
        let photons = dense
            .chunks(t_len)
            .map(|h| {
                h.iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(t, &count)| Photon { bin: t as u32 + 1, count })
                    .collect()
            })
            .collect();
        let mut scene = Self::from_photons(dims, t_len, photons)?;
        scene.dense = Some(dense);
        Ok(scene)
    }

    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    pub fn n_pixels(&self) -> usize {
        self.dims.len()
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn photons(&self, pixel: usize) -> &[Photon] {
        &self.photons[pixel]
    }

    /// Total photon count of a pixel.
    pub fn ybar(&self, pixel: usize) -> u64 {
        self.ybar[pixel]
    }

    pub fn ybar_all(&self) -> &[u64] {
        &self.ybar
    }

    pub fn total_photons(&self) -> u64 {
        self.ybar.iter().sum()
    }

    pub fn has_dense(&self) -> bool {
        self.dense.is_some()
    }

    /// Attaches the dense histogram cube (no-op when already present).
    pub fn densify(&mut self) {
        if self.dense.is_none() {
            let mut dense = vec![0u32; self.dims.len() * self.t_len];
            for (n, list) in self.photons.iter().enumerate() {
                for p in list {
                    dense[n * self.t_len + p.bin as usize - 1] = p.count;
                }
            }
            self.dense = Some(dense);
        }
    }

    /// Drops the dense cube, keeping the sparse lists.
    pub fn sparsify(&mut self) {
        self.dense = None;
    }

    pub fn dense(&self) -> Option<&[u32]> {
        self.dense.as_deref()
    }

    /// Histogram of one pixel, from the dense cube when present.
    pub fn histogram(&self, pixel: usize) -> Vec<u32> {
        if let Some(d) = &self.dense {
            return d[pixel * self.t_len..(pixel + 1) * self.t_len].to_vec();
        }
        let mut h = vec![0u32; self.t_len];
        for p in &self.photons[pixel] {
            h[p.bin as usize - 1] = p.count;
        }
        h
    }

    /// Expanded arrival-time list of a pixel (sorted).
    pub fn toa_list(&self, pixel: usize) -> Vec<u32> {
        self.photons[pixel]
            .iter()
            .flat_map(|p| std::iter::repeat_n(p.bin, p.count as usize))
            .collect()
    }

    /// Scene restricted to a subset of pixels, laid out as a `1 x len` strip.
    pub fn subset(&self, pixels: &[usize]) -> Self {
        let photons: Vec<_> = pixels.iter().map(|&n| self.photons[n].clone()).collect();
        let ybar = pixels.iter().map(|&n| self.ybar[n]).collect();
        Self {
            dims: ImageDims::new(1, pixels.len()),
            t_len: self.t_len,
            photons,
            ybar,
            dense: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn histogram_to_toa_list() {
        let s = SceneCube::from_histograms(ImageDims::new(1, 1), 4, vec![0, 2, 0, 1]).unwrap();
        assert_eq!(s.toa_list(0), vec![2, 2, 4]);
        assert_eq!(s.ybar(0), 3);
    }

    #[test]
    fn empty_pixel() {
        let s = SceneCube::from_toa_lists(ImageDims::new(1, 2), 4, &[vec![], vec![1]]).unwrap();
        assert!(s.toa_list(0).is_empty());
        assert_eq!(s.ybar(0), 0);
        assert_eq!(s.ybar(1), 1);
    }

    #[test]
    fn out_of_range_bins_rejected() {
        let d = ImageDims::new(1, 1);
        assert!(matches!(
            SceneCube::from_toa_lists(d, 4, &[vec![5]]),
            Err(LidarError::BinOutOfRange { bin: 5, t_len: 4 })
        ));
        assert!(matches!(
            SceneCube::from_toa_lists(d, 4, &[vec![0]]),
            Err(LidarError::BinOutOfRange { bin: 0, .. })
        ));
    }

    #[test]
    fn merging_detects_overflow() {
        let d = ImageDims::new(1, 1);
        let list = vec![Photon { bin: 2, count: u32::MAX }, Photon { bin: 2, count: 1 }];
        assert!(matches!(
            SceneCube::from_photons(d, 4, vec![list]),
            Err(LidarError::CountOverflow { pixel: 0, bin: 2 })
        ));
    }

    proptest! {
        #[test]
        fn dense_sparse_round_trip(rows in 1usize..4, cols in 1usize..4, t_len in 1usize..12,
                                   seed in proptest::collection::vec(0u32..4, 0..200)) {
            let n = rows * cols * t_len;
            let dense: Vec<u32> = (0..n).map(|i| seed.get(i).copied().unwrap_or(0)).collect();
            let dims = ImageDims::new(rows, cols);
            let from_dense = SceneCube::from_histograms(dims, t_len, dense.clone()).unwrap();
            let lists: Vec<Vec<u32>> = (0..dims.len()).map(|p| from_dense.toa_list(p)).collect();
            let mut from_lists = SceneCube::from_toa_lists(dims, t_len, &lists).unwrap();
            from_lists.densify();
            prop_assert_eq!(from_lists.dense().unwrap(), &dense[..]);
            for p in 0..dims.len() {
                prop_assert_eq!(from_lists.ybar(p), from_dense.histogram(p).iter().map(|&c| c as u64).sum::<u64>());
                prop_assert_eq!(from_lists.toa_list(p), lists[p].clone());
            }
        }
    }
}
