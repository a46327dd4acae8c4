//! Matched-filter baseline: per-pixel cross-correlation depth followed by
//! maximum-likelihood weights at that depth.

use rayon::prelude::*;

use crate::config::NewtonConfig;
use crate::error::Result;
use crate::fields::{DepthField, WeightField};
use crate::irf::IrfBank;
use crate::optim::pixel::{newton_maximize_q_pixel, PixelData};
use crate::real::Real;
use crate::scene::{Photon, SceneCube};

/// Dirichlet parameter of the near-flat barrier keeping the ML weights
/// strictly interior.
pub const XCORR_BARRIER: f64 = 1.0 + 1e-6;

/// Correlation of one pixel's histogram with the summed template, for
/// every admissible depth.
pub fn correlation_profile<F: Real>(photons: &[Photon], template: &[F], bank: &IrfBank<F>) -> Vec<F> {
    let mut out = vec![F::zero(); bank.n_depths()];
    let support = template.len();
    for p in photons {
        let s = p.bin as usize;
        let k_hi = s.min(bank.t_max());
        let k_lo = (s + 1).saturating_sub(support).max(bank.t_min());
        if k_lo > k_hi {
            continue;
        }
        let m = F::from_count(p.count as u64);
        for k in k_lo..=k_hi {
            out[k - bank.t_min()] += m * template[s - k];
        }
    }
    out
}

/// Depth maximising the correlation; ties go to the smaller bin.
pub fn xcorr_depth<F: Real>(scene: &SceneCube, bank: &IrfBank<F>) -> DepthField {
    let template = bank.summed_template();
    let t: Vec<usize> = (0..scene.n_pixels())
        .into_par_iter()
        .map(|n| {
            let prof = correlation_profile(scene.photons(n), &template, bank);
            let mut best = 0;
            for (i, v) in prof.iter().enumerate() {
                if *v > prof[best] {
                    best = i;
                }
            }
            bank.t_min() + best
        })
        .collect();
    DepthField::new(scene.dims(), t).expect("one depth per pixel")
}

/// Per-pixel maximum-likelihood weights at fixed depths.
pub fn xcorr_weights<F: Real>(
    scene: &SceneCube,
    depth: &DepthField,
    bank: &IrfBank<F>,
    newton: &NewtonConfig,
) -> Result<WeightField<F>> {
    depth.validate(bank.t_min(), bank.t_max())?;
    let bands = bank.bands();
    let beta = vec![F::lit(XCORR_BARRIER); bands + 1];
    let start = vec![F::lit(0.5) / F::from_count(bands as u64 + 1); bands];
    let rows: Vec<Result<Vec<F>>> = (0..scene.n_pixels())
        .into_par_iter()
        .map(|n| {
            let data = PixelData::at_depth(scene.photons(n), depth.get(n), bank);
            newton_maximize_q_pixel(&data, &beta, &start, newton).map(|o| o.w)
        })
        .collect();
    let mut flat = Vec::with_capacity(scene.n_pixels() * bands);
    for r in rows {
        flat.extend(r?);
    }
    WeightField::from_vec(scene.dims(), bands, flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ImageDims;

    #[test]
    fn delta_irf_recovers_depth() {
        let bank = IrfBank::new(vec![vec![1.0]], 20, 3, 15).unwrap();
        let scene = SceneCube::from_toa_lists(ImageDims::new(1, 3), 20, &[vec![5, 5], vec![9], vec![15, 15, 15]]).unwrap();
        assert_eq!(xcorr_depth(&scene, &bank).as_slice(), &[5, 9, 15]);
    }

    #[test]
    fn symmetric_irf_offsets_by_mode() {
        // mode of the response at delay 2
        let bank = IrfBank::new(vec![vec![0.2, 0.6, 1.0, 0.6, 0.2]], 30, 3, 20).unwrap();
        let scene = SceneCube::from_toa_lists(ImageDims::new(1, 1), 30, &[vec![14]]).unwrap();
        let prof = correlation_profile(scene.photons(0), &bank.summed_template(), &bank);
        let argmax = (0..prof.len()).max_by(|&a, &b| prof[a].partial_cmp(&prof[b]).unwrap().then(b.cmp(&a))).unwrap();
        assert_eq!(xcorr_depth(&scene, &bank).get(0), 3 + argmax);
        assert_eq!(xcorr_depth(&scene, &bank).get(0), 12);
    }

    #[test]
    fn empty_pixel_goes_to_t_min() {
        let bank = IrfBank::new(vec![vec![1.0, 0.5]], 20, 3, 15).unwrap();
        let scene = SceneCube::from_toa_lists(ImageDims::new(1, 1), 20, &[vec![]]).unwrap();
        assert_eq!(xcorr_depth(&scene, &bank).get(0), 3);
    }

    #[test]
    fn weights_limits() {
        let bank = IrfBank::new(vec![vec![1.0]], 20, 3, 15).unwrap();
        let cfg = NewtonConfig::default();
        // background photons only
        let scene = SceneCube::from_toa_lists(ImageDims::new(1, 1), 20, &[vec![1, 2, 19]]).unwrap();
        let w: WeightField<f64> = xcorr_weights(&scene, &DepthField::constant(scene.dims(), 8), &bank, &cfg).unwrap();
        assert!(w.get(0, 0) < 1e-4);
        // all photons at the return
        let scene = SceneCube::from_toa_lists(ImageDims::new(1, 1), 20, &[vec![8; 20]]).unwrap();
        let w: WeightField<f64> = xcorr_weights(&scene, &DepthField::constant(scene.dims(), 8), &bank, &cfg).unwrap();
        assert!(w.get(0, 0) > 0.999 && w.get(0, 0) < 1.0);
    }
}
