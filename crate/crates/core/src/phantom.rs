//! Synthetic two-material scene and impulse responses used for the desk-scale
//! experiments.
//!
//! The scene is a tilted back plane (material A) with a raised elliptical
//! object (material B) in front of it. Reflectivities are rescaled so that
//! the mean of `sum_l r_l G_l` equals [`MEAN_SIGNAL`].

use crate::error::Result;
use crate::fields::{DepthField, ReflectivityCube};
use crate::grid::ImageDims;
use crate::irf::IrfBank;
use crate::real::Real;

pub const T_LEN: usize = 1500;
pub const T_MIN: usize = 301;
pub const T_MAX: usize = 900;
/// Mean expected signal photons per pixel at unit illumination.
pub const MEAN_SIGNAL: f64 = 0.42;

/// Support of the bundled responses, in bins.
pub const IRF_SUPPORT: usize = 480;

/// Exponentially modified Gaussian pulse sampled at integer delays and
/// normalised to unit sum: `(onset, sigma, tau)` in bins.
pub fn emg_response(support: usize, onset: f64, sigma: f64, tau: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..support)
        .map(|d| {
            let x = d as f64 - onset;
            // density of N(0, sigma^2) + Exp(1/tau)
            let lam = 1.0 / tau;
            let arg = (sigma * sigma * lam - x) / (std::f64::consts::SQRT_2 * sigma);
            0.5 * lam * (0.5 * lam * sigma * sigma - lam * x).exp() * erfc(arg)
        })
        .collect();
    let total: f64 = raw.iter().sum();
    let peak = raw.iter().copied().fold(0.0, f64::max);
    raw.into_iter()
        .map(|v| v / total)
        .map(|v| if v < 1e-9 * peak / total { 0.0 } else { v })
        .collect()
}

/// Complementary error function (Numerical Recipes `erfcc`, relative error
/// below 1.2e-7), enough for sampling a pulse shape.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t
        * (-z * z - 1.265_512_23
            + t * (1.000_023_68
                + t * (0.374_091_96
                    + t * (0.096_784_18
                        + t * (-0.186_288_06
                            + t * (0.278_868_07
                                + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77)))))))))
            .exp();
    if x >= 0.0 { ans } else { 2.0 - ans }
}

/// Pulse parameters `(onset, sigma, tau)` of the four wavelengths. The
/// onsets are staggered so the bands are separable in time.
const BANDS: [(f64, f64, f64); 4] = [(30.0, 6.0, 14.0), (80.0, 7.0, 18.0), (130.0, 8.0, 20.0), (180.0, 6.5, 24.0)];

/// Band used for single-wavelength experiments.
pub const SINGLE_BAND: usize = 1;

/// Raw responses of the four bands.
pub fn responses_l4() -> Vec<Vec<f64>> {
    BANDS.iter().map(|&(o, s, t)| emg_response(IRF_SUPPORT, o, s, t)).collect()
}

pub fn irf_bank_l4<F: Real>() -> Result<IrfBank<F>> {
    let g = responses_l4().into_iter().map(|b| b.into_iter().map(F::lit).collect()).collect();
    IrfBank::new(g, T_LEN, T_MIN, T_MAX)
}

pub fn irf_bank_l1<F: Real>() -> Result<IrfBank<F>> {
    irf_bank_l4::<F>()?.select_bands(&[SINGLE_BAND])
}

/// Spectra of the two materials over the four bands.
const MATERIAL_A: [f64; 4] = [0.35, 0.30, 0.20, 0.25];
const MATERIAL_B: [f64; 4] = [0.15, 0.65, 0.45, 0.10];

/// Membership of pixel `(r, c)` in the raised object.
fn in_object(dims: ImageDims, r: usize, c: usize) -> bool {
    let y = (r as f64 + 0.5) / dims.rows as f64 - 0.52;
    let x = (c as f64 + 0.5) / dims.cols as f64 - 0.47;
    (x / 0.33).powi(2) + (y / 0.27).powi(2) <= 1.0
}

/// Material label (0 for the plane, 1 for the object).
pub fn material_map(dims: ImageDims) -> Vec<usize> {
    (0..dims.len())
        .map(|n| {
            let (r, c) = dims.coords(n);
            usize::from(in_object(dims, r, c))
        })
        .collect()
}

/// Ground-truth depth in bins.
pub fn depth(dims: ImageDims) -> DepthField {
    let t = (0..dims.len())
        .map(|n| {
            let (r, c) = dims.coords(n);
            let u = c as f64 / (dims.cols.max(2) - 1) as f64;
            let v = r as f64 / (dims.rows.max(2) - 1) as f64;
            if in_object(dims, r, c) {
                // shallow dome
                let y = (r as f64 + 0.5) / dims.rows as f64 - 0.52;
                let x = (c as f64 + 0.5) / dims.cols as f64 - 0.47;
                (560.0 + 250.0 * (x * x + y * y)).round() as usize
            } else {
                (720.0 + 60.0 * u + 30.0 * v).round() as usize
            }
        })
        .collect();
    DepthField::new(dims, t).expect("one depth per pixel")
}

/// Ground-truth reflectivity for the chosen bands (band indices into the
/// four-wavelength set), with zero background.
pub fn reflectivity<F: Real>(dims: ImageDims, bands: &[usize], bank: &IrfBank<F>) -> Result<ReflectivityCube<F>> {
    let labels = material_map(dims);
    let mut r = Vec::with_capacity(dims.len() * bands.len());
    for &m in &labels {
        let spec = if m == 1 { &MATERIAL_B } else { &MATERIAL_A };
        // mild texture keeps the regions from being exactly flat
        r.extend(bands.iter().map(|&l| spec[l]));
    }
    for (n, chunk) in r.chunks_mut(bands.len()).enumerate() {
        let (row, col) = dims.coords(n);
        let tex = 1.0 + 0.08 * ((row as f64 * 0.9).sin() * (col as f64 * 0.7).cos());
        chunk.iter_mut().for_each(|v| *v *= tex);
    }
    let mean: f64 = r
        .chunks(bands.len())
        .map(|px| px.iter().enumerate().map(|(i, v)| v * bank.integral(i).as_f64()).sum::<f64>())
        .sum::<f64>()
        / dims.len() as f64;
    let scale = MEAN_SIGNAL / mean;
    let r = r.into_iter().map(|v| F::lit(v * scale)).collect();
    ReflectivityCube::new(dims, bands.len(), r, vec![F::zero(); dims.len()])
}

/// Complete synthetic setup for one band count (1 or 4).
#[derive(Debug, Clone)]
pub struct Phantom<F> {
    pub bank: IrfBank<F>,
    pub depth: DepthField,
    pub truth: ReflectivityCube<F>,
    pub materials: Vec<usize>,
}

/// Directory holding the bundled phantom files: `irf_l1.txt`, `irf_l4.txt`,
/// `depth.txt` and the `truth_l{1,4}` reflectivity matrices.
pub fn data_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join("phantom")
}

/// The desk-scale phantom: `32 x 32` pixels, one or four bands.
pub fn phantom<F: Real>(bands: usize) -> Result<Phantom<F>> {
    phantom_sized(ImageDims::new(32, 32), bands)
}

pub fn phantom_sized<F: Real>(dims: ImageDims, bands: usize) -> Result<Phantom<F>> {
    let (bank, idx): (IrfBank<F>, Vec<usize>) = match bands {
        1 => (irf_bank_l1()?, vec![SINGLE_BAND]),
        4 => (irf_bank_l4()?, vec![0, 1, 2, 3]),
        other => {
            return Err(crate::error::LidarError::InvalidParameter(format!(
                "the phantom has 1 or 4 bands, not {other}"
            )))
        }
    };
    let truth = reflectivity(dims, &idx, &bank)?;
    Ok(Phantom { depth: depth(dims), materials: material_map(dims), truth, bank })
}
