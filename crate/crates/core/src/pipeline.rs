//! End-to-end reconstruction: weights, depth and reflectivity from a scene.

use std::time::Instant;

use crate::clustering::{cluster_pixels, Clustering};
use crate::config::{HyperParams, PriorKind};
use crate::depth::{estimate_depth, DepthEstimate};
use crate::error::Result;
use crate::fields::{DepthField, ReflectivityCube, WeightField};
use crate::irf::IrfBank;
use crate::priors::PriorModel;
use crate::real::Real;
use crate::reflectivity::{estimate_reflectivity, AnscombeTv, CountDenoiser, DenoiseConfig};
use crate::scene::SceneCube;
use crate::sem::{run_sem, SemOutput};
use crate::xcorr::{xcorr_depth, xcorr_weights};

/// Everything produced by one reconstruction.
#[derive(Debug, Clone)]
pub struct Reconstruction<F> {
    pub weights: WeightField<F>,
    pub depth: DepthField,
    /// Sampler marginals (absent for the matched-filter baseline).
    pub depth_marginals: Option<DepthEstimate>,
    pub reflectivity: ReflectivityCube<F>,
    pub denoised_counts: Vec<F>,
    /// Stochastic EM output (absent for the baseline).
    pub sem: Option<SemOutput<F>>,
    pub clusters: Option<Clustering>,
    /// Seconds spent estimating the weights, and the depth map.
    pub weight_seconds: f64,
    pub depth_seconds: f64,
}

/// Runs the full method with the given weight prior.
pub fn reconstruct<F: Real>(
    scene: &SceneCube,
    bank: &IrfBank<F>,
    kind: PriorKind,
    hyper: &HyperParams,
    denoise: &DenoiseConfig,
    seed: u64,
) -> Result<Reconstruction<F>> {
    hyper.validate()?;
    let start = Instant::now();
    let clusters = if kind == PriorKind::CDirichlet { Some(cluster_pixels(scene, bank, hyper, seed)?) } else { None };
    let prior = PriorModel::from_hyper(kind, hyper, bank.bands(), clusters.as_ref().map(|c| c.labels.clone()))?;
    let w0 = WeightField::interior_start(scene.dims(), bank.bands());
    let sem = run_sem(scene, bank, prior, hyper, w0, seed)?;
    let y_hat: Vec<F> = AnscombeTv(*denoise).denoise(scene.dims(), scene.ybar_all());
    let reflectivity = estimate_reflectivity(&sem.weights, &y_hat, bank)?;
    let weight_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let est = estimate_depth(scene, bank, &sem.weights, F::lit(hyper.epsilon), hyper.gibbs_iters, hyper.gibbs_burnin, seed)?;
    let depth_seconds = start.elapsed().as_secs_f64();
    Ok(Reconstruction {
        weights: sem.weights.clone(),
        depth: est.depth.clone(),
        depth_marginals: Some(est),
        reflectivity,
        denoised_counts: y_hat,
        sem: Some(sem),
        clusters,
        weight_seconds,
        depth_seconds,
    })
}

/// Matched-filter depth, maximum-likelihood weights, same reflectivity step.
pub fn reconstruct_baseline<F: Real>(
    scene: &SceneCube,
    bank: &IrfBank<F>,
    hyper: &HyperParams,
    denoise: &DenoiseConfig,
) -> Result<Reconstruction<F>> {
    let start = Instant::now();
    let depth = xcorr_depth(scene, bank);
    let depth_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let weights = xcorr_weights(scene, &depth, bank, &hyper.newton)?;
    let y_hat: Vec<F> = AnscombeTv(*denoise).denoise(scene.dims(), scene.ybar_all());
    let reflectivity = estimate_reflectivity(&weights, &y_hat, bank)?;
    Ok(Reconstruction {
        weights,
        depth,
        depth_marginals: None,
        reflectivity,
        denoised_counts: y_hat,
        sem: None,
        clusters: None,
        weight_seconds: start.elapsed().as_secs_f64(),
        depth_seconds,
    })
}
