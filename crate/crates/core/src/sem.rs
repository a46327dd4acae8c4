//! Stochastic EM estimation of the weight field.
//!
//! Each iteration refreshes an auxiliary depth sample with a few Gibbs
//! sweeps, turns it into per-pixel depth posteriors `p~`, and maximises the
//! resulting surrogate `Q~(W) = Q~_2(W) + log f(W | Phi)` over the simplex.
//! After the burn-in the last iterates are averaged.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::HyperParams;
use crate::error::{LidarError, Result};
use crate::fields::{DepthField, WeightField};
use crate::gibbs::{checkerboard_sweep, softmax, Profiles, StreamKeys};
use crate::irf::IrfBank;
use crate::optim::admm::{admm_maximize_q_warm, mrf_objective, AdmmWarm};
use crate::optim::beta::newton_update_beta;
use crate::optim::pixel::{newton_maximize_q_pixel, PixelData, PixelObjective};
use crate::priors::{dirichlet_log_normalizer, log_prior_beta, PriorModel};
use crate::real::Real;
use crate::rng::Stream;
use crate::scene::SceneCube;
use crate::xcorr::xcorr_depth;

/// Mutable state of the sampler-optimiser loop.
#[derive(Debug, Clone)]
pub struct SemState<F> {
    pub weights: WeightField<F>,
    pub prior: PriorModel<F>,
    pub t_tilde: DepthField,
    /// `N x K` depth posteriors, row-major.
    pub p_tilde: Vec<F>,
    pub iter: usize,
    pub trace: Vec<TraceRow>,
    /// ADMM multipliers from the previous M-step (MRF priors only).
    pub admm_warm: Option<AdmmWarm<F>>,
}

/// One iteration of the trace. The three surrogate values bracket the two
/// blocks of the M-step at fixed `p~`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub rel_error: f64,
    /// `Q~(W_i, Phi_i)`.
    pub q_before: f64,
    /// `Q~(W_{i+1}, Phi_i)`.
    pub q_after_w: f64,
    /// `Q~(W_{i+1}, Phi_{i+1})`; equal to `q_after_w` without hyperparameters.
    pub q_value: f64,
    pub seconds: f64,
    pub burn_in: bool,
}

impl<F: Real> SemState<F> {
    /// Initial state: weights `w0`, auxiliary depths from the matched filter.
    pub fn new(scene: &SceneCube, bank: &IrfBank<F>, prior: PriorModel<F>, w0: WeightField<F>) -> Result<Self> {
        check_shapes(scene, bank, &w0)?;
        w0.check_simplex()?;
        let t_tilde = xcorr_depth(scene, bank);
        Ok(Self { weights: w0, prior, t_tilde, p_tilde: Vec::new(), iter: 0, trace: Vec::new(), admm_warm: None })
    }

    /// Row `n` of `p~`.
    pub fn p_row(&self, n: usize) -> &[F] {
        let k = self.p_tilde.len() / self.weights.n_pixels();
        &self.p_tilde[n * k..(n + 1) * k]
    }
}

fn check_shapes<F: Real>(scene: &SceneCube, bank: &IrfBank<F>, w: &WeightField<F>) -> Result<()> {
    if w.n_pixels() != scene.n_pixels() || w.dims() != scene.dims() {
        return Err(LidarError::SizeMismatch("weight field and scene differ in shape".into()));
    }
    if w.bands() != bank.bands() {
        return Err(LidarError::SizeMismatch(format!("{} weight bands for {} responses", w.bands(), bank.bands())));
    }
    if scene.t_len() != bank.t_len() {
        return Err(LidarError::SizeMismatch(format!("scene has {} bins, responses assume {}", scene.t_len(), bank.t_len())));
    }
    Ok(())
}

/// Knobs that tests and the coarse clustering pass need beyond the
/// hyperparameters.
#[derive(Debug, Clone, Default)]
pub struct SemOptions {
    /// Random stream key per pixel (defaults to the pixel index).
    pub pixel_keys: Option<Vec<u64>>,
    /// Starting auxiliary depths (defaults to the matched filter).
    pub initial_depth: Option<DepthField>,
    /// Stop after this many iterations and return the last iterate
    /// without averaging.
    pub truncate: Option<usize>,
}

/// Result of [`run_sem`].
#[derive(Debug, Clone)]
pub struct SemOutput<F> {
    pub weights: WeightField<F>,
    /// Final Dirichlet parameters (empty when none are estimated).
    pub phi: Vec<Vec<F>>,
    pub trace: Vec<TraceRow>,
    /// Iterations spent in the burn-in.
    pub burnin_iters: usize,
    /// The burn-in stopped at its cap rather than on the threshold.
    pub burnin_capped: bool,
    /// Last auxiliary depth sample.
    pub t_tilde: DepthField,
}

impl<F> SemOutput<F> {
    pub fn total_iters(&self) -> usize {
        self.trace.len()
    }

    /// Writes the trace as CSV with columns `iter,rel_error,q_value,wall_time`.
    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        write_trace_csv(&self.trace, path)
    }
}

pub fn write_trace_csv(trace: &[TraceRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| LidarError::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        writeln!(out, "iter,rel_error,q_value,wall_time")?;
        for r in trace {
            writeln!(out, "{},{:e},{:e},{:e}", r.iter, r.rel_error, r.q_value, r.seconds)?;
        }
        out.flush()
    };
    write().map_err(|e| LidarError::io(path, e))
}

/// Redraws the auxiliary depths with `passes` checkerboard sweeps from the
/// previous sample.
#[allow(clippy::too_many_arguments)]
pub fn sample_t_tilde<F: Real>(
    state: &SemState<F>,
    scene: &SceneCube,
    bank: &IrfBank<F>,
    epsilon: F,
    passes: usize,
    seed: u64,
    pixel_keys: Option<&[u64]>,
) -> DepthField {
    let profiles = Profiles::compute(scene, &state.weights, bank);
    let mut depth = state.t_tilde.clone();
    let keys = StreamKeys { seed, purpose: Stream::AuxDepth, pixel_keys };
    sweep_passes(&profiles, &mut depth, epsilon, passes, keys, state.iter);
    depth
}

fn sweep_passes<F: Real>(
    profiles: &Profiles<F>,
    depth: &mut DepthField,
    epsilon: F,
    passes: usize,
    keys: StreamKeys<'_>,
    iter: usize,
) {
    let dims = depth.dims();
    for pass in 0..passes {
        let round = (iter * passes + pass) as u64;
        checkerboard_sweep(profiles, depth.as_mut_slice(), dims, epsilon, keys, round);
    }
}

/// `p~_{n,k}`: conditional of each pixel's depth given the others' sampled
/// depths, normalised over `k`.
pub fn compute_p_tilde<F: Real>(
    t_tilde: &DepthField,
    state: &SemState<F>,
    scene: &SceneCube,
    bank: &IrfBank<F>,
    epsilon: F,
) -> Vec<F> {
    let profiles = Profiles::compute(scene, &state.weights, bank);
    p_tilde_from(&profiles, t_tilde, epsilon)
}

fn p_tilde_from<F: Real>(profiles: &Profiles<F>, t_tilde: &DepthField, epsilon: F) -> Vec<F> {
    let k_len = profiles.k_len();
    let dims = t_tilde.dims();
    let mut out = vec![F::zero(); dims.len() * k_len];
    out.par_chunks_mut(k_len).enumerate().for_each(|(n, row)| {
        let logits = profiles.logits(n, t_tilde.as_slice(), dims, epsilon);
        row.copy_from_slice(&softmax(&logits));
    });
    out
}

/// Per-pixel data terms built from the current `p~`.
pub fn pixel_data<F: Real>(p_tilde: &[F], scene: &SceneCube, bank: &IrfBank<F>) -> Vec<PixelData<F>> {
    let k_len = bank.n_depths();
    (0..scene.n_pixels())
        .into_par_iter()
        .map(|n| PixelData::from_posterior(scene.photons(n), &p_tilde[n * k_len..(n + 1) * k_len], bank))
        .collect()
}

/// `Q~(W, Phi)` for the given data terms, up to terms independent of both.
pub fn surrogate<F: Real>(data: &[PixelData<F>], weights: &WeightField<F>, prior: &PriorModel<F>) -> F {
    if prior.kind().is_mrf() {
        return mrf_objective(data, weights, prior);
    }
    let alphas: Vec<Vec<F>> = prior.betas().iter().map(|b| b.iter().map(|&v| v - F::one()).collect()).collect();
    let per_pixel: Vec<F> = data
        .par_iter()
        .enumerate()
        .map(|(n, d)| PixelObjective::with_dirichlet(d, &alphas[prior.group_of(n)]).value(weights.pixel(n)))
        .collect();
    let mut total: F = per_pixel.into_iter().sum();
    if prior.kind().estimates_beta() {
        let groups = prior.groups(weights.n_pixels());
        for (beta, members) in prior.betas().iter().zip(&groups) {
            total += F::from_count(members.len() as u64) * dirichlet_log_normalizer(beta);
            total += log_prior_beta(beta, prior.theta());
        }
    }
    total
}

/// Outcome of one M-step.
#[derive(Debug, Clone)]
pub struct MStep<F> {
    pub weights: WeightField<F>,
    pub phi: Vec<Vec<F>>,
    pub q_before: F,
    pub q_after_w: F,
    pub q_after_phi: F,
    pub admm_warm: Option<AdmmWarm<F>>,
}

/// Maximises the surrogate in `W` (then in the Dirichlet parameters when
/// they are estimated) for the `p~` stored in `state`.
pub fn m_step<F: Real>(state: &SemState<F>, scene: &SceneCube, bank: &IrfBank<F>, hyper: &HyperParams) -> Result<MStep<F>> {
    let data = pixel_data(&state.p_tilde, scene, bank);
    let prior = &state.prior;
    let q_before = surrogate(&data, &state.weights, prior);
    let mut admm_warm = state.admm_warm.clone();
    let weights = if prior.kind().is_mrf() {
        admm_maximize_q_warm(&data, prior, &state.weights, &hyper.admm, &hyper.newton, &mut admm_warm)?.weights
    } else {
        dirichlet_weights(&data, prior, &state.weights, hyper)?
    };
    let q_after_w = surrogate(&data, &weights, prior);
    let (phi, q_after_phi) = if prior.kind().estimates_beta() {
        let groups = prior.groups(weights.n_pixels());
        let betas: Vec<Vec<F>> = prior
            .betas()
            .par_iter()
            .zip(groups.par_iter())
            .map(|(beta, members)| {
                let pixels: Vec<&[F]> = members.iter().map(|&n| weights.pixel(n)).collect();
                newton_update_beta(&pixels, prior.theta(), beta)
            })
            .collect();
        let mut updated = prior.clone();
        updated.set_betas(betas.clone());
        let q = surrogate(&data, &weights, &updated);
        (betas, q)
    } else {
        (Vec::new(), q_after_w)
    };
    Ok(MStep { weights, phi, q_before, q_after_w, q_after_phi, admm_warm })
}

fn dirichlet_weights<F: Real>(
    data: &[PixelData<F>],
    prior: &PriorModel<F>,
    current: &WeightField<F>,
    hyper: &HyperParams,
) -> Result<WeightField<F>> {
    let bands = current.bands();
    let rows: Vec<Result<Vec<F>>> = data
        .par_iter()
        .enumerate()
        .map(|(n, d)| {
            let beta = prior.beta_for(n);
            let w0 = current.pixel(n);
            let out = newton_maximize_q_pixel(d, beta, w0, &hyper.newton)?;
            // keep the old point if guarding the start cost more than Newton gained
            let alpha: Vec<F> = beta.iter().map(|&b| b - F::one()).collect();
            let obj = PixelObjective::with_dirichlet(d, &alpha);
            if obj.value(w0) > obj.value(&out.w) {
                Ok(w0.to_vec())
            } else {
                Ok(out.w)
            }
        })
        .collect();
    let mut flat = Vec::with_capacity(data.len() * bands);
    for r in rows {
        flat.extend(r?);
    }
    WeightField::from_vec(current.dims(), bands, flat)
}

/// Runs the stochastic EM loop with default options.
pub fn run_sem<F: Real>(
    scene: &SceneCube,
    bank: &IrfBank<F>,
    prior: PriorModel<F>,
    hyper: &HyperParams,
    w0: WeightField<F>,
    seed: u64,
) -> Result<SemOutput<F>> {
    run_sem_with(scene, bank, prior, hyper, w0, seed, &SemOptions::default())
}

/// Runs the stochastic EM loop: burn-in until the relative change of `W`
/// drops below `d_eps` (or `burnin_cap` iterations), then `n_extra` more
/// iterations whose weights are averaged.
pub fn run_sem_with<F: Real>(
    scene: &SceneCube,
    bank: &IrfBank<F>,
    prior: PriorModel<F>,
    hyper: &HyperParams,
    w0: WeightField<F>,
    seed: u64,
    options: &SemOptions,
) -> Result<SemOutput<F>> {
    hyper.validate()?;
    let mut state = SemState::new(scene, bank, prior, w0)?;
    if let Some(t0) = &options.initial_depth {
        t0.validate(bank.t_min(), bank.t_max())?;
        if t0.dims() != scene.dims() {
            return Err(LidarError::SizeMismatch("initial depth map and scene differ in shape".into()));
        }
        state.t_tilde = t0.clone();
    }
    if let Some(keys) = &options.pixel_keys {
        if keys.len() != scene.n_pixels() {
            return Err(LidarError::SizeMismatch(format!("{} stream keys for {} pixels", keys.len(), scene.n_pixels())));
        }
    }
    let keys = StreamKeys { seed, purpose: Stream::AuxDepth, pixel_keys: options.pixel_keys.as_deref() };
    let epsilon = F::lit(hyper.epsilon);
    let d_eps = F::lit(hyper.d_eps);

    let mut burn_in = true;
    let mut burnin_iters = 0;
    let mut burnin_capped = false;
    let mut tail: Vec<WeightField<F>> = Vec::new();

    loop {
        if let Some(limit) = options.truncate {
            if state.iter >= limit {
                let phi = state.prior.phi().to_vec();
                return Ok(SemOutput {
                    weights: state.weights,
                    phi,
                    trace: state.trace,
                    burnin_iters: state.iter,
                    burnin_capped: false,
                    t_tilde: state.t_tilde,
                });
            }
        }
        let start = Instant::now();
        let profiles = Profiles::compute(scene, &state.weights, bank);
        sweep_passes(&profiles, &mut state.t_tilde, epsilon, hyper.gibbs_passes, keys, state.iter);
        state.p_tilde = p_tilde_from(&profiles, &state.t_tilde, epsilon);
        drop(profiles);
        let step = m_step(&state, scene, bank, hyper)?;

        let norm = state.weights.frobenius();
        let change = step.weights.distance(&state.weights);
        let rel = if norm > F::zero() { change / norm } else { change };
        state.weights = step.weights;
        state.admm_warm = step.admm_warm;
        if !step.phi.is_empty() {
            state.prior.set_betas(step.phi);
        }
        state.iter += 1;
        state.trace.push(TraceRow {
            iter: state.iter,
            rel_error: rel.as_f64(),
            q_before: step.q_before.as_f64(),
            q_after_w: step.q_after_w.as_f64(),
            q_value: step.q_after_phi.as_f64(),
            seconds: start.elapsed().as_secs_f64(),
            burn_in,
        });

        if burn_in {
            burnin_iters += 1;
            if rel < d_eps || burnin_iters >= hyper.burnin_cap {
                burnin_capped = !(rel < d_eps);
                burn_in = false;
            }
        } else {
            tail.push(state.weights.clone());
            if tail.len() >= hyper.n_extra {
                break;
            }
        }
    }
    let weights = WeightField::mean_of(&tail)?;
    let phi = state.prior.phi().to_vec();
    Ok(SemOutput { weights, phi, trace: state.trace, burnin_iters, burnin_capped, t_tilde: state.t_tilde })
}
