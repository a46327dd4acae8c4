//! Consensus ADMM for the M-step under the TV and Laplacian priors.
//!
//! The inner solver splits the weights into three copies with constraints
//! `U = Z`, `V = Z`. `(U, V)` is one separable block, so this is two-block
//! ADMM and inherits its convergence guarantees.

use rayon::prelude::*;

use super::pixel::{solve_spd, PixelData};
use super::simplex::project_simplex_leq;
use super::tv::{laplacian_prox, tv_prox, TvDual};
use crate::config::{AdmmConfig, NewtonConfig, PriorKind};
use crate::error::{LidarError, Result};
use crate::fields::WeightField;
use crate::grid;
use crate::priors::PriorModel;
use crate::real::Real;

#[derive(Debug, Clone)]
pub struct AdmmOutcome<F> {
    /// Final iterate (never worse than the start point).
    pub weights: WeightField<F>,
    pub objective: F,
    /// Total inner ADMM iterations.
    pub iters: usize,
    /// `false` when `max_iters` was reached before the residual test passed.
    pub converged: bool,
    /// Objective after each accepted outer step (starting value first).
    pub trace: Vec<F>,
}

/// Value of the MRF log-prior without the simplex check.
pub fn mrf_log_prior<F: Real>(weights: &WeightField<F>, model: &PriorModel<F>) -> F {
    let dims = weights.dims();
    let lambda = model.lambda();
    if lambda == F::zero() {
        return F::zero();
    }
    match model.kind() {
        PriorKind::Tv => -lambda * (0..weights.bands()).map(|l| grid::total_variation(dims, &weights.band(l))).sum::<F>(),
        PriorKind::Lap => {
            let sq: F = (0..weights.bands())
                .map(|l| grid::laplacian(dims, &weights.band(l)).iter().map(|v| *v * *v).sum::<F>())
                .sum();
            -lambda * F::lit(0.5) * sq
        }
        _ => F::zero(),
    }
}

/// Surrogate objective `sum_n D_n(w_n) + log f(W)` for an MRF prior.
pub fn mrf_objective<F: Real>(data: &[PixelData<F>], weights: &WeightField<F>, model: &PriorModel<F>) -> F {
    let d: F = data.par_iter().enumerate().map(|(n, dn)| dn.value(weights.pixel(n))).collect::<Vec<F>>().into_iter().sum();
    if !d.is_finite() {
        return d;
    }
    d + mrf_log_prior(weights, model)
}

fn sq_norm<F: Real>(x: &[F]) -> F {
    x.iter().map(|v| *v * *v).sum()
}

/// Per-pixel concave quadratic model `g.(w - w0) - 1/2 (w - w0)^T H (w - w0)`
/// of the data term (`H` positive semidefinite, row-major `L x L`).
struct Quadratic<F> {
    center: Vec<F>,
    grad: Vec<F>,
    hess: Vec<F>,
}

/// Over-relaxation factor of the `Z` and dual updates.
const RELAXATION: f64 = 1.6;

/// Inner solves (of `max_iters` each) allowed per outer iteration before a
/// step without predicted gain ends the outer loop.
const MAX_INNER_RESTARTS: usize = 5;

/// ADMM penalty and dual variables carried from one call to the next, so a
/// sequence of nearby problems (successive M-steps) starts from the
/// previous multipliers.
#[derive(Debug, Clone)]
pub struct AdmmWarm<F> {
    y1: Vec<F>,
    y2: Vec<F>,
    rho: F,
    duals: Vec<TvDual<F>>,
}

/// ADMM variables, reused across outer iterations.
struct AdmmVars<F> {
    u: Vec<F>,
    v: Vec<F>,
    z: Vec<F>,
    y1: Vec<F>,
    y2: Vec<F>,
    rho: F,
    duals: Vec<TvDual<F>>,
}

/// Approximately maximises `sum_n D_n(w_n) + log f(W)` over `S_L^N` for a
/// TV or Laplacian prior, starting from `w0`.
///
/// Each outer iteration replaces the data terms by their second-order
/// expansion at the current point and solves the resulting problem with
/// ADMM (splitting `U = Z`, `V = Z`: `U` carries the quadratic data model,
/// `V` the image prior, `Z` the simplex). The outer step is then
/// backtracked on the true objective, so the objective never decreases.
pub fn admm_maximize_q<F: Real>(
    data: &[PixelData<F>],
    model: &PriorModel<F>,
    w0: &WeightField<F>,
    cfg: &AdmmConfig,
    newton: &NewtonConfig,
) -> Result<AdmmOutcome<F>> {
    admm_maximize_q_warm(data, model, w0, cfg, newton, &mut None)
}

/// As [`admm_maximize_q`], starting from and updating the multipliers in
/// `warm` (ignored when its shape does not match).
pub fn admm_maximize_q_warm<F: Real>(
    data: &[PixelData<F>],
    model: &PriorModel<F>,
    w0: &WeightField<F>,
    cfg: &AdmmConfig,
    newton: &NewtonConfig,
    warm: &mut Option<AdmmWarm<F>>,
) -> Result<AdmmOutcome<F>> {
    if !model.kind().is_mrf() {
        return Err(LidarError::InvalidParameter(format!("ADMM handles TV and Laplacian priors, not {}", model.kind())));
    }
    if data.len() != w0.n_pixels() {
        return Err(LidarError::SizeMismatch(format!("{} pixel terms for {} pixels", data.len(), w0.n_pixels())));
    }
    cfg.validate()?;
    newton.validate()?;
    let dims = w0.dims();
    let bands = w0.bands();
    let n_pix = w0.n_pixels();

    let mut current = w0.clone();
    let mut obj = mrf_objective(data, &current, model);
    if !obj.is_finite() {
        return Err(LidarError::InvalidParameter("ADMM start point outside the objective domain".into()));
    }
    let reuse = warm.take().filter(|w| w.y1.len() == n_pix * bands && w.duals.len() == bands);
    let fresh = reuse.is_none();
    let start = reuse.unwrap_or_else(|| AdmmWarm {
        y1: vec![F::zero(); n_pix * bands],
        y2: vec![F::zero(); n_pix * bands],
        rho: F::lit(cfg.rho),
        duals: (0..bands).map(|_| TvDual::zeros(n_pix)).collect(),
    });
    let mut vars = AdmmVars {
        u: current.as_slice().to_vec(),
        v: current.as_slice().to_vec(),
        z: current.as_slice().to_vec(),
        y1: start.y1,
        y2: start.y2,
        rho: start.rho,
        duals: start.duals,
    };
    let mut trace = vec![obj];
    let mut inner_total = 0;
    let mut converged = false;
    let armijo = F::lit(1e-4);
    let shrink = F::lit(newton.backtrack);
    let obj_tol = F::lit(cfg.tol_rel) * F::lit(1e-4);

    for _outer in 0..newton.max_iters {
        let models: Vec<Quadratic<F>> = data
            .par_iter()
            .enumerate()
            .map(|(n, d)| {
                let w = current.pixel(n);
                let mut grad = vec![F::zero(); bands];
                let mut hess = vec![F::zero(); bands * bands];
                d.accumulate_derivatives(w, &mut grad, &mut hess);
                hess.iter_mut().for_each(|h| *h = -*h);
                Quadratic { center: w.to_vec(), grad, hess }
            })
            .collect();
        let model_value = |w: &[F]| -> F {
            let mut total = F::zero();
            for (n, q) in models.iter().enumerate() {
                let dw: Vec<F> = (0..bands).map(|l| w[n * bands + l] - q.center[l]).collect();
                for l in 0..bands {
                    total += q.grad[l] * dw[l];
                    let hd: F = (0..bands).map(|m| q.hess[l * bands + m] * dw[m]).sum();
                    total -= F::lit(0.5) * dw[l] * hd;
                }
            }
            total
        };
        if fresh && trace.len() == 1 {
            // duals satisfying the U-step optimality condition at the start
            for (n, q) in models.iter().enumerate() {
                for l in 0..bands {
                    vars.y1[n * bands + l] = q.grad[l];
                    vars.y2[n * bands + l] = -q.grad[l];
                }
            }
        }
        // reset the splitting copies at the expansion point, keep the duals
        vars.z.copy_from_slice(current.as_slice());
        vars.u.copy_from_slice(current.as_slice());
        vars.v.copy_from_slice(current.as_slice());
        let base_prior = mrf_log_prior(&current, model);
        let mut attempt = 0;
        let (target_field, predicted, inner_ok) = loop {
            let (target, iters, inner_ok) = solve_quadratic(&models, model, dims, bands, &mut vars, cfg)?;
            inner_total += iters;
            let target_field = WeightField::from_vec(dims, bands, target)?;
            let predicted = model_value(target_field.as_slice()) + mrf_log_prior(&target_field, model) - base_prior;
            attempt += 1;
            // an unfinished inner solve that shows no gain gets more iterations
            if inner_ok || predicted > obj_tol * (F::one() + obj.abs()) || attempt >= MAX_INNER_RESTARTS {
                break (target_field, predicted, inner_ok);
            }
        };
        if !(predicted > obj_tol * (F::one() + obj.abs())) {
            converged = inner_ok;
            break;
        }
        let dir: Vec<F> = target_field.as_slice().iter().zip(current.as_slice()).map(|(&a, &b)| a - b).collect();
        let mut t = F::one();
        let mut accepted = None;
        for _ in 0..newton.max_backtracks {
            let cand: Vec<F> = current.as_slice().iter().zip(&dir).map(|(&a, &d)| a + t * d).collect();
            let cand = WeightField::from_vec(dims, bands, clamp_to_simplex(cand, bands))?;
            let val = mrf_objective(data, &cand, model);
            if val.is_finite() && val >= obj + armijo * t * predicted {
                accepted = Some((cand, val));
                break;
            }
            t *= shrink;
        }
        match accepted {
            Some((cand, val)) => {
                current = cand;
                obj = val;
                trace.push(obj);
            }
            None => {
                converged = inner_ok;
                break;
            }
        }
    }
    *warm = Some(AdmmWarm { y1: vars.y1, y2: vars.y2, rho: vars.rho, duals: vars.duals });
    Ok(AdmmOutcome { weights: current, objective: obj, iters: inner_total, converged, trace })
}

/// Removes rounding excursions outside the simplex from a convex
/// combination of simplex points.
fn clamp_to_simplex<F: Real>(mut w: Vec<F>, bands: usize) -> Vec<F> {
    for px in w.chunks_mut(bands) {
        px.iter_mut().for_each(|v| *v = v.max(F::zero()));
        let s: F = px.iter().copied().sum();
        if s > F::one() {
            let scale = (F::one() - F::epsilon()) / s;
            px.iter_mut().for_each(|v| *v *= scale);
        }
    }
    w
}

/// ADMM on the quadratic model plus prior over the simplex. Returns the
/// feasible `Z` iterate, the iteration count and whether the residual test
/// passed.
fn solve_quadratic<F: Real>(
    models: &[Quadratic<F>],
    model: &PriorModel<F>,
    dims: grid::ImageDims,
    bands: usize,
    vars: &mut AdmmVars<F>,
    cfg: &AdmmConfig,
) -> Result<(Vec<F>, usize, bool)> {
    let n_pix = models.len();
    let len = n_pix * bands;
    let lambda = model.lambda();
    let abs_tol = F::lit(cfg.tol_abs);
    let rel_tol = F::lit(cfg.tol_rel);
    let sqrt_p = F::from_count(2 * len as u64).sqrt();

    for iter in 0..cfg.max_iters {
        let rho = vars.rho;
        // U: (H + rho I) u = g + H c0 + rho (z - y1 / rho)
        let z = &vars.z;
        let y1 = &vars.y1;
        vars.u.par_chunks_mut(bands).enumerate().for_each(|(n, u)| {
            let q = &models[n];
            let mut a = q.hess.clone();
            let mut b = vec![F::zero(); bands];
            for l in 0..bands {
                a[l * bands + l] += rho;
                let hc: F = (0..bands).map(|m| q.hess[l * bands + m] * q.center[m]).sum();
                b[l] = q.grad[l] + hc + rho * z[n * bands + l] - y1[n * bands + l];
            }
            let sol = solve_spd(&a, &b, bands).expect("H + rho I is positive definite");
            u.copy_from_slice(&sol);
        });

        // V: prior prox per band
        let mu = lambda / rho;
        let z = &vars.z;
        let y2 = &vars.y2;
        let v_prev = &vars.v;
        let new_v: Vec<Vec<F>> = vars
            .duals
            .par_iter_mut()
            .enumerate()
            .map(|(l, dual)| {
                let a: Vec<F> = (0..n_pix).map(|n| z[n * bands + l] - y2[n * bands + l] / rho).collect();
                if mu == F::zero() {
                    return a;
                }
                match model.kind() {
                    PriorKind::Tv => tv_prox(dims, &a, mu, cfg.tv_inner_iters, dual),
                    _ => {
                        let prev: Vec<F> = (0..n_pix).map(|n| v_prev[n * bands + l]).collect();
                        laplacian_prox(dims, &a, mu, &prev, F::lit(cfg.cg_tol), 10 * n_pix + 100)
                    }
                }
            })
            .collect();
        for (l, band) in new_v.into_iter().enumerate() {
            for n in 0..n_pix {
                vars.v[n * bands + l] = band[n];
            }
        }

        // Z: projection of the averaged (over-relaxed) copies
        let relax = F::lit(RELAXATION);
        let z_prev = vars.z.clone();
        let uh: Vec<F> = (0..len).map(|i| relax * vars.u[i] + (F::one() - relax) * z_prev[i]).collect();
        let vh: Vec<F> = (0..len).map(|i| relax * vars.v[i] + (F::one() - relax) * z_prev[i]).collect();
        for n in 0..n_pix {
            let range = n * bands..(n + 1) * bands;
            let avg: Vec<F> = range
                .clone()
                .map(|i| F::lit(0.5) * (uh[i] + vars.y1[i] / rho + vh[i] + vars.y2[i] / rho))
                .collect();
            vars.z[range].copy_from_slice(&project_simplex_leq(&avg));
        }

        let mut r_sq = F::zero();
        for i in 0..len {
            let ru = vars.u[i] - vars.z[i];
            let rv = vars.v[i] - vars.z[i];
            vars.y1[i] += rho * (uh[i] - vars.z[i]);
            vars.y2[i] += rho * (vh[i] - vars.z[i]);
            r_sq += ru * ru + rv * rv;
        }
        let dz: Vec<F> = vars.z.iter().zip(&z_prev).map(|(a, b)| *a - *b).collect();
        let r_norm = r_sq.sqrt();
        let s_norm = rho * (F::lit(2.0) * sq_norm(&dz)).sqrt();
        let eps_pri = sqrt_p * abs_tol
            + rel_tol * (sq_norm(&vars.u) + sq_norm(&vars.v)).sqrt().max((F::lit(2.0) * sq_norm(&vars.z)).sqrt());
        let eps_dual = sqrt_p * abs_tol + rel_tol * (sq_norm(&vars.y1) + sq_norm(&vars.y2)).sqrt();
        if r_norm <= eps_pri && s_norm <= eps_dual {
            return Ok((vars.z.clone(), iter + 1, true));
        }
        if cfg.adapt_rho {
            let ten = F::lit(10.0);
            if r_norm > ten * s_norm {
                vars.rho *= F::lit(2.0);
            } else if s_norm > ten * r_norm {
                vars.rho *= F::lit(0.5);
            }
        }
    }
    Ok((vars.z.clone(), cfg.max_iters, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ImageDims;
    use crate::optim::pixel::{newton_maximize, PixelObjective};
    use crate::irf::IrfBank;
    use crate::scene::Photon;

    fn bank() -> IrfBank<f64> {
        IrfBank::new(vec![vec![0.2, 1.0, 0.4], vec![0.6, 0.3, 0.1]], 40, 3, 30).unwrap()
    }

    fn toy_data(n_pix: usize, bank: &IrfBank<f64>) -> Vec<PixelData<f64>> {
        (0..n_pix)
            .map(|n| {
                let t = 8 + n % 3;
                let mut ph = vec![Photon { bin: t as u32, count: 3 + (n % 2) as u32 }, Photon { bin: t as u32 + 1, count: 5 }];
                ph.push(Photon { bin: 35, count: 2 });
                ph.push(Photon { bin: 2 + (n % 5) as u32, count: 3 });
                ph.sort_by_key(|p| p.bin);
                PixelData::at_depth(&ph, t, bank)
            })
            .collect()
    }

    #[test]
    fn zero_strength_matches_per_pixel_newton() {
        let bank = bank();
        let dims = ImageDims::new(2, 3);
        let data = toy_data(6, &bank);
        let w0 = WeightField::interior_start(dims, 2);
        let cfg = AdmmConfig { max_iters: 2000, tol_abs: 1e-10, tol_rel: 1e-9, ..AdmmConfig::default() };
        let out = admm_maximize_q(&data, &PriorModel::tv(0.0), &w0, &cfg, &NewtonConfig::default()).unwrap();
        for (n, d) in data.iter().enumerate() {
            let oracle = newton_maximize(&PixelObjective::data_only(d), &[0.2, 0.2], &NewtonConfig::default()).unwrap();
            let s: f64 = oracle.w.iter().sum();
            assert!(oracle.w.iter().all(|v| *v > 0.0) && s < 1.0, "oracle must be interior");
            for l in 0..2 {
                assert!((out.weights.get(n, l) - oracle.w[l]).abs() < 1e-4, "{n} {l}");
            }
        }
    }

    #[test]
    fn objective_trace_is_monotone_and_beats_start() {
        let bank = bank();
        let dims = ImageDims::new(4, 4);
        let data = toy_data(16, &bank);
        let w0 = WeightField::interior_start(dims, 2);
        for model in [PriorModel::tv(2.0), PriorModel::lap(0.5)] {
            let out = admm_maximize_q(&data, &model, &w0, &AdmmConfig::default(), &NewtonConfig::default()).unwrap();
            let start = mrf_objective(&data, &w0, &model);
            assert!(out.objective >= start - 1e-9);
            for pair in out.trace.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-9);
            }
            assert!(out.weights.is_in_simplex());
        }
    }

    #[test]
    fn pure_background_drives_weights_to_zero() {
        let bank = IrfBank::new(vec![vec![1.0, 0.5]], 40, 3, 30).unwrap();
        let dims = ImageDims::new(2, 2);
        // one photon per pixel far outside any admissible return window
        let data: Vec<_> = (0..4).map(|_| PixelData::at_depth(&[Photon { bin: 2, count: 1 }], 10, &bank)).collect();
        let w0 = WeightField::interior_start(dims, 1);
        let out = admm_maximize_q(&data, &PriorModel::tv(1.0), &w0, &AdmmConfig::default(), &NewtonConfig::default()).unwrap();
        for n in 0..4 {
            assert!(out.weights.get(n, 0) < 1e-3);
        }
    }

    #[test]
    fn deterministic() {
        let bank = bank();
        let dims = ImageDims::new(3, 3);
        let data = toy_data(9, &bank);
        let w0 = WeightField::interior_start(dims, 2);
        let a = admm_maximize_q(&data, &PriorModel::tv(1.0), &w0, &AdmmConfig::default(), &NewtonConfig::default()).unwrap();
        let b = admm_maximize_q(&data, &PriorModel::tv(1.0), &w0, &AdmmConfig::default(), &NewtonConfig::default()).unwrap();
        assert_eq!(a.weights, b.weights);
    }
}
