//! Proximal operators of the image priors.

use crate::grid::{self, ImageDims};
use crate::real::Real;

/// Dual variable of the anisotropic TV prox, kept between calls so that
/// repeated proxes of slowly changing images start warm.
#[derive(Debug, Clone, PartialEq)]
pub struct TvDual<F> {
    pv: Vec<F>,
    ph: Vec<F>,
}

impl<F: Real> TvDual<F> {
    pub fn zeros(len: usize) -> Self {
        Self { pv: vec![F::zero(); len], ph: vec![F::zero(); len] }
    }
}

/// `argmin_v mu ||v||_TV + 1/2 ||v - a||^2` by projected gradient on the
/// dual (step 1/8, the inverse of the bound on `||D||^2`).
///
/// The dual is stored unit-scaled (`|p| <= 1`), so a change of `mu` between
/// calls is absorbed by the scaling.
pub fn tv_prox<F: Real>(dims: ImageDims, a: &[F], mu: F, iters: usize, dual: &mut TvDual<F>) -> Vec<F> {
    if mu <= F::zero() {
        return a.to_vec();
    }
    let tau = F::lit(0.125);
    let primal = |d: &TvDual<F>| -> Vec<F> {
        let dt = grid::gradient_adjoint(dims, &d.pv, &d.ph);
        a.iter().zip(dt).map(|(&x, y)| x - mu * y).collect()
    };
    for _ in 0..iters {
        let v = primal(dual);
        let (gv, gh) = grid::gradient(dims, &v);
        // dual step in unit scale: p <- clip(p + tau/mu * D v)
        let step = tau / mu;
        for (p, g) in dual.pv.iter_mut().zip(&gv) {
            *p = (*p + step * *g).max(-F::one()).min(F::one());
        }
        for (p, g) in dual.ph.iter_mut().zip(&gh) {
            *p = (*p + step * *g).max(-F::one()).min(F::one());
        }
    }
    primal(dual)
}

/// Conjugate-gradient solve of `(I + c L^2) x = a` with the Neumann
/// Laplacian, the prox of `(c/2) ||L x||^2`. Warm-started from `x0`.
pub fn laplacian_prox<F: Real>(dims: ImageDims, a: &[F], c: F, x0: &[F], tol: F, max_iters: usize) -> Vec<F> {
    let apply = |x: &[F]| -> Vec<F> {
        let llx = grid::laplacian(dims, &grid::laplacian(dims, x));
        x.iter().zip(llx).map(|(&xi, li)| xi + c * li).collect()
    };
    let dot = |u: &[F], v: &[F]| -> F { u.iter().zip(v).map(|(&p, &q)| p * q).sum() };
    let mut x = x0.to_vec();
    let ax = apply(&x);
    let mut r: Vec<F> = a.iter().zip(ax).map(|(&ai, axi)| ai - axi).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = tol * tol * dot(a, a).max(F::min_positive_value());
    for _ in 0..max_iters {
        if rr <= target {
            break;
        }
        let ap = apply(&p);
        let alpha = rr / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prox_objective(dims: ImageDims, v: &[f64], a: &[f64], mu: f64) -> f64 {
        mu * grid::total_variation(dims, v) + 0.5 * v.iter().zip(a).map(|(x, y)| (x - y).powi(2)).sum::<f64>()
    }

    #[test]
    fn two_pixel_tv_prox_closed_form() {
        // for two pixels the prox shrinks the difference by 2 mu
        let dims = ImageDims::new(1, 2);
        let mut dual = TvDual::zeros(2);
        let v: Vec<f64> = tv_prox(dims, &[0.0, 1.0], 0.2, 500, &mut dual);
        assert!((v[0] - 0.2).abs() < 1e-9 && (v[1] - 0.8).abs() < 1e-9);
        let mut dual = TvDual::zeros(2);
        let v: Vec<f64> = tv_prox(dims, &[0.0, 1.0], 0.7, 500, &mut dual);
        assert!((v[0] - 0.5).abs() < 1e-9 && (v[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn tv_prox_beats_perturbations() {
        let dims = ImageDims::new(4, 4);
        let a: Vec<f64> = (0..16).map(|i| ((i * 5) % 7) as f64 * 0.1).collect();
        let mu = 0.05;
        let mut dual = TvDual::zeros(16);
        let v = tv_prox(dims, &a, mu, 3000, &mut dual);
        let best = prox_objective(dims, &v, &a, mu);
        for i in 0..16 {
            for delta in [1e-3, -1e-3] {
                let mut p = v.clone();
                p[i] += delta;
                assert!(prox_objective(dims, &p, &a, mu) >= best - 1e-9);
            }
        }
    }

    #[test]
    fn laplacian_prox_solves_system() {
        let dims = ImageDims::new(3, 5);
        let a: Vec<f64> = (0..15).map(|i| ((i * 3) % 4) as f64).collect();
        let x = laplacian_prox(dims, &a, 0.7, &[0.0; 15], 1e-12, 200);
        let llx = grid::laplacian(dims, &grid::laplacian(dims, &x));
        for i in 0..15 {
            assert!((x[i] + 0.7 * llx[i] - a[i]).abs() < 1e-9);
        }
    }
}
