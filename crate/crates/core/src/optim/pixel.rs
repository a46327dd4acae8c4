//! Per-pixel M-step objective and its damped Newton solver.
//!
//! For a pixel with photons `(s_p, m_p)` and depth posterior `p_k`, the data
//! term `sum_k p_k sum_p m_p log p(s_p | w, k)` only depends on the delay
//! `d = s_p - k` through the response values `g_l(d) / G_l`. Grouping pairs
//! by delay gives the exact sufficient statistics
//!
//! ```text
//! c_d = sum_p m_p p_{s_p - d},     M_out = ybar - sum_d c_d,
//! D(w) = sum_d c_d log(bg + sum_l w_l g_l(d)/G_l) + M_out log(bg),
//! ```
//!
//! with `bg = (1 - sum w) / T`, so each evaluation costs `O(support x L)`.

use crate::config::NewtonConfig;
use crate::error::{LidarError, Result};
use crate::irf::IrfBank;
use crate::real::Real;
use crate::scene::Photon;

/// Sufficient statistics of one pixel's data term.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelData<F> {
    bands: usize,
    inv_t: F,
    coef: Vec<F>,
    /// `coef.len() x bands` normalised response values.
    basis: Vec<F>,
    out_mass: F,
}

impl<F: Real> PixelData<F> {
    /// Data term under a depth posterior `p_row` over `[t_min, t_max]`.
    pub fn from_posterior(photons: &[Photon], p_row: &[F], bank: &IrfBank<F>) -> Self {
        debug_assert_eq!(p_row.len(), bank.n_depths());
        let support = bank.support();
        let t_min = bank.t_min();
        let mut by_delay = vec![F::zero(); support];
        let mut out_mass = F::zero();
        for p in photons {
            let s = p.bin as usize;
            let m = F::from_count(p.count as u64);
            let k_hi = s.min(bank.t_max());
            let k_lo = (s + 1).saturating_sub(support).max(t_min);
            let mut inside = F::zero();
            if k_lo <= k_hi {
                for k in k_lo..=k_hi {
                    let pk = p_row[k - t_min];
                    by_delay[s - k] += m * pk;
                    inside += pk;
                }
            }
            out_mass += m * (F::one() - inside).max(F::zero());
        }
        Self::from_delays(by_delay, out_mass, bank)
    }

    /// Data term with the depth fixed at `t`.
    pub fn at_depth(photons: &[Photon], t: usize, bank: &IrfBank<F>) -> Self {
        let mut by_delay = vec![F::zero(); bank.support()];
        let mut out_mass = F::zero();
        for p in photons {
            let delay = p.bin as isize - t as isize;
            let m = F::from_count(p.count as u64);
            if delay >= 0 && (delay as usize) < bank.support() {
                by_delay[delay as usize] += m;
            } else {
                out_mass += m;
            }
        }
        Self::from_delays(by_delay, out_mass, bank)
    }

    fn from_delays(by_delay: Vec<F>, mut out_mass: F, bank: &IrfBank<F>) -> Self {
        let bands = bank.bands();
        let mut coef = Vec::new();
        let mut basis = Vec::new();
        for (d, c) in by_delay.into_iter().enumerate() {
            if c <= F::zero() {
                continue;
            }
            let row: Vec<F> = (0..bands).map(|l| bank.normalized(l, d as isize)).collect();
            if row.iter().all(|v| *v == F::zero()) {
                out_mass += c;
            } else {
                coef.push(c);
                basis.extend(row);
            }
        }
        Self { bands, inv_t: F::from_count(bank.t_len() as u64).recip(), coef, basis, out_mass }
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// Total photon mass represented (equals the pixel count).
    pub fn total_mass(&self) -> F {
        self.coef.iter().copied().sum::<F>() + self.out_mass
    }

    /// Data term `D(w)`; `-inf` where some photon has zero density.
    pub fn value(&self, w: &[F]) -> F {
        let bg = (F::one() - w.iter().copied().sum::<F>()) * self.inv_t;
        let mut total = F::zero();
        if self.out_mass > F::zero() {
            if bg <= F::zero() {
                return F::neg_infinity();
            }
            total += self.out_mass * bg.ln();
        }
        for (j, &c) in self.coef.iter().enumerate() {
            let row = &self.basis[j * self.bands..(j + 1) * self.bands];
            let pdf = row.iter().zip(w).fold(bg, |acc, (&b, &wl)| acc + wl * b);
            if pdf <= F::zero() {
                return F::neg_infinity();
            }
            total += c * pdf.ln();
        }
        total
    }

    /// Adds the gradient and Hessian of `D` at `w` to `grad` / `hess`
    /// (row-major `L x L`). Assumes `w` is in the domain.
    pub fn accumulate_derivatives(&self, w: &[F], grad: &mut [F], hess: &mut [F]) {
        let l_len = self.bands;
        let bg = (F::one() - w.iter().copied().sum::<F>()) * self.inv_t;
        if self.out_mass > F::zero() {
            // d/dw_l log(bg) = -1 / (1 - sum w)
            let one_minus = F::one() - w.iter().copied().sum::<F>();
            let g = self.out_mass / one_minus;
            let h = g / one_minus;
            for l in 0..l_len {
                grad[l] -= g;
                for m in 0..l_len {
                    hess[l * l_len + m] -= h;
                }
            }
        }
        let mut a = vec![F::zero(); l_len];
        for (j, &c) in self.coef.iter().enumerate() {
            let row = &self.basis[j * l_len..(j + 1) * l_len];
            let pdf = row.iter().zip(w).fold(bg, |acc, (&b, &wl)| acc + wl * b);
            for l in 0..l_len {
                a[l] = row[l] - self.inv_t;
            }
            let g = c / pdf;
            let h = g / pdf;
            for l in 0..l_len {
                grad[l] += g * a[l];
                for m in 0..l_len {
                    hess[l * l_len + m] -= h * a[l] * a[m];
                }
            }
        }
    }
}

/// A concave per-pixel objective: data term, optional Dirichlet kernel
/// `sum_l alpha_l log v_l` on the augmented vector (`alpha = beta - 1`), and
/// optional proximal penalty `-(rho/2) ||w - center||^2`.
#[derive(Debug, Clone, Copy)]
pub struct PixelObjective<'a, F> {
    pub data: &'a PixelData<F>,
    pub dirichlet_alpha: Option<&'a [F]>,
    pub proximal: Option<(F, &'a [F])>,
}

impl<'a, F: Real> PixelObjective<'a, F> {
    pub fn data_only(data: &'a PixelData<F>) -> Self {
        Self { data, dirichlet_alpha: None, proximal: None }
    }

    pub fn with_dirichlet(data: &'a PixelData<F>, alpha: &'a [F]) -> Self {
        Self { data, dirichlet_alpha: Some(alpha), proximal: None }
    }

    fn bands(&self) -> usize {
        self.data.bands
    }

    /// `-inf` outside `{w >= 0, sum w <= 1}`.
    pub fn value(&self, w: &[F]) -> F {
        if w.iter().any(|&x| x < F::zero()) || w.iter().copied().sum::<F>() > F::one() {
            return F::neg_infinity();
        }
        let mut v = self.data.value(w);
        if v == F::neg_infinity() {
            return v;
        }
        if let Some(alpha) = self.dirichlet_alpha {
            let bg = F::one() - w.iter().copied().sum::<F>();
            for (&x, &a) in w.iter().chain(std::iter::once(&bg)).zip(alpha) {
                if a > F::zero() {
                    if x <= F::zero() {
                        return F::neg_infinity();
                    }
                    v += a * x.ln();
                }
            }
        }
        if let Some((rho, center)) = self.proximal {
            let sq: F = w.iter().zip(center).map(|(&a, &b)| (a - b) * (a - b)).sum();
            v -= rho * F::lit(0.5) * sq;
        }
        v
    }

    /// Gradient and Hessian at a point of the domain.
    pub fn derivatives(&self, w: &[F]) -> (Vec<F>, Vec<F>) {
        let l_len = self.bands();
        let mut grad = vec![F::zero(); l_len];
        let mut hess = vec![F::zero(); l_len * l_len];
        self.data.accumulate_derivatives(w, &mut grad, &mut hess);
        if let Some(alpha) = self.dirichlet_alpha {
            let bg = F::one() - w.iter().copied().sum::<F>();
            let tail = alpha[l_len];
            for l in 0..l_len {
                grad[l] += alpha[l] / w[l] - tail / bg;
                hess[l * l_len + l] -= alpha[l] / (w[l] * w[l]);
                for m in 0..l_len {
                    hess[l * l_len + m] -= tail / (bg * bg);
                }
            }
        }
        if let Some((rho, center)) = self.proximal {
            for l in 0..l_len {
                grad[l] -= rho * (w[l] - center[l]);
                hess[l * l_len + l] -= rho;
            }
        }
        (grad, hess)
    }

    pub fn gradient(&self, w: &[F]) -> Vec<F> {
        self.derivatives(w).0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome<F> {
    pub w: Vec<F>,
    pub value: F,
    pub grad_norm: F,
    pub iters: usize,
}

/// Cholesky solve of `a x = b` for a symmetric positive definite `n x n`
/// matrix. Returns `None` when `a` is not numerically positive definite.
pub(crate) fn solve_spd<F: Real>(a: &[F], b: &[F], n: usize) -> Option<Vec<F>> {
    let mut l = vec![F::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > F::zero()) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![F::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![F::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

/// Damped Newton ascent on a concave pixel objective from a starting point
/// in its domain. Steps are shrunk until the iterate stays in the domain and
/// satisfies the Armijo condition, so the objective never decreases.
pub fn newton_maximize<F: Real>(obj: &PixelObjective<'_, F>, w0: &[F], cfg: &NewtonConfig) -> Result<NewtonOutcome<F>> {
    let n = w0.len();
    let mut w = w0.to_vec();
    let mut f = obj.value(&w);
    if !f.is_finite() {
        return Err(LidarError::InvalidParameter("Newton start point outside the objective domain".into()));
    }
    let grad_tol = F::lit(cfg.grad_tol);
    let armijo = F::lit(1e-4);
    let shrink = F::lit(cfg.backtrack);
    for iter in 0..cfg.max_iters {
        let (g, h) = obj.derivatives(&w);
        let grad_norm = crate::real::norm2(&g);
        if grad_norm < grad_tol {
            return Ok(NewtonOutcome { w, value: f, grad_norm, iters: iter });
        }
        let neg_h: Vec<F> = h.iter().map(|&v| -v).collect();
        let mut step = solve_spd(&neg_h, &g, n);
        let mut ridge = F::lit(1e-12) * (F::one() + neg_h.iter().fold(F::zero(), |m, v| m.max(v.abs())));
        while step.is_none() {
            let mut reg = neg_h.clone();
            for i in 0..n {
                reg[i * n + i] += ridge;
            }
            step = solve_spd(&reg, &g, n);
            ridge *= F::lit(10.0);
        }
        let step = step.expect("regularised system is positive definite");
        let decrement: F = g.iter().zip(&step).map(|(&a, &b)| a * b).sum();
        // below this the objective value cannot resolve progress, so
        // candidates are judged by their gradient instead
        let floor = F::epsilon() * F::lit(16.0) * (F::one() + f.abs());
        let flat = decrement <= floor;
        let mut t = F::one();
        let mut accepted = false;
        for _ in 0..cfg.max_backtracks {
            let cand: Vec<F> = w.iter().zip(&step).map(|(&a, &b)| a + t * b).collect();
            let fc = obj.value(&cand);
            let ok = if flat {
                fc.is_finite() && fc >= f - floor && crate::real::norm2(&obj.gradient(&cand)) < grad_norm
            } else {
                fc.is_finite() && fc >= f + armijo * t * decrement
            };
            if ok {
                w = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= shrink;
        }
        if !accepted {
            if flat || decrement <= F::lit(1e-9) * (F::one() + f.abs()) {
                return Ok(NewtonOutcome { w, value: f, grad_norm, iters: iter });
            }
            return Err(LidarError::LineSearchFailed { backtracks: cfg.max_backtracks, grad_norm: grad_norm.as_f64() });
        }
    }
    let (g, _) = obj.derivatives(&w);
    let grad_norm = crate::real::norm2(&g);
    Ok(NewtonOutcome { w, value: f, grad_norm, iters: cfg.max_iters })
}

/// Per-pixel maximiser of data term plus Dirichlet kernel (`beta > 1`),
/// started from a strictly interior `w0`.
pub fn newton_maximize_q_pixel<F: Real>(
    data: &PixelData<F>,
    beta: &[F],
    w0: &[F],
    cfg: &NewtonConfig,
) -> Result<NewtonOutcome<F>> {
    if beta.len() != data.bands + 1 {
        return Err(LidarError::SizeMismatch(format!("{} Dirichlet parameters for {} bands", beta.len(), data.bands)));
    }
    if beta.iter().any(|&b| !(b > F::one())) {
        return Err(LidarError::InvalidParameter("Dirichlet parameters must exceed 1".into()));
    }
    let alpha: Vec<F> = beta.iter().map(|&b| b - F::one()).collect();
    let obj = PixelObjective::with_dirichlet(data, &alpha);
    let start = interior_guard(w0);
    newton_maximize(&obj, &start, cfg)
}

/// Clips a weight vector away from the simplex boundary by `1e-12`.
pub fn interior_guard<F: Real>(w: &[F]) -> Vec<F> {
    let eps = F::lit(1e-12);
    let mut v: Vec<F> = w.iter().map(|&x| x.max(eps)).collect();
    let s: F = v.iter().copied().sum();
    let cap = F::one() - eps;
    if s > cap {
        let scale = cap / s;
        v.iter_mut().for_each(|x| *x = (*x * scale).max(eps * F::lit(0.5)));
    }
    v
}
