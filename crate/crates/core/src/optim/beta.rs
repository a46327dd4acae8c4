use crate::priors::augmented;
use crate::real::{digamma, trigamma, Real};

/// Lower clamp of every Dirichlet parameter.
pub const BETA_FLOOR: f64 = 1.0 + 1e-6;

/// Per-coordinate sufficient statistics `sum_n log v_{n,l}` over augmented
/// weight vectors.
pub fn log_weight_sums<F: Real>(pixels: &[&[F]]) -> Vec<F> {
    let Some(first) = pixels.first() else { return Vec::new() };
    let mut sums = vec![F::zero(); first.len() + 1];
    for w in pixels {
        for (s, v) in sums.iter_mut().zip(augmented(w)) {
            *s += v.ln();
        }
    }
    sums
}

/// `sum_n log Dir(v_n | beta) - theta sum_l beta_l` from the statistics of
/// [`log_weight_sums`].
pub fn beta_objective<F: Real>(beta: &[F], log_sums: &[F], n: usize, theta: F) -> F {
    let count = F::from_count(n as u64);
    count * crate::priors::dirichlet_log_normalizer(beta)
        + beta.iter().zip(log_sums).map(|(&b, &s)| (b - F::one()) * s - theta * b).sum::<F>()
}

/// Coordinate-wise Newton maximisation of the Dirichlet hyperparameters for
/// a group of pixels (all strictly interior), starting from `beta0`.
/// Coordinates are updated in turn until a full sweep moves none of them by
/// more than `1e-10` (relative).
pub fn newton_update_beta<F: Real>(pixels: &[&[F]], theta: F, beta0: &[F]) -> Vec<F> {
    let floor = F::lit(BETA_FLOOR);
    let mut beta: Vec<F> = beta0.iter().map(|&b| b.max(floor)).collect();
    if pixels.is_empty() {
        return beta;
    }
    let log_sums = log_weight_sums(pixels);
    let count = F::from_count(pixels.len() as u64);
    let tol = F::lit(1e-10);
    for _ in 0..500 {
        let mut moved = F::zero();
        for l in 0..beta.len() {
            let others: F = beta.iter().enumerate().filter(|(j, _)| *j != l).map(|(_, &b)| b).sum();
            let slope = |b: F| count * (digamma(others + b) - digamma(b)) + log_sums[l] - theta;
            let curv = |b: F| count * (trigamma(others + b) - trigamma(b));
            let old = beta[l];
            let new = if slope(floor) <= F::zero() {
                floor
            } else {
                let mut lo = floor;
                let mut hi = old.max(floor * F::lit(2.0));
                while slope(hi) > F::zero() {
                    lo = hi;
                    hi *= F::lit(2.0);
                }
                let mut x = old.max(lo).min(hi);
                for _ in 0..200 {
                    let g = slope(x);
                    if g > F::zero() {
                        lo = x;
                    } else {
                        hi = x;
                    }
                    let h = curv(x);
                    let mut next = x - g / h;
                    if !(next > lo && next < hi) {
                        next = F::lit(0.5) * (lo + hi);
                    }
                    let done = (next - x).abs() <= tol * x || hi - lo <= tol * lo;
                    x = next;
                    if done {
                        break;
                    }
                }
                x
            };
            beta[l] = new;
            moved = moved.max((new - old).abs() / old);
        }
        if moved <= tol {
            break;
        }
    }
    beta
}
