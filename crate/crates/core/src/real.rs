//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All of the estimation code is written against [`Real`], which is
//! implemented for `f32` and `f64`. The special functions needed by the
//! Dirichlet hyperparameter updates live here as well so they work for
//! either precision.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + std::str::FromStr
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Every value used this way is representable
    /// (possibly rounded) in both precisions.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    #[inline]
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `log(sum(exp(x)))`, stable against overflow. Returns `-inf` for an empty
/// slice or when every entry is `-inf`.
pub fn log_sum_exp<F: Real>(xs: &[F]) -> F {
    let max = xs.iter().copied().fold(F::neg_infinity(), F::max);
    if max == F::neg_infinity() {
        return max;
    }
    let s: F = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma<F: Real>(x: F) -> F {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let half = F::lit(0.5);
    if x < half {
        // reflection
        let pi = F::PI();
        return (pi / (pi * x).sin()).ln() - ln_gamma(F::one() - x);
    }
    let x = x - F::one();
    let mut acc = F::lit(COEFFS[0]);
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        acc += F::lit(c) / (x + F::from_count(i as u64));
    }
    let t = x + F::lit(7.5);
    half * (F::lit(2.0) * F::PI()).ln() + (x + half) * t.ln() - t + acc.ln()
}

/// Digamma function for `x > 0`.
pub fn digamma<F: Real>(mut x: F) -> F {
    let mut acc = F::zero();
    let shift = F::lit(12.0);
    while x < shift {
        acc -= x.recip();
        x += F::one();
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    // asymptotic series
    let series = inv2
        * (F::lit(1.0 / 12.0)
            - inv2
                * (F::lit(1.0 / 120.0)
                    - inv2 * (F::lit(1.0 / 252.0) - inv2 * (F::lit(1.0 / 240.0) - inv2 * F::lit(1.0 / 132.0)))));
    acc + x.ln() - F::lit(0.5) * inv - series
}

/// Trigamma function for `x > 0`.
pub fn trigamma<F: Real>(mut x: F) -> F {
    let mut acc = F::zero();
    let shift = F::lit(12.0);
    while x < shift {
        acc += (x * x).recip();
        x += F::one();
    }
    let inv = x.recip();
    let inv2 = inv * inv;
    let series = inv
        + F::lit(0.5) * inv2
        + inv * inv2
            * (F::lit(1.0 / 6.0)
                - inv2 * (F::lit(1.0 / 30.0) - inv2 * (F::lit(1.0 / 42.0) - inv2 * F::lit(1.0 / 30.0))));
    acc + series
}

/// Euclidean norm of a slice.
pub fn norm2<F: Real>(xs: &[F]) -> F {
    xs.iter().map(|&x| x * x).sum::<F>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp::<f64>(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[1000.0_f64, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn special_functions_match_statrs() {
        for &x in &[0.05, 0.3, 1.0, 1.01, 2.5, 7.0, 33.3, 250.0] {
            let lg = ln_gamma(x);
            let lg_ref = statrs::function::gamma::ln_gamma(x);
            assert!((lg - lg_ref).abs() < 1e-10 * lg_ref.abs().max(1.0), "ln_gamma({x})");
            let dg = digamma(x);
            let dg_ref = statrs::function::gamma::digamma(x);
            assert!((dg - dg_ref).abs() < 1e-10 * dg_ref.abs().max(1.0), "digamma({x})");
        }
    }

    #[test]
    fn trigamma_matches_finite_difference_of_digamma() {
        for &x in &[0.2_f64, 1.0, 1.5, 4.0, 12.0, 100.0] {
            let h = 1e-5 * x.max(1.0);
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert!((trigamma(x) - fd).abs() < 1e-6 * fd.abs().max(1.0), "trigamma({x})");
        }
        // psi'(1) = pi^2 / 6
        assert!((trigamma(1.0_f64) - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-12);
    }

    #[test]
    fn single_precision_is_usable() {
        assert!((digamma(1.0_f32) + 0.577_215_7).abs() < 1e-5);
        assert!((ln_gamma(5.0_f32) - 24f32.ln()).abs() < 1e-5);
    }
}
