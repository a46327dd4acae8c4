use crate::real::Real;

/// Euclidean projection onto `S_L = {x >= 0, sum x <= 1}`.
///
/// Clipping at zero is already the projection when the clipped vector sums
/// to at most one; otherwise the projection lies on the face `sum x = 1` and
/// is found with the sort-based threshold rule.
pub fn project_simplex_leq<F: Real>(x: &[F]) -> Vec<F> {
    let clipped: Vec<F> = x.iter().map(|&v| v.max(F::zero())).collect();
    if clipped.iter().copied().sum::<F>() <= F::one() {
        return clipped;
    }
    let mut sorted = x.to_vec();
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumsum = F::zero();
    let mut tau = F::zero();
    for (i, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - F::one()) / F::from_count(i as u64 + 1);
        if v - candidate > F::zero() {
            tau = candidate;
        }
    }
    let mut out: Vec<F> = x.iter().map(|&v| (v - tau).max(F::zero())).collect();
    let total: F = out.iter().copied().sum();
    if total > F::one() {
        let scale = (F::one() - F::epsilon()) / total;
        out.iter_mut().for_each(|v| *v *= scale);
    }
    out
}
