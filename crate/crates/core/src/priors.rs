//! Prior models for the weight field and the depth map.
//!
//! Weight priors: anisotropic TV, squared Laplacian, and three Dirichlet
//! variants (fixed, global unknown parameters, cluster-wise unknown
//! parameters). The depth prior is a TV Markov random field on the
//! 4-connected grid.

use crate::config::{HyperParams, PriorKind};
use crate::error::{LidarError, Result};
use crate::fields::{DepthField, WeightField};
use crate::forward::log_likelihood_profile;
use crate::grid::{self, ImageDims};
use crate::irf::IrfBank;
use crate::real::{ln_gamma, Real};
use crate::scene::SceneCube;

/// A weight prior with its current hyperparameters.
///
/// `betas` holds one Dirichlet parameter vector of length `L + 1` per
/// cluster (one vector for the fixed and global variants, none for the
/// MRF priors). `clusters` maps pixels to clusters and is present only for
/// the cluster-wise variant.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorModel<F> {
    kind: PriorKind,
    lambda: F,
    theta: F,
    clusters: Option<Vec<usize>>,
    betas: Vec<Vec<F>>,
}

impl<F: Real> PriorModel<F> {
    pub fn tv(lambda: F) -> Self {
        Self { kind: PriorKind::Tv, lambda, theta: F::one(), clusters: None, betas: Vec::new() }
    }

    pub fn lap(lambda: F) -> Self {
        Self { kind: PriorKind::Lap, lambda, theta: F::one(), clusters: None, betas: Vec::new() }
    }

    /// Symmetric Dirichlet with parameter `kappa` on the `L + 1` entries.
    pub fn w_dirichlet(kappa: F, bands: usize) -> Self {
        Self {
            kind: PriorKind::WDirichlet,
            lambda: F::zero(),
            theta: F::one(),
            clusters: None,
            betas: vec![vec![kappa; bands + 1]],
        }
    }

    /// Global Dirichlet whose parameters are estimated, starting at `beta0`.
    pub fn g_dirichlet(theta: F, beta0: Vec<F>) -> Self {
        Self { kind: PriorKind::GDirichlet, lambda: F::zero(), theta, clusters: None, betas: vec![beta0] }
    }

    /// Cluster-wise Dirichlet; `clusters[n]` is the group of pixel `n`, with
    /// groups numbered `0..C`.
    pub fn c_dirichlet(theta: F, clusters: Vec<usize>, beta0: Vec<F>) -> Result<Self> {
        let n_clusters = clusters.iter().copied().max().map_or(0, |m| m + 1);
        if n_clusters == 0 {
            return Err(LidarError::InvalidParameter("cluster map is empty".into()));
        }
        let mut seen = vec![false; n_clusters];
        clusters.iter().for_each(|&c| seen[c] = true);
        if seen.iter().any(|s| !s) {
            return Err(LidarError::InvalidParameter("cluster labels must be contiguous from 0".into()));
        }
        Ok(Self {
            kind: PriorKind::CDirichlet,
            lambda: F::zero(),
            theta,
            clusters: Some(clusters),
            betas: vec![beta0; n_clusters],
        })
    }

    /// Builds the prior of a given kind from the hyperparameters.
    /// `clusters` is required for (and only used by) the cluster-wise kind.
    pub fn from_hyper(kind: PriorKind, hyper: &HyperParams, bands: usize, clusters: Option<Vec<usize>>) -> Result<Self> {
        let kappa = F::lit(hyper.kappa);
        match kind {
            PriorKind::Tv => Ok(Self::tv(F::lit(hyper.lambda))),
            PriorKind::Lap => Ok(Self::lap(F::lit(hyper.lambda))),
            PriorKind::WDirichlet => Ok(Self::w_dirichlet(kappa, bands)),
            PriorKind::GDirichlet => Ok(Self::g_dirichlet(F::lit(hyper.theta), vec![kappa; bands + 1])),
            PriorKind::CDirichlet => {
                let c = clusters.ok_or_else(|| {
                    LidarError::InvalidParameter("c-dirichlet prior needs a cluster map".into())
                })?;
                Self::c_dirichlet(F::lit(hyper.theta), c, vec![kappa; bands + 1])
            }
        }
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn lambda(&self) -> F {
        self.lambda
    }

    pub fn theta(&self) -> F {
        self.theta
    }

    pub fn clusters(&self) -> Option<&[usize]> {
        self.clusters.as_deref()
    }

    pub fn n_groups(&self) -> usize {
        self.betas.len()
    }

    /// Dirichlet group of pixel `n`.
    #[inline]
    pub fn group_of(&self, n: usize) -> usize {
        self.clusters.as_ref().map_or(0, |c| c[n])
    }

    /// Dirichlet parameters applying to pixel `n`.
    pub fn beta_for(&self, n: usize) -> &[F] {
        &self.betas[self.group_of(n)]
    }

    /// Current hyperparameter set: empty for the MRF priors and the fixed
    /// Dirichlet, one vector per group otherwise.
    pub fn phi(&self) -> &[Vec<F>] {
        if self.kind.estimates_beta() { &self.betas } else { &[] }
    }

    pub fn betas(&self) -> &[Vec<F>] {
        &self.betas
    }

    pub fn set_betas(&mut self, betas: Vec<Vec<F>>) {
        debug_assert_eq!(betas.len(), self.betas.len());
        self.betas = betas;
    }

    /// Pixels in each group.
    pub fn groups(&self, n_pixels: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_groups().max(1)];
        for n in 0..n_pixels {
            out[self.group_of(n)].push(n);
        }
        out
    }
}

/// `(w_1, .., w_L, 1 - sum w)` for one pixel.
pub fn augmented<F: Real>(w: &[F]) -> Vec<F> {
    let mut v = w.to_vec();
    v.push(F::one() - w.iter().copied().sum::<F>());
    v
}

/// `log Gamma(sum beta) - sum log Gamma(beta_l)`.
pub fn dirichlet_log_normalizer<F: Real>(beta: &[F]) -> F {
    let total: F = beta.iter().copied().sum();
    ln_gamma(total) - beta.iter().map(|&b| ln_gamma(b)).sum::<F>()
}

/// Log-density of the weight prior, up to an additive constant. Dirichlet
/// normalising constants are included only when the parameters are being
/// estimated.
pub fn log_prior_w<F: Real>(weights: &WeightField<F>, model: &PriorModel<F>) -> Result<F> {
    weights.check_simplex()?;
    let dims = weights.dims();
    match model.kind {
        PriorKind::Tv => {
            let tv: F = (0..weights.bands()).map(|l| grid::total_variation(dims, &weights.band(l))).sum();
            Ok(-model.lambda * tv)
        }
        PriorKind::Lap => {
            let sq: F = (0..weights.bands())
                .map(|l| grid::laplacian(dims, &weights.band(l)).iter().map(|v| *v * *v).sum::<F>())
                .sum();
            Ok(-model.lambda * F::lit(0.5) * sq)
        }
        _ => {
            weights.check_interior()?;
            let with_norm = model.kind.estimates_beta();
            let mut total = F::zero();
            let norms: Vec<F> = model.betas.iter().map(|b| dirichlet_log_normalizer(b)).collect();
            for n in 0..weights.n_pixels() {
                let beta = model.beta_for(n);
                total += dirichlet_kernel(weights.pixel(n), beta);
                if with_norm {
                    total += norms[model.group_of(n)];
                }
            }
            Ok(total)
        }
    }
}

/// `sum_l (beta_l - 1) log v_l` over the augmented vector.
pub fn dirichlet_kernel<F: Real>(w: &[F], beta: &[F]) -> F {
    let bg = F::one() - w.iter().copied().sum::<F>();
    w.iter()
        .chain(std::iter::once(&bg))
        .zip(beta)
        .map(|(&v, &b)| if b == F::one() { F::zero() } else { (b - F::one()) * v.ln() })
        .sum()
}

/// Gradient of [`log_prior_w`] with respect to the `N x L` weights, laid
/// out like [`WeightField::as_slice`]. For TV it exists only where no two
/// neighbouring weights are equal.
pub fn grad_log_prior_w<F: Real>(weights: &WeightField<F>, model: &PriorModel<F>) -> Result<Vec<F>> {
    let dims = weights.dims();
    let bands = weights.bands();
    match model.kind {
        PriorKind::Tv => {
            let mut out = vec![F::zero(); weights.as_slice().len()];
            for l in 0..bands {
                let (dv, dh) = grid::gradient(dims, &weights.band(l));
                for n in 0..dims.len() {
                    let (r, c) = dims.coords(n);
                    if (r + 1 < dims.rows && dv[n] == F::zero()) || (c + 1 < dims.cols && dh[n] == F::zero()) {
                        return Err(LidarError::NotDifferentiable("total variation at equal neighbours; use its prox"));
                    }
                }
                let sign = |v: &F| if *v > F::zero() { F::one() } else if *v < F::zero() { -F::one() } else { F::zero() };
                let sv: Vec<F> = dv.iter().map(sign).collect();
                let sh: Vec<F> = dh.iter().map(sign).collect();
                for (n, v) in grid::gradient_adjoint(dims, &sv, &sh).into_iter().enumerate() {
                    out[n * bands + l] = -model.lambda * v;
                }
            }
            Ok(out)
        }
        PriorKind::Lap => {
            let mut out = vec![F::zero(); weights.as_slice().len()];
            for l in 0..bands {
                let llw = grid::laplacian(dims, &grid::laplacian(dims, &weights.band(l)));
                for (n, v) in llw.into_iter().enumerate() {
                    out[n * bands + l] = -model.lambda * v;
                }
            }
            Ok(out)
        }
        _ => {
            weights.check_interior()?;
            let mut out = vec![F::zero(); weights.as_slice().len()];
            for n in 0..weights.n_pixels() {
                let beta = model.beta_for(n);
                let w = weights.pixel(n);
                let bg = weights.background(n);
                let tail = (beta[bands] - F::one()) / bg;
                for l in 0..bands {
                    out[n * bands + l] = (beta[l] - F::one()) / w[l] - tail;
                }
            }
            Ok(out)
        }
    }
}

/// Truncated exponential hyperprior: `sum_l (log theta - theta beta_l)` when
/// every `beta_l > 1`, `-inf` otherwise.
pub fn log_prior_beta<F: Real>(beta: &[F], theta: F) -> F {
    if beta.iter().any(|&b| !(b > F::one())) {
        return F::neg_infinity();
    }
    beta.iter().map(|&b| theta.ln() - theta * b).sum()
}

/// Depth prior `-epsilon ||t||_TV` (4-neighbour forward differences).
pub fn log_prior_t<F: Real>(depth: &DepthField, epsilon: F) -> F {
    let t: Vec<F> = depth.as_slice().iter().map(|&v| F::from_count(v as u64)).collect();
    -epsilon * grid::total_variation(depth.dims(), &t)
}

/// Adds `-epsilon sum_{m ~ n} |k - t_m|` to a logit vector over
/// `k in [t_min, t_max]`.
pub fn add_depth_prior<F: Real>(logits: &mut [F], n: usize, depth: &[usize], dims: ImageDims, epsilon: F, t_min: usize) {
    if epsilon == F::zero() {
        return;
    }
    for m in dims.neighbors(n) {
        let tm = depth[m] as isize;
        for (i, v) in logits.iter_mut().enumerate() {
            let k = (t_min + i) as isize;
            *v -= epsilon * F::from_count((k - tm).unsigned_abs() as u64);
        }
    }
}

/// Unnormalised `log p(t_n = k | t_{\n}, w_n, S)` for every admissible `k`.
pub fn conditional_t_logits<F: Real>(
    n: usize,
    depth: &DepthField,
    w_n: &[F],
    scene: &SceneCube,
    bank: &IrfBank<F>,
    epsilon: F,
) -> Vec<F> {
    let mut logits = vec![F::zero(); bank.n_depths()];
    log_likelihood_profile(scene.photons(n), w_n, bank, &mut logits);
    add_depth_prior(&mut logits, n, depth.as_slice(), depth.dims(), epsilon, bank.t_min());
    logits
}
