//! Tunable settings. Defaults: lambda = 10, epsilon = 0.05, kappa = 1.01,
//! theta = 1/4, d_eps = 1e-10, five averaged iterations, 7 clusters of 3x3
//! patches, 300/50 Gibbs iterations for the final depth estimate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{LidarError, Result};

/// Prior placed on the weight field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    /// Anisotropic total variation per band.
    Tv,
    /// Squared Laplacian (curvature) penalty per band.
    Lap,
    /// Fixed symmetric Dirichlet, `beta = kappa * 1`.
    WDirichlet,
    /// One Dirichlet with unknown parameters shared by all pixels.
    GDirichlet,
    /// One Dirichlet with unknown parameters per pixel cluster.
    CDirichlet,
}

impl PriorKind {
    pub const ALL: [PriorKind; 5] =
        [PriorKind::Tv, PriorKind::Lap, PriorKind::WDirichlet, PriorKind::GDirichlet, PriorKind::CDirichlet];

    pub fn name(self) -> &'static str {
        match self {
            PriorKind::Tv => "tv",
            PriorKind::Lap => "lap",
            PriorKind::WDirichlet => "w-dirichlet",
            PriorKind::GDirichlet => "g-dirichlet",
            PriorKind::CDirichlet => "c-dirichlet",
        }
    }

    pub fn is_dirichlet(self) -> bool {
        matches!(self, PriorKind::WDirichlet | PriorKind::GDirichlet | PriorKind::CDirichlet)
    }

    pub fn is_mrf(self) -> bool {
        matches!(self, PriorKind::Tv | PriorKind::Lap)
    }

    /// Whether the Dirichlet parameters are estimated along with the weights.
    pub fn estimates_beta(self) -> bool {
        matches!(self, PriorKind::GDirichlet | PriorKind::CDirichlet)
    }
}

impl fmt::Display for PriorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PriorKind {
    type Err = LidarError;

    fn from_str(s: &str) -> Result<Self> {
        PriorKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| LidarError::InvalidParameter(format!("unknown prior '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmmConfig {
    pub rho: f64,
    pub max_iters: usize,
    pub tol_abs: f64,
    /// Relative residual tolerance. At 1e-5 a warm-started solve on the
    /// phantom often stops before moving, returning the previous `W` exactly.
    pub tol_rel: f64,
    /// Dual iterations of the TV proximal step per ADMM iteration.
    pub tv_inner_iters: usize,
    /// Conjugate-gradient tolerance of the Laplacian proximal step.
    pub cg_tol: f64,
    /// Residual-balancing penalty adaptation (factor 2 when the residuals
    /// differ by more than 10x).
    pub adapt_rho: bool,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            max_iters: 200,
            tol_abs: 1e-9,
            tol_rel: 1e-7,
            tv_inner_iters: 20,
            cg_tol: 1e-8,
            adapt_rho: true,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.tol_abs > 0.0 && self.tol_rel > 0.0 && self.max_iters > 0) {
            return Err(LidarError::InvalidParameter("ADMM needs rho > 0, tolerances > 0, max_iters > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { max_iters: 100, grad_tol: 1e-8, backtrack: 0.5, max_backtracks: 50 }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_iters > 0
            && self.grad_tol > 0.0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.max_backtracks > 0)
        {
            return Err(LidarError::InvalidParameter(
                "Newton needs positive limits and a backtrack factor in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// MRF strength for the TV and Laplacian priors.
    pub lambda: f64,
    /// Depth TV strength.
    pub epsilon: f64,
    /// Fixed Dirichlet parameter of the weak prior.
    pub kappa: f64,
    /// Rate of the truncated exponential hyperprior on Dirichlet parameters.
    pub theta: f64,
    /// Relative-change threshold ending the burn-in.
    pub d_eps: f64,
    /// Iterations run (and averaged) after the burn-in.
    pub n_extra: usize,
    /// Hard cap on burn-in iterations.
    pub burnin_cap: usize,
    /// Gibbs sweeps per E-step when refreshing the auxiliary depth sample.
    pub gibbs_passes: usize,
    /// Number of pixel clusters for the cluster-wise Dirichlet prior.
    pub clusters: usize,
    /// Patch side used for clustering (odd).
    pub patch: usize,
    /// Coarse weak-Dirichlet iterations run before clustering.
    pub n_coarse: usize,
    /// Final depth sampler length and burn-in.
    pub gibbs_iters: usize,
    pub gibbs_burnin: usize,
    pub admm: AdmmConfig,
    pub newton: NewtonConfig,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            epsilon: 0.05,
            kappa: 1.01,
            theta: 0.25,
            d_eps: 1e-10,
            n_extra: 5,
            burnin_cap: 50,
            gibbs_passes: 2,
            clusters: 7,
            patch: 3,
            n_coarse: 3,
            gibbs_iters: 300,
            gibbs_burnin: 50,
            admm: AdmmConfig::default(),
            newton: NewtonConfig::default(),
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LidarError::InvalidParameter(m.into()));
        if !(self.lambda >= 0.0) {
            return bad("lambda must be >= 0");
        }
        if !(self.epsilon >= 0.0) {
            return bad("epsilon must be >= 0");
        }
        if !(self.kappa > 1.0) {
            return bad("kappa must be > 1");
        }
        if !(self.theta > 0.0) {
            return bad("theta must be > 0");
        }
        if !(self.d_eps >= 0.0) {
            return bad("d_eps must be >= 0");
        }
        if self.n_extra == 0 {
            return bad("n_extra must be >= 1");
        }
        if self.gibbs_passes == 0 {
            return bad("gibbs_passes must be >= 1");
        }
        if self.clusters == 0 {
            return bad("cluster count must be >= 1");
        }
        if self.patch == 0 || self.patch.is_multiple_of(2) {
            return bad("patch side must be odd and >= 1");
        }
        if self.gibbs_iters <= self.gibbs_burnin {
            return bad("gibbs_iters must exceed gibbs_burnin");
        }
        self.admm.validate()?;
        self.newton.validate()
    }
}
