//! Solvers for the weight update.

pub mod admm;
pub mod beta;
pub mod pixel;
pub mod simplex;
pub mod tv;

pub use admm::{admm_maximize_q, admm_maximize_q_warm, mrf_objective, AdmmOutcome, AdmmWarm};
pub use beta::newton_update_beta;
pub use pixel::{newton_maximize, newton_maximize_q_pixel, NewtonOutcome, PixelData, PixelObjective};
pub use simplex::project_simplex_leq;
pub use tv::{laplacian_prox, tv_prox, TvDual};
