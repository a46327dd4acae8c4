pub mod config;
pub mod error;
pub mod fields;
pub mod forward;
pub mod grid;
pub mod irf;
pub mod optim;
pub mod priors;
pub mod real;
pub mod rng;
pub mod scene;
pub mod gibbs;
pub mod sem;
pub mod xcorr;
pub mod clustering;
pub mod depth;
pub mod phantom;
pub mod pipeline;
pub mod reflectivity;
pub mod eval;
pub mod io;

pub use config::{AdmmConfig, HyperParams, NewtonConfig, PriorKind};
pub use error::{LidarError, Result};
pub use fields::{DepthField, ReflectivityCube, WeightField};
pub use forward::SimConfig;
pub use grid::ImageDims;
pub use irf::IrfBank;
pub use priors::PriorModel;
pub use real::Real;
pub use scene::{Photon, SceneCube};

/// Double-precision aliases used by the command-line tool and experiments.
pub type IrfBank64 = IrfBank<f64>;
pub type WeightField64 = WeightField<f64>;
pub type ReflectivityCube64 = ReflectivityCube<f64>;
pub type PriorModel64 = PriorModel<f64>;

/// Single-precision aliases.
pub type IrfBank32 = IrfBank<f32>;
pub type WeightField32 = WeightField<f32>;
pub type ReflectivityCube32 = ReflectivityCube<f32>;
pub type PriorModel32 = PriorModel<f32>;
