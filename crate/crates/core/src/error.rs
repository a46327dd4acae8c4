use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, LidarError>;

#[derive(Debug, Error)]
pub enum LidarError {
    #[error("IRF band {band} has a negative or non-finite value at bin {bin}")]
    NegativeIrfValue { band: usize, bin: usize },

    #[error("IRF band {band} has zero integral")]
    ZeroIrfIntegral { band: usize },

    #[error("IRF band {band} is cropped for shift {shift}: its last nonzero bin falls past T = {t_len}")]
    NonconstantIntegral { band: usize, shift: usize, t_len: usize },

    #[error("invalid admissible range: need 1 < t_min ({t_min}) < t_max ({t_max}) < T ({t_len})")]
    InvalidDepthRange { t_min: usize, t_max: usize, t_len: usize },

    #[error("photon bin {bin} outside [1, {t_len}]")]
    BinOutOfRange { bin: usize, t_len: usize },

    #[error("photon count overflow at pixel {pixel}, bin {bin}")]
    CountOverflow { pixel: usize, bin: usize },

    #[error("depth {depth} at pixel {pixel} outside [{t_min}, {t_max}]")]
    DepthOutOfRange { pixel: usize, depth: usize, t_min: usize, t_max: usize },

    #[error("weights at pixel {pixel} are outside the simplex")]
    OutsideSimplex { pixel: usize },

    #[error("weights at pixel {pixel} touch the simplex boundary (Dirichlet log of 0)")]
    BoundaryPoint { pixel: usize },

    #[error("reflectivity and background are all zero")]
    AllZeroSignal,

    #[error("background rate is zero at pixel {pixel}")]
    ZeroBackground { pixel: usize },

    #[error("prior is not differentiable: {0}")]
    NotDifferentiable(&'static str),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Newton line search failed after {backtracks} backtracks (gradient norm {grad_norm:e})")]
    LineSearchFailed { backtracks: usize, grad_norm: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl LidarError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LidarError::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        LidarError::Parse { path: path.into(), line, msg: msg.into() }
    }

    /// True for failures of the numerical routines (as opposed to bad input
    /// data or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            LidarError::LineSearchFailed { .. }
                | LidarError::NotDifferentiable(_)
                | LidarError::BoundaryPoint { .. }
                | LidarError::OutsideSimplex { .. }
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, LidarError::Io { .. } | LidarError::Parse { .. } | LidarError::Csv(_))
    }
}
