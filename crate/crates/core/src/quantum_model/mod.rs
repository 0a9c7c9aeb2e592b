//! Four-level ladder physics: steady state, Doppler averaging, transmittance
//! and the tabulated joint response surface.

pub mod doppler;
pub mod lindblad;
pub mod surface;
pub mod system;

pub use doppler::{doppler_average, DopplerQuadrature};
pub use lindblad::{steady_state, DensityMatrix};
pub use surface::{build_surface, default_grids, grids, ResponseSurface, SurfaceOptions};
pub use system::{AtomicSystem, SystemOverrides};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("singular Liouvillian: {0}")]
    SingularLiouvillian(String),
    #[error("Doppler quadrature did not converge ({nodes} nodes, relative change {rel_change:e})")]
    NonConvergedQuadrature { nodes: usize, rel_change: f64 },
    #[error("surface grid too coarse: interpolation error estimate {estimate:e} over range {range}")]
    GridTooCoarse { estimate: f64, range: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid atomic system: {0}")]
    InvalidSystem(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
}

/// Probe transmittance exp(C Im rho21) with the absorption prefactor C = 1.
pub fn transmittance(rho21_im: f64) -> f64 {
    rho21_im.exp()
}
