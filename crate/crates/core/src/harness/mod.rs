//! Configuration-driven Monte Carlo campaigns, bound sweeps and export.

mod campaign;
mod config;
mod export;
mod sweep;

use thiserror::Error;

pub use campaign::{
    consistency_hash, run_campaign, split_setup, CampaignCell, CampaignResult, SplitSetup, STREAM_IDD, STREAM_ISD,
    STREAM_LEFT, STREAM_RIGHT,
};
pub use config::{
    make_plan, BudgetConfig, CampaignConfig, ExperimentConfig, FlanksKind, InitKind, IntensityConfig,
    LineshapeKind, OutputConfig, SolverConfig, SplittingConfig, StrategyKind, SurfaceConfig, SweepConfig,
};
pub use export::{read_campaign, write_campaign, write_sweep, CAMPAIGN_HEADER, MSE_SWEEP_HEADER};
pub use sweep::{sweep_normalized, MseRow, SweepResult};

use std::fs;
use std::path::Path;

use crate::crlb::CrlbError;
use crate::estimators::EstimatorError;
use crate::noise_sim::NoiseError;
use crate::quantum_model::{build_surface, grids, ModelError, SurfaceOptions};
use crate::response::ResponseError;
use crate::ResponseSurface;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("a response surface is required: {0}")]
    SurfaceRequired(String),
    #[error("sample budget violated: {0}")]
    Budget(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("format error in {path}: {msg}")]
    Format { path: String, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Response(#[from] ResponseError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Crlb(#[from] CrlbError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

pub const SURFACE_CSV: &str = "surface.csv";
pub const SURFACE_META: &str = "surface.meta";

/// Whether any configured scheme or lineshape reads the response surface.
pub fn needs_surface(cfg: &ExperimentConfig) -> Result<bool, HarnessError> {
    use crate::estimators::Method;
    let methods = cfg.methods()?;
    let intensity = methods.iter().any(|m| matches!(m, Method::Idd | Method::Isd));
    Ok(intensity || cfg.splitting.lineshape == LineshapeKind::Tabulated)
}

/// Builds the surface for the configured system on `grids(x_max, f_half)`.
pub fn build_configured_surface(cfg: &ExperimentConfig) -> Result<ResponseSurface, HarnessError> {
    let sys = cfg.system.resolve()?;
    let (xg, fg) = grids(cfg.surface.x_max, cfg.surface.f_half);
    Ok(build_surface(&sys, &xg, &fg, SurfaceOptions::default())?)
}

/// Reads `surface.csv` and `surface.meta` from `dir`.
pub fn read_surface(dir: &Path) -> Result<ResponseSurface, HarnessError> {
    let meta_path = dir.join(SURFACE_META);
    let csv_path = dir.join(SURFACE_CSV);
    let meta = fs::read_to_string(&meta_path)
        .map_err(|source| HarnessError::Io { path: meta_path.display().to_string(), source })?;
    let csv = fs::File::open(&csv_path)
        .map_err(|source| HarnessError::Io { path: csv_path.display().to_string(), source })?;
    Ok(ResponseSurface::read_csv(std::io::BufReader::new(csv), &meta)?)
}

/// Writes `surface.csv` and `surface.meta` into `dir`.
pub fn write_surface(surface: &ResponseSurface, dir: &Path) -> Result<(), HarnessError> {
    let io = |p: &Path| {
        let path = p.display().to_string();
        move |source| HarnessError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let csv_path = dir.join(SURFACE_CSV);
    let file = fs::File::create(&csv_path).map_err(io(&csv_path))?;
    let mut w = std::io::BufWriter::new(file);
    surface.write_csv(&mut w).map_err(io(&csv_path))?;
    std::io::Write::flush(&mut w).map_err(io(&csv_path))?;
    let meta_path = dir.join(SURFACE_META);
    fs::write(&meta_path, surface.metadata()).map_err(io(&meta_path))
}

/// The surface the configuration asks for: loaded from `surface.path` when
/// set, otherwise built. `None` when nothing in the configuration needs it.
pub fn resolve_surface(cfg: &ExperimentConfig) -> Result<Option<ResponseSurface>, HarnessError> {
    if !needs_surface(cfg)? {
        return Ok(None);
    }
    match &cfg.surface.path {
        Some(p) => read_surface(Path::new(p)).map(Some),
        None => build_configured_surface(cfg).map(Some),
    }
}
