//! Normalised bound (and optional MSE) sweeps over field strength.

use super::campaign::{me_bound, run_cells, split_setup, ue_bound};
use super::config::{ExperimentConfig, LineshapeKind};
use super::HarnessError;
use crate::crlb::{crlb_idd, crlb_isd, ratio_r, ratio_r0, NormalizationReference, SweepRow};
use crate::estimators::Method;
use crate::response::{intensity_marginal, kappa_rabi};
use crate::ResponseSurface;

/// Normalised Monte Carlo MSE per scheme at one field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseRow {
    pub x: f64,
    pub mse_idd: f64,
    pub mse_isd: f64,
    pub mse_ue: f64,
    pub mse_me: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub reference: NormalizationReference,
    /// Normalised bounds; `r0` and `r_x` are plain ratios.
    pub crlb: Vec<SweepRow>,
    /// Empty unless the configuration asks for Monte Carlo.
    pub mse: Vec<MseRow>,
}

/// Bounds for every x in the sweep grid on the surface's own lineshapes,
/// divided by sigma0^2 / (N max F_I'^2) with sigma0 the first configured
/// noise level. Rows whose plan is infeasible carry NaN.
pub fn sweep_normalized(cfg: &ExperimentConfig, surface: &ResponseSurface) -> Result<SweepResult, HarnessError> {
    cfg.validate()?;
    let sigma0 = cfg.campaign.noise[0];
    if !(sigma0 > 0.0) {
        return Err(HarnessError::Config("sweeps need a positive first noise level".into()));
    }
    let mut scfg = cfg.clone();
    scfg.splitting.lineshape = LineshapeKind::Tabulated;
    scfg.splitting.strategy = cfg.sweep.strategy;
    let n = cfg.budget.n;
    let avg = cfg.budget.sf_averages;
    let kr = kappa_rabi(&cfg.system.resolve()?);
    let fi = intensity_marginal(surface, 0.0)?;
    let reference = NormalizationReference::new(&fi, sigma0, n)?;
    let x_lo = cfg.intensity.x_lo.unwrap_or(reference.x_lo);
    let isd = crlb_isd(&fi, x_lo, n, sigma0)?.bound;
    let r0 = ratio_r0(surface, kr, cfg.sweep.x_ref)?.value;
    let mut rows = Vec::with_capacity(cfg.sweep.signals.len());
    for &x in &cfg.sweep.signals {
        let idd = crlb_idd(&fi, x, n, sigma0)?.bound;
        let (ue, me) = match split_setup(&scfg, Some(surface), x, kr) {
            Ok(setup) => (
                ue_bound(&setup, avg, sigma0, kr).map_or(f64::NAN, |r| r.bound),
                me_bound(&setup, avg, sigma0, kr).map_or(f64::NAN, |r| r.bound),
            ),
            Err(_) => (f64::NAN, f64::NAN),
        };
        let r_x = ratio_r(surface, x, kr).map_or(f64::NAN, |r| r.value);
        rows.push(SweepRow {
            x,
            crlb_idd: reference.normalize(idd),
            crlb_isd: reference.normalize(isd),
            crlb_ue: reference.normalize(ue),
            crlb_me: reference.normalize(me),
            r0,
            r_x,
        });
    }
    let mut mse = Vec::new();
    if cfg.sweep.mse {
        let mut mcfg = scfg.clone();
        mcfg.campaign.trials = cfg.sweep.trials;
        mcfg.campaign.noise = vec![sigma0];
        let signals = &cfg.sweep.signals;
        let main = run_cells(&mcfg, Some(surface), &[Method::Idd, Method::Ue, Method::Me], signals)?;
        let isd = run_cells(&mcfg, Some(surface), &[Method::Isd], &[cfg.sweep.isd_amplitude])?;
        let isd_mse = isd.cells[0].normalized_mse;
        let pick = |m: Method, i: usize| {
            main.cells
                .iter()
                .find(|c| c.scheme == m && c.signal_index == i)
                .filter(|c| c.valid)
                .map_or(f64::NAN, |c| c.normalized_mse)
        };
        for (i, &x) in signals.iter().enumerate() {
            mse.push(MseRow {
                x,
                mse_idd: pick(Method::Idd, i),
                mse_isd: isd_mse,
                mse_ue: pick(Method::Ue, i),
                mse_me: pick(Method::Me, i),
            });
        }
    }
    Ok(SweepResult { reference, crlb: rows, mse })
}
