//! Monte Carlo campaign over (scheme, signal, noise) cells.

use rayon::prelude::*;

use super::config::{ExperimentConfig, InitKind, LineshapeKind};
use super::{make_plan, HarnessError};
use crate::crlb::{
    crlb_idd, crlb_isd, crlb_multivariate, crlb_univariate, fisher_multivariate, CrlbError, CrlbReport,
    NormalizationReference, PeakPlan,
};
use crate::estimators::{estimate_idd, estimate_isd, estimate_splitting, Method, SplitModel};
use crate::interp::pairwise_sum;
use crate::noise_sim::{derive_seed, sample_idd, sample_isd, sample_scan, NoiseSpec};
use crate::response::{
    frequency_marginal, intensity_marginal, kappa_rabi, max_slope_point, split_lineshapes, GaussianLike,
    MarginalCurve, PeakFamily, PeakLineshape, ScaledLineshape, Side,
};
use crate::ResponseSurface;

/// Last element of a trial's seed path: master / signal / noise / trial / stream.
pub const STREAM_LEFT: u64 = 0;
pub const STREAM_RIGHT: u64 = 1;
pub const STREAM_IDD: u64 = 2;
pub const STREAM_ISD: u64 = 3;

/// Share of failed trials above which a cell is flagged invalid.
const MAX_FAILURE_RATE: f64 = 0.05;

/// Aggregate of one (scheme, signal, noise) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignCell {
    pub scheme: Method,
    pub x: f64,
    pub sigma0: f64,
    pub trials: usize,
    /// Trials excluded from the MSE: estimator errors plus non-converged fits.
    pub failures: usize,
    pub nonconverged: usize,
    pub valid: bool,
    pub mse: f64,
    pub bias: f64,
    pub crlb: f64,
    pub normalized_mse: f64,
    pub normalized_crlb: f64,
    pub samples_per_trial: usize,
    /// Seed path indices: trial data come from
    /// `derive_seed(master, [signal_index, noise_index, trial, stream])`.
    pub signal_index: usize,
    pub noise_index: usize,
    /// FNV-1a hash of the plan and truth shared by data generation and the
    /// bound.
    pub hash: u64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub master_seed: u64,
    pub cells: Vec<CampaignCell>,
}

/// 64-bit FNV-1a over the concatenated byte strings.
pub fn consistency_hash(parts: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for &b in *p {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        // separator so ("ab","c") and ("a","bc") differ
        h ^= 0xff;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn f64_bytes(v: &[f64]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

/// Ground truth and sampling plan of a splitting cell.
#[derive(Debug, Clone)]
pub struct SplitSetup {
    pub left: PeakLineshape,
    pub right: PeakLineshape,
    /// True peak positions (f_L, f_R).
    pub shifts: (f64, f64),
    pub frequencies: (Vec<f64>, Vec<f64>),
    /// kappa (f_R - f_L): the quantity splitting estimators target.
    pub truth: f64,
    /// Families and true parameters for the multivariate estimator.
    pub families: (Box<dyn PeakFamilyClone>, Box<dyn PeakFamilyClone>),
    pub params: Vec<f64>,
    pub nominal_params: Option<Vec<f64>>,
}

/// Object-safe clonable family.
pub trait PeakFamilyClone: PeakFamily + std::fmt::Debug {
    fn clone_box(&self) -> Box<dyn PeakFamilyClone>;
    fn as_family(&self) -> &dyn PeakFamily;
}

impl<T: PeakFamily + Clone + std::fmt::Debug + 'static> PeakFamilyClone for T {
    fn clone_box(&self) -> Box<dyn PeakFamilyClone> {
        Box::new(self.clone())
    }
    fn as_family(&self) -> &dyn PeakFamily {
        self
    }
}

impl Clone for Box<dyn PeakFamilyClone> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

impl SplitSetup {
    fn hash_bytes(&self) -> Vec<u8> {
        let mut b = f64_bytes(&self.frequencies.0);
        b.extend(f64_bytes(&self.frequencies.1));
        b.extend(f64_bytes(&[self.shifts.0, self.shifts.1, self.truth]));
        b.extend(f64_bytes(&self.params));
        b.extend(self.left.to_key_value().bytes());
        b.extend(self.right.to_key_value().bytes());
        b
    }
}

/// Lineshapes, true peak positions and scan frequencies for field `x`.
pub fn split_setup(
    cfg: &ExperimentConfig,
    surface: Option<&ResponseSurface>,
    x: f64,
    kappa_rabi: f64,
) -> Result<SplitSetup, HarnessError> {
    let s = &cfg.splitting;
    let (left, right, shifts, families, params, nominal_params): (_, _, _, (Box<dyn PeakFamilyClone>, Box<dyn PeakFamilyClone>), _, _) =
        match s.lineshape {
            LineshapeKind::Gaussian => {
                let l = PeakLineshape::gaussian(Side::Left, s.gaussian_v)?;
                let r = PeakLineshape::gaussian(Side::Right, s.gaussian_v)?;
                let half = x / (2.0 * kappa_rabi);
                (l, r, (-half, half), (Box::new(GaussianLike), Box::new(GaussianLike)), s.gaussian_v.to_vec(), None)
            }
            LineshapeKind::Tabulated => {
                let surface = surface
                    .ok_or_else(|| HarnessError::SurfaceRequired("tabulated lineshapes come from the surface".into()))?;
                let curve = frequency_marginal(surface, x)?;
                let (l, r) = split_lineshapes(&curve, 0.0)?;
                let shifts = (-l.boundary, -r.boundary);
                let fams: (Box<dyn PeakFamilyClone>, Box<dyn PeakFamilyClone>) =
                    (Box::new(ScaledLineshape { base: l.clone() }), Box::new(ScaledLineshape { base: r.clone() }));
                (l, r, shifts, fams, vec![1.0, 0.0], Some(vec![1.0, 0.0]))
            }
        };
    let n1 = cfg.budget.sf_points;
    let fl = make_plan(s, n1, -1.0).frequencies(&left, shifts.0)?;
    let fr = make_plan(s, n1, 1.0).frequencies(&right, shifts.1)?;
    Ok(SplitSetup {
        truth: kappa_rabi * (shifts.1 - shifts.0),
        left,
        right,
        shifts,
        frequencies: (fl, fr),
        families,
        params,
        nominal_params,
    })
}

struct IntensitySetup {
    curve: MarginalCurve,
    branch: (f64, f64),
    x_lo: f64,
    slope_lo: f64,
}

fn intensity_setup(cfg: &ExperimentConfig, surface: &ResponseSurface) -> Result<IntensitySetup, HarnessError> {
    let curve = intensity_marginal(surface, 0.0)?;
    let branch = cfg.intensity.branch.map(|b| (b[0], b[1])).unwrap_or_else(|| curve.domain());
    let x_lo = match cfg.intensity.x_lo {
        Some(v) => v,
        None => max_slope_point(&curve, curve.domain())?.location,
    };
    let slope_lo = curve.derivative(x_lo);
    Ok(IntensitySetup { curve, branch, x_lo, slope_lo })
}

enum Outcome {
    Error(f64),
    NonConverged,
    Failed(String),
}

struct CellSpec<'a> {
    cfg: &'a ExperimentConfig,
    method: Method,
    x: f64,
    sigma0: f64,
    si: usize,
    ni: usize,
    kappa_rabi: f64,
}

fn aggregate(spec: &CellSpec<'_>, outcomes: Vec<(Outcome, usize)>) -> Result<CampaignCell, HarnessError> {
    let trials = outcomes.len();
    let total: usize = outcomes.iter().map(|o| o.1).sum();
    let n = spec.cfg.budget.n;
    if total != trials * n {
        return Err(HarnessError::Budget(format!(
            "{} drew {total} samples over {trials} trials, expected {n} per trial",
            spec.method.tag()
        )));
    }
    let mut errs = Vec::with_capacity(trials);
    let (mut failed, mut nonconv) = (0, 0);
    let mut first = None;
    for (t, (o, _)) in outcomes.into_iter().enumerate() {
        match o {
            Outcome::Error(e) => errs.push(e),
            Outcome::NonConverged => nonconv += 1,
            Outcome::Failed(msg) => {
                failed += 1;
                first.get_or_insert((t, msg));
            }
        }
    }
    let ok = errs.len();
    let sq: Vec<f64> = errs.iter().map(|e| e * e).collect();
    let (mse, bias) = if ok > 0 {
        (pairwise_sum(&sq) / ok as f64, pairwise_sum(&errs) / ok as f64)
    } else {
        (f64::NAN, f64::NAN)
    };
    let failures = failed + nonconv;
    Ok(CampaignCell {
        scheme: spec.method,
        x: spec.x,
        sigma0: spec.sigma0,
        trials,
        failures,
        nonconverged: nonconv,
        valid: failures as f64 <= MAX_FAILURE_RATE * trials as f64,
        mse,
        bias,
        crlb: f64::NAN,
        normalized_mse: f64::NAN,
        normalized_crlb: f64::NAN,
        samples_per_trial: total / trials.max(1),
        signal_index: spec.si,
        noise_index: spec.ni,
        hash: 0,
        note: first.map(|(t, m)| format!("{failed} failed (trial {t}: {m})")).unwrap_or_default(),
    })
}

fn seed(spec: &CellSpec<'_>, trial: usize, stream: u64) -> NoiseSpec {
    NoiseSpec {
        sigma0: spec.sigma0,
        seed: derive_seed(spec.cfg.campaign.seed, &[spec.si as u64, spec.ni as u64, trial as u64, stream]),
    }
}

/// Known-lineshape bound for the setup's plan.
pub(super) fn ue_bound(setup: &SplitSetup, n_sf2: usize, sigma0: f64, kr: f64) -> Result<CrlbReport, CrlbError> {
    let l = PeakPlan { lineshape: &setup.left, shift: setup.shifts.0, frequencies: &setup.frequencies.0 };
    let r = PeakPlan { lineshape: &setup.right, shift: setup.shifts.1, frequencies: &setup.frequencies.1 };
    crlb_univariate(&l, &r, n_sf2, sigma0, kr)
}

/// Unknown-parameter bound for the setup's families and plan.
pub(super) fn me_bound(setup: &SplitSetup, n_sf2: usize, sigma0: f64, kr: f64) -> Result<CrlbReport, CrlbError> {
    let (fl, fr) = &setup.frequencies;
    let jl = fisher_multivariate(setup.families.0.as_family(), setup.shifts.0, &setup.params, fl, n_sf2, sigma0)?;
    let jr = fisher_multivariate(setup.families.1.as_family(), setup.shifts.1, &setup.params, fr, n_sf2, sigma0)?;
    crlb_multivariate(&jl, &jr, kr)
}

fn run_splitting_cell(spec: &CellSpec<'_>, setup: &SplitSetup) -> Result<CampaignCell, HarnessError> {
    let cfg = spec.cfg;
    let avg = cfg.budget.sf_averages;
    let mut solver = cfg.solver();
    solver.initial_params = setup.nominal_params.clone();
    let nominal = match cfg.splitting.init {
        InitKind::Nominal => Some(setup.shifts),
        InitKind::Argmax => None,
    };
    let (sl, sr) = setup.shifts;
    let trials = cfg.campaign.trials;
    let outcomes: Vec<(Outcome, usize)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let dl = sample_scan(|f| setup.left.eval(f - sl), &setup.frequencies.0, Side::Left, avg, &seed(spec, t, STREAM_LEFT));
            let dr =
                sample_scan(|f| setup.right.eval(f - sr), &setup.frequencies.1, Side::Right, avg, &seed(spec, t, STREAM_RIGHT));
            let (dl, dr) = match (dl, dr) {
                (Ok(l), Ok(r)) => (l, r),
                (Err(e), _) | (_, Err(e)) => return (Outcome::Failed(e.to_string()), 0),
            };
            let used = dl.sample_count() + dr.sample_count();
            let model = match spec.method {
                Method::Ue => SplitModel::Known { left: &setup.left, right: &setup.right },
                Method::Me => SplitModel::Family { left: setup.families.0.as_family(), right: setup.families.1.as_family() },
                _ => SplitModel::PolyFit(cfg.solver.poly_order),
            };
            let o = match estimate_splitting(&dl, &dr, model, &solver, nominal, spec.kappa_rabi) {
                Ok(r) if r.converged => Outcome::Error(r.value - setup.truth),
                Ok(_) => Outcome::NonConverged,
                Err(e) => Outcome::Failed(e.to_string()),
            };
            (o, used)
        })
        .collect();
    let mut cell = aggregate(spec, outcomes)?;
    let mut note: Vec<String> = Some(std::mem::take(&mut cell.note)).filter(|n| !n.is_empty()).into_iter().collect();
    cell.crlb = if spec.sigma0 == 0.0 {
        0.0
    } else {
        match spec.method {
            Method::Ue => ue_bound(setup, avg, spec.sigma0, spec.kappa_rabi)?.bound,
            Method::Me => match me_bound(setup, avg, spec.sigma0, spec.kappa_rabi) {
                Ok(b) => {
                    note.extend(b.diagnostic);
                    b.bound
                }
                Err(e) => {
                    note.push(e.to_string());
                    f64::NAN
                }
            },
            _ => f64::NAN,
        }
    };
    let mut bytes = spec.method.tag().as_bytes().to_vec();
    bytes.extend(f64_bytes(&[spec.x, spec.sigma0]));
    cell.hash = consistency_hash(&[&bytes, &setup.hash_bytes()]);
    cell.note = note.join("; ");
    Ok(cell)
}

fn run_intensity_cell(spec: &CellSpec<'_>, setup: &IntensitySetup) -> Result<CampaignCell, HarnessError> {
    let cfg = spec.cfg;
    let b = &cfg.budget;
    let trials = cfg.campaign.trials;
    let x = spec.x;
    let outcomes: Vec<(Outcome, usize)> = (0..trials)
        .into_par_iter()
        .map(|t| match spec.method {
            Method::Idd => {
                let z = sample_idd(&setup.curve, x, b.n, &seed(spec, t, STREAM_IDD));
                let o = match estimate_idd(&z, &setup.curve, setup.branch) {
                    Ok(r) => Outcome::Error(r.value - x),
                    Err(e) => Outcome::Failed(e.to_string()),
                };
                (o, z.len())
            }
            _ => {
                let z = sample_isd(
                    &setup.curve,
                    setup.x_lo,
                    x,
                    cfg.intensity.phase,
                    b.isd_periods,
                    b.isd_per_period,
                    &seed(spec, t, STREAM_ISD),
                );
                let z = match z {
                    Ok(z) => z,
                    Err(e) => return (Outcome::Failed(e.to_string()), 0),
                };
                let o = match estimate_isd(&z, setup.slope_lo, b.isd_periods, b.isd_per_period) {
                    Ok(r) => Outcome::Error(r.report.value - x),
                    Err(e) => Outcome::Failed(e.to_string()),
                };
                (o, z.len())
            }
        })
        .collect();
    let mut cell = aggregate(spec, outcomes)?;
    let (at, report) = match spec.method {
        Method::Idd => (x, if spec.sigma0 > 0.0 { Some(crlb_idd(&setup.curve, x, b.n, spec.sigma0)?) } else { None }),
        _ => (setup.x_lo, if spec.sigma0 > 0.0 { Some(crlb_isd(&setup.curve, setup.x_lo, b.n, spec.sigma0)?) } else { None }),
    };
    cell.crlb = report.as_ref().map_or(0.0, |r| r.bound);
    if let Some(d) = report.and_then(|r| r.diagnostic) {
        if !cell.note.is_empty() {
            cell.note.push_str("; ");
        }
        cell.note.push_str(&d);
    }
    let mut bytes = spec.method.tag().as_bytes().to_vec();
    bytes.extend(f64_bytes(&[spec.x, spec.sigma0, at, setup.curve.derivative(at), setup.branch.0, setup.branch.1]));
    cell.hash = consistency_hash(&[&bytes, &f64_bytes(&setup.curve.values)]);
    Ok(cell)
}

/// Runs every cell of the configured campaign. `surface` is needed for the
/// intensity schemes, tabulated lineshapes and normalisation; without it
/// normalised columns are NaN.
pub fn run_campaign(cfg: &ExperimentConfig, surface: Option<&ResponseSurface>) -> Result<CampaignResult, HarnessError> {
    cfg.validate()?;
    run_cells(cfg, surface, &cfg.methods()?, &cfg.campaign.signals)
}

pub(super) fn run_cells(
    cfg: &ExperimentConfig,
    surface: Option<&ResponseSurface>,
    methods: &[Method],
    signals: &[f64],
) -> Result<CampaignResult, HarnessError> {
    let sys = cfg.system.resolve()?;
    let kr = kappa_rabi(&sys);
    let needs_intensity = methods.iter().any(|m| matches!(m, Method::Idd | Method::Isd));
    let intensity = match surface {
        Some(s) => Some(intensity_setup(cfg, s)?),
        None if needs_intensity => {
            return Err(HarnessError::SurfaceRequired("intensity schemes read F_I from the surface".into()));
        }
        None => None,
    };
    let mut cells = Vec::new();
    for &method in methods {
        for (si, &x) in signals.iter().enumerate() {
            let split = match method {
                Method::Idd | Method::Isd => None,
                _ => Some(split_setup(cfg, surface, x, kr)),
            };
            for (ni, &sigma0) in cfg.campaign.noise.iter().enumerate() {
                let spec = CellSpec { cfg, method, x, sigma0, si, ni, kappa_rabi: kr };
                let mut cell = match (&split, &intensity) {
                    (Some(Ok(setup)), _) => run_splitting_cell(&spec, setup)?,
                    (Some(Err(e)), _) => invalid_cell(&spec, e.to_string()),
                    (None, Some(setup)) => run_intensity_cell(&spec, setup)?,
                    (None, None) => unreachable!("checked above"),
                };
                if let (Some(is), true) = (&intensity, sigma0 > 0.0) {
                    let reference = NormalizationReference::new(&is.curve, sigma0, cfg.budget.n)?;
                    cell.normalized_mse = reference.normalize(cell.mse);
                    cell.normalized_crlb = reference.normalize(cell.crlb);
                }
                cell.note = cell.note.replace([',', '\n'], ";");
                cells.push(cell);
            }
        }
    }
    Ok(CampaignResult { master_seed: cfg.campaign.seed, cells })
}

fn invalid_cell(spec: &CellSpec<'_>, note: String) -> CampaignCell {
    CampaignCell {
        scheme: spec.method,
        x: spec.x,
        sigma0: spec.sigma0,
        trials: 0,
        failures: 0,
        nonconverged: 0,
        valid: false,
        mse: f64::NAN,
        bias: f64::NAN,
        crlb: f64::NAN,
        normalized_mse: f64::NAN,
        normalized_crlb: f64::NAN,
        samples_per_trial: 0,
        signal_index: spec.si,
        noise_index: spec.ni,
        hash: 0,
        note,
    }
}
