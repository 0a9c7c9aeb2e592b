//! C ABI over `rydberg-core`.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free`. Every fallible call returns a
//! [`RydbergStatus`]; on failure the message is available from
//! [`rydberg_last_error`] on the same thread until the next failing call.
//! Panics are caught and reported as [`RydbergStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rydberg_core::crlb::{crlb_idd, ratio_r, ratio_r0, CrlbError};
use rydberg_core::estimators::{estimate_idd, EstimatorError, Method};
use rydberg_core::harness::{
    build_configured_surface, read_surface, run_campaign, write_campaign, write_surface, CampaignResult,
    ExperimentConfig, HarnessError,
};
use rydberg_core::response::{intensity_marginal, kappa_rabi, ResponseError};
use rydberg_core::ResponseSurface;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RydbergStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Model = 4,
    Response = 5,
    Estimator = 6,
    Crlb = 7,
    Io = 8,
    Panic = 9,
}

/// Detection scheme of a campaign cell.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RydbergScheme {
    Idd = 0,
    Isd = 1,
    Ue = 2,
    Me = 3,
    PolyFit = 4,
}

impl From<Method> for RydbergScheme {
    fn from(m: Method) -> Self {
        match m {
            Method::Idd => Self::Idd,
            Method::Isd => Self::Isd,
            Method::Ue => Self::Ue,
            Method::Me => Self::Me,
            Method::PolyFit => Self::PolyFit,
        }
    }
}

/// One campaign cell. Variances are in MHz^2.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RydbergCell {
    pub scheme: RydbergScheme,
    pub x: f64,
    pub sigma0: f64,
    pub trials: usize,
    pub failures: usize,
    pub nonconverged: usize,
    pub valid: bool,
    pub mse: f64,
    pub bias: f64,
    pub crlb: f64,
    pub normalized_mse: f64,
    pub normalized_crlb: f64,
    pub hash: u64,
}

/// Opaque experiment configuration.
pub struct RydbergConfig(ExperimentConfig);
/// Opaque response surface G(x, f).
pub struct RydbergSurface(ResponseSurface);
/// Opaque campaign result.
pub struct RydbergCampaign(CampaignResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Message of the last failing call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rydberg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rydberg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

struct Failure(RydbergStatus, String);

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let code = match &e {
            HarnessError::Config(_) | HarnessError::Budget(_) | HarnessError::SurfaceRequired(_) => {
                RydbergStatus::Config
            }
            HarnessError::Io { .. } | HarnessError::Format { .. } => RydbergStatus::Io,
            HarnessError::Model(_) => RydbergStatus::Model,
            HarnessError::Response(_) | HarnessError::Noise(_) => RydbergStatus::Response,
            HarnessError::Crlb(_) => RydbergStatus::Crlb,
            HarnessError::Estimator(_) => RydbergStatus::Estimator,
        };
        Failure(code, e.to_string())
    }
}

impl From<ResponseError> for Failure {
    fn from(e: ResponseError) -> Self {
        Failure(RydbergStatus::Response, e.to_string())
    }
}

impl From<EstimatorError> for Failure {
    fn from(e: EstimatorError) -> Self {
        Failure(RydbergStatus::Estimator, e.to_string())
    }
}

impl From<CrlbError> for Failure {
    fn from(e: CrlbError) -> Self {
        Failure(RydbergStatus::Crlb, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RydbergStatus::NullPointer, format!("{what} is NULL"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RydbergStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RydbergStatus::Ok,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            RydbergStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(RydbergStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = value;
    Ok(())
}

/// Default configuration.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rydberg_config_default(out: *mut *mut RydbergConfig) -> RydbergStatus {
    guard(|| put(out, RydbergConfig(ExperimentConfig::default())))
}

/// Parses and validates a TOML configuration.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rydberg_config_from_toml(text: *const c_char, out: *mut *mut RydbergConfig) -> RydbergStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_toml_str(str_arg(text, "text")?)?;
        put(out, RydbergConfig(cfg))
    })
}

/// # Safety
/// `cfg` must come from this library or be NULL, and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rydberg_config_free(cfg: *mut RydbergConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Builds the response surface of the configured system and grid.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rydberg_surface_build(cfg: *const RydbergConfig, out: *mut *mut RydbergSurface) -> RydbergStatus {
    guard(|| {
        let cfg = get(cfg, "cfg")?;
        put(out, RydbergSurface(build_configured_surface(&cfg.0)?))
    })
}

/// Loads `surface.csv` and `surface.meta` from directory `dir`.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rydberg_surface_load(dir: *const c_char, out: *mut *mut RydbergSurface) -> RydbergStatus {
    guard(|| {
        let dir = str_arg(dir, "dir")?;
        put(out, RydbergSurface(read_surface(Path::new(dir))?))
    })
}

/// Writes `surface.csv` and `surface.meta` into directory `dir`.
///
/// # Safety
/// `surface` must be a live handle; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rydberg_surface_save(surface: *const RydbergSurface, dir: *const c_char) -> RydbergStatus {
    guard(|| {
        let s = get(surface, "surface")?;
        Ok(write_surface(&s.0, Path::new(str_arg(dir, "dir")?))?)
    })
}

/// G(x, f) with x = Omega_RF/2pi and f the probe detuning, both in MHz.
///
/// # Safety
/// `surface` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rydberg_surface_eval(
    surface: *const RydbergSurface,
    x: f64,
    f: f64,
    out: *mut f64,
) -> RydbergStatus {
    guard(|| {
        let s = &get(surface, "surface")?.0;
        let ((xl, xh), (fl, fh)) = (s.x_range(), s.f_range());
        if !(x >= xl && x <= xh && f >= fl && f <= fh) {
            return Err(Failure(
                RydbergStatus::InvalidArgument,
                format!("({x}, {f}) is outside [{xl}, {xh}] x [{fl}, {fh}]"),
            ));
        }
        write_out(out, s.eval(x, f))
    })
}

/// # Safety
/// `surface` must come from this library or be NULL, and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn rydberg_surface_free(surface: *mut RydbergSurface) {
    if !surface.is_null() {
        drop(Box::from_raw(surface));
    }
}

/// Direct-detection estimate of x from `n` readouts on the resonant
/// intensity curve, searching the monotone branch `[lo, hi]`.
///
/// # Safety
/// `z` must point to `n` doubles; `surface` must be a live handle; `out`
/// must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rydberg_estimate_idd(
    surface: *const RydbergSurface,
    z: *const f64,
    n: usize,
    lo: f64,
    hi: f64,
    out: *mut f64,
) -> RydbergStatus {
    guard(|| {
        let s = get(surface, "surface")?;
        if z.is_null() {
            return Err(null("z"));
        }
        let z = std::slice::from_raw_parts(z, n);
        let curve = intensity_marginal(&s.0, 0.0)?;
        write_out(out, estimate_idd(z, &curve, (lo, hi))?.value)
    })
}

/// Direct-detection bound sigma0^2 / (n F_I'(x)^2) in MHz^2.
///
/// # Safety
/// `surface` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rydberg_crlb_idd(
    surface: *const RydbergSurface,
    x: f64,
    n: usize,
    sigma0: f64,
    out: *mut f64,
) -> RydbergStatus {
    guard(|| {
        let s = get(surface, "surface")?;
        let curve = intensity_marginal(&s.0, 0.0)?;
        write_out(out, crlb_idd(&curve, x, n, sigma0)?.bound)
    })
}

/// Slope ratios r0 (splitting slope taken at `x_ref`) and r[x]; kappa
/// comes from the configured system.
///
/// # Safety
/// Handles must be live; `r0` and `r_x` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rydberg_ratios(
    cfg: *const RydbergConfig,
    surface: *const RydbergSurface,
    x: f64,
    x_ref: f64,
    r0: *mut f64,
    r_x: *mut f64,
) -> RydbergStatus {
    guard(|| {
        let cfg = get(cfg, "cfg")?;
        let s = get(surface, "surface")?;
        let k = kappa_rabi(&cfg.0.system.resolve().map_err(HarnessError::from)?);
        if r0.is_null() || r_x.is_null() {
            return Err(null("out"));
        }
        *r0 = ratio_r0(&s.0, k, x_ref)?.value;
        *r_x = ratio_r(&s.0, x, k)?.value;
        Ok(())
    })
}

/// Runs the configured campaign. `surface` may be NULL when no scheme needs
/// it.
///
/// # Safety
/// `cfg` must be a live handle, `surface` live or NULL, `out` valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn rydberg_campaign_run(
    cfg: *const RydbergConfig,
    surface: *const RydbergSurface,
    out: *mut *mut RydbergCampaign,
) -> RydbergStatus {
    guard(|| {
        let cfg = get(cfg, "cfg")?;
        let s = surface.as_ref().map(|s| &s.0);
        put(out, RydbergCampaign(run_campaign(&cfg.0, s)?))
    })
}

/// Number of cells; 0 for NULL.
///
/// # Safety
/// `campaign` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn rydberg_campaign_len(campaign: *const RydbergCampaign) -> usize {
    campaign.as_ref().map_or(0, |c| c.0.cells.len())
}

/// Copies cell `index` into `out`.
///
/// # Safety
/// `campaign` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rydberg_campaign_cell(
    campaign: *const RydbergCampaign,
    index: usize,
    out: *mut RydbergCell,
) -> RydbergStatus {
    guard(|| {
        let c = get(campaign, "campaign")?;
        let cell = c.0.cells.get(index).ok_or_else(|| {
            Failure(RydbergStatus::InvalidArgument, format!("cell {index} of {}", c.0.cells.len()))
        })?;
        write_out(
            out,
            RydbergCell {
                scheme: cell.scheme.into(),
                x: cell.x,
                sigma0: cell.sigma0,
                trials: cell.trials,
                failures: cell.failures,
                nonconverged: cell.nonconverged,
                valid: cell.valid,
                mse: cell.mse,
                bias: cell.bias,
                crlb: cell.crlb,
                normalized_mse: cell.normalized_mse,
                normalized_crlb: cell.normalized_crlb,
                hash: cell.hash,
            },
        )
    })
}

/// Writes `campaign.csv`, `config.echo` and `seeds.txt` into `dir`.
///
/// # Safety
/// Handles must be live; `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rydberg_campaign_write(
    campaign: *const RydbergCampaign,
    cfg: *const RydbergConfig,
    dir: *const c_char,
) -> RydbergStatus {
    guard(|| {
        let c = get(campaign, "campaign")?;
        let cfg = get(cfg, "cfg")?;
        Ok(write_campaign(&c.0, &cfg.0, Path::new(str_arg(dir, "dir")?))?)
    })
}

/// # Safety
/// `campaign` must come from this library or be NULL, and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn rydberg_campaign_free(campaign: *mut RydbergCampaign) {
    if !campaign.is_null() {
        drop(Box::from_raw(campaign));
    }
}
