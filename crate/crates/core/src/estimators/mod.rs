//! Maximum-likelihood field-strength estimators and the polynomial-fit
//! baseline.
//!
//! Field estimates are reported as x = Omega_RF/2pi in MHz; use
//! [`EstimateReport::field_v_per_m`] for the field magnitude. Shift estimates
//! are probe detunings in MHz.

mod polyfit;
mod shift;

use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::interp::pairwise_sum;
use crate::noise_sim::ScanData;
use crate::quantum_model::system::mhz_to_rad_s;
use crate::response::{invert_intensity, MarginalCurve, PeakFamily, PeakLineshape, ResponseError, Side};
use crate::AtomicSystem;

pub use polyfit::{polyfit_coefficients, polyfit_peak};
pub use shift::{estimate_shift_multivariate, estimate_shift_univariate, initial_params};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("sample mean {mean} is outside the branch response range [{lo}, {hi}]")]
    ValueOutOfRange { mean: f64, lo: f64, hi: f64 },
    #[error("response slope at the operating point is zero")]
    ZeroSlope,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("scan side {scan} does not match lineshape side {lineshape}")]
    SideMismatch { scan: &'static str, lineshape: &'static str },
    #[error("all scan frequencies are identical")]
    DegenerateScan,
    #[error("sum of squared lineshape slopes {0:e} is below 1e-18; samples sit on flat regions")]
    DegenerateDenominator(f64),
    #[error("ill-conditioned lineshape fit: {0}")]
    IllConditionedFit(String),
    #[error("fitted polynomial has no extremum inside the scan span")]
    NoInteriorExtremum,
    #[error("{side} peak: {source}")]
    Side {
        side: &'static str,
        #[source]
        source: Box<EstimatorError>,
    },
    #[error(transparent)]
    Response(#[from] ResponseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Idd,
    Isd,
    Ue,
    Me,
    PolyFit,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Idd => "IDD",
            Method::Isd => "ISD",
            Method::Ue => "UE",
            Method::Me => "ME",
            Method::PolyFit => "5-PF",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "IDD" => Some(Method::Idd),
            "ISD" => Some(Method::Isd),
            "UE" => Some(Method::Ue),
            "ME" => Some(Method::Me),
            "5-PF" | "5PF" | "PF" | "POLYFIT" => Some(Method::PolyFit),
            _ => None,
        }
    }
}

/// What [`EstimateReport::value`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// Omega_RF/2pi in MHz.
    Field,
    /// Single-peak position (probe detuning, MHz).
    Shift,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub method: Method,
    pub quantity: Quantity,
    pub value: f64,
    pub iterations: usize,
    /// Shift methods: one entry per accepted iterate, `[shift]` (UE) or
    /// `[shift, v1, .., vM]` per alternation round (ME).
    pub iteration_trace: Vec<Vec<f64>>,
    pub converged: bool,
    /// Final least-squares objective.
    pub residual: f64,
    /// Fitted lineshape parameters (ME) or polynomial coefficients (5-PF).
    pub params: Vec<f64>,
    /// (left, right) peak positions for splitting estimates.
    pub shifts: Option<(f64, f64)>,
    pub diagnostic: Option<String>,
}

/// Column order of [`EstimateReport::csv_row`].
pub const CSV_HEADER: &str = "method,quantity,value,iterations,converged,residual,shift_left,shift_right";

impl EstimateReport {
    fn closed_form(method: Method, value: f64, residual: f64) -> Self {
        Self {
            method,
            quantity: Quantity::Field,
            value,
            iterations: 0,
            iteration_trace: Vec::new(),
            converged: true,
            residual,
            params: Vec::new(),
            shifts: None,
            diagnostic: None,
        }
    }

    /// Rabi frequency (rad/s) for field estimates.
    pub fn rabi_rad_s(&self) -> f64 {
        mhz_to_rad_s(self.value)
    }

    /// Field magnitude (V/m) for field estimates.
    pub fn field_v_per_m(&self, sys: &AtomicSystem) -> f64 {
        sys.field_from_rabi_mhz(self.value)
    }

    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "method = {}", self.method.tag());
        let q = match self.quantity {
            Quantity::Field => "field_rabi_mhz",
            Quantity::Shift => "shift_mhz",
        };
        let _ = writeln!(s, "{q} = {}", self.value);
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "converged = {}", self.converged);
        let _ = writeln!(s, "residual = {}", self.residual);
        if let Some((l, r)) = self.shifts {
            let _ = writeln!(s, "shift_left = {l}");
            let _ = writeln!(s, "shift_right = {r}");
        }
        if !self.params.is_empty() {
            let p: Vec<String> = self.params.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "params = {}", p.join(" "));
        }
        if let Some(d) = &self.diagnostic {
            let _ = writeln!(s, "diagnostic = {d}");
        }
        s
    }

    /// One row in [`CSV_HEADER`] order.
    pub fn csv_row(&self) -> String {
        let (l, r) = self.shifts.map_or((String::new(), String::new()), |(l, r)| (l.to_string(), r.to_string()));
        let q = match self.quantity {
            Quantity::Field => "field",
            Quantity::Shift => "shift",
        };
        format!(
            "{},{q},{},{},{},{},{l},{r}",
            self.method.tag(),
            self.value,
            self.iterations,
            self.converged,
            self.residual
        )
    }
}

/// Initial shift f^[1] of the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialShift {
    /// Frequency of the largest 3-point moving average of the scan.
    ArgMax,
    Given(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSolverConfig {
    /// Stop when |delta f| < epsilon (MHz).
    pub epsilon: f64,
    pub max_iterations: usize,
    pub initial_shift: InitialShift,
    /// Starting lineshape parameters for the multivariate fit; derived from
    /// the data when absent.
    pub initial_params: Option<Vec<f64>>,
    /// Relative parameter change that ends the alternation.
    pub joint_tolerance: f64,
    pub max_rounds: usize,
}

impl Default for ShiftSolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            max_iterations: 100,
            initial_shift: InitialShift::ArgMax,
            initial_params: None,
            joint_tolerance: 1e-8,
            max_rounds: 50,
        }
    }
}

impl ShiftSolverConfig {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(EstimatorError::InvalidConfig("epsilon must be > 0".into()));
        }
        if self.max_iterations < 1 || self.max_rounds < 1 {
            return Err(EstimatorError::InvalidConfig("iteration limits must be >= 1".into()));
        }
        if !(self.joint_tolerance > 0.0) {
            return Err(EstimatorError::InvalidConfig("joint tolerance must be > 0".into()));
        }
        if let InitialShift::Given(f) = self.initial_shift {
            if !f.is_finite() {
                return Err(EstimatorError::InvalidConfig("initial shift must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Intensity direct detection: x = F_I^-1(mean z) on the branch `branch`.
pub fn estimate_idd(z: &[f64], curve: &MarginalCurve, branch: (f64, f64)) -> Result<EstimateReport, EstimatorError> {
    if z.is_empty() {
        return Err(EstimatorError::InvalidInput("no samples".into()));
    }
    let mean = pairwise_sum(z) / z.len() as f64;
    let x = invert_intensity(curve, mean, branch).map_err(|e| match e {
        ResponseError::ValueOutOfRange { value, lo, hi } => EstimatorError::ValueOutOfRange { mean: value, lo, hi },
        other => other.into(),
    })?;
    let y = curve.eval(x);
    let resid: Vec<f64> = z.iter().map(|v| (v - y) * (v - y)).collect();
    Ok(EstimateReport::closed_form(Method::Idd, x, pairwise_sum(&resid)))
}

/// Superheterodyne estimate with both evaluation paths.
#[derive(Debug, Clone, PartialEq)]
pub struct IsdEstimate {
    pub report: EstimateReport,
    /// Per-period estimates x_i, phase-referenced to the combined DFT.
    pub per_period: Vec<f64>,
    /// Mean of `per_period`.
    pub per_period_mean: f64,
}

/// Intensity superheterodyne detection from `periods` x `per_period`
/// samples: x = 2/(N |F_I'[x_LO]|) |sum_k z_k exp(-j 2 pi (k-1) periods / N)|.
///
/// The per-period path projects each period's DFT bin onto the combined
/// phase, x_i = 2/(per_period |F'|) Re(X_i e^{-j phi}), whose mean equals the
/// combined estimate.
pub fn estimate_isd(z: &[f64], slope: f64, periods: usize, per_period: usize) -> Result<IsdEstimate, EstimatorError> {
    if periods < 1 || per_period < 2 || z.len() != periods * per_period {
        return Err(EstimatorError::InvalidInput(format!(
            "expected {periods} x {per_period} samples, got {}",
            z.len()
        )));
    }
    if !slope.is_finite() || slope == 0.0 {
        return Err(EstimatorError::ZeroSlope);
    }
    let n = z.len();
    let w = -2.0 * std::f64::consts::PI / per_period as f64;
    let bins: Vec<Complex64> = z
        .chunks(per_period)
        .map(|c| c.iter().enumerate().map(|(k, &v)| Complex64::from_polar(v, w * k as f64)).sum())
        .collect();
    let total: Complex64 = bins.iter().sum();
    let a = slope.abs();
    let x = 2.0 / (n as f64 * a) * total.norm();
    let rot = if total.norm() > 0.0 { total.conj() / total.norm() } else { Complex64::new(1.0, 0.0) };
    let per: Vec<f64> = bins.iter().map(|b| 2.0 / (per_period as f64 * a) * (b * rot).re).collect();
    let per_mean = pairwise_sum(&per) / periods as f64;
    let mut report = EstimateReport::closed_form(Method::Isd, x, f64::NAN);
    report.params = vec![total.arg()];
    Ok(IsdEstimate { report, per_period: per, per_period_mean: per_mean })
}

/// Peak model used by [`estimate_splitting`].
#[derive(Clone, Copy)]
pub enum SplitModel<'a> {
    /// Fully known lineshapes (univariate estimator).
    Known { left: &'a PeakLineshape, right: &'a PeakLineshape },
    /// Parametric families with unknown parameters (multivariate estimator).
    Family { left: &'a dyn PeakFamily, right: &'a dyn PeakFamily },
    /// Polynomial-fit baseline of the given order.
    PolyFit(usize),
}

/// Field estimate x = kappa_rabi (f_R - f_L) from independent left and right
/// scans. `nominal` overrides the configured initial shift per side.
pub fn estimate_splitting(
    left: &ScanData,
    right: &ScanData,
    model: SplitModel<'_>,
    config: &ShiftSolverConfig,
    nominal: Option<(f64, f64)>,
    kappa_rabi: f64,
) -> Result<EstimateReport, EstimatorError> {
    let label = |side: Side| move |e: EstimatorError| EstimatorError::Side { side: side.name(), source: Box::new(e) };
    let cfg_for = |f: Option<f64>| {
        let mut c = config.clone();
        if let Some(f) = f {
            c.initial_shift = InitialShift::Given(f);
        }
        c
    };
    let (cl, cr) = (cfg_for(nominal.map(|n| n.0)), cfg_for(nominal.map(|n| n.1)));
    let (method, l, r) = match model {
        SplitModel::Known { left: ll, right: lr } => (
            Method::Ue,
            estimate_shift_univariate(left, ll, &cl).map_err(label(Side::Left))?,
            estimate_shift_univariate(right, lr, &cr).map_err(label(Side::Right))?,
        ),
        SplitModel::Family { left: fl, right: fr } => (
            Method::Me,
            estimate_shift_multivariate(left, fl, &cl).map_err(label(Side::Left))?,
            estimate_shift_multivariate(right, fr, &cr).map_err(label(Side::Right))?,
        ),
        SplitModel::PolyFit(order) => (
            Method::PolyFit,
            polyfit_peak(left, order).map_err(label(Side::Left))?,
            polyfit_peak(right, order).map_err(label(Side::Right))?,
        ),
    };
    let mut params = l.params.clone();
    params.extend_from_slice(&r.params);
    let diagnostic = match (&l.diagnostic, &r.diagnostic) {
        (None, None) => None,
        (a, b) => Some(format!("left: {}; right: {}", a.as_deref().unwrap_or("-"), b.as_deref().unwrap_or("-"))),
    };
    Ok(EstimateReport {
        method,
        quantity: Quantity::Field,
        value: kappa_rabi * (r.value - l.value),
        iterations: l.iterations + r.iterations,
        iteration_trace: Vec::new(),
        converged: l.converged && r.converged,
        residual: l.residual + r.residual,
        params,
        shifts: Some((l.value, r.value)),
        diagnostic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise_sim::{sample_idd, sample_isd, NoiseSpec};
    use crate::response::Axis;

    fn falling() -> MarginalCurve {
        let xs: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let ys = xs.iter().map(|x| 1.0 / (1.0 + 0.05 * x * x)).collect();
        MarginalCurve::new(Axis::FieldStrength, 0.0, xs, ys).unwrap()
    }

    #[test]
    fn idd_noiseless_round_trip() {
        let c = falling();
        let z = sample_idd(&c, 3.3, 20, &NoiseSpec::new(0.0, 0).unwrap());
        let r = estimate_idd(&z, &c, (0.5, 10.0)).unwrap();
        assert!((r.value - 3.3).abs() < 1e-9);
        assert!(r.converged && r.iteration_trace.is_empty());
    }

    #[test]
    fn idd_out_of_range_is_reported() {
        let c = falling();
        let e = estimate_idd(&[1.5, 1.5], &c, (0.5, 10.0)).unwrap_err();
        assert!(matches!(e, EstimatorError::ValueOutOfRange { mean, .. } if mean == 1.5));
    }

    #[test]
    fn isd_noiseless_is_exact_and_paths_agree() {
        let c = falling();
        let slope = c.derivative(4.0);
        let z = sample_isd(&c, 4.0, 0.05, 1.1, 5, 8, &NoiseSpec::new(0.0, 0).unwrap()).unwrap();
        let r = estimate_isd(&z, slope, 5, 8).unwrap();
        assert!((r.report.value - 0.05).abs() < 1e-12 * 0.05);
        let z = sample_isd(&c, 4.0, 0.05, 1.1, 5, 8, &NoiseSpec::new(0.01, 3).unwrap()).unwrap();
        let r = estimate_isd(&z, slope, 5, 8).unwrap();
        assert!((r.per_period_mean - r.report.value).abs() <= 1e-12 * r.report.value);
        assert_eq!(estimate_isd(&z, 0.0, 5, 8).unwrap_err(), EstimatorError::ZeroSlope);
        assert!(estimate_isd(&z, slope, 4, 8).is_err());
    }

    #[test]
    fn report_serialisation() {
        let mut r = EstimateReport::closed_form(Method::Ue, 15.0, 0.1);
        r.shifts = Some((-7.5, 7.5));
        assert_eq!(r.csv_row(), "UE,field,15,0,true,0.1,-7.5,7.5");
        assert_eq!(CSV_HEADER.split(',').count(), r.csv_row().split(',').count());
        assert!(r.to_key_value().contains("shift_right = 7.5"));
        assert_eq!(Method::parse("5-pf"), Some(Method::PolyFit));
        let sys = AtomicSystem::rb85();
        assert!((sys.rabi_from_field(r.field_v_per_m(&sys)) - r.rabi_rad_s()).abs() < 1e-6 * r.rabi_rad_s());
    }

    #[test]
    fn config_validation() {
        assert!(ShiftSolverConfig::default().validate().is_ok());
        let bad = ShiftSolverConfig { epsilon: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = ShiftSolverConfig { max_iterations: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
