//! Marginal response curves F_I[x] and F_S[f], their slopes and inverses,
//! per-peak lineshapes and the splitting-to-field constant.

pub mod lineshape;

pub use lineshape::{GaussianLike, PeakFamily, PeakLineshape, ScaledLineshape, Side};

use std::io::Write;

use thiserror::Error;

use crate::interp;
use crate::quantum_model::system::HBAR;
use crate::quantum_model::{AtomicSystem, ModelError, ResponseSurface};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResponseError {
    #[error("{what} = {value} lies outside [{lo}, {hi}]")]
    OutOfRange { what: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("splitting unresolved: {0}")]
    UnresolvedSplitting(String),
    #[error("curve is not monotone on [{lo}, {hi}]")]
    NonMonotoneBranch { lo: f64, hi: f64 },
    #[error("response {value} is outside the branch range [{lo}, {hi}]")]
    ValueOutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Which coordinate a marginal curve runs along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// F_I[x]: Omega_RF/2pi (MHz) at fixed detuning.
    FieldStrength,
    /// F_S[f]: probe detuning (MHz) at fixed field.
    ProbeFrequency,
}

/// A one-dimensional cut through the response surface, interpolated with the
/// same C1 cubic Hermite scheme as the surface itself.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalCurve {
    pub axis: Axis,
    /// The held coordinate: detuning for F_I, field for F_S.
    pub fixed_value: f64,
    pub inputs: Vec<f64>,
    pub values: Vec<f64>,
}

impl MarginalCurve {
    pub fn new(axis: Axis, fixed_value: f64, inputs: Vec<f64>, values: Vec<f64>) -> Result<Self, ResponseError> {
        if inputs.len() != values.len() || inputs.len() < 2 {
            return Err(ResponseError::InvalidCurve("need at least two (input, value) pairs".into()));
        }
        if !interp::strictly_increasing(&inputs) {
            return Err(ResponseError::InvalidCurve("inputs must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ResponseError::InvalidCurve("non-finite response value".into()));
        }
        Ok(Self { axis, fixed_value, inputs, values })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.inputs[0], self.inputs[self.inputs.len() - 1])
    }

    /// (min, max) over the samples.
    pub fn range(&self) -> (f64, f64) {
        self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    }

    pub fn eval(&self, t: f64) -> f64 {
        interp::eval(&self.inputs, &self.values, t).0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        interp::eval(&self.inputs, &self.values, t).1
    }

    pub fn eval_with_derivative(&self, t: f64) -> (f64, f64) {
        interp::eval(&self.inputs, &self.values, t)
    }

    fn check_in_domain(&self, what: &'static str, t: f64) -> Result<(), ResponseError> {
        let (lo, hi) = self.domain();
        if !(t >= lo && t <= hi) {
            return Err(ResponseError::OutOfRange { what, value: t, lo, hi });
        }
        Ok(())
    }

    /// Writes `input,response` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "input,response")?;
        for (t, v) in self.inputs.iter().zip(&self.values) {
            writeln!(out, "{t},{v}")?;
        }
        Ok(())
    }
}

/// F_I[x] = G[x, f] at fixed detuning `delta_p` (MHz).
pub fn intensity_marginal(surface: &ResponseSurface, delta_p: f64) -> Result<MarginalCurve, ResponseError> {
    let (lo, hi) = surface.f_range();
    if !(delta_p >= lo && delta_p <= hi) {
        return Err(ResponseError::OutOfRange { what: "delta_p", value: delta_p, lo, hi });
    }
    MarginalCurve::new(Axis::FieldStrength, delta_p, surface.x_grid.clone(), surface.column_at_f(delta_p))
}

/// F_S[f] = G[x, f] at fixed field `x` (Omega_RF/2pi, MHz).
pub fn frequency_marginal(surface: &ResponseSurface, x: f64) -> Result<MarginalCurve, ResponseError> {
    let (lo, hi) = surface.x_range();
    if !(x >= lo && x <= hi) {
        return Err(ResponseError::OutOfRange { what: "x", value: x, lo, hi });
    }
    MarginalCurve::new(Axis::ProbeFrequency, x, surface.f_grid.clone(), surface.row_at_x(x))
}

/// A local maximum of a sampled curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Refined location of the maximum.
    pub location: f64,
    pub height: f64,
    /// Topographic prominence over the sampled values.
    pub prominence: f64,
    /// Index of the highest sample of the peak.
    pub index: usize,
}

/// Interior local maxima whose prominence is at least `min_prominence`,
/// refined with a golden-section search on the interpolant.
pub fn find_peaks(curve: &MarginalCurve, min_prominence: f64) -> Vec<Peak> {
    let v = &curve.values;
    let n = v.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if v[i] > v[i - 1] {
            // walk across a flat top
            let mut j = i;
            while j + 1 < n && v[j + 1] == v[i] {
                j += 1;
            }
            if j + 1 < n && v[j + 1] < v[i] {
                let h = v[i];
                let mut left_min = h;
                let mut k = i;
                while k > 0 {
                    k -= 1;
                    if v[k] > h {
                        break;
                    }
                    left_min = left_min.min(v[k]);
                }
                let mut right_min = h;
                let mut k = j;
                while k + 1 < n {
                    k += 1;
                    if v[k] > h {
                        break;
                    }
                    right_min = right_min.min(v[k]);
                }
                let prominence = h - left_min.max(right_min);
                if prominence >= min_prominence {
                    let a = curve.inputs[i - 1];
                    let b = curve.inputs[j + 1];
                    let step = (b - a) / (j + 2 - i) as f64;
                    let (loc, height) = interp::golden_max(a, b, 1e-6 * step, |t| curve.eval(t));
                    peaks.push(Peak { location: loc, height, prominence, index: i });
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Splits F_S into left and right lineshapes about `f_resonance`. Each side
/// keeps its most prominent peak (prominence at least 2% of the curve range),
/// and the lineshape is re-centred so that its maximum sits at 0.
pub fn split_lineshapes(
    curve: &MarginalCurve,
    f_resonance: f64,
) -> Result<(PeakLineshape, PeakLineshape), ResponseError> {
    if curve.axis != Axis::ProbeFrequency {
        return Err(ResponseError::InvalidCurve("split_lineshapes needs a frequency marginal".into()));
    }
    let (lo, hi) = curve.range();
    let peaks = find_peaks(curve, 0.02 * (hi - lo));
    let best = |pred: &dyn Fn(f64) -> bool| {
        peaks
            .iter()
            .filter(|p| pred(p.location))
            .max_by(|a, b| a.prominence.total_cmp(&b.prominence))
            .copied()
    };
    let left = best(&|f| f < f_resonance);
    let right = best(&|f| f > f_resonance);
    let (left, right) = match (left, right) {
        (Some(l), Some(r)) => (l, r),
        _ => {
            return Err(ResponseError::UnresolvedSplitting(format!(
                "need one peak on each side of {f_resonance}, found {} above 2% prominence",
                peaks.len()
            )))
        }
    };
    // the two maxima must be separated by a sampled dip
    let dip = curve.values[left.index..=right.index].iter().cloned().fold(f64::INFINITY, f64::min);
    if dip >= left.height.min(right.height) {
        return Err(ResponseError::UnresolvedSplitting("no local minimum between the two maxima".into()));
    }
    let l = PeakLineshape::from_curve(curve, Side::Left, left.location, f_resonance)?;
    let r = PeakLineshape::from_curve(curve, Side::Right, right.location, f_resonance)?;
    Ok((l, r))
}

/// Peak locations (f_L, f_R) of the two Autler-Townes maxima.
pub fn peak_positions(curve: &MarginalCurve, f_resonance: f64) -> Result<(f64, f64), ResponseError> {
    let (l, r) = split_lineshapes(curve, f_resonance)?;
    Ok((f_resonance - l.boundary, f_resonance - r.boundary))
}

/// Solves curve(x) = y on `branch` by bisection. The branch must be monotone:
/// the derivative sign is checked at 32 points and any sign change rejects it.
pub fn invert_intensity(curve: &MarginalCurve, y: f64, branch: (f64, f64)) -> Result<f64, ResponseError> {
    let (a, b) = branch;
    curve.check_in_domain("branch start", a)?;
    curve.check_in_domain("branch end", b)?;
    if !(b > a) {
        return Err(ResponseError::InvalidCurve("empty branch".into()));
    }
    // Slopes under 1e-3 of the branch's steepest count as flat: one-sided
    // stencils at a stationary end point leave residues of that order.
    let slopes: Vec<f64> = (0..32).map(|k| curve.derivative(a + (b - a) * k as f64 / 31.0)).collect();
    let (rlo, rhi) = curve.range();
    let steepest = slopes.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let tiny = (1e-3 * steepest).max(1e-10 * (rhi - rlo).max(f64::MIN_POSITIVE) / (b - a));
    let mut sign = 0.0;
    for s in slopes {
        if s.abs() > tiny {
            if sign != 0.0 && s.signum() != sign {
                return Err(ResponseError::NonMonotoneBranch { lo: a, hi: b });
            }
            sign = s.signum();
        }
    }
    let (ya, yb) = (curve.eval(a), curve.eval(b));
    let (lo, hi) = (ya.min(yb), ya.max(yb));
    if !(y >= lo && y <= hi) {
        return Err(ResponseError::ValueOutOfRange { value: y, lo, hi });
    }
    if y == ya {
        return Ok(a);
    }
    if y == yb {
        return Ok(b);
    }
    let (mut l, mut r) = (a, b);
    let increasing = yb > ya;
    for _ in 0..200 {
        let m = 0.5 * (l + r);
        if m <= l || m >= r {
            break;
        }
        let below = curve.eval(m) < y;
        if below == increasing {
            l = m;
        } else {
            r = m;
        }
    }
    let (el, er) = ((curve.eval(l) - y).abs(), (curve.eval(r) - y).abs());
    Ok(if el <= er { l } else { r })
}

/// Location and signed slope of the largest |derivative| on an interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeMax {
    pub location: f64,
    pub slope: f64,
    /// Set when the curve is flat on the interval to round-off; the slope is
    /// then reported as 0.
    pub flat: bool,
}

/// Dense scan of |derivative| at ten points per grid cell followed by a
/// golden-section refinement to 1e-4 of the local grid step.
pub fn max_slope_point(curve: &MarginalCurve, interval: (f64, f64)) -> Result<SlopeMax, ResponseError> {
    let (a, b) = interval;
    curve.check_in_domain("interval start", a)?;
    curve.check_in_domain("interval end", b)?;
    let inside = curve.inputs.iter().filter(|&&t| t > a && t < b).count();
    let n = 10 * (inside + 1) + 1;
    let h = (b - a) / (n - 1) as f64;
    let mut best = (a, -1.0);
    for k in 0..n {
        let t = a + h * k as f64;
        let s = curve.derivative(t).abs();
        if s > best.1 {
            best = (t, s);
        }
    }
    let (rlo, rhi) = curve.range();
    if best.1 <= 1e-12 * rlo.abs().max(rhi.abs()).max(f64::MIN_POSITIVE) / (b - a) {
        return Ok(SlopeMax { location: 0.5 * (a + b), slope: 0.0, flat: true });
    }
    let lo = (best.0 - h).max(a);
    let hi = (best.0 + h).min(b);
    let step = local_step(&curve.inputs, best.0);
    let (t, _) = interp::golden_max(lo, hi, 1e-4 * step, |t| curve.derivative(t).abs());
    let (t, s) = if curve.derivative(t).abs() >= best.1 { (t, curve.derivative(t)) } else { (best.0, curve.derivative(best.0)) };
    Ok(SlopeMax { location: t, slope: s, flat: false })
}

fn local_step(grid: &[f64], t: f64) -> f64 {
    let i = grid.partition_point(|&g| g <= t).clamp(1, grid.len() - 1);
    grid[i] - grid[i - 1]
}

/// Splitting-to-field constant kappa (V/m per Hz of splitting).
///
/// With Doppler averaging the observed probe-scan splitting is the RF Rabi
/// frequency scaled by lambda_c/lambda_p, so kappa = 2 pi hbar lambda_p /
/// (lambda_c mu_RF). Without it the splitting equals Omega_RF/2pi and the
/// wavelength ratio drops out.
pub fn kappa(sys: &AtomicSystem) -> f64 {
    2.0 * std::f64::consts::PI * HBAR / sys.mu_rf * kappa_rabi(sys)
}

/// Dimensionless kappa in Rabi units: Omega_RF/2pi = kappa_rabi * splitting.
pub fn kappa_rabi(sys: &AtomicSystem) -> f64 {
    if sys.doppler_enabled {
        sys.lambda_p / sys.lambda_c
    } else {
        1.0
    }
}
