//! Per-peak lineshapes F_SL, F_SR and parametric peak families.

use std::fmt::Write as _;

use super::{MarginalCurve, ResponseError};
use crate::interp;

/// Which Autler-Townes peak: below or above the probe resonance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" | "l" => Some(Side::Left),
            "right" | "r" => Some(Side::Right),
            _ => None,
        }
    }
}

/// A differentiable peak model F(f; v) with the peak near f = 0.
pub trait PeakFamily: Send + Sync {
    fn n_params(&self) -> usize;
    fn value(&self, f: f64, v: &[f64]) -> f64;
    /// dF/df at fixed parameters.
    fn d_df(&self, f: f64, v: &[f64]) -> f64;
    /// dF/dv_m for every parameter.
    fn grad_params(&self, f: f64, v: &[f64], out: &mut [f64]);
    /// Whether `v` is an admissible parameter vector.
    fn feasible(&self, _v: &[f64]) -> bool {
        true
    }
    fn param_names(&self) -> Vec<String> {
        (1..=self.n_params()).map(|m| format!("v{m}")).collect()
    }
}

/// F(f; v) = v1 exp(-v2 f^2) + v3, with v2 > 0 an inverse squared width.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GaussianLike;

impl PeakFamily for GaussianLike {
    fn n_params(&self) -> usize {
        3
    }

    fn value(&self, f: f64, v: &[f64]) -> f64 {
        v[0] * (-v[1] * f * f).exp() + v[2]
    }

    fn d_df(&self, f: f64, v: &[f64]) -> f64 {
        -2.0 * v[0] * v[1] * f * (-v[1] * f * f).exp()
    }

    fn grad_params(&self, f: f64, v: &[f64], out: &mut [f64]) {
        let e = (-v[1] * f * f).exp();
        out[0] = e;
        out[1] = -v[0] * f * f * e;
        out[2] = 1.0;
    }

    fn feasible(&self, v: &[f64]) -> bool {
        v.len() == 3 && v[1] > 0.0 && v.iter().all(|p| p.is_finite())
    }
}

/// A fixed peak profile with unknown gain and offset:
/// F(f; v) = v1 S(f) + v2, with v1 > 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledLineshape {
    pub base: PeakLineshape,
}

impl PeakFamily for ScaledLineshape {
    fn n_params(&self) -> usize {
        2
    }

    fn value(&self, f: f64, v: &[f64]) -> f64 {
        v[0] * self.base.eval(f) + v[1]
    }

    fn d_df(&self, f: f64, v: &[f64]) -> f64 {
        v[0] * self.base.derivative(f)
    }

    fn grad_params(&self, f: f64, _v: &[f64], out: &mut [f64]) {
        out[0] = self.base.eval(f);
        out[1] = 1.0;
    }

    fn feasible(&self, v: &[f64]) -> bool {
        v.len() == 2 && v[0] > 0.0 && v.iter().all(|p| p.is_finite())
    }

    fn param_names(&self) -> Vec<String> {
        vec!["gain".into(), "offset".into()]
    }
}

/// Shape data of a peak lineshape.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Samples of F_S re-centred on the peak maximum. Outside the sampled
    /// window the end values are held and the slope is zero.
    Tabulated { inputs: Vec<f64>, values: Vec<f64> },
    /// The Gaussian-like family with fixed parameters.
    GaussianLike { v: [f64; 3] },
}

/// A single-peak lineshape F_SL or F_SR: the response as a function of the
/// offset from the peak, f = f_p - f_peak.
#[derive(Debug, Clone, PartialEq)]
pub struct PeakLineshape {
    pub side: Side,
    pub shape: Shape,
    /// Offset at which f_p equals the probe resonance. Right lineshapes are
    /// only meaningful for offsets above it, left ones below.
    pub boundary: f64,
}

impl PeakLineshape {
    /// Tabulated lineshape; the profile must have a unique interior maximum.
    pub fn tabulated(side: Side, inputs: Vec<f64>, values: Vec<f64>, boundary: f64) -> Result<Self, ResponseError> {
        if inputs.len() < 3 || inputs.len() != values.len() || !interp::strictly_increasing(&inputs) {
            return Err(ResponseError::InvalidCurve("tabulated lineshape needs increasing samples".into()));
        }
        let top = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let argmax: Vec<usize> = (0..values.len()).filter(|&i| values[i] == top).collect();
        if argmax.len() != 1 || argmax[0] == 0 || argmax[0] == values.len() - 1 {
            return Err(ResponseError::InvalidCurve("lineshape needs a unique interior maximum".into()));
        }
        Ok(Self { side, shape: Shape::Tabulated { inputs, values }, boundary })
    }

    /// Gaussian-like lineshape with parameters v = [amplitude, inverse
    /// squared width, offset]; no resonance boundary is imposed.
    pub fn gaussian(side: Side, v: [f64; 3]) -> Result<Self, ResponseError> {
        if !GaussianLike.feasible(&v) {
            return Err(ResponseError::InvalidCurve(format!("Gaussian-like parameters need v2 > 0, got {v:?}")));
        }
        let boundary = match side {
            Side::Left => f64::INFINITY,
            Side::Right => f64::NEG_INFINITY,
        };
        Ok(Self { side, shape: Shape::GaussianLike { v }, boundary })
    }

    /// Lineshape of one side of a frequency marginal, cut at `f_resonance`
    /// and re-centred on `peak`.
    pub fn from_curve(curve: &MarginalCurve, side: Side, peak: f64, f_resonance: f64) -> Result<Self, ResponseError> {
        let keep = |t: f64| match side {
            Side::Left => t < f_resonance,
            Side::Right => t > f_resonance,
        };
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            curve.inputs.iter().zip(&curve.values).filter(|(t, _)| keep(**t)).map(|(t, v)| (t - peak, *v)).unzip();
        Self::tabulated(side, xs, ys, f_resonance - peak)
    }

    pub fn eval(&self, f: f64) -> f64 {
        self.eval_with_derivative(f).0
    }

    pub fn derivative(&self, f: f64) -> f64 {
        self.eval_with_derivative(f).1
    }

    pub fn eval_with_derivative(&self, f: f64) -> (f64, f64) {
        match &self.shape {
            Shape::Tabulated { inputs, values } => {
                let n = inputs.len();
                if f < inputs[0] {
                    (values[0], 0.0)
                } else if f > inputs[n - 1] {
                    (values[n - 1], 0.0)
                } else {
                    interp::eval(inputs, values, f)
                }
            }
            Shape::GaussianLike { v } => (GaussianLike.value(f, v), GaussianLike.d_df(f, v)),
        }
    }

    /// Offsets where this lineshape is defined.
    pub fn window(&self) -> (f64, f64) {
        let (lo, hi) = match &self.shape {
            Shape::Tabulated { inputs, .. } => (inputs[0], inputs[inputs.len() - 1]),
            Shape::GaussianLike { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        };
        match self.side {
            Side::Left => (lo, hi.min(self.boundary)),
            Side::Right => (lo.max(self.boundary), hi),
        }
    }

    /// Location and signed slope of the steepest point on the flank below
    /// (`upper = false`) or above (`upper = true`) the maximum, searched within
    /// `reach` of the peak.
    pub fn flank_max_slope(&self, upper: bool, reach: f64) -> (f64, f64) {
        if let Shape::GaussianLike { v } = &self.shape {
            // closed form: |F'| peaks at f = +-1/sqrt(2 v2)
            let f = (0.5 / v[1]).sqrt() * if upper { 1.0 } else { -1.0 };
            return (f, GaussianLike.d_df(f, v));
        }
        let (wlo, whi) = self.window();
        let (a, b) = if upper { (0.0, reach.min(whi)) } else { ((-reach).max(wlo), 0.0) };
        let n = 4001;
        let h = (b - a) / (n - 1) as f64;
        let mut best = (a, 0.0f64);
        for k in 0..n {
            let t = a + h * k as f64;
            let s = self.derivative(t);
            if s.abs() > best.1.abs() {
                best = (t, s);
            }
        }
        let (t, _) = interp::golden_max((best.0 - h).max(a), (best.0 + h).min(b), 1e-9, |t| self.derivative(t).abs());
        let s = self.derivative(t);
        if s.abs() >= best.1.abs() {
            (t, s)
        } else {
            best
        }
    }

    /// Key/value description of the lineshape.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "side = {}", self.side.name());
        let _ = writeln!(s, "boundary = {}", self.boundary);
        match &self.shape {
            Shape::Tabulated { inputs, values } => {
                let _ = writeln!(s, "shape = tabulated");
                let _ = writeln!(s, "points = {}", inputs.len());
                let _ = writeln!(s, "window = {} {}", inputs[0], inputs[inputs.len() - 1]);
                let top = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let _ = writeln!(s, "height = {top}");
            }
            Shape::GaussianLike { v } => {
                let _ = writeln!(s, "shape = gaussian-like");
                let _ = writeln!(s, "v1 = {}", v[0]);
                let _ = writeln!(s, "v2 = {}", v[1]);
                let _ = writeln!(s, "v3 = {}", v[2]);
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_derivatives_match_differences() {
        let v = [0.8, 0.05, 0.2];
        let h = 1e-6;
        for &f in &[-7.0, -1.3, 0.0, 0.4, 5.5] {
            let fd = (GaussianLike.value(f + h, &v) - GaussianLike.value(f - h, &v)) / (2.0 * h);
            assert!((fd - GaussianLike.d_df(f, &v)).abs() < 1e-8);
            let mut g = [0.0; 3];
            GaussianLike.grad_params(f, &v, &mut g);
            for m in 0..3 {
                let mut vp = v;
                let mut vm = v;
                vp[m] += h;
                vm[m] -= h;
                let fd = (GaussianLike.value(f, &vp) - GaussianLike.value(f, &vm)) / (2.0 * h);
                assert!((fd - g[m]).abs() < 1e-7, "param {m} at {f}");
            }
        }
    }

    #[test]
    fn gaussian_rejects_nonpositive_width() {
        assert!(PeakLineshape::gaussian(Side::Right, [1.0, 0.0, 0.0]).is_err());
        assert!(PeakLineshape::gaussian(Side::Right, [1.0, -1.0, 0.0]).is_err());
    }

    #[test]
    fn gaussian_flank_closed_form() {
        let l = PeakLineshape::gaussian(Side::Right, [0.25, 0.5, 0.75]).unwrap();
        let (f, s) = l.flank_max_slope(true, 10.0);
        assert!((f - 1.0).abs() < 1e-15);
        assert!((s + 0.25 * (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn tabulated_needs_interior_max_and_holds_ends() {
        let xs = vec![-1.0, 0.0, 1.0, 2.0];
        assert!(PeakLineshape::tabulated(Side::Right, xs.clone(), vec![3.0, 2.0, 1.0, 0.0], -5.0).is_err());
        let l = PeakLineshape::tabulated(Side::Right, xs, vec![0.0, 1.0, 0.5, 0.2], -5.0).unwrap();
        assert_eq!(l.eval_with_derivative(10.0), (0.2, 0.0));
        assert_eq!(l.eval(0.0), 1.0);
        assert_eq!(l.window(), (-1.0, 2.0));
    }
}
