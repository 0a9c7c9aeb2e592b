//! Iterative single-peak shift estimation.

use nalgebra::{DMatrix, DVector};

use super::{EstimateReport, EstimatorError, InitialShift, Method, Quantity, ShiftSolverConfig};
use crate::interp::pairwise_sum;
use crate::noise_sim::ScanData;
use crate::response::{PeakFamily, PeakLineshape};

/// Sum of squared residuals z_i - F(f_i - shift).
fn objective(freqs: &[f64], z: &[f64], shift: f64, model: &impl Fn(f64) -> (f64, f64)) -> f64 {
    let sq: Vec<f64> = freqs
        .iter()
        .zip(z)
        .map(|(&f, &y)| {
            let r = y - model(f - shift).0;
            r * r
        })
        .collect();
    pairwise_sum(&sq)
}

pub(super) struct ShiftRun {
    pub shift: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
    pub converged: bool,
    pub objective: f64,
    pub note: Option<String>,
}

const MAX_HALVINGS: usize = 8;

/// Gauss-Newton iteration delta f = -sum r_i F'_i / sum F'_i^2 with step
/// halving whenever a step would raise the objective.
pub(super) fn gauss_newton(
    freqs: &[f64],
    z: &[f64],
    model: impl Fn(f64) -> (f64, f64),
    start: f64,
    epsilon: f64,
    max_iterations: usize,
) -> Result<ShiftRun, EstimatorError> {
    let mut f = start;
    let mut j = objective(freqs, z, f, &model);
    let mut run = ShiftRun { shift: f, iterations: 0, trace: vec![f], converged: false, objective: j, note: None };
    for it in 1..=max_iterations {
        let mut num = Vec::with_capacity(freqs.len());
        let mut den = Vec::with_capacity(freqs.len());
        for (&fi, &zi) in freqs.iter().zip(z) {
            let (v, d) = model(fi - f);
            num.push((zi - v) * d);
            den.push(d * d);
        }
        let den = pairwise_sum(&den);
        if !(den >= 1e-18) {
            return Err(EstimatorError::DegenerateDenominator(den));
        }
        let mut step = -pairwise_sum(&num) / den;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let jc = objective(freqs, z, f + step, &model);
            if jc <= j {
                accepted = Some(jc);
                break;
            }
            step *= 0.5;
        }
        run.iterations = it;
        match accepted {
            Some(jc) => {
                f += step;
                j = jc;
                run.trace.push(f);
                if step.abs() < epsilon {
                    run.converged = true;
                    break;
                }
            }
            None => {
                // no descent even after halving: the iterate is stationary
                run.converged = true;
                run.note = Some(format!("no descent step after {MAX_HALVINGS} halvings"));
                break;
            }
        }
    }
    run.shift = f;
    run.objective = j;
    if !run.converged {
        run.note = Some(format!("max iterations ({max_iterations}) exceeded; best iterate returned"));
    }
    Ok(run)
}

fn check_scan(scan: &ScanData) -> Result<(), EstimatorError> {
    if scan.frequencies.len() < 2 {
        return Err(EstimatorError::InvalidInput("a shift fit needs at least two samples".into()));
    }
    if scan.frequencies.iter().any(|f| !f.is_finite()) || scan.voltages.iter().any(|z| !z.is_finite()) {
        return Err(EstimatorError::InvalidInput("non-finite scan sample".into()));
    }
    let f0 = scan.frequencies[0];
    if scan.frequencies.iter().all(|&f| f == f0) {
        return Err(EstimatorError::DegenerateScan);
    }
    Ok(())
}

/// Indices of the scan ordered by frequency and the 3-point moving average
/// of z in that order.
fn smoothed(scan: &ScanData) -> (Vec<usize>, Vec<f64>) {
    let mut idx: Vec<usize> = (0..scan.len()).collect();
    idx.sort_by(|&a, &b| scan.frequencies[a].total_cmp(&scan.frequencies[b]));
    let z: Vec<f64> = idx.iter().map(|&i| scan.voltages[i]).collect();
    let n = z.len();
    let s = (0..n)
        .map(|k| {
            let lo = k.saturating_sub(1);
            let hi = (k + 1).min(n - 1);
            z[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    (idx, s)
}

fn argmax_frequency(scan: &ScanData) -> f64 {
    let (idx, s) = smoothed(scan);
    let k = (0..s.len()).fold(0, |b, k| if s[k] > s[b] { k } else { b });
    scan.frequencies[idx[k]]
}

fn start_shift(scan: &ScanData, cfg: &ShiftSolverConfig) -> f64 {
    match cfg.initial_shift {
        InitialShift::ArgMax => argmax_frequency(scan),
        InitialShift::Given(f) => f,
    }
}

/// Univariate estimate of a peak position with the lineshape fully known.
pub fn estimate_shift_univariate(
    scan: &ScanData,
    lineshape: &PeakLineshape,
    cfg: &ShiftSolverConfig,
) -> Result<EstimateReport, EstimatorError> {
    cfg.validate()?;
    check_scan(scan)?;
    if scan.side != lineshape.side {
        return Err(EstimatorError::SideMismatch { scan: scan.side.name(), lineshape: lineshape.side.name() });
    }
    let run = gauss_newton(
        &scan.frequencies,
        &scan.voltages,
        |u| lineshape.eval_with_derivative(u),
        start_shift(scan, cfg),
        cfg.epsilon,
        cfg.max_iterations,
    )?;
    Ok(EstimateReport {
        method: Method::Ue,
        quantity: Quantity::Shift,
        value: run.shift,
        iterations: run.iterations,
        iteration_trace: run.trace.into_iter().map(|f| vec![f]).collect(),
        converged: run.converged,
        residual: run.objective,
        params: Vec::new(),
        shifts: None,
        diagnostic: run.note,
    })
}

/// Data-driven starting values for the Gaussian-like family:
/// v1 = max z - min z, v3 = min z and v2 = 4 ln 2 / FWHM^2 with the
/// full width at half maximum read from the smoothed scan.
pub fn initial_params(scan: &ScanData) -> [f64; 3] {
    let (idx, s) = smoothed(scan);
    let zmax = scan.voltages.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let zmin = scan.voltages.iter().cloned().fold(f64::INFINITY, f64::min);
    let half = 0.5 * (s.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + zmin);
    let above: Vec<f64> = (0..s.len()).filter(|&k| s[k] >= half).map(|k| scan.frequencies[idx[k]]).collect();
    let span = scan.frequencies[idx[idx.len() - 1]] - scan.frequencies[idx[0]];
    let mut fwhm = above.last().unwrap_or(&0.0) - above.first().unwrap_or(&0.0);
    if !(fwhm > 0.0) {
        fwhm = 0.5 * span;
    }
    let amp = if zmax > zmin { zmax - zmin } else { 1.0 };
    [amp, 4.0 * std::f64::consts::LN_2 / (fwhm * fwhm), zmin]
}

/// Least squares over the family parameters at a fixed shift.
struct ParamObjective<'a> {
    freqs: &'a [f64],
    z: &'a [f64],
    family: &'a dyn PeakFamily,
    shift: f64,
}

impl ParamObjective<'_> {
    fn eval(&self, v: &[f64]) -> (f64, DVector<f64>) {
        let m = v.len();
        let mut grad = DVector::zeros(m);
        let mut g = vec![0.0; m];
        let mut sq = Vec::with_capacity(self.freqs.len());
        for (&f, &y) in self.freqs.iter().zip(self.z) {
            let u = f - self.shift;
            let r = y - self.family.value(u, v);
            self.family.grad_params(u, v, &mut g);
            for k in 0..m {
                grad[k] -= 2.0 * r * g[k];
            }
            sq.push(r * r);
        }
        (pairwise_sum(&sq), grad)
    }
}

/// BFGS with Armijo backtracking restricted to the feasible set.
fn bfgs(obj: &ParamObjective<'_>, v0: &[f64], max_iter: usize) -> Result<(Vec<f64>, f64), EstimatorError> {
    let n = v0.len();
    let mut x = DVector::from_column_slice(v0);
    let (mut fx, mut g) = obj.eval(x.as_slice());
    if !fx.is_finite() {
        return Err(EstimatorError::IllConditionedFit("objective is not finite at the starting point".into()));
    }
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;
    for _ in 0..max_iter {
        if g.amax() == 0.0 {
            break;
        }
        let mut p = -(&h * &g);
        let mut slope = g.dot(&p);
        if !(slope < 0.0) {
            h = DMatrix::identity(n, n);
            p = -g.clone();
            slope = g.dot(&p);
        }
        let mut alpha = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let cand = &x + alpha * &p;
            if obj.family.feasible(cand.as_slice()) {
                let (fc, gc) = obj.eval(cand.as_slice());
                if fc.is_finite() && fc <= fx + 1e-4 * alpha * slope {
                    next = Some((cand, fc, gc));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((xn, fn_, gn)) = next else { break };
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 0.0 {
            if !scaled {
                h *= sy / y.dot(&y);
                scaled = true;
            }
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let a = &eye - rho * &s * y.transpose();
            h = &a * &h * a.transpose() + rho * &s * s.transpose();
            if h.iter().any(|e| !e.is_finite()) {
                return Err(EstimatorError::IllConditionedFit("quasi-Newton inverse Hessian became singular".into()));
            }
        }
        let small = s.amax() <= 1e-14 * (1.0 + xn.amax());
        x = xn;
        fx = fn_;
        g = gn;
        if small {
            break;
        }
    }
    Ok((x.as_slice().to_vec(), fx))
}

/// Multivariate estimate: the peak position and the family parameters are
/// both unknown. Alternates a Gauss-Newton shift solve at fixed parameters
/// with a BFGS parameter fit at fixed shift.
pub fn estimate_shift_multivariate(
    scan: &ScanData,
    family: &dyn PeakFamily,
    cfg: &ShiftSolverConfig,
) -> Result<EstimateReport, EstimatorError> {
    cfg.validate()?;
    check_scan(scan)?;
    let mut v = match &cfg.initial_params {
        Some(p) => p.clone(),
        None if family.n_params() == 3 => initial_params(scan).to_vec(),
        None => {
            return Err(EstimatorError::InvalidConfig("initial parameters are required for this family".into()));
        }
    };
    if v.len() != family.n_params() || !family.feasible(&v) {
        return Err(EstimatorError::InvalidConfig(format!("infeasible initial parameters {v:?}")));
    }
    let (freqs, z) = (&scan.frequencies[..], &scan.voltages[..]);
    let mut shift = start_shift(scan, cfg);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut residual = f64::NAN;
    let mut note = None;
    for _ in 0..cfg.max_rounds {
        let fam_v = v.clone();
        let run = gauss_newton(
            freqs,
            z,
            |u| (family.value(u, &fam_v), family.d_df(u, &fam_v)),
            shift,
            cfg.epsilon,
            cfg.max_iterations,
        )?;
        iterations += run.iterations;
        let df = (run.shift - shift).abs();
        shift = run.shift;
        let obj = ParamObjective { freqs, z, family, shift };
        let (vn, j) = bfgs(&obj, &v, 200)?;
        let scale = vn.iter().fold(0.0f64, |m, p| m.max(p.abs())).max(f64::MIN_POSITIVE);
        let dv = vn.iter().zip(&v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
        v = vn;
        residual = j;
        let mut row = vec![shift];
        row.extend_from_slice(&v);
        trace.push(row);
        note = run.note;
        if df < cfg.epsilon && dv < cfg.joint_tolerance && run.converged {
            converged = true;
            break;
        }
    }
    if !converged {
        note = Some(format!("alternation did not settle within {} rounds", cfg.max_rounds));
    }
    Ok(EstimateReport {
        method: Method::Me,
        quantity: Quantity::Shift,
        value: shift,
        iterations,
        iteration_trace: trace,
        converged,
        residual,
        params: v,
        shifts: None,
        diagnostic: note,
    })
}
