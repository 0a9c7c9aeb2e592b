//! Cramer-Rao lower bounds for the four estimators, Fisher information for
//! parametric peaks, the scheme comparison ratios and normalisation.
//!
//! Bounds on field strength are variances of x = Omega_RF/2pi in MHz^2;
//! per-peak shift bounds are in MHz^2 of detuning.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::response::{
    frequency_marginal, intensity_marginal, max_slope_point, split_lineshapes, MarginalCurve, PeakFamily, PeakLineshape,
    ResponseError,
};
use crate::ResponseSurface;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrlbError {
    #[error("every {side} sample sits where the lineshape slope vanishes")]
    AllFlatSamples { side: &'static str },
    #[error("Fisher matrix is singular (condition number {condition:e})")]
    SingularFisher { condition: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Response(#[from] ResponseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Idd,
    Isd,
    Ue,
    Me,
}

impl Scheme {
    pub fn tag(self) -> &'static str {
        match self {
            Scheme::Idd => "IDD",
            Scheme::Isd => "ISD",
            Scheme::Ue => "UE",
            Scheme::Me => "ME",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrlbReport {
    pub scheme: Scheme,
    /// Variance bound on x (MHz^2). Infinite when the operating slope is zero.
    pub bound: f64,
    pub normalized: Option<f64>,
    /// (left, right) shift bounds for splitting schemes.
    pub per_peak: Option<(f64, f64)>,
    pub diagnostic: Option<String>,
}

impl CrlbReport {
    fn new(scheme: Scheme, bound: f64) -> Self {
        Self { scheme, bound, normalized: None, per_peak: None, diagnostic: None }
    }

    pub fn normalized_by(mut self, reference: &NormalizationReference) -> Self {
        self.normalized = Some(reference.normalize(self.bound));
        self
    }
}

/// Slopes at or below this magnitude count as zero.
pub const ZERO_SLOPE: f64 = 1e-12;

fn check_noise(n: usize, sigma0: f64) -> Result<(), CrlbError> {
    if n < 1 {
        return Err(CrlbError::InvalidInput("sample count must be >= 1".into()));
    }
    if !(sigma0 > 0.0 && sigma0.is_finite()) {
        return Err(CrlbError::InvalidInput(format!("sigma0 must be positive, got {sigma0}")));
    }
    Ok(())
}

fn intensity_bound(
    scheme: Scheme,
    factor: f64,
    curve: &MarginalCurve,
    x: f64,
    n: usize,
    sigma0: f64,
) -> Result<CrlbReport, CrlbError> {
    check_noise(n, sigma0)?;
    let (lo, hi) = curve.domain();
    if !(x >= lo && x <= hi) {
        return Err(ResponseError::OutOfRange { what: "operating point", value: x, lo, hi }.into());
    }
    let s = curve.derivative(x);
    if s.abs() <= ZERO_SLOPE {
        let mut r = CrlbReport::new(scheme, f64::INFINITY);
        r.diagnostic = Some(format!("zero slope at x = {x}"));
        return Ok(r);
    }
    Ok(CrlbReport::new(scheme, factor * sigma0 * sigma0 / (n as f64 * s * s)))
}

/// sigma0^2 / (N F_I'[x]^2).
pub fn crlb_idd(curve: &MarginalCurve, x: f64, n: usize, sigma0: f64) -> Result<CrlbReport, CrlbError> {
    intensity_bound(Scheme::Idd, 1.0, curve, x, n, sigma0)
}

/// 2 sigma0^2 / (N F_I'[x_LO]^2).
pub fn crlb_isd(curve: &MarginalCurve, x_lo: f64, n: usize, sigma0: f64) -> Result<CrlbReport, CrlbError> {
    intensity_bound(Scheme::Isd, 2.0, curve, x_lo, n, sigma0)
}

/// One side's scan: a lineshape placed at `shift`, sampled at `frequencies`.
#[derive(Debug, Clone, Copy)]
pub struct PeakPlan<'a> {
    pub lineshape: &'a PeakLineshape,
    pub shift: f64,
    pub frequencies: &'a [f64],
}

/// Shift Fisher information N_SF,2 / sigma0^2 * sum F'(f_i - shift)^2.
pub fn shift_fisher(plan: &PeakPlan<'_>, n_sf2: usize, sigma0: f64) -> f64 {
    let s: f64 = plan.frequencies.iter().map(|f| plan.lineshape.derivative(f - plan.shift).powi(2)).sum();
    n_sf2 as f64 / (sigma0 * sigma0) * s
}

/// kappa^2 (CRLB_R + CRLB_L) with known lineshapes; scan points are each
/// averaged over `n_sf2` samples.
pub fn crlb_univariate(
    left: &PeakPlan<'_>,
    right: &PeakPlan<'_>,
    n_sf2: usize,
    sigma0: f64,
    kappa_rabi: f64,
) -> Result<CrlbReport, CrlbError> {
    check_noise(n_sf2, sigma0)?;
    let mut per = [0.0; 2];
    for (k, plan) in [left, right].into_iter().enumerate() {
        let side = plan.lineshape.side.name();
        if plan.frequencies.is_empty() {
            return Err(CrlbError::InvalidInput(format!("{side} plan has no frequencies")));
        }
        if plan.frequencies.iter().all(|f| plan.lineshape.derivative(f - plan.shift).abs() <= ZERO_SLOPE) {
            return Err(CrlbError::AllFlatSamples { side });
        }
        per[k] = 1.0 / shift_fisher(plan, n_sf2, sigma0);
    }
    let mut r = CrlbReport::new(Scheme::Ue, kappa_rabi * kappa_rabi * (per[0] + per[1]));
    r.per_peak = Some((per[0], per[1]));
    Ok(r)
}

/// Fisher information of one peak in the parameters [f_R, v_1, .., v_M].
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    pub labels: Vec<String>,
    pub matrix: DMatrix<f64>,
    /// lambda_max / lambda_min; infinite for a singular matrix.
    pub condition: f64,
    pub min_eigenvalue: f64,
}

/// Shift bound extracted from a Fisher matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftBound {
    pub value: f64,
    /// The nuisance block was singular and a pseudo-inverse Schur complement
    /// was used.
    pub pseudo_inverse: bool,
}

/// Largest condition number inverted directly.
pub const MAX_CONDITION: f64 = 1e12;

impl FisherMatrix {
    pub fn from_matrix(labels: Vec<String>, matrix: DMatrix<f64>) -> Result<Self, CrlbError> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n || labels.len() != n {
            return Err(CrlbError::InvalidInput("Fisher matrix must be square and labelled".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(CrlbError::InvalidInput("non-finite Fisher entry".into()));
        }
        let scale = matrix.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(CrlbError::InvalidInput("Fisher matrix is not symmetric".into()));
                }
            }
        }
        let eig = SymmetricEigen::new(matrix.clone()).eigenvalues;
        let lmin = eig.min();
        let lmax = eig.max();
        let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
        Ok(Self { labels, matrix, condition, min_eigenvalue: lmin })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// [J^-1]_{1,1}. Well-conditioned matrices go through a Cholesky solve.
    /// Otherwise, when the shift column lies in the range of the nuisance
    /// block, the Schur complement J_11 - J_1n pinv(J_nn) J_n1 is used.
    pub fn shift_bound(&self) -> Result<ShiftBound, CrlbError> {
        let j = &self.matrix;
        let n = self.dim();
        if self.condition <= MAX_CONDITION {
            if let Some(ch) = j.clone().cholesky() {
                let mut e = DVector::zeros(n);
                e[0] = 1.0;
                return Ok(ShiftBound { value: ch.solve(&e)[0], pseudo_inverse: false });
            }
        }
        let singular = CrlbError::SingularFisher { condition: self.condition };
        if n == 1 || !(j[(0, 0)] > 0.0) {
            return Err(singular);
        }
        let jnn = j.view((1, 1), (n - 1, n - 1)).into_owned();
        let jn1 = j.view((1, 0), (n - 1, 1)).into_owned();
        let tol = 1e-12 * jnn.amax().max(f64::MIN_POSITIVE);
        let pinv = jnn.clone().pseudo_inverse(tol).map_err(|_| singular.clone())?;
        let proj = &pinv * &jn1;
        let miss = (&jn1 - &jnn * &proj).norm();
        if miss > 1e-9 * jn1.norm().max(f64::MIN_POSITIVE) {
            return Err(singular);
        }
        let schur = j[(0, 0)] - (jn1.transpose() * proj)[(0, 0)];
        if !(schur > 1e-12 * j[(0, 0)]) {
            return Err(singular);
        }
        Ok(ShiftBound { value: 1.0 / schur, pseudo_inverse: true })
    }
}

/// Fisher information of a parametric peak at [shift, v] under the plan
/// `frequencies`, each point averaged over `n_sf2` samples.
pub fn fisher_multivariate(
    family: &dyn PeakFamily,
    shift: f64,
    v: &[f64],
    frequencies: &[f64],
    n_sf2: usize,
    sigma0: f64,
) -> Result<FisherMatrix, CrlbError> {
    check_noise(n_sf2, sigma0)?;
    let m = family.n_params();
    if v.len() != m {
        return Err(CrlbError::InvalidInput(format!("expected {m} parameters, got {}", v.len())));
    }
    if frequencies.is_empty() {
        return Err(CrlbError::InvalidInput("plan has no frequencies".into()));
    }
    let mut j = DMatrix::<f64>::zeros(m + 1, m + 1);
    let mut grad = vec![0.0; m + 1];
    for &f in frequencies {
        let u = f - shift;
        grad[0] = -family.d_df(u, v);
        family.grad_params(u, v, &mut grad[1..]);
        for a in 0..=m {
            for b in 0..=a {
                j[(a, b)] += grad[a] * grad[b];
            }
        }
    }
    let w = n_sf2 as f64 / (sigma0 * sigma0);
    for a in 0..=m {
        for b in 0..a {
            j[(b, a)] = j[(a, b)];
        }
    }
    j *= w;
    let mut labels = vec!["f_R".to_string()];
    labels.extend(family.param_names());
    FisherMatrix::from_matrix(labels, j)
}

/// kappa^2 ([J_L^-1]_{1,1} + [J_R^-1]_{1,1}).
pub fn crlb_multivariate(left: &FisherMatrix, right: &FisherMatrix, kappa_rabi: f64) -> Result<CrlbReport, CrlbError> {
    let l = left.shift_bound()?;
    let r = right.shift_bound()?;
    let mut rep = CrlbReport::new(Scheme::Me, kappa_rabi * kappa_rabi * (l.value + r.value));
    rep.per_peak = Some((l.value, r.value));
    if l.pseudo_inverse || r.pseudo_inverse {
        rep.diagnostic = Some("nuisance block singular; pseudo-inverse Schur complement used".into());
    }
    Ok(rep)
}

/// [J_k^-1]_{1,1} for the leading (k+1) x (k+1) block of `j`, i.e. the shift
/// bound when only the first k nuisance parameters are unknown. Infinite for
/// a singular block.
pub fn nested_shift_bound(j: &DMatrix<f64>, k: usize) -> f64 {
    let b = j.view((0, 0), (k + 1, k + 1)).into_owned();
    let mut e = DVector::zeros(k + 1);
    e[0] = 1.0;
    match b.lu().solve(&e) {
        Some(x) if x[0].is_finite() => x[0],
        _ => f64::INFINITY,
    }
}

/// A slope ratio and the operating points behind it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratio {
    pub value: f64,
    /// |F_I'| used in the numerator and where it was taken.
    pub intensity_slope: f64,
    pub intensity_at: f64,
    /// max_f |F_S'| used in the denominator and where it was found.
    pub splitting_slope: f64,
    pub splitting_at: f64,
}

fn splitting_slope(surface: &ResponseSurface, x: f64) -> Result<(f64, f64), CrlbError> {
    let curve = frequency_marginal(surface, x)?;
    let m = max_slope_point(&curve, curve.domain())?;
    Ok((m.slope.abs(), m.location))
}

/// r0 = sqrt(2) kappa max_x |F_I'(x)| / max_f |F_S'(f; x_ref)|: the
/// best-case superheterodyne against best-case splitting comparison, with
/// F_I taken at resonance and F_S at field `x_ref`.
pub fn ratio_r0(surface: &ResponseSurface, kappa_rabi: f64, x_ref: f64) -> Result<Ratio, CrlbError> {
    let fi = intensity_marginal(surface, 0.0)?;
    let mi = max_slope_point(&fi, fi.domain())?;
    let (s, at) = splitting_slope(surface, x_ref)?;
    let value = if s == 0.0 { f64::INFINITY } else { std::f64::consts::SQRT_2 * kappa_rabi * mi.slope.abs() / s };
    Ok(Ratio { value, intensity_slope: mi.slope.abs(), intensity_at: mi.location, splitting_slope: s, splitting_at: at })
}

/// r[x] = 2 kappa |F_I'(x)| / max_f |F_S'(f; x)|: direct detection against
/// best-case splitting at the same field.
pub fn ratio_r(surface: &ResponseSurface, x: f64, kappa_rabi: f64) -> Result<Ratio, CrlbError> {
    let fi = intensity_marginal(surface, 0.0)?;
    let (lo, hi) = fi.domain();
    if !(x >= lo && x <= hi) {
        return Err(ResponseError::OutOfRange { what: "x", value: x, lo, hi }.into());
    }
    let si = fi.derivative(x).abs();
    let (s, at) = splitting_slope(surface, x)?;
    let value = if s == 0.0 { f64::INFINITY } else { 2.0 * kappa_rabi * si / s };
    Ok(Ratio { value, intensity_slope: si, intensity_at: x, splitting_slope: s, splitting_at: at })
}

/// sqrt(CRLB_UE / CRLB_IDD) at field `x` with every splitting sample on the
/// steepest point of its side's lineshape. Agrees with [`ratio_r`] whenever
/// both sides share the same maximum slope.
pub fn ratio_r_from_bounds(
    surface: &ResponseSurface,
    x: f64,
    kappa_rabi: f64,
    n: usize,
    sigma0: f64,
) -> Result<f64, CrlbError> {
    if n < 2 || n % 2 != 0 {
        return Err(CrlbError::InvalidInput(format!("n = {n} must be even and >= 2")));
    }
    let fi = intensity_marginal(surface, 0.0)?;
    let idd = crlb_idd(&fi, x, n, sigma0)?.bound;
    let (l, r) = split_lineshapes(&frequency_marginal(surface, x)?, 0.0)?;
    let steepest = |ls: &PeakLineshape| {
        let a = ls.flank_max_slope(false, f64::INFINITY);
        let b = ls.flank_max_slope(true, f64::INFINITY);
        if a.1.abs() >= b.1.abs() {
            a.0
        } else {
            b.0
        }
    };
    let fl = vec![steepest(&l); n / 2];
    let fr = vec![steepest(&r); n / 2];
    let ue = crlb_univariate(
        &PeakPlan { lineshape: &l, shift: 0.0, frequencies: &fl },
        &PeakPlan { lineshape: &r, shift: 0.0, frequencies: &fr },
        1,
        sigma0,
        kappa_rabi,
    )?
    .bound;
    Ok((ue / idd).sqrt())
}

/// The common scale sigma0^2 / (N max_x F_I'(x)^2) that sweeps are divided by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationReference {
    pub sigma0: f64,
    pub n: usize,
    pub max_slope: f64,
    pub x_lo: f64,
}

impl NormalizationReference {
    pub fn new(intensity: &MarginalCurve, sigma0: f64, n: usize) -> Result<Self, CrlbError> {
        check_noise(n, sigma0)?;
        let m = max_slope_point(intensity, intensity.domain())?;
        if m.flat {
            return Err(CrlbError::InvalidInput("intensity curve is flat".into()));
        }
        Ok(Self { sigma0, n, max_slope: m.slope.abs(), x_lo: m.location })
    }

    pub fn variance(&self) -> f64 {
        self.sigma0 * self.sigma0 / (self.n as f64 * self.max_slope * self.max_slope)
    }

    pub fn normalize(&self, value: f64) -> f64 {
        value / self.variance()
    }
}

/// Dimensionless bound (or MSE) in units of the reference variance.
pub fn normalize_report(report: &CrlbReport, reference: &NormalizationReference) -> f64 {
    reference.normalize(report.bound)
}

/// One row of a bound sweep over x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub x: f64,
    pub crlb_idd: f64,
    pub crlb_isd: f64,
    pub crlb_ue: f64,
    pub crlb_me: f64,
    pub r0: f64,
    pub r_x: f64,
}

pub const SWEEP_HEADER: &str = "x,crlb_idd,crlb_isd,crlb_ue,crlb_me,r0,r_x";

/// Writes sweep rows as CSV; the first line records whether the bounds are
/// normalised.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], normalized: bool, mut out: W) -> std::io::Result<()> {
    writeln!(out, "# normalized={normalized}")?;
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{},{},{}", r.x, r.crlb_idd, r.crlb_isd, r.crlb_ue, r.crlb_me, r.r0, r.r_x)?;
    }
    Ok(())
}
