//! Polynomial least-squares peak location.

use nalgebra::{DMatrix, DVector};

use super::{EstimateReport, EstimatorError, Method, Quantity};
use crate::noise_sim::ScanData;

/// Least-squares polynomial coefficients (ascending powers) of y against t.
pub fn polyfit_coefficients(t: &[f64], y: &[f64], order: usize) -> Result<Vec<f64>, EstimatorError> {
    if t.len() != y.len() || t.len() < order + 1 {
        return Err(EstimatorError::InvalidInput(format!("order {order} fit needs at least {} samples", order + 1)));
    }
    let a = DMatrix::from_fn(t.len(), order + 1, |i, k| t[i].powi(k as i32));
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let c = svd.solve(&b, 1e-13).map_err(|e| EstimatorError::IllConditionedFit(e.to_string()))?;
    Ok(c.as_slice().to_vec())
}

fn poly(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * t + a)
}

/// Real roots of the polynomial with ascending coefficients `d`.
fn real_roots(d: &[f64]) -> Vec<f64> {
    let mut d = d.to_vec();
    let big = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    while d.len() > 1 && d[d.len() - 1].abs() <= 1e-14 * big {
        d.pop();
    }
    let m = d.len() - 1;
    match m {
        0 => Vec::new(),
        1 => vec![-d[0] / d[1]],
        _ => {
            let lead = d[m];
            let comp = DMatrix::from_fn(m, m, |i, j| {
                if j == m - 1 {
                    -d[i] / lead
                } else if i == j + 1 {
                    1.0
                } else {
                    0.0
                }
            });
            comp.complex_eigenvalues()
                .iter()
                .filter(|z| z.im.abs() <= 1e-7 * (1.0 + z.re.abs()))
                .map(|z| z.re)
                .collect()
        }
    }
}

/// Baseline peak locator: fits a polynomial of `order` to the scan and
/// returns the real root of its derivative nearest the sample maximum inside
/// the scanned span.
pub fn polyfit_peak(scan: &ScanData, order: usize) -> Result<EstimateReport, EstimatorError> {
    let n = scan.len();
    if order < 2 || n <= order + 1 {
        return Err(EstimatorError::InvalidInput(format!("order {order} fit needs more than {} samples", order + 1)));
    }
    let lo = scan.frequencies.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scan.frequencies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut distinct = scan.frequencies.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < order + 1 {
        return Err(if distinct.len() == 1 {
            EstimatorError::DegenerateScan
        } else {
            EstimatorError::InvalidInput(format!("only {} distinct frequencies for order {order}", distinct.len()))
        });
    }
    let c0 = 0.5 * (lo + hi);
    let s = 0.5 * (hi - lo);
    let t: Vec<f64> = scan.frequencies.iter().map(|f| (f - c0) / s).collect();
    let coef = polyfit_coefficients(&t, &scan.voltages, order)?;
    let deriv: Vec<f64> = (1..coef.len()).map(|k| k as f64 * coef[k]).collect();
    let imax = (0..n).fold(0, |b, i| if scan.voltages[i] > scan.voltages[b] { i } else { b });
    let t_max = t[imax];
    let root = real_roots(&deriv)
        .into_iter()
        .filter(|r| r.abs() <= 1.0 + 1e-12)
        .min_by(|a, b| (a - t_max).abs().total_cmp(&(b - t_max).abs()))
        .ok_or(EstimatorError::NoInteriorExtremum)?;
    let residual: f64 = t.iter().zip(&scan.voltages).map(|(&ti, &y)| (y - poly(&coef, ti)).powi(2)).sum();
    Ok(EstimateReport {
        method: Method::PolyFit,
        quantity: Quantity::Shift,
        value: c0 + s * root,
        iterations: 0,
        iteration_trace: Vec::new(),
        converged: true,
        residual,
        params: coef,
        shifts: None,
        diagnostic: None,
    })
}
