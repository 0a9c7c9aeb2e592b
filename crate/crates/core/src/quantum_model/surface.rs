//! Tabulated, normalised joint response G[x, f_p].
//!
//! Axis conventions: `x` is the RF drive expressed as Omega_RF/2pi in MHz
//! (field strength in V/m follows from the dipole moment), `f` is the probe
//! detuning f_p - f_{p,o} in MHz. Values are probe transmittance divided by
//! its value at (x = 0, f = 0).

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use rayon::prelude::*;

use super::doppler::{probe_coherence, DopplerQuadrature};
use super::system::mhz_to_rad_s;
use super::{transmittance, AtomicSystem, ModelError};
use crate::interp;

/// Evenly spaced grid from `lo` to `hi` with `step`, built from integer
/// multiples so that grids symmetric about zero are exactly symmetric.
pub fn linspace_step(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as i64;
    (0..=n).map(|i| lo + step * i as f64).map(|v| if v.abs() < 1e-12 * step { 0.0 } else { v }).collect()
}

/// Symmetric grid `[-half, half]` with exact mirror symmetry.
pub fn symmetric_grid(half: f64, step: f64) -> Vec<f64> {
    let n = (half / step).round() as i64;
    (-n..=n).map(|i| step * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseSurface {
    pub x_grid: Vec<f64>,
    pub f_grid: Vec<f64>,
    /// Row-major by x: `values[i * f_grid.len() + j] = G[x_i, f_j]`.
    pub values: Vec<f64>,
    /// Un-normalised transmittance at the reference point.
    pub reference_transmittance: f64,
    /// f_{p,o} in Hz, carried for export.
    pub f_p_resonance: f64,
    pub doppler: bool,
}

/// Options for surface construction.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceOptions {
    pub quadrature: DopplerQuadrature,
    /// Reject the grid when the Richardson interpolation error estimate
    /// exceeds this fraction of the value range.
    pub max_interp_error: f64,
}

impl Default for SurfaceOptions {
    fn default() -> Self {
        Self { quadrature: DopplerQuadrature::default(), max_interp_error: 1e-4 }
    }
}

/// Grid from `lo` through consecutive `(end, step)` segments; each segment
/// is built from integer multiples of its step.
pub fn piecewise_grid(lo: f64, segments: &[(f64, f64)]) -> Vec<f64> {
    let mut out = vec![lo];
    let mut a = lo;
    for &(b, step) in segments {
        out.extend(linspace_step(a, b, step).into_iter().skip(1));
        a = b;
    }
    out
}

/// Grids over Omega_RF/2pi in [0, `x_max`] MHz and detuning in
/// [-`f_half`, `f_half`] MHz. Below 0.5 MHz on either axis the step is
/// 0.005 MHz, and 0.001 MHz below 0.05 MHz in x: with slow Rydberg decay a
/// weak RF field splits the narrow dark resonance. Elsewhere the steps are 1/16 MHz in x and 1/32 MHz in f, fine
/// enough for the Autler-Townes features that track f = +-x/2.
pub fn grids(x_max: f64, f_half: f64) -> (Vec<f64>, Vec<f64>) {
    let x = piecewise_grid(0.0, &[(0.05, 0.001), (0.5, 0.005), (x_max, 0.0625)]);
    let half = piecewise_grid(0.0, &[(0.5, 0.005), (f_half, 0.03125)]);
    let mut f: Vec<f64> = half.iter().rev().map(|v| -v).collect();
    f.pop();
    f.extend(half);
    (x, f)
}

/// Default grids: x in [0, 25] MHz, f in [-30, 30] MHz.
pub fn default_grids() -> (Vec<f64>, Vec<f64>) {
    grids(25.0, 30.0)
}

fn raw_transmittance(sys: &AtomicSystem, x: f64, f: f64, quad: DopplerQuadrature) -> Result<f64, ModelError> {
    let point = AtomicSystem { omega_rf: mhz_to_rad_s(x), delta_p: mhz_to_rad_s(f), ..sys.clone() };
    Ok(transmittance(probe_coherence(&point, quad)?.im))
}

/// Builds the normalised surface on `x_grid` x `f_grid`.
pub fn build_surface(
    sys: &AtomicSystem,
    x_grid: &[f64],
    f_grid: &[f64],
    opts: SurfaceOptions,
) -> Result<ResponseSurface, ModelError> {
    sys.validate()?;
    if x_grid.len() < 2 || f_grid.len() < 2 {
        return Err(ModelError::InvalidGrid("grids need at least two nodes".into()));
    }
    if !interp::strictly_increasing(x_grid) || !interp::strictly_increasing(f_grid) {
        return Err(ModelError::InvalidGrid("grids must be strictly increasing".into()));
    }
    if x_grid[0] < 0.0 {
        return Err(ModelError::InvalidGrid("field grid must be non-negative".into()));
    }
    let (f_lo, f_hi) = (f_grid[0], f_grid[f_grid.len() - 1]);
    if !(f_lo < 0.0 && f_hi > 0.0) || ((f_hi + f_lo).abs() > 1e-9 * (f_hi - f_lo)) {
        return Err(ModelError::InvalidGrid("frequency grid must span the resonance symmetrically".into()));
    }
    let reference = raw_transmittance(sys, 0.0, 0.0, opts.quadrature)?;
    let nf = f_grid.len();
    let rows: Result<Vec<Vec<f64>>, ModelError> = x_grid
        .par_iter()
        .map(|&x| {
            f_grid
                .iter()
                .map(|&f| raw_transmittance(sys, x, f, opts.quadrature).map(|t| t / reference))
                .collect()
        })
        .collect();
    let mut values = Vec::with_capacity(x_grid.len() * nf);
    for row in rows? {
        values.extend(row);
    }
    let surface = ResponseSurface {
        x_grid: x_grid.to_vec(),
        f_grid: f_grid.to_vec(),
        values,
        reference_transmittance: reference,
        f_p_resonance: sys.f_p_resonance,
        doppler: sys.doppler_enabled,
    };
    let est = surface.interpolation_error_estimate();
    let range = surface.value_range();
    if est > opts.max_interp_error * (range.1 - range.0) {
        return Err(ModelError::GridTooCoarse { estimate: est, range: range.1 - range.0 });
    }
    Ok(surface)
}

impl ResponseSurface {
    pub fn nx(&self) -> usize {
        self.x_grid.len()
    }

    pub fn nf(&self) -> usize {
        self.f_grid.len()
    }

    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.nf() + j]
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.x_grid[0], self.x_grid[self.nx() - 1])
    }

    pub fn f_range(&self) -> (f64, f64) {
        (self.f_grid[0], self.f_grid[self.nf() - 1])
    }

    pub fn value_range(&self) -> (f64, f64) {
        self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Returns (G, dG/dx, dG/df) from the tensor-product cubic Hermite
    /// interpolant.
    pub fn eval_with_gradient(&self, x: f64, f: f64) -> (f64, f64, f64) {
        let sx = interp::stencil(&self.x_grid, x);
        let sf = interp::stencil(&self.f_grid, f);
        let (mut g, mut gx, mut gf) = (0.0, 0.0, 0.0);
        for a in 0..sx.len {
            let (v, dv) = sf.apply(|j| self.node(sx.start + a, j));
            g += sx.w[a] * v;
            gx += sx.dw[a] * v;
            gf += sx.w[a] * dv;
        }
        (g, gx, gf)
    }

    pub fn eval(&self, x: f64, f: f64) -> f64 {
        self.eval_with_gradient(x, f).0
    }

    pub fn d_dx(&self, x: f64, f: f64) -> f64 {
        self.eval_with_gradient(x, f).1
    }

    pub fn d_df(&self, x: f64, f: f64) -> f64 {
        self.eval_with_gradient(x, f).2
    }

    /// Field-axis slice at fixed detuning, one value per x node.
    pub fn column_at_f(&self, f: f64) -> Vec<f64> {
        let sf = interp::stencil(&self.f_grid, f);
        (0..self.nx()).map(|i| sf.apply(|j| self.node(i, j)).0).collect()
    }

    /// Frequency-axis slice at fixed field, one value per f node.
    pub fn row_at_x(&self, x: f64) -> Vec<f64> {
        let sx = interp::stencil(&self.x_grid, x);
        (0..self.nf()).map(|j| sx.apply(|i| self.node(i, j)).0).collect()
    }

    /// Richardson-style estimate of the interpolation error: interpolate from
    /// every other node onto the skipped nodes, and scale the discrepancy by
    /// 2^-4 for a fourth-order scheme. Max over both axes.
    pub fn interpolation_error_estimate(&self) -> f64 {
        fn axis_error(grid: &[f64], line: &[f64]) -> f64 {
            if grid.len() < 7 {
                return 0.0;
            }
            let coarse_g: Vec<f64> = grid.iter().step_by(2).copied().collect();
            let coarse_v: Vec<f64> = line.iter().step_by(2).copied().collect();
            let mut worst: f64 = 0.0;
            for k in (1..grid.len() - 1).step_by(2) {
                let (v, _) = interp::eval(&coarse_g, &coarse_v, grid[k]);
                worst = worst.max((v - line[k]).abs());
            }
            worst / 16.0
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.nx() {
            let row = &self.values[i * self.nf()..(i + 1) * self.nf()];
            worst = worst.max(axis_error(&self.f_grid, row));
        }
        for j in 0..self.nf() {
            let col: Vec<f64> = (0..self.nx()).map(|i| self.node(i, j)).collect();
            worst = worst.max(axis_error(&self.x_grid, &col));
        }
        worst
    }

    /// Writes `x,f_p,G` rows (header included).
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,f_p,G")?;
        for (i, x) in self.x_grid.iter().enumerate() {
            for (j, f) in self.f_grid.iter().enumerate() {
                writeln!(out, "{x},{f},{}", self.node(i, j))?;
            }
        }
        Ok(())
    }

    /// Sidecar metadata (key = value lines).
    pub fn metadata(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "x_unit = rabi_mhz");
        let _ = writeln!(s, "f_unit = detuning_mhz");
        let _ = writeln!(s, "nx = {}", self.nx());
        let _ = writeln!(s, "nf = {}", self.nf());
        let _ = writeln!(s, "x_min = {}", self.x_grid[0]);
        let _ = writeln!(s, "x_max = {}", self.x_grid[self.nx() - 1]);
        let _ = writeln!(s, "f_min = {}", self.f_grid[0]);
        let _ = writeln!(s, "f_max = {}", self.f_grid[self.nf() - 1]);
        let _ = writeln!(s, "normalization = G(0, f_p_resonance) = 1");
        let _ = writeln!(s, "reference_transmittance = {}", self.reference_transmittance);
        let _ = writeln!(s, "f_p_resonance_hz = {}", self.f_p_resonance);
        let _ = writeln!(s, "doppler = {}", self.doppler);
        s
    }

    /// Reads a surface from its CSV and sidecar metadata.
    pub fn read_csv<R: Read>(csv: R, metadata: &str) -> Result<Self, ModelError> {
        let bad = |m: String| ModelError::Format(m);
        let mut meta = std::collections::HashMap::new();
        for line in metadata.lines() {
            if let Some((k, v)) = line.split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let get = |k: &str| meta.get(k).cloned().ok_or_else(|| bad(format!("metadata missing `{k}`")));
        let nx: usize = get("nx")?.parse().map_err(|e| bad(format!("nx: {e}")))?;
        let nf: usize = get("nf")?.parse().map_err(|e| bad(format!("nf: {e}")))?;
        let reference_transmittance: f64 =
            get("reference_transmittance")?.parse().map_err(|e| bad(format!("reference: {e}")))?;
        let f_p_resonance: f64 = get("f_p_resonance_hz")?.parse().map_err(|e| bad(format!("f_p: {e}")))?;
        let doppler = get("doppler")? == "true";

        let mut lines = BufReader::new(csv).lines();
        let header = lines.next().ok_or_else(|| bad("empty csv".into()))?.map_err(|e| bad(e.to_string()))?;
        if header.trim() != "x,f_p,G" {
            return Err(bad(format!("unexpected header `{header}`")));
        }
        let mut x_grid = Vec::with_capacity(nx);
        let mut f_grid = Vec::with_capacity(nf);
        let mut values = Vec::with_capacity(nx * nf);
        for (k, line) in lines.enumerate() {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<f64> = line
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| bad(format!("line {}: {e}", k + 2)))?;
            if parts.len() != 3 {
                return Err(bad(format!("line {}: expected 3 columns", k + 2)));
            }
            if k % nf == 0 {
                x_grid.push(parts[0]);
            }
            if k < nf {
                f_grid.push(parts[1]);
            }
            values.push(parts[2]);
        }
        if x_grid.len() != nx || f_grid.len() != nf || values.len() != nx * nf {
            return Err(bad("csv size does not match metadata".into()));
        }
        Ok(Self { x_grid, f_grid, values, reference_transmittance, f_p_resonance, doppler })
    }
}
