//! Thermal velocity averaging of the probe coherence.

use std::f64::consts::PI;

use super::lindblad::{steady_state, C64};
use super::{AtomicSystem, ModelError};

/// Node-doubling control for the composite trapezoid over v in [-3u, 3u].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopplerQuadrature {
    pub initial_nodes: usize,
    pub rel_tol: f64,
    pub max_nodes: usize,
}

impl Default for DopplerQuadrature {
    fn default() -> Self {
        Self { initial_nodes: 129, rel_tol: 1e-6, max_nodes: 1 << 16 }
    }
}

/// rho21 for an atom moving at velocity `v` (m/s) along the probe axis with a
/// counter-propagating coupling beam.
pub fn rho21_at_velocity(sys: &AtomicSystem, v: f64) -> Result<C64, ModelError> {
    let moving = AtomicSystem {
        delta_p: sys.delta_p - sys.probe_wavenumber() * v,
        delta_c: sys.delta_c + sys.coupling_wavenumber() * v,
        ..sys.clone()
    };
    Ok(steady_state(&moving)?.rho21())
}

/// Fixed-node composite trapezoid of the Maxwell-Boltzmann weighted
/// coherence, normalised by 1/(sqrt(pi) u).
pub fn trapezoid(sys: &AtomicSystem, nodes: usize) -> Result<C64, ModelError> {
    assert!(nodes >= 2);
    let u = sys.doppler_width();
    let a = -3.0 * u;
    let h = 6.0 * u / (nodes - 1) as f64;
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..nodes {
        let v = a + h * k as f64;
        let w = if k == 0 || k == nodes - 1 { 0.5 } else { 1.0 };
        let weight = (-(v / u) * (v / u)).exp();
        acc += rho21_at_velocity(sys, v)? * (w * weight);
    }
    Ok(acc * (h / (PI.sqrt() * u)))
}

/// Doppler-averaged rho21 with node doubling until the relative change drops
/// below `quad.rel_tol`.
pub fn doppler_average(sys: &AtomicSystem, quad: DopplerQuadrature) -> Result<C64, ModelError> {
    if quad.initial_nodes < 16 {
        return Err(ModelError::InvalidSystem("velocity_points must be at least 16".into()));
    }
    if !sys.doppler_enabled {
        return Err(ModelError::InvalidSystem("Doppler averaging is disabled for this system".into()));
    }
    sys.validate()?;
    // keep an odd node count so v = 0 is always a node and doubling nests
    let mut n = quad.initial_nodes | 1;
    let mut prev = trapezoid(sys, n)?;
    loop {
        let next_n = 2 * n - 1;
        if next_n > quad.max_nodes {
            return Err(ModelError::NonConvergedQuadrature { nodes: n, rel_change: f64::NAN });
        }
        let next = trapezoid(sys, next_n)?;
        let change = (next - prev).norm() / next.norm().max(f64::MIN_POSITIVE);
        if change < quad.rel_tol {
            return Ok(next);
        }
        if next_n * 2 - 1 > quad.max_nodes {
            return Err(ModelError::NonConvergedQuadrature { nodes: next_n, rel_change: change });
        }
        prev = next;
        n = next_n;
    }
}

/// rho21 with or without Doppler averaging according to the system flag.
pub fn probe_coherence(sys: &AtomicSystem, quad: DopplerQuadrature) -> Result<C64, ModelError> {
    if sys.doppler_enabled {
        doppler_average(sys, quad)
    } else {
        Ok(steady_state(sys)?.rho21())
    }
}
