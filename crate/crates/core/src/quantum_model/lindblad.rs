//! Steady state of the four-level ladder under the Lindblad master equation.
//!
//! Decay channels are |2>->|1> at gamma2, |3>->|2> at gamma3 and |4>->|3> at
//! gamma4, each with dissipator D[s]rho = s rho s^+ - {s^+ s, rho}/2. The
//! density matrix is vectorised row-major, vec(rho)[4a+b] = rho[a][b].

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;

use super::{AtomicSystem, ModelError};

pub type C64 = Complex64;
pub type Liouvillian = SMatrix<C64, 16, 16>;
type Op4 = SMatrix<C64, 4, 4>;

/// Internal time unit is the microsecond, so rates enter as rad/us.
const RATE_SCALE: f64 = 1e-6;

/// Ensemble density matrix rho (4x4, basis |1>..|4>).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    pub rho: SMatrix<C64, 4, 4>,
}

impl DensityMatrix {
    /// Element rho_{ab} with 1-based level labels.
    pub fn element(&self, a: usize, b: usize) -> C64 {
        self.rho[(a - 1, b - 1)]
    }

    /// Probe coherence rho_21.
    pub fn rho21(&self) -> C64 {
        self.rho[(1, 0)]
    }

    pub fn trace(&self) -> C64 {
        self.rho.trace()
    }

    /// Largest |rho - rho^+| entry.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.rho - self.rho.adjoint();
        d.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let h = (self.rho + self.rho.adjoint()) * C64::new(0.5, 0.0);
        let eig = h.symmetric_eigenvalues();
        let mut out = [eig[0], eig[1], eig[2], eig[3]];
        out.sort_by(|a, b| a.total_cmp(b));
        out
    }

    /// Checks Hermiticity (1e-10), unit trace (1e-10) and positivity (-1e-9).
    pub fn check_invariants(&self) -> Result<(), String> {
        let herm = self.hermiticity_error();
        if herm > 1e-10 {
            return Err(format!("not Hermitian: {herm:e}"));
        }
        let tr = self.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(format!("trace {tr} != 1"));
        }
        let min = self.eigenvalues()[0];
        if min < -1e-9 {
            return Err(format!("negative eigenvalue {min:e}"));
        }
        Ok(())
    }
}

fn hamiltonian(sys: &AtomicSystem) -> Op4 {
    let s = RATE_SCALE;
    let (wp, wc, wrf) = (sys.omega_p * s, sys.omega_c * s, sys.omega_rf * s);
    let d2 = sys.delta_p * s;
    let d3 = (sys.delta_p + sys.delta_c) * s;
    let d4 = (sys.delta_p + sys.delta_c + sys.delta_rf) * s;
    let r = |v: f64| C64::new(v, 0.0);
    #[rustfmt::skip]
    let h = Op4::new(
        r(0.0),       r(0.5 * wp),  r(0.0),       r(0.0),
        r(0.5 * wp),  r(-d2),       r(0.5 * wc),  r(0.0),
        r(0.0),       r(0.5 * wc),  r(-d3),       r(0.5 * wrf),
        r(0.0),       r(0.0),       r(0.5 * wrf), r(-d4),
    );
    h
}

/// Assembles the 16x16 Liouvillian (rad/us) for `sys`.
pub fn liouvillian(sys: &AtomicSystem) -> Liouvillian {
    let h = hamiltonian(sys);
    let mut l = Liouvillian::zeros();
    let minus_i = C64::new(0.0, -1.0);
    // -i (H (x) I - I (x) H^T)
    for a in 0..4 {
        for b in 0..4 {
            let row = 4 * a + b;
            for c in 0..4 {
                l[(row, 4 * c + b)] += minus_i * h[(a, c)];
                l[(row, 4 * a + c)] -= minus_i * h[(c, b)];
            }
        }
    }
    // lowering operators |lo><hi| with rate gamma
    let channels = [(1usize, 0usize, sys.gamma2), (2, 1, sys.gamma3), (3, 2, sys.gamma4)];
    for (hi, lo, gamma) in channels {
        let g = gamma * RATE_SCALE;
        if g == 0.0 {
            continue;
        }
        // s rho s^+ : rho[hi][hi] feeds rho[lo][lo]
        l[(4 * lo + lo, 4 * hi + hi)] += C64::new(g, 0.0);
        // -1/2 {P, rho}, P = |hi><hi|
        for b in 0..4 {
            l[(4 * hi + b, 4 * hi + b)] -= C64::new(0.5 * g, 0.0);
            l[(4 * b + hi, 4 * b + hi)] -= C64::new(0.5 * g, 0.0);
        }
    }
    l
}

fn vec_of(rho: &Op4) -> SVector<C64, 16> {
    SVector::from_fn(|k, _| rho[(k / 4, k % 4)])
}

/// Max-norm of L vec(rho), in rad/us.
pub fn residual(sys: &AtomicSystem, rho: &DensityMatrix) -> f64 {
    let r = liouvillian(sys) * vec_of(&rho.rho);
    r.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Solves L vec(rho) = 0 with the first equation replaced by Tr(rho) = 1.
pub fn steady_state(sys: &AtomicSystem) -> Result<DensityMatrix, ModelError> {
    if sys.gamma2 == 0.0 && sys.gamma3 == 0.0 && sys.gamma4 == 0.0 {
        return Err(ModelError::SingularLiouvillian("all decay rates are zero".into()));
    }
    let l = liouvillian(sys);
    let mut a = l;
    for k in 0..16 {
        a[(0, k)] = C64::new(0.0, 0.0);
    }
    for d in 0..4 {
        a[(0, 5 * d)] = C64::new(1.0, 0.0);
    }
    let mut rhs = SVector::<C64, 16>::zeros();
    rhs[0] = C64::new(1.0, 0.0);
    let x = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| ModelError::SingularLiouvillian("constrained system is singular".into()))?;
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(ModelError::SingularLiouvillian("non-finite steady state".into()));
    }
    let res = (l * x).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let scale = l.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    if res > 1e-9 * scale {
        return Err(ModelError::SingularLiouvillian(format!(
            "steady state residual {res:e} indicates a rank-deficient Liouvillian"
        )));
    }
    let rho = Op4::from_fn(|a, b| x[4 * a + b]);
    // symmetrise away round-off so the Hermitian invariant holds exactly
    let rho = (rho + rho.adjoint()) * C64::new(0.5, 0.0);
    Ok(DensityMatrix { rho })
}

/// Explicit RK4 integration of the master equation from the ground state,
/// used as an independent reference for the direct solve.
pub fn evolve(sys: &AtomicSystem, t_end_us: f64, dt_us: f64) -> DensityMatrix {
    let l = liouvillian(sys);
    let mut v = SVector::<C64, 16>::zeros();
    v[0] = C64::new(1.0, 0.0);
    let steps = (t_end_us / dt_us).ceil() as usize;
    let h = C64::new(t_end_us / steps as f64, 0.0);
    let half = C64::new(0.5, 0.0);
    let sixth = C64::new(1.0 / 6.0, 0.0);
    let two = C64::new(2.0, 0.0);
    for _ in 0..steps {
        let k1 = l * v;
        let k2 = l * (v + k1 * h * half);
        let k3 = l * (v + k2 * h * half);
        let k4 = l * (v + k3 * h);
        v += (k1 + k2 * two + k3 * two + k4) * h * sixth;
    }
    DensityMatrix { rho: Op4::from_fn(|a, b| v[4 * a + b]) }
}

#[cfg(test)]
mod tests {
    use super::super::system::mhz_to_rad_s;
    use super::*;

    fn two_level(omega_p_mhz: f64, delta_p_mhz: f64) -> AtomicSystem {
        AtomicSystem {
            omega_p: mhz_to_rad_s(omega_p_mhz),
            omega_c: 0.0,
            omega_rf: 0.0,
            delta_p: mhz_to_rad_s(delta_p_mhz),
            ..AtomicSystem::rb85()
        }
    }

    /// Closed-form optical Bloch steady state of a two-level atom with
    /// radiative decay gamma and H = (1/2)[[0, W], [W, -2D]]:
    /// rho21 = (W/2)(D - i g/2) / (D^2 + g^2/4 + W^2/2).
    fn two_level_rho21(w: f64, d: f64, g: f64) -> C64 {
        let den = d * d + g * g / 4.0 + w * w / 2.0;
        C64::new((w / 2.0) * d / den, -(w / 2.0) * (g / 2.0) / den)
    }

    #[test]
    fn two_level_reduction_matches_bloch_solution() {
        for &(wp, dp) in &[(2.0, 0.0), (0.3, 0.0), (5.0, 1.5), (1.0, -4.0)] {
            let sys = two_level(wp, dp);
            let rho = steady_state(&sys).unwrap();
            let s = RATE_SCALE;
            let expect = two_level_rho21(sys.omega_p * s, sys.delta_p * s, sys.gamma2 * s);
            let got = rho.rho21();
            assert!((got - expect).norm() < 1e-12, "wp={wp} dp={dp}: {got} vs {expect}");
        }
    }

    #[test]
    fn invariants_and_residual_hold() {
        let mut sys = AtomicSystem::rb85();
        sys.omega_rf = mhz_to_rad_s(7.0);
        sys.delta_p = mhz_to_rad_s(-2.3);
        let rho = steady_state(&sys).unwrap();
        rho.check_invariants().unwrap();
        assert!(residual(&sys, &rho) < 1e-9);
        assert!(rho.rho21().im <= 0.0);
    }

    #[test]
    fn zero_decay_is_rejected() {
        let sys = AtomicSystem { gamma2: 0.0, gamma3: 0.0, gamma4: 0.0, ..AtomicSystem::rb85() };
        assert!(matches!(steady_state(&sys), Err(ModelError::SingularLiouvillian(_))));
    }

    #[test]
    fn time_evolution_converges_to_direct_solve() {
        let mut sys = AtomicSystem::rb85();
        // faster Rydberg decay so the transient dies out in a short window
        sys.gamma3 = mhz_to_rad_s(0.5);
        sys.gamma4 = mhz_to_rad_s(0.5);
        sys.delta_p = mhz_to_rad_s(1.0);
        let direct = steady_state(&sys).unwrap();
        let late = evolve(&sys, 60.0, 0.002);
        assert!((late.rho21() - direct.rho21()).norm() < 1e-7);
    }
}
