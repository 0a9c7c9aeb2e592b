use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::ModelError;

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380_649e-23;
/// Elementary charge times Bohr radius (C m).
pub const E_A0: f64 = 8.478_353_6e-30;

/// Converts a cyclic frequency in MHz into angular frequency in rad/s.
pub fn mhz_to_rad_s(f_mhz: f64) -> f64 {
    2.0 * PI * f_mhz * 1e6
}

/// Converts angular frequency in rad/s into cyclic MHz.
pub fn rad_s_to_mhz(w: f64) -> f64 {
    w / (2.0 * PI * 1e6)
}

/// Physical parameters of the four-level ladder |1> -> |2> -> |3> -> |4>.
///
/// Rabi frequencies, detunings and decay rates are angular frequencies in
/// rad/s. `omega_rf` is the RF drive currently applied; the response surface
/// overrides it per field-strength node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicSystem {
    pub omega_p: f64,
    pub omega_c: f64,
    pub omega_rf: f64,
    pub delta_p: f64,
    pub delta_c: f64,
    pub delta_rf: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma4: f64,
    /// Dipole moments (C m) of the 1-2, 2-3 and 3-4 transitions.
    pub mu_p: f64,
    pub mu_c: f64,
    pub mu_rf: f64,
    /// Probe and coupling wavelengths (m).
    pub lambda_p: f64,
    pub lambda_c: f64,
    /// Vapour temperature (K).
    pub temperature: f64,
    /// Atomic mass (kg).
    pub atom_mass: f64,
    /// Probe resonance frequency f_{p,o} (Hz).
    pub f_p_resonance: f64,
    pub doppler_enabled: bool,
}

impl AtomicSystem {
    /// Rb-85 ladder preset (780 nm probe, 480 nm coupling) with the probe and
    /// coupling Rabi frequencies of the reference response surface,
    /// 2pi x 2 MHz and 2pi x 4 MHz. Doppler averaging is off.
    pub fn rb85() -> Self {
        Self {
            omega_p: mhz_to_rad_s(2.0),
            omega_c: mhz_to_rad_s(4.0),
            omega_rf: 0.0,
            delta_p: 0.0,
            delta_c: 0.0,
            delta_rf: 0.0,
            gamma2: mhz_to_rad_s(6.07),
            gamma3: mhz_to_rad_s(0.01),
            gamma4: mhz_to_rad_s(0.01),
            mu_p: 2.534e-29,
            mu_c: 0.0103 * E_A0,
            mu_rf: 1_000.0 * E_A0,
            lambda_p: 780.24e-9,
            lambda_c: 480.0e-9,
            temperature: 303.15,
            atom_mass: 1.4192e-25,
            f_p_resonance: 384.230_484_468_5e12,
            doppler_enabled: false,
        }
    }

    /// Preset lookup by name.
    pub fn preset(name: &str) -> Result<Self, ModelError> {
        match name.to_ascii_lowercase().as_str() {
            "rb85" | "rb85_default" | "rb" => Ok(Self::rb85()),
            "rb85_weak_probe" => Ok(Self { omega_p: mhz_to_rad_s(0.1), ..Self::rb85() }),
            other => Err(ModelError::InvalidSystem(format!("unknown preset `{other}`"))),
        }
    }

    /// Most probable speed scale u = sqrt(k_B T / m) (m/s).
    pub fn doppler_width(&self) -> f64 {
        (K_B * self.temperature / self.atom_mass).sqrt()
    }

    pub fn probe_wavenumber(&self) -> f64 {
        2.0 * PI / self.lambda_p
    }

    pub fn coupling_wavenumber(&self) -> f64 {
        2.0 * PI / self.lambda_c
    }

    /// RF field magnitude (V/m) that produces Rabi frequency `omega_rf` (rad/s).
    pub fn field_from_rabi(&self, omega_rf: f64) -> f64 {
        omega_rf * HBAR / self.mu_rf
    }

    /// Rabi frequency (rad/s) of an RF field of magnitude `field` (V/m).
    pub fn rabi_from_field(&self, field: f64) -> f64 {
        field * self.mu_rf / HBAR
    }

    /// Field magnitude (V/m) for a Rabi frequency given as Omega/2pi in MHz.
    pub fn field_from_rabi_mhz(&self, rabi_mhz: f64) -> f64 {
        self.field_from_rabi(mhz_to_rad_s(rabi_mhz))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let rates = [
            ("omega_p", self.omega_p),
            ("omega_c", self.omega_c),
            ("omega_rf", self.omega_rf),
            ("gamma2", self.gamma2),
            ("gamma3", self.gamma3),
            ("gamma4", self.gamma4),
        ];
        for (name, v) in rates {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ModelError::InvalidSystem(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        for (name, v) in [("delta_p", self.delta_p), ("delta_c", self.delta_c), ("delta_rf", self.delta_rf)] {
            if !v.is_finite() {
                return Err(ModelError::InvalidSystem(format!("{name} must be finite")));
            }
        }
        let positive = [
            ("temperature", self.temperature),
            ("atom_mass", self.atom_mass),
            ("lambda_p", self.lambda_p),
            ("lambda_c", self.lambda_c),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::InvalidSystem(format!("{name} must be positive, got {v}")));
            }
        }
        let u = self.doppler_width();
        if !(u.is_finite() && u > 0.0) {
            return Err(ModelError::InvalidSystem(format!("Doppler width {u} is not positive")));
        }
        Ok(())
    }
}

impl Default for AtomicSystem {
    fn default() -> Self {
        Self::rb85()
    }
}

/// Overrides applied on top of a preset. Frequencies are cyclic MHz
/// (Omega/2pi), wavelengths nm.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemOverrides {
    pub preset: Option<String>,
    pub omega_p_mhz: Option<f64>,
    pub omega_c_mhz: Option<f64>,
    pub omega_rf_mhz: Option<f64>,
    pub delta_p_mhz: Option<f64>,
    pub delta_c_mhz: Option<f64>,
    pub delta_rf_mhz: Option<f64>,
    pub gamma2_mhz: Option<f64>,
    pub gamma3_mhz: Option<f64>,
    pub gamma4_mhz: Option<f64>,
    pub mu_p: Option<f64>,
    pub mu_c: Option<f64>,
    pub mu_rf: Option<f64>,
    pub lambda_p_nm: Option<f64>,
    pub lambda_c_nm: Option<f64>,
    pub temperature_k: Option<f64>,
    pub atom_mass_kg: Option<f64>,
    pub f_p_resonance_hz: Option<f64>,
    pub doppler: Option<bool>,
}

impl SystemOverrides {
    /// Resolves the preset and applies every override that is set.
    pub fn resolve(&self) -> Result<AtomicSystem, ModelError> {
        let mut s = AtomicSystem::preset(self.preset.as_deref().unwrap_or("rb85"))?;
        macro_rules! apply {
            ($field:ident, $src:ident, $f:expr) => {
                if let Some(v) = self.$src {
                    s.$field = $f(v);
                }
            };
        }
        apply!(omega_p, omega_p_mhz, mhz_to_rad_s);
        apply!(omega_c, omega_c_mhz, mhz_to_rad_s);
        apply!(omega_rf, omega_rf_mhz, mhz_to_rad_s);
        apply!(delta_p, delta_p_mhz, mhz_to_rad_s);
        apply!(delta_c, delta_c_mhz, mhz_to_rad_s);
        apply!(delta_rf, delta_rf_mhz, mhz_to_rad_s);
        apply!(gamma2, gamma2_mhz, mhz_to_rad_s);
        apply!(gamma3, gamma3_mhz, mhz_to_rad_s);
        apply!(gamma4, gamma4_mhz, mhz_to_rad_s);
        apply!(mu_p, mu_p, |v| v);
        apply!(mu_c, mu_c, |v| v);
        apply!(mu_rf, mu_rf, |v| v);
        apply!(lambda_p, lambda_p_nm, |v: f64| v * 1e-9);
        apply!(lambda_c, lambda_c_nm, |v: f64| v * 1e-9);
        apply!(temperature, temperature_k, |v| v);
        apply!(atom_mass, atom_mass_kg, |v| v);
        apply!(f_p_resonance, f_p_resonance_hz, |v| v);
        if let Some(d) = self.doppler {
            s.doppler_enabled = d;
        }
        s.validate()?;
        Ok(s)
    }

    /// Loads overrides from a TOML file. Keys may sit at top level or under
    /// a `[system]` table.
    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        let value: toml::Table = text.parse().map_err(|e| ModelError::Config(format!("{e}")))?;
        let table = match value.get("system") {
            Some(toml::Value::Table(t)) => t.clone(),
            _ => value,
        };
        table.try_into().map_err(|e| ModelError::Config(format!("{e}")))
    }
}
