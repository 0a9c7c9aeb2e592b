//! TOML experiment configuration.

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::estimators::{InitialShift, Method, ShiftSolverConfig};
use crate::noise_sim::{Flanks, SamplingPlan, Strategy};
use crate::quantum_model::system::SystemOverrides;
use crate::response::GaussianLike;
use crate::response::PeakFamily;

/// A complete experiment description. Every section is optional in the
/// TOML text; missing keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub system: SystemOverrides,
    pub surface: SurfaceConfig,
    pub campaign: CampaignConfig,
    pub budget: BudgetConfig,
    pub splitting: SplittingConfig,
    pub intensity: IntensityConfig,
    pub solver: SolverConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

/// Surface grid extent (MHz); see [`crate::quantum_model::grids`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceConfig {
    pub x_max: f64,
    pub f_half: f64,
    /// Directory holding a previously exported `surface.csv` and
    /// `surface.meta`; the surface is rebuilt when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self { x_max: 21.0, f_half: 15.0, path: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    /// Any of IDD, ISD, UE, ME, 5-PF.
    pub schemes: Vec<String>,
    /// Omega_RF/2pi values (MHz). For ISD these are the signal amplitudes
    /// beating against the local oscillator.
    pub signals: Vec<f64>,
    /// sigma0 values.
    pub noise: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            schemes: vec!["UE".into(), "ME".into(), "5-PF".into()],
            signals: vec![15.0],
            noise: vec![0.01, 0.02],
            trials: 10_000,
            seed: 1,
        }
    }
}

/// Samples per trial and how each scheme factors them:
/// IDD uses `n`, ISD `isd_periods * isd_per_period`, splitting
/// `2 * sf_points * sf_averages`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetConfig {
    pub n: usize,
    pub isd_periods: usize,
    pub isd_per_period: usize,
    pub sf_points: usize,
    pub sf_averages: usize,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self { n: 20, isd_periods: 5, isd_per_period: 4, sf_points: 10, sf_averages: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineshapeKind {
    /// v1 exp(-v2 f^2) + v3 peaks at +-x/(2 kappa).
    Gaussian,
    /// Peaks cut from the response surface's frequency marginal.
    Tabulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Uniform,
    Maxslope,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlanksKind {
    Both,
    Steepest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    /// Start the shift solvers at the true peak position.
    Nominal,
    /// Start at the smoothed sample maximum.
    Argmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplittingConfig {
    pub lineshape: LineshapeKind,
    pub gaussian_v: [f64; 3],
    pub strategy: StrategyKind,
    /// Uniform plan width (MHz).
    pub span: f64,
    /// Max-slope spread around each flank point (MHz).
    pub window: f64,
    pub flanks: FlanksKind,
    /// Explicit right-peak detunings (MHz); the left scan uses their
    /// negatives.
    pub frequencies: Vec<f64>,
    pub init: InitKind,
}

impl Default for SplittingConfig {
    fn default() -> Self {
        Self {
            lineshape: LineshapeKind::Gaussian,
            gaussian_v: [0.25, 0.5, 0.75],
            strategy: StrategyKind::Uniform,
            span: 10.0,
            window: 1.0,
            flanks: FlanksKind::Both,
            frequencies: Vec::new(),
            init: InitKind::Nominal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntensityConfig {
    /// Monotone branch [lo, hi] of F_I used for inversion; the whole curve
    /// when absent.
    pub branch: Option<[f64; 2]>,
    /// Local-oscillator field (MHz); the steepest point of F_I when absent.
    pub x_lo: Option<f64>,
    /// Beat phase (rad).
    pub phase: f64,
}

impl Default for IntensityConfig {
    fn default() -> Self {
        Self { branch: None, x_lo: None, phase: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub max_iterations: usize,
    pub joint_tolerance: f64,
    pub max_rounds: usize,
    pub poly_order: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = ShiftSolverConfig::default();
        Self {
            epsilon: d.epsilon,
            max_iterations: d.max_iterations,
            joint_tolerance: d.joint_tolerance,
            max_rounds: d.max_rounds,
            poly_order: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Omega_RF/2pi grid (MHz).
    pub signals: Vec<f64>,
    /// Also run Monte Carlo for the MSE columns.
    pub mse: bool,
    pub trials: usize,
    /// Field at which max_f |F_S'| enters r0.
    pub x_ref: f64,
    /// ISD signal amplitude used for the MSE column (MHz).
    pub isd_amplitude: f64,
    /// Splitting plan for the sweep. A fixed-span uniform scan crosses the
    /// resonance once the peaks sit closer than half the span, so sweeps
    /// default to the max-slope plan.
    pub strategy: StrategyKind,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            signals: (2..=20).map(f64::from).collect(),
            mse: false,
            trials: 1000,
            x_ref: 15.0,
            isd_amplitude: 0.5,
            strategy: StrategyKind::Maxslope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The fully resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn methods(&self) -> Result<Vec<Method>, HarnessError> {
        self.campaign
            .schemes
            .iter()
            .map(|s| Method::parse(s).ok_or_else(|| HarnessError::Config(format!("unknown scheme `{s}`"))))
            .collect()
    }

    pub fn solver(&self) -> ShiftSolverConfig {
        ShiftSolverConfig {
            epsilon: self.solver.epsilon,
            max_iterations: self.solver.max_iterations,
            initial_shift: InitialShift::ArgMax,
            initial_params: None,
            joint_tolerance: self.solver.joint_tolerance,
            max_rounds: self.solver.max_rounds,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        self.methods()?;
        let c = &self.campaign;
        if c.trials < 1 {
            return bad("trials must be >= 1".into());
        }
        if c.signals.is_empty() || c.signals.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return bad("signals must be a non-empty list of non-negative values".into());
        }
        if c.noise.is_empty() || c.noise.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("noise must be a non-empty list of non-negative values".into());
        }
        let b = &self.budget;
        if b.n < 1 {
            return bad("budget n must be >= 1".into());
        }
        if b.isd_periods * b.isd_per_period != b.n {
            return bad(format!("ISD factorisation {} x {} != n = {}", b.isd_periods, b.isd_per_period, b.n));
        }
        if b.isd_per_period < 4 {
            return bad("isd_per_period must be >= 4".into());
        }
        if 2 * b.sf_points * b.sf_averages != b.n {
            return bad(format!("splitting factorisation 2 x {} x {} != n = {}", b.sf_points, b.sf_averages, b.n));
        }
        let s = &self.splitting;
        if !GaussianLike.feasible(&s.gaussian_v) {
            return bad("gaussian_v needs v2 > 0".into());
        }
        match s.strategy {
            StrategyKind::Uniform if !(s.span > 0.0) || b.sf_points < 2 => {
                return bad("uniform plan needs span > 0 and sf_points >= 2".into());
            }
            StrategyKind::Maxslope if !(s.window >= 0.0) => return bad("window must be >= 0".into()),
            StrategyKind::Explicit if s.frequencies.len() != b.sf_points => {
                return bad("explicit frequency count must equal sf_points".into());
            }
            _ => {}
        }
        if !(self.solver.epsilon > 0.0) || self.solver.max_iterations < 1 || self.solver.max_rounds < 1 {
            return bad("solver limits must be positive".into());
        }
        if self.solver.poly_order < 2 {
            return bad("poly_order must be >= 2".into());
        }
        if self.sweep.trials < 1 {
            return bad("sweep trials must be >= 1".into());
        }
        if !(self.surface.x_max > 0.0 && self.surface.f_half > 0.0) {
            return bad("surface extents must be positive".into());
        }
        Ok(())
    }
}

/// Sampling plan for one side's scan.
pub fn make_plan(s: &SplittingConfig, n_sf1: usize, side_sign: f64) -> SamplingPlan {
    match s.strategy {
        StrategyKind::Uniform => SamplingPlan::uniform(n_sf1, s.span),
        StrategyKind::Maxslope => {
            let flanks = match s.flanks {
                FlanksKind::Both => Flanks::Both,
                FlanksKind::Steepest => Flanks::Steepest,
            };
            SamplingPlan::max_slope(n_sf1, s.window, flanks)
        }
        StrategyKind::Explicit => SamplingPlan {
            strategy: Strategy::Explicit(s.frequencies.iter().map(|f| side_sign * f).collect()),
            points: s.frequencies.len(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_echo_round_trips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_text_fills_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "[campaign]\nschemes = [\"IDD\"]\nsignals = [4.0]\nnoise = [0.01]\ntrials = 10\n[splitting]\nstrategy = \"maxslope\"\n",
        )
        .unwrap();
        assert_eq!(cfg.budget.n, 20);
        assert_eq!(cfg.splitting.strategy, StrategyKind::Maxslope);
        assert_eq!(cfg.methods().unwrap(), vec![Method::Idd]);
    }

    #[test]
    fn rejects_inconsistent_budgets() {
        let e = ExperimentConfig::from_toml_str("[budget]\nn = 20\nsf_points = 7\n");
        assert!(matches!(e, Err(HarnessError::Config(_))));
        let e = ExperimentConfig::from_toml_str("[budget]\nn = 40\nsf_points = 10\nsf_averages = 2\n");
        assert!(e.is_err(), "ISD 5 x 4 no longer matches");
        let ok = ExperimentConfig::from_toml_str(
            "[budget]\nn = 40\nsf_points = 10\nsf_averages = 2\nisd_periods = 10\nisd_per_period = 4\n",
        );
        assert!(ok.is_ok());
        assert!(ExperimentConfig::from_toml_str("[campaign]\nschemes = [\"XYZ\"]\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[campaign]\nbogus = 1\n").is_err());
    }

    #[test]
    fn explicit_plan_mirrors_left() {
        let s = SplittingConfig { strategy: StrategyKind::Explicit, frequencies: vec![6.0, 7.0], ..Default::default() };
        let p = make_plan(&s, 2, -1.0);
        assert_eq!(p.strategy, Strategy::Explicit(vec![-6.0, -7.0]));
    }
}
