use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use rydberg_core::crlb::{crlb_univariate, ratio_r, ratio_r0, ratio_r_from_bounds, PeakPlan};
use rydberg_core::harness::{
    build_configured_surface, resolve_surface, run_campaign, split_setup, sweep_normalized, write_campaign,
    write_surface, write_sweep, ExperimentConfig, HarnessError, LineshapeKind, StrategyKind,
};
use rydberg_core::response::kappa_rabi;

/// Thread count for the rayon pool; unset means one per core.
const THREADS_ENV: &str = "RYDBERG_THREADS";

#[derive(Parser)]
#[command(name = "rydberg", version, about = "Rydberg RF sensor response, estimators and bounds")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build the normalised response surface G(x, f) and export it.
    Surface {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the Monte Carlo campaign.
    Campaign {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Normalised bound sweep over the configured field grid.
    Crlb {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sampling plan for one splitting cell and its known-lineshape bound.
    Plan {
        #[arg(long, value_enum)]
        strategy: PlanKind,
        /// Total sample budget N.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Omega_RF/2pi (MHz).
        #[arg(long, default_value_t = 15.0)]
        x: f64,
        #[arg(long, default_value_t = 0.01)]
        sigma0: f64,
    },
    /// Slope-ratio report r0 and r[x].
    Compare {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PlanKind {
    Uniform,
    Maxslope,
}

fn load(config: Option<&Path>) -> Result<ExperimentConfig, HarnessError> {
    match config {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|source| HarnessError::Io { path: p.display().to_string(), source })?;
            ExperimentConfig::from_toml_str(&text)
        }
    }
}

fn out_dir(out: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir))
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|source| HarnessError::Io { path: parent.display().to_string(), source })?;
    }
    fs::write(path, text).map_err(|source| HarnessError::Io { path: path.display().to_string(), source })
}

fn surface_cmd(config: Option<PathBuf>, out: Option<PathBuf>) -> Result<(), HarnessError> {
    let cfg = load(config.as_deref())?;
    let dir = out_dir(out, &cfg);
    let s = build_configured_surface(&cfg)?;
    write_surface(&s, &dir)?;
    let (lo, hi) = s.value_range();
    println!(
        "surface {} x {} nodes, G in [{lo:.6}, {hi:.6}], interpolation error ~ {:.2e} -> {}",
        s.nx(),
        s.nf(),
        s.interpolation_error_estimate(),
        dir.display()
    );
    Ok(())
}

fn campaign_cmd(
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    trials: Option<usize>,
    seed: Option<u64>,
) -> Result<(), HarnessError> {
    let mut cfg = load(config.as_deref())?;
    if let Some(t) = trials {
        cfg.campaign.trials = t;
    }
    if let Some(s) = seed {
        cfg.campaign.seed = s;
    }
    cfg.validate()?;
    let dir = out_dir(out, &cfg);
    let surface = resolve_surface(&cfg)?;
    let result = run_campaign(&cfg, surface.as_ref())?;
    write_campaign(&result, &cfg, &dir)?;
    println!("{:<5} {:>6} {:>7} {:>12} {:>12} {:>8} {:>6}", "", "x", "sigma0", "MSE", "CRLB", "failed", "valid");
    for c in &result.cells {
        println!(
            "{:<5} {:>6} {:>7} {:>12.5e} {:>12.5e} {:>8} {:>6}",
            c.scheme.tag(),
            c.x,
            c.sigma0,
            c.mse,
            c.crlb,
            c.failures,
            c.valid
        );
    }
    println!("-> {}", dir.display());
    Ok(())
}

fn crlb_cmd(config: Option<PathBuf>, out: Option<PathBuf>) -> Result<(), HarnessError> {
    let cfg = load(config.as_deref())?;
    let dir = out_dir(out, &cfg);
    let surface = match &cfg.surface.path {
        Some(p) => rydberg_core::harness::read_surface(Path::new(p))?,
        None => build_configured_surface(&cfg)?,
    };
    let result = sweep_normalized(&cfg, &surface)?;
    write_sweep(&result, &dir)?;
    println!(
        "normalised by sigma0^2 / (N max F_I'^2) = {:.6e} (sigma0 = {}, N = {}, max |F_I'| = {:.6} at x = {:.4})",
        result.reference.variance(),
        result.reference.sigma0,
        result.reference.n,
        result.reference.max_slope,
        result.reference.x_lo
    );
    println!("{} rows -> {}", result.crlb.len(), dir.display());
    Ok(())
}

fn plan_cmd(
    strategy: PlanKind,
    n: usize,
    out: PathBuf,
    config: Option<PathBuf>,
    x: f64,
    sigma0: f64,
) -> Result<(), HarnessError> {
    let mut cfg = load(config.as_deref())?;
    if n < 2 || n % 2 != 0 {
        return Err(HarnessError::Config(format!("n = {n} must be even")));
    }
    cfg.budget.n = n;
    cfg.budget.sf_averages = 1;
    cfg.budget.sf_points = n / 2;
    cfg.splitting.strategy = match strategy {
        PlanKind::Uniform => StrategyKind::Uniform,
        PlanKind::Maxslope => StrategyKind::Maxslope,
    };
    let kr = kappa_rabi(&cfg.system.resolve()?);
    let surface = match cfg.splitting.lineshape {
        LineshapeKind::Tabulated => resolve_surface(&cfg)?,
        LineshapeKind::Gaussian => None,
    };
    let setup = split_setup(&cfg, surface.as_ref(), x, kr)?;
    let bound = crlb_univariate(
        &PeakPlan { lineshape: &setup.left, shift: setup.shifts.0, frequencies: &setup.frequencies.0 },
        &PeakPlan { lineshape: &setup.right, shift: setup.shifts.1, frequencies: &setup.frequencies.1 },
        1,
        sigma0,
        kr,
    )?;
    let mut s = String::new();
    let _ = writeln!(s, "# x={x} sigma0={sigma0} n={n} shifts={},{}", setup.shifts.0, setup.shifts.1);
    let _ = writeln!(s, "# crlb_ue={}", bound.bound);
    let _ = writeln!(s, "side,f");
    for f in &setup.frequencies.0 {
        let _ = writeln!(s, "left,{f}");
    }
    for f in &setup.frequencies.1 {
        let _ = writeln!(s, "right,{f}");
    }
    write_text(&out, &s)?;
    println!("U-CRLB = {:.6e} -> {}", bound.bound, out.display());
    Ok(())
}

fn compare_cmd(config: Option<PathBuf>, out: Option<PathBuf>) -> Result<(), HarnessError> {
    let cfg = load(config.as_deref())?;
    let dir = out_dir(out, &cfg);
    let surface = match &cfg.surface.path {
        Some(p) => rydberg_core::harness::read_surface(Path::new(p))?,
        None => build_configured_surface(&cfg)?,
    };
    let kr = kappa_rabi(&cfg.system.resolve()?);
    let r0 = ratio_r0(&surface, kr, cfg.sweep.x_ref)?;
    let sigma0 = cfg.campaign.noise.iter().copied().find(|s| *s > 0.0).unwrap_or(0.01);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# r0={} kappa={kr} max_intensity_slope={} at x={} splitting_slope={} at f={} (x_ref={})",
        r0.value, r0.intensity_slope, r0.intensity_at, r0.splitting_slope, r0.splitting_at, cfg.sweep.x_ref
    );
    let _ = writeln!(s, "x,r_x,r_x_from_bounds,intensity_slope,splitting_slope,splitting_at");
    for &x in &cfg.sweep.signals {
        match ratio_r(&surface, x, kr) {
            Ok(r) => {
                let direct = ratio_r_from_bounds(&surface, x, kr, cfg.budget.n, sigma0).unwrap_or(f64::NAN);
                let _ = writeln!(
                    s,
                    "{x},{},{direct},{},{},{}",
                    r.value, r.intensity_slope, r.splitting_slope, r.splitting_at
                );
            }
            Err(e) => eprintln!("x = {x}: {e}"),
        }
    }
    write_text(&dir.join("compare.csv"), &s)?;
    println!("r0 = {:.4} (kappa = {kr:.4}) -> {}", r0.value, dir.join("compare.csv").display());
    Ok(())
}

fn main() -> ExitCode {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("{THREADS_ENV} must be a positive integer, got `{v}`");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Surface { config, out } => surface_cmd(config, out),
        Cmd::Campaign { config, out, trials, seed } => campaign_cmd(config, out, trials, seed),
        Cmd::Crlb { config, out } => crlb_cmd(config, out),
        Cmd::Plan { strategy, n, out, config, x, sigma0 } => plan_cmd(strategy, n, out, config, x, sigma0),
        Cmd::Compare { config, out } => compare_cmd(config, out),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
